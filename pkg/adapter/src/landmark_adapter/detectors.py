"""Face-mesh detector backends.

Each backend owns a fixed landmark set: it reports the landmark count, one
shared triangulation, and a canonical layout in the unit square, and detects
per-frame 2D pixel coordinates (any detector z is dropped; the downstream
mapping is strictly planar).

* mediapipe - wraps the MediaPipe FaceMesh solution; requires the optional
  `mediapipe` dependency at runtime.
* marker    - tracks bright circular fiducials on a dark background, for
  rigs and offline tests where no real detector is available.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import Delaunay


class DetectorUnavailableError(RuntimeError):
    """The requested backend cannot run in this environment."""


def _canonical_triangles(points: np.ndarray) -> np.ndarray:
    """Deterministic Delaunay triangulation: sorted triples in sorted order."""
    simplices = np.sort(Delaunay(points).simplices, axis=1)
    order = np.lexsort((simplices[:, 2], simplices[:, 1], simplices[:, 0]))
    return simplices[order]


class MarkerBackend:
    """Detects a fixed grid of bright blobs and tracks their identities.

    Frame 0 must show the full grid roughly axis-aligned (it fixes the
    row-major landmark numbering); later frames are matched to the previous
    positions by nearest neighbor, so inter-frame motion must stay below
    half the marker pitch.
    """

    name = "marker"

    def __init__(self, grid=(6, 5), threshold: float = 0.5, min_pixels: int = 4):
        self.cols, self.rows = int(grid[0]), int(grid[1])
        if self.cols < 2 or self.rows < 2:
            raise ValueError(f"marker grid must be at least 2x2, got {grid}")
        self.threshold = float(threshold)
        self.min_pixels = int(min_pixels)
        self._previous: np.ndarray | None = None
        margin = 0.08
        us = np.linspace(margin, 1.0 - margin, self.cols)
        vs = np.linspace(margin, 1.0 - margin, self.rows)
        self.canonical_unit = np.array([[u, v] for v in vs for u in us])
        self.triangles = _canonical_triangles(self.canonical_unit)

    @property
    def landmark_count(self) -> int:
        return self.cols * self.rows

    def detect(self, gray: np.ndarray, rgb: np.ndarray | None = None) -> np.ndarray | None:
        """Intensity-weighted centroids of the markers, ordered by landmark id.

        Returns None when the grid is not fully visible.
        """
        mask = gray > self.threshold
        labels, count = ndimage.label(mask)
        if count < self.landmark_count:
            return None
        sizes = ndimage.sum_labels(np.ones_like(gray), labels, index=np.arange(1, count + 1))
        keep = np.nonzero(sizes >= self.min_pixels)[0] + 1
        if len(keep) != self.landmark_count:
            return None
        centroids = ndimage.center_of_mass(gray, labels, index=keep)
        points = np.array([[x, y] for y, x in centroids])

        if self._previous is None:
            ordered = self._order_row_major(points)
        else:
            ordered = self._match_previous(points)
        if ordered is not None:
            self._previous = ordered
        return ordered

    def _order_row_major(self, points: np.ndarray) -> np.ndarray:
        by_y = points[np.argsort(points[:, 1], kind="stable")]
        rows = []
        for r in range(self.rows):
            band = by_y[r * self.cols:(r + 1) * self.cols]
            rows.append(band[np.argsort(band[:, 0], kind="stable")])
        return np.concatenate(rows)

    def _match_previous(self, points: np.ndarray) -> np.ndarray | None:
        dists = np.linalg.norm(self._previous[:, None, :] - points[None, :, :], axis=2)
        nearest = np.argmin(dists, axis=1)
        if len(set(nearest.tolist())) != self.landmark_count:
            return None
        return points[nearest]


class MediaPipeBackend:
    """MediaPipe FaceMesh wrapper.

    Landmarks come from the FaceMesh solution (normalized, scaled to pixel
    coordinates, z dropped); the triangulation and the canonical layout both
    come from the canonical face model OBJ shipped inside the mediapipe
    package, so the two emitted files always agree.
    """

    name = "mediapipe"

    def __init__(self, min_detection_confidence: float = 0.5):
        try:
            import mediapipe as mp
        except ImportError as err:
            raise DetectorUnavailableError(
                "mediapipe is not installed; `pip install microflow-adapter[mediapipe]` "
                "or use --backend marker") from err
        self._mp = mp
        self._mesh = mp.solutions.face_mesh.FaceMesh(
            static_image_mode=False, max_num_faces=1, refine_landmarks=False,
            min_detection_confidence=min_detection_confidence)
        vertices, faces = self._load_canonical_obj(Path(mp.__file__).parent)
        self.canonical_unit = self._project_unit(vertices)
        self.triangles = faces
        self.landmark_count = len(self.canonical_unit)

    @staticmethod
    def _load_canonical_obj(package_root: Path):
        obj = package_root / "modules" / "face_geometry" / "data" / "canonical_face_model.obj"
        if not obj.is_file():
            raise DetectorUnavailableError(f"canonical face model not found at {obj}")
        vertices, faces = [], []
        for line in obj.read_text().splitlines():
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
        return np.array(vertices), np.array(faces, dtype=np.int64)

    @staticmethod
    def _project_unit(vertices: np.ndarray) -> np.ndarray:
        # drop z, flip y (OBJ y points up, image y points down), fit into
        # the unit square with a small margin
        plane = np.column_stack([vertices[:, 0], -vertices[:, 1]])
        lo = plane.min(axis=0)
        span = plane.max(axis=0) - lo
        scale = 0.9 / span.max()
        centered = (plane - lo) * scale
        return centered + (np.array([1.0, 1.0]) - span * scale) / 2.0

    def detect(self, gray: np.ndarray, rgb: np.ndarray | None = None) -> np.ndarray | None:
        if rgb is None:
            rgb = np.repeat((np.clip(gray, 0, 1) * 255).astype(np.uint8)[:, :, None], 3, axis=2)
        result = self._mesh.process(rgb)
        if not result.multi_face_landmarks:
            return None
        h, w = rgb.shape[:2]
        face = result.multi_face_landmarks[0].landmark
        return np.array([[lm.x * w, lm.y * h] for lm in face])


BACKENDS = {
    "marker": MarkerBackend,
    "mediapipe": MediaPipeBackend,
}


def make_backend(name: str, min_detection_confidence: float = 0.5, marker_grid=(6, 5)):
    if name == "marker":
        return MarkerBackend(grid=marker_grid)
    if name == "mediapipe":
        return MediaPipeBackend(min_detection_confidence=min_detection_confidence)
    raise ValueError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}")

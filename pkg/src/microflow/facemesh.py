"""Face-mesh data types, JSON ingestion, validation, and point-in-mesh location.

Coordinate convention: x grows rightward, y downward, origin at the top-left
pixel center. Canvas bounds are half-open, [0, width) x [0, height).

All types are immutable after construction and all operations are pure, so
everything here is safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Signed pixel distance to a triangle edge below which a point still counts
# as inside. Flow base points sit on a pixel grid and frequently land on
# shared edges, so boundary points are inside by design.
EDGE_TOL = 1e-9

# Triangles with |signed area| at or below this are degenerate.
DEGENERATE_AREA = 1e-9


class ValidationError(ValueError):
    """A mesh/model file or in-memory structure violates its invariants.

    ``problems`` lists every offending landmark/triangle, not just the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def signed_area(tri_pts: np.ndarray) -> np.ndarray:
    """Signed area of triangles given as an (..., 3, 2) vertex array."""
    a = tri_pts[..., 0, :]
    b = tri_pts[..., 1, :]
    c = tri_pts[..., 2, :]
    return 0.5 * ((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
                  - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0]))


def _parse_landmarks(obj, what: str) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=np.float64)
    except (TypeError, ValueError):
        raise ValidationError(f"{what}: landmarks are not a list of [x, y] pairs")
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
        raise ValidationError(f"{what}: landmarks must be an (n, 2) list, got shape {arr.shape}")
    bad = np.nonzero(~np.isfinite(arr).all(axis=1))[0]
    if bad.size:
        raise ValidationError([f"{what}: non-finite coordinate at landmark {i}" for i in bad])
    return arr


def _parse_triangles(obj, n_landmarks: int, what: str) -> np.ndarray:
    try:
        arr = np.asarray(obj)
    except (TypeError, ValueError):
        raise ValidationError(f"{what}: triangles are not a list of index triples")
    if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 1:
        raise ValidationError(f"{what}: triangles must be an (k, 3) list, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise ValidationError(f"{what}: triangle indices must be integers")
        arr = arr.astype(np.int64)
    problems = []
    out_of_range = np.nonzero((arr < 0) | (arr >= n_landmarks))[0]
    for k in np.unique(out_of_range):
        problems.append(f"{what}: triangle {k} index out of range [0, {n_landmarks})")
    repeated = np.nonzero((arr[:, 0] == arr[:, 1]) | (arr[:, 0] == arr[:, 2]) | (arr[:, 1] == arr[:, 2]))[0]
    for k in repeated:
        problems.append(f"{what}: triangle {k} repeated vertex index")
    if problems:
        raise ValidationError(problems)
    return arr.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Frame:
    """One grayscale video frame; intensities are finite and in [0, 1]."""

    intensity: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.intensity, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"frame intensity must be a 2D grid, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("frame intensity contains non-finite values")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise ValidationError(f"frame intensity outside [0, 1] (range [{lo}, {hi}])")
        object.__setattr__(self, "intensity", _freeze(arr))

    @property
    def height(self) -> int:
        return self.intensity.shape[0]

    @property
    def width(self) -> int:
        return self.intensity.shape[1]


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """Ordered frames sharing one resolution; indices start at 0."""

    frames: tuple
    frame_index_origin: int = 0

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValidationError("frame sequence is empty")
        w, h = frames[0].width, frames[0].height
        for i, f in enumerate(frames):
            if f.width != w or f.height != h:
                raise ValidationError(
                    f"frame {i} size {f.width}x{f.height} differs from frame 0 size {w}x{h}")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True, eq=False)
class FaceMesh:
    """Landmark positions for one frame plus the shared triangle topology.

    Degenerate triangles (landmark jitter can collapse them) are legal here
    and only flagged; the warp stage skips and reports them.
    """

    landmarks: np.ndarray  # (l, 2) float64, frame pixel coordinates
    triangles: np.ndarray  # (k, 3) int64, vertex index triples

    def __post_init__(self):
        lms = _parse_landmarks(self.landmarks, "mesh")
        tris = _parse_triangles(self.triangles, lms.shape[0], "mesh")
        object.__setattr__(self, "landmarks", _freeze(lms))
        object.__setattr__(self, "triangles", _freeze(tris))

    @property
    def landmark_count(self) -> int:
        return self.landmarks.shape[0]

    @property
    def triangle_count(self) -> int:
        return self.triangles.shape[0]

    def triangle_areas(self) -> np.ndarray:
        return signed_area(self.landmarks[self.triangles])

    def degenerate_triangles(self) -> np.ndarray:
        """Indices of triangles collapsed below the area threshold."""
        return np.nonzero(np.abs(self.triangle_areas()) <= DEGENERATE_AREA)[0]


@dataclass(frozen=True, eq=False)
class CanonicalModel:
    """Fixed flat-face landmark layout: the common measurement canvas.

    Unlike per-frame meshes, the canonical triangulation must be strictly
    well-formed: no degenerate triangles, no interior overlaps, and every
    landmark inside the canvas.
    """

    canvas_width: int
    canvas_height: int
    landmarks: np.ndarray  # (l, 2) float64, canvas coordinates
    triangles: np.ndarray  # (k, 3) int64

    def __post_init__(self):
        w, h = int(self.canvas_width), int(self.canvas_height)
        if w < 1 or h < 1:
            raise ValidationError(f"canvas size {w}x{h} must be positive")
        lms = _parse_landmarks(self.landmarks, "model")
        tris = _parse_triangles(self.triangles, lms.shape[0], "model")
        problems = []
        outside = np.nonzero((lms[:, 0] < 0) | (lms[:, 0] >= w)
                             | (lms[:, 1] < 0) | (lms[:, 1] >= h))[0]
        for i in outside:
            problems.append(f"model: landmark {i} out of canvas {w}x{h}: {lms[i].tolist()}")
        areas = signed_area(lms[tris])
        for k in np.nonzero(np.abs(areas) < DEGENERATE_AREA)[0]:
            problems.append(f"model: degenerate triangle {k} (|area| < {DEGENERATE_AREA} px^2)")
        if not problems:
            problems.extend(_overlap_problems(lms, tris))
        if problems:
            raise ValidationError(problems)
        object.__setattr__(self, "canvas_width", w)
        object.__setattr__(self, "canvas_height", h)
        object.__setattr__(self, "landmarks", _freeze(lms))
        object.__setattr__(self, "triangles", _freeze(tris))

    @property
    def landmark_count(self) -> int:
        return self.landmarks.shape[0]

    @property
    def triangle_count(self) -> int:
        return self.triangles.shape[0]


# Barycentric weights of the interior points sampled per triangle for the
# pairwise overlap check.
_INTERIOR_SAMPLES = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [1 / 2, 1 / 4, 1 / 4],
    [1 / 4, 1 / 2, 1 / 4],
    [1 / 4, 1 / 4, 1 / 2],
    [0.7, 0.15, 0.15],
    [0.15, 0.7, 0.15],
    [0.15, 0.15, 0.7],
])


def _edge_distances(tri_pts: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Signed pixel distance of points to each edge of each triangle.

    tri_pts: (k, 3, 2); points: (n, 2). Returns (k, n, 3), positive inside,
    after normalizing each triangle's orientation.
    """
    a = tri_pts[:, [0, 1, 2], :]                # (k, 3, 2) edge starts
    b = tri_pts[:, [1, 2, 0], :]                # edge ends
    e = b - a                                   # (k, 3, 2)
    length = np.linalg.norm(e, axis=2)          # (k, 3)
    length = np.where(length == 0, 1.0, length)
    rel = points[None, :, None, :] - a[:, None, :, :]        # (k, n, 3, 2)
    cross = e[:, None, :, 0] * rel[..., 1] - e[:, None, :, 1] * rel[..., 0]
    orient = np.sign(signed_area(tri_pts))[:, None, None]
    return orient * cross / length[:, None, :]


def _overlap_problems(landmarks: np.ndarray, triangles: np.ndarray) -> list:
    """Pairwise interior-overlap check via sampled interior points."""
    tri_pts = landmarks[triangles]                       # (k, 3, 2)
    samples = np.einsum("sj,kjc->ksc", _INTERIOR_SAMPLES, tri_pts)  # (k, s, 2)
    k = len(triangles)
    flat = samples.reshape(-1, 2)
    # strictly interior in some *other* triangle => overlap
    dist = _edge_distances(tri_pts, flat)                 # (k, k*s, 3)
    inside = (dist > 1e-7).all(axis=2).reshape(k, k, -1)  # inside[j, i, s]
    overlap = np.argwhere(inside.any(axis=2) & ~np.eye(k, dtype=bool))
    problems = []
    seen = set()
    for j, i in overlap:
        pair = (min(i, j), max(i, j))
        if pair not in seen:
            seen.add(pair)
            problems.append(f"model: triangles {pair[0]} and {pair[1]} overlap in interior")
    return problems


def locate_triangle(model: CanonicalModel, point) -> int | None:
    """Index of the triangle whose closed region contains ``point``.

    Boundary points count as inside (EDGE_TOL pixel tolerance); a point on an
    edge shared by several triangles resolves to the lowest triangle index.
    Returns None when the point is outside every triangle.
    """
    p = np.asarray(point, dtype=np.float64).reshape(1, 2)
    dist = _edge_distances(model.landmarks[model.triangles], p)  # (k, 1, 3)
    inside = (dist >= -EDGE_TOL).all(axis=2)[:, 0]
    hits = np.nonzero(inside)[0]
    if hits.size == 0:
        return None
    return int(hits[0])


def triangle_index_map(landmarks: np.ndarray, triangles: np.ndarray,
                       width: int, height: int, skip=()) -> np.ndarray:
    """Per-pixel triangle assignment over a raster of the given size.

    Each pixel center gets the lowest index of a triangle containing it
    (same inclusion rule and tie-break as locate_triangle), or -1 outside
    all triangles. Triangles listed in ``skip`` never claim pixels.
    """
    idx = np.full((height, width), -1, dtype=np.int32)
    skip = set(int(s) for s in skip)
    tri_pts = np.asarray(landmarks, dtype=np.float64)[np.asarray(triangles)]
    for k in range(len(tri_pts)):
        if k in skip:
            continue
        pts = tri_pts[k]
        x0 = max(int(np.floor(pts[:, 0].min() - EDGE_TOL)), 0)
        x1 = min(int(np.ceil(pts[:, 0].max() + EDGE_TOL)), width - 1)
        y0 = max(int(np.floor(pts[:, 1].min() - EDGE_TOL)), 0)
        y1 = min(int(np.ceil(pts[:, 1].max() + EDGE_TOL)), height - 1)
        if x0 > x1 or y0 > y1:
            continue
        xs, ys = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
        pix = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
        dist = _edge_distances(tri_pts[k:k + 1], pix)[0]   # (n, 3)
        inside = (dist >= -EDGE_TOL).all(axis=1).reshape(xs.shape)
        block = idx[y0:y1 + 1, x0:x1 + 1]
        block[inside & (block == -1)] = k
    return idx


# ---------------------------------------------------------------------------
# File ingestion / serialization
#
# Canonical-model JSON:  {"canvas":[W,H],"landmarks":[[u,v],...],"triangles":[[a,b,c],...]}
# Landmark-sequence JSON: {"triangles":[[a,b,c],...],"frames":[{"index":0,"landmarks":[[x,y],...]},...]}
# ---------------------------------------------------------------------------

def _read_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ValidationError(f"cannot read {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"parse failure in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: top-level JSON value must be an object")
    return data


def load_canonical_model(path) -> CanonicalModel:
    """Load and validate a canonical-model JSON file.

    Raises ValidationError enumerating every offending landmark/triangle.
    """
    data = _read_json(path)
    for key in ("canvas", "landmarks", "triangles"):
        if key not in data:
            raise ValidationError(f"canonical model: missing key '{key}'")
    canvas = data["canvas"]
    if (not isinstance(canvas, list) or len(canvas) != 2
            or not all(isinstance(v, int) and v > 0 for v in canvas)):
        raise ValidationError(f"canonical model: canvas must be [W, H] positive integers, got {canvas!r}")
    return CanonicalModel(canvas_width=canvas[0], canvas_height=canvas[1],
                          landmarks=data["landmarks"], triangles=data["triangles"])


def canonical_model_json(model: CanonicalModel) -> str:
    """Serialize a model in the canonical key order; floats keep full precision."""
    doc = {
        "canvas": [model.canvas_width, model.canvas_height],
        "landmarks": [[float(x), float(y)] for x, y in model.landmarks],
        "triangles": [[int(a), int(b), int(c)] for a, b, c in model.triangles],
    }
    return json.dumps(doc)


def save_canonical_model(model: CanonicalModel, path) -> None:
    Path(path).write_text(canonical_model_json(model) + "\n", encoding="utf-8")


def load_landmark_sequence(path, allow_gaps: bool = False):
    """Load a landmark-sequence JSON file.

    Returns (meshes, triangles): one FaceMesh per frame, all sharing the one
    topology block. Frame indices must be contiguous from 0; with
    ``allow_gaps`` missing frames come back as None entries instead of
    raising (detector dropouts, see the adapter's sidecar warnings).
    """
    data = _read_json(path)
    for key in ("triangles", "frames"):
        if key not in data:
            raise ValidationError(f"landmark sequence: missing key '{key}'")
    frames = data["frames"]
    if not isinstance(frames, list) or not frames:
        raise ValidationError("landmark sequence: 'frames' must be a non-empty list")

    by_index = {}
    for entry in frames:
        if not isinstance(entry, dict) or "index" not in entry or "landmarks" not in entry:
            raise ValidationError("landmark sequence: each frame needs 'index' and 'landmarks'")
        i = entry["index"]
        if not isinstance(i, int) or i < 0:
            raise ValidationError(f"landmark sequence: bad frame index {i!r}")
        if i in by_index:
            raise ValidationError(f"landmark sequence: duplicate frame index {i}")
        by_index[i] = entry["landmarks"]

    p = max(by_index) + 1
    missing = [i for i in range(p) if i not in by_index]
    if missing and not allow_gaps:
        raise ValidationError([f"landmark sequence: missing frame index {i}" for i in missing])

    counts = {len(lms) for lms in by_index.values()}
    if len(counts) != 1:
        raise ValidationError(f"landmark sequence: landmark count varies across frames: {sorted(counts)}")
    n = counts.pop()

    triangles = _parse_triangles(data["triangles"], n, "sequence")
    meshes = []
    for i in range(p):
        if i not in by_index:
            meshes.append(None)
            continue
        lms = _parse_landmarks(by_index[i], f"frame {i}")
        meshes.append(FaceMesh(landmarks=lms, triangles=triangles))
    return meshes, _freeze(triangles)


def landmark_sequence_json(triangles: np.ndarray, frame_landmarks) -> str:
    """Serialize per-frame landmarks plus shared topology; frames keyed 0..p-1."""
    doc = {
        "triangles": [[int(a), int(b), int(c)] for a, b, c in np.asarray(triangles)],
        "frames": [
            {"index": i, "landmarks": [[float(x), float(y)] for x, y in lms]}
            for i, lms in enumerate(frame_landmarks)
        ],
    }
    return json.dumps(doc)


def save_landmark_sequence(path, triangles: np.ndarray, frame_landmarks) -> None:
    Path(path).write_text(landmark_sequence_json(triangles, frame_landmarks) + "\n",
                          encoding="utf-8")

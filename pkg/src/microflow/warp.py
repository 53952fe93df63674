"""Per-triangle affine maps and piecewise-affine warping onto the canonical canvas.

Each triangle pair (frame triangle, canonical triangle) induces a 6-parameter
affine map, solved exactly from the three vertex correspondences. The warp is
destination-driven: every covered canonical pixel center is pulled from the
source frame through the inverse map with bilinear sampling, which leaves no
holes. Maps of triangles sharing an edge agree along that edge, so the
piecewise warp is continuous.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .facemesh import (
    DEGENERATE_AREA,
    CanonicalModel,
    FaceMesh,
    Frame,
    ValidationError,
    locate_triangle,
    signed_area,
    triangle_index_map,
)
from .interpolate import bilinear_sample

# Linear parts with |determinant| at or below this are not invertible enough
# to use.
SINGULAR_DET = 1e-12


class DegenerateTriangleError(ValueError):
    """A triangle involved in an affine solve is collapsed (|area| too small)."""


class SingularTransformError(ValueError):
    """The 2x2 linear part of an affine map is (near-)singular."""


class OutOfMeshError(ValueError):
    """A canonical point falls outside every triangle of the model."""


@dataclass(frozen=True, eq=False)
class TriangleAffine:
    """The active 2x3 block of a homogeneous affine matrix, plus triangle index."""

    m: np.ndarray  # (2, 3): [[m1, m2, m3], [m4, m5, m6]]
    k: int = -1

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"affine block must be (2, 3), got {m.shape}")
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if not np.isfinite(det) or abs(det) <= SINGULAR_DET:
            raise SingularTransformError(f"linear part is singular (det={det})")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @property
    def det(self) -> float:
        return float(self.m[0, 0] * self.m[1, 1] - self.m[0, 1] * self.m[1, 0])


@dataclass(frozen=True, eq=False)
class CanonicalFrame:
    """A frame embedded on the canonical canvas.

    intensity is finite and in [0, 1] wherever coverage is true and exactly 0
    elsewhere. ``degenerate_triangles`` reports source triangles skipped by
    the warp.
    """

    intensity: np.ndarray  # (H, W) float64
    coverage: np.ndarray   # (H, W) bool
    degenerate_triangles: tuple = ()

    def __post_init__(self):
        inten = np.asarray(self.intensity, dtype=np.float64)
        cov = np.asarray(self.coverage, dtype=bool)
        if inten.shape != cov.shape or inten.ndim != 2:
            raise ValidationError(
                f"intensity {inten.shape} and coverage {cov.shape} must be equal 2D shapes")
        covered = inten[cov]
        if covered.size and (not np.all(np.isfinite(covered))
                             or covered.min() < 0.0 or covered.max() > 1.0):
            raise ValidationError("covered intensity must be finite and in [0, 1]")
        if np.any(inten[~cov] != 0.0):
            raise ValidationError("intensity must be exactly 0 outside coverage")
        inten.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "coverage", cov)
        object.__setattr__(self, "degenerate_triangles", tuple(int(k) for k in self.degenerate_triangles))

    @property
    def height(self) -> int:
        return self.intensity.shape[0]

    @property
    def width(self) -> int:
        return self.intensity.shape[1]


def solve_affine(src, dst, k: int = -1) -> TriangleAffine:
    """Affine map taking the 3 src vertices exactly onto the 3 dst vertices.

    The six parameters come from two independent 3x3 linear systems (one per
    output coordinate). Both triangles must be non-degenerate.
    """
    src = np.asarray(src, dtype=np.float64).reshape(3, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(3, 2)
    if abs(signed_area(src[None])[0]) <= DEGENERATE_AREA:
        raise DegenerateTriangleError(f"source triangle degenerate: {src.tolist()}")
    if abs(signed_area(dst[None])[0]) <= DEGENERATE_AREA:
        raise DegenerateTriangleError(f"destination triangle degenerate: {dst.tolist()}")
    v = np.column_stack([src, np.ones(3)])     # (3, 3)
    coeffs = np.linalg.solve(v, dst)           # (3, 2): columns are (m1,m2,m3), (m4,m5,m6)
    return TriangleAffine(m=coeffs.T, k=k)


def invert_affine(a: TriangleAffine) -> TriangleAffine:
    """Inverse map; composition with the original is the identity."""
    lin = a.m[:, :2]
    det = a.det
    if abs(det) <= SINGULAR_DET:
        raise SingularTransformError(f"cannot invert near-singular map (det={det})")
    inv_lin = np.array([[lin[1, 1], -lin[0, 1]], [-lin[1, 0], lin[0, 0]]]) / det
    inv_t = -inv_lin @ a.m[:, 2]
    return TriangleAffine(m=np.column_stack([inv_lin, inv_t]), k=a.k)


def apply_affine(a: TriangleAffine, p) -> np.ndarray:
    """Apply the map to a point (2,) or an array of points (..., 2)."""
    p = np.asarray(p, dtype=np.float64)
    return p @ a.m[:, :2].T + a.m[:, 2]


def warp_to_canonical(frame: Frame, mesh: FaceMesh, model: CanonicalModel) -> CanonicalFrame:
    """Embed a frame onto the canonical canvas through its mesh.

    Destination-driven: each canonical pixel center covered by a triangle is
    sampled from the frame at the inverse-affine position with bilinear
    interpolation; source samples outside the frame clamp to the nearest edge
    pixel. Degenerate frame triangles are skipped (their canonical pixels
    stay uncovered) and reported in the result.
    """
    _check_pairing(mesh, model)
    areas = mesh.triangle_areas()
    degenerate = np.nonzero(np.abs(areas) <= DEGENERATE_AREA)[0]
    if degenerate.size == mesh.triangle_count:
        raise ValidationError("all mesh triangles are degenerate; nothing to warp")

    w, h = model.canvas_width, model.canvas_height
    idx = triangle_index_map(model.landmarks, model.triangles, w, h, skip=degenerate)
    coverage = idx >= 0
    out = np.zeros((h, w), dtype=np.float64)

    # canonical -> frame coefficient table, one 2x3 block per triangle
    skipped = set(degenerate.tolist())
    inv_blocks = np.zeros((mesh.triangle_count, 2, 3))
    for k in range(mesh.triangle_count):
        if k in skipped:
            continue
        fwd = solve_affine(mesh.landmarks[mesh.triangles[k]],
                           model.landmarks[model.triangles[k]], k=k)
        inv_blocks[k] = invert_affine(fwd).m

    ys, xs = np.nonzero(coverage)
    if ys.size:
        blocks = inv_blocks[idx[ys, xs]]
        src_x = blocks[:, 0, 0] * xs + blocks[:, 0, 1] * ys + blocks[:, 0, 2]
        src_y = blocks[:, 1, 0] * xs + blocks[:, 1, 1] * ys + blocks[:, 1, 2]
        out[ys, xs] = bilinear_sample(frame.intensity, src_x, src_y)
    return CanonicalFrame(intensity=out, coverage=coverage,
                          degenerate_triangles=tuple(int(d) for d in degenerate))


def map_vector_to_original(base, disp, model: CanonicalModel, mesh: FaceMesh):
    """Carry a canonical base point and displacement back into frame coordinates.

    Both endpoints go through the inverse affine of the one triangle
    containing the base point; micro-movements are sub-triangle scale, so a
    displacement that grazes a neighboring triangle still uses the base
    triangle's map.

    Returns (frame_point, frame_vector).
    """
    _check_pairing(mesh, model)
    base = np.asarray(base, dtype=np.float64).reshape(2)
    disp = np.asarray(disp, dtype=np.float64).reshape(2)
    k = locate_triangle(model, base)
    if k is None:
        raise OutOfMeshError(f"point {base.tolist()} lies outside the canonical mesh")
    fwd = solve_affine(mesh.landmarks[mesh.triangles[k]],
                       model.landmarks[model.triangles[k]], k=k)
    inv = invert_affine(fwd)
    p0 = apply_affine(inv, base)
    p1 = apply_affine(inv, base + disp)
    return p0, p1 - p0


def _check_pairing(mesh: FaceMesh, model: CanonicalModel) -> None:
    if mesh.landmark_count != model.landmark_count:
        raise ValidationError(
            f"landmark count mismatch: mesh has {mesh.landmark_count}, "
            f"model has {model.landmark_count}")
    if mesh.triangles.shape != model.triangles.shape or np.any(mesh.triangles != model.triangles):
        raise ValidationError("topology mismatch: mesh and model triangle lists differ")

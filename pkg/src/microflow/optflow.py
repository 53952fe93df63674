"""Patch-based optical flow on the canonical canvas.

Per site, the flow solves the 3x3-patch normal equations G d = b with
G = A^T A built from spatial gradients and b = -A^T I_t, using the closed
2x2 inverse. Sites whose G has a small minimum eigenvalue carry no reliable
motion information (the aperture problem) and are marked invalid.

A coarse-to-fine pyramid (2x2 box downsampling, bilinear upsampling with
vector doubling) plus a few refinement rounds per level extends the basic
single-patch solve to multi-pixel motion; pyramid_levels=1 with a single
iteration reproduces the plain one-shot scheme.

Binary flow format "MFLW": magic, little-endian u32 width/height/step, then
row-major per-site records (f32 dx, f32 dy, u8 valid, f32 min_eig).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .interpolate import bilinear_sample, box_downsample2, mask_downsample2, resize_bilinear
from .warp import CanonicalFrame

FLOW_MAGIC = b"MFLW"
_FLOW_RECORD = np.dtype([("dx", "<f4"), ("dy", "<f4"), ("valid", "u1"), ("min_eig", "<f4")])

# Smallest pyramid level still worth solving on.
_MIN_LEVEL_SIZE = 8


@dataclass(frozen=True, eq=False)
class GradientField:
    """Spatial and temporal derivatives over one canvas-sized grid."""

    ix: np.ndarray
    iy: np.ndarray
    it: np.ndarray

    def __post_init__(self):
        ix = np.asarray(self.ix, dtype=np.float64)
        iy = np.asarray(self.iy, dtype=np.float64)
        it = np.asarray(self.it, dtype=np.float64)
        if not (ix.shape == iy.shape == it.shape) or ix.ndim != 2:
            raise ValueError(
                f"gradient grids must share one 2D shape, got {ix.shape}/{iy.shape}/{it.shape}")
        for name, g in (("ix", ix), ("iy", iy), ("it", it)):
            if not np.all(np.isfinite(g)):
                raise ValueError(f"gradient grid {name} contains non-finite values")
        object.__setattr__(self, "ix", ix)
        object.__setattr__(self, "iy", iy)
        object.__setattr__(self, "it", it)


@dataclass(frozen=True)
class FlowParams:
    """Flow solver knobs.

    tau_eig rejects aperture-problem sites (a pure intensity ramp fails, a
    blob interior passes, on the [0, 1] intensity scale). The patch is fixed
    at 3x3. step > 1 returns flow on a subsampled site lattice; refinement
    still runs densely so results do not depend on the output stride.
    """

    tau_eig: float = 1e-4
    pyramid_levels: int = 3
    iterations_per_level: int = 3
    patch: int = 3
    step: int = 1

    def __post_init__(self):
        if not (self.tau_eig > 0):
            raise ValueError(f"tau_eig must be > 0, got {self.tau_eig}")
        if self.pyramid_levels < 1:
            raise ValueError(f"pyramid_levels must be >= 1, got {self.pyramid_levels}")
        if self.iterations_per_level < 1:
            raise ValueError(f"iterations_per_level must be >= 1, got {self.iterations_per_level}")
        if self.patch != 3:
            raise ValueError("patch size is fixed at 3")
        if self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-site displacements on the canonical canvas.

    Site (r, c) sits at canvas pixel (x, y) = (c * step, r * step); step=1 is
    dense. Invalid sites always carry d = (0, 0).
    """

    width: int
    height: int
    step: int
    d: np.ndarray        # (rows, cols, 2) float64, (dx, dy)
    valid: np.ndarray    # (rows, cols) bool
    min_eig: np.ndarray  # (rows, cols) float64

    def __post_init__(self):
        rows = -(-self.height // self.step)
        cols = -(-self.width // self.step)
        d = np.asarray(self.d, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        min_eig = np.asarray(self.min_eig, dtype=np.float64)
        if d.shape != (rows, cols, 2) or valid.shape != (rows, cols) or min_eig.shape != (rows, cols):
            raise ValueError(
                f"site grids must be ({rows}, {cols}[, 2]) for {self.width}x{self.height}"
                f" step {self.step}; got d {d.shape}, valid {valid.shape}, min_eig {min_eig.shape}")
        if np.any(d[~valid] != 0.0):
            raise ValueError("invalid sites must carry zero displacement")
        if not np.all(np.isfinite(d[valid])):
            raise ValueError("valid sites must carry finite displacement")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "min_eig", min_eig)

    @property
    def rows(self) -> int:
        return self.d.shape[0]

    @property
    def cols(self) -> int:
        return self.d.shape[1]

    def site_x(self) -> np.ndarray:
        return np.arange(self.cols) * self.step

    def site_y(self) -> np.ndarray:
        return np.arange(self.rows) * self.step

    def magnitudes(self) -> np.ndarray:
        """|d| at valid sites, flattened."""
        return np.linalg.norm(self.d[self.valid], axis=-1)


def spatial_gradients(frame: np.ndarray):
    """Central-difference dI/dx and dI/dy; one-sided on the borders."""
    grid = np.asarray(frame, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[0] < 3 or grid.shape[1] < 3:
        raise ValueError(f"grid must be at least 3x3, got {grid.shape}")
    ix = np.gradient(grid, axis=1)
    iy = np.gradient(grid, axis=0)
    return ix, iy


def temporal_gradient(ref: np.ndarray, cur: np.ndarray) -> np.ndarray:
    ref = np.asarray(ref, dtype=np.float64)
    cur = np.asarray(cur, dtype=np.float64)
    if ref.shape != cur.shape:
        raise ValueError(f"shape mismatch: ref {ref.shape} vs cur {cur.shape}")
    return cur - ref


def lk_solve_at(grads: GradientField, site, tau_eig: float):
    """Solve the 3x3-patch normal equations at one site.

    site is (x, y) with the full 3x3 neighborhood inside the grid. Returns
    (d, valid, min_eig); when the minimum eigenvalue of G falls below
    tau_eig the site is invalid and d is (0, 0).
    """
    x, y = int(site[0]), int(site[1])
    h, w = grads.ix.shape
    if not (1 <= x <= w - 2 and 1 <= y <= h - 2):
        raise ValueError(f"site ({x}, {y}) too close to border of {w}x{h} grid")
    ix = grads.ix[y - 1:y + 2, x - 1:x + 2].ravel()
    iy = grads.iy[y - 1:y + 2, x - 1:x + 2].ravel()
    it = grads.it[y - 1:y + 2, x - 1:x + 2].ravel()

    sxx = float(ix @ ix)
    sxy = float(ix @ iy)
    syy = float(iy @ iy)
    bx = -float(ix @ it)
    by = -float(iy @ it)

    half_trace = 0.5 * (sxx + syy)
    det = sxx * syy - sxy * sxy
    disc = np.sqrt(max(half_trace * half_trace - det, 0.0))
    min_eig = half_trace - disc
    if min_eig < tau_eig:
        return np.zeros(2), False, min_eig
    d = np.array([syy * bx - sxy * by, -sxy * bx + sxx * by]) / det
    return d, True, min_eig


def _patch_sums(a: np.ndarray) -> np.ndarray:
    """3x3 neighborhood sums over interior sites; output shape (H-2, W-2)."""
    rows = a[:-2] + a[1:-1] + a[2:]
    return rows[:, :-2] + rows[:, 1:-1] + rows[:, 2:]


def compute_flow(ref: CanonicalFrame, cur: CanonicalFrame, params: FlowParams = FlowParams()) -> FlowField:
    """Coarse-to-fine flow from the reference embedding to the current one.

    Sites are invalid where either coverage mask is false, the 3x3 window
    leaves the grid, or the normal matrix is ill-conditioned. Output is
    bit-deterministic for identical inputs.
    """
    if (ref.height, ref.width) != (cur.height, cur.width):
        raise ValueError(
            f"dim mismatch: ref {ref.width}x{ref.height} vs cur {cur.width}x{cur.height}")
    h, w = ref.height, ref.width
    if h < 3 or w < 3:
        s = params.step
        rows, cols = -(-h // s), -(-w // s)
        return FlowField(width=w, height=h, step=s, d=np.zeros((rows, cols, 2)),
                         valid=np.zeros((rows, cols), dtype=bool),
                         min_eig=np.zeros((rows, cols)))

    refs = [ref.intensity]
    curs = [cur.intensity]
    masks = [ref.coverage & cur.coverage]
    for _ in range(params.pyramid_levels - 1):
        if min(refs[-1].shape) < 2 * _MIN_LEVEL_SIZE:
            break
        refs.append(box_downsample2(refs[-1]))
        curs.append(box_downsample2(curs[-1]))
        masks.append(mask_downsample2(masks[-1]))

    u = np.zeros(refs[-1].shape)
    v = np.zeros(refs[-1].shape)
    valid = None
    min_eig_full = None

    for level in reversed(range(len(refs))):
        r, c, m = refs[level], curs[level], masks[level]
        lh, lw = r.shape
        if u.shape != r.shape:
            u = 2.0 * resize_bilinear(u, lh, lw)
            v = 2.0 * resize_bilinear(v, lh, lw)

        gx = np.gradient(r, axis=1)
        gy = np.gradient(r, axis=0)
        sxx = _patch_sums(gx * gx)
        sxy = _patch_sums(gx * gy)
        syy = _patch_sums(gy * gy)
        half_trace = 0.5 * (sxx + syy)
        det = sxx * syy - sxy * sxy
        disc = np.sqrt(np.maximum(half_trace * half_trace - det, 0.0))
        lam_min = half_trace - disc
        solvable = (lam_min >= params.tau_eig) & m[1:-1, 1:-1]
        det_safe = np.where(solvable, det, 1.0)

        xs, ys = np.meshgrid(np.arange(1, lw - 1, dtype=np.float64),
                             np.arange(1, lh - 1, dtype=np.float64))
        ui = u[1:-1, 1:-1]
        vi = v[1:-1, 1:-1]
        for _ in range(params.iterations_per_level):
            bx = np.zeros_like(ui)
            by = np.zeros_like(vi)
            for oy in (-1, 0, 1):
                for ox in (-1, 0, 1):
                    sl = (slice(1 + oy, lh - 1 + oy), slice(1 + ox, lw - 1 + ox))
                    it = bilinear_sample(c, xs + ox + ui, ys + oy + vi) - r[sl]
                    bx -= gx[sl] * it
                    by -= gy[sl] * it
            du = (syy * bx - sxy * by) / det_safe
            dv = (-sxy * bx + sxx * by) / det_safe
            np.add(ui, du, out=ui, where=solvable)
            np.add(vi, dv, out=vi, where=solvable)

        if level == 0:
            valid = np.zeros((lh, lw), dtype=bool)
            valid[1:-1, 1:-1] = solvable
            min_eig_full = np.zeros((lh, lw))
            min_eig_full[1:-1, 1:-1] = lam_min

    u = np.where(valid, u, 0.0)
    v = np.where(valid, v, 0.0)
    s = params.step
    d = np.stack([u[::s, ::s], v[::s, ::s]], axis=-1)
    return FlowField(width=w, height=h, step=s, d=d,
                     valid=valid[::s, ::s], min_eig=min_eig_full[::s, ::s])


# ---------------------------------------------------------------------------
# Flow files
# ---------------------------------------------------------------------------

def write_flow(path, field: FlowField) -> None:
    """Write the MFLW binary flow file (f32 vectors, u8 validity)."""
    rec = np.zeros(field.rows * field.cols, dtype=_FLOW_RECORD)
    rec["dx"] = field.d[..., 0].ravel()
    rec["dy"] = field.d[..., 1].ravel()
    rec["valid"] = field.valid.ravel().astype(np.uint8)
    rec["min_eig"] = field.min_eig.ravel()
    with open(path, "wb") as fh:
        fh.write(FLOW_MAGIC)
        fh.write(struct.pack("<III", field.width, field.height, field.step))
        fh.write(rec.tobytes())


def read_flow(path) -> FlowField:
    raw = Path(path).read_bytes()
    if raw[:4] != FLOW_MAGIC:
        raise ValueError(f"{path}: not a flow file (bad magic {raw[:4]!r})")
    width, height, step = struct.unpack("<III", raw[4:16])
    rows = -(-height // step)
    cols = -(-width // step)
    rec = np.frombuffer(raw[16:], dtype=_FLOW_RECORD)
    if rec.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} site records, found {rec.size}")
    d = np.stack([rec["dx"], rec["dy"]], axis=-1).astype(np.float64).reshape(rows, cols, 2)
    return FlowField(width=width, height=height, step=step, d=d,
                     valid=rec["valid"].reshape(rows, cols).astype(bool),
                     min_eig=rec["min_eig"].astype(np.float64).reshape(rows, cols))


def write_flow_csv(path, field: FlowField) -> None:
    """CSV export: one `u,v,dx,dy,valid,min_eig` row per site."""
    xs = field.site_x()
    ys = field.site_y()
    lines = ["u,v,dx,dy,valid,min_eig"]
    for r in range(field.rows):
        for c in range(field.cols):
            lines.append("%d,%d,%.9g,%.9g,%d,%.9g" % (
                xs[c], ys[r], field.d[r, c, 0], field.d[r, c, 1],
                int(field.valid[r, c]), field.min_eig[r, c]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

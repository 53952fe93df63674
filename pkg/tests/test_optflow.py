import numpy as np
import pytest

from microflow.optflow import (
    FlowField,
    FlowParams,
    GradientField,
    compute_flow,
    lk_solve_at,
    read_flow,
    spatial_gradients,
    temporal_gradient,
    write_flow,
    write_flow_csv,
)
from microflow.synth import cosine_texture
from microflow.warp import CanonicalFrame


def full_frame(grid):
    return CanonicalFrame(intensity=grid, coverage=np.ones_like(grid, dtype=bool))


def stacked_lsq_oracle(grads, x, y):
    """Brute force: stack the 9 patch equations and solve generic least squares."""
    ix = grads.ix[y - 1:y + 2, x - 1:x + 2].ravel()
    iy = grads.iy[y - 1:y + 2, x - 1:x + 2].ravel()
    it = grads.it[y - 1:y + 2, x - 1:x + 2].ravel()
    a = np.column_stack([ix, iy])
    b = -it
    d, *_ = np.linalg.lstsq(a, b, rcond=None)
    return d


def blob_texture(size=96, seed=11):
    """Grid of Gaussian blobs; textured near blobs, flat in between."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    grid = np.full((size, size), 0.2)
    for cy in range(12, size, 16):
        for cx in range(12, size, 16):
            amp = rng.uniform(0.3, 0.6)
            grid += amp * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * 3.0 ** 2))
    return np.clip(grid, 0.0, 1.0)


def integer_shift(grid, dx, dy):
    """Exact pixel copy shifted by an integer vector, edges replicated."""
    pad_x = abs(dx)
    pad_y = abs(dy)
    padded = np.pad(grid, ((pad_y, pad_y), (pad_x, pad_x)), mode="edge")
    h, w = grid.shape
    return padded[pad_y - dy:pad_y - dy + h, pad_x - dx:pad_x - dx + w]


def bilinear_shift(grid, dx, dy):
    from microflow.interpolate import bilinear_sample
    h, w = grid.shape
    xs, ys = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    return bilinear_sample(grid, xs - dx, ys - dy)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def test_gradients_constant():
    ix, iy = spatial_gradients(np.full((8, 8), 0.3))
    assert np.all(ix == 0) and np.all(iy == 0)


def test_gradients_ramp():
    grid = np.tile(np.arange(8) / 10.0, (8, 1))
    ix, iy = spatial_gradients(grid)
    assert np.allclose(ix, 0.1)
    assert np.allclose(iy, 0.0)


def test_gradients_bilinear_field():
    # I(x, y) = x*y/100: central differences are exact, ix = y/100, iy = x/100
    xs, ys = np.meshgrid(np.arange(8, dtype=float), np.arange(8, dtype=float))
    ix, iy = spatial_gradients(xs * ys / 100.0)
    assert np.allclose(ix[1:-1, 1:-1], ys[1:-1, 1:-1] / 100.0, atol=1e-12)
    assert np.allclose(iy[1:-1, 1:-1], xs[1:-1, 1:-1] / 100.0, atol=1e-12)


def test_gradients_too_small():
    with pytest.raises(ValueError, match="3x3"):
        spatial_gradients(np.zeros((2, 5)))


def test_temporal_gradient():
    ref = np.zeros((4, 4))
    assert np.all(temporal_gradient(ref, ref) == 0)
    assert np.allclose(temporal_gradient(ref, ref + 0.1), 0.1)
    with pytest.raises(ValueError, match="mismatch"):
        temporal_gradient(np.zeros((4, 4)), np.zeros((5, 4)))


def test_temporal_gradient_shifted_ramp():
    g = 0.05
    ref = np.tile(g * np.arange(10), (6, 1))
    cur = np.tile(g * (np.arange(10) - 1.0), (6, 1))
    it = temporal_gradient(ref, cur)
    assert np.allclose(it, -g)


# ---------------------------------------------------------------------------
# per-site solve
# ---------------------------------------------------------------------------

def test_lk_constant_patch_invalid():
    grads = GradientField(ix=np.zeros((5, 5)), iy=np.zeros((5, 5)), it=np.zeros((5, 5)))
    d, valid, min_eig = lk_solve_at(grads, (2, 2), tau_eig=1e-4)
    assert not valid and min_eig == 0.0
    assert np.all(d == 0)


def test_lk_pure_ramp_invalid():
    # gradient all along x: motion along y unobservable (aperture problem)
    grads = GradientField(ix=np.full((5, 5), 0.1), iy=np.zeros((5, 5)),
                          it=np.full((5, 5), -0.05))
    d, valid, min_eig = lk_solve_at(grads, (2, 2), tau_eig=1e-4)
    assert not valid
    assert min_eig < 1e-12
    assert np.all(d == 0)


def test_lk_matches_stacked_least_squares():
    rng = np.random.default_rng(9)
    compared = 0
    for _ in range(300):
        grads = GradientField(ix=rng.normal(0, 0.2, (5, 5)),
                              iy=rng.normal(0, 0.2, (5, 5)),
                              it=rng.normal(0, 0.1, (5, 5)))
        d, valid, _ = lk_solve_at(grads, (2, 2), tau_eig=1e-4)
        if valid:
            assert np.abs(d - stacked_lsq_oracle(grads, 2, 2)).max() < 1e-9
            compared += 1
    assert compared > 200


def test_lk_border_raises():
    grads = GradientField(ix=np.zeros((5, 5)), iy=np.zeros((5, 5)), it=np.zeros((5, 5)))
    with pytest.raises(ValueError, match="border"):
        lk_solve_at(grads, (0, 2), tau_eig=1e-4)


def test_lk_validity_monotone_in_tau():
    rng = np.random.default_rng(13)
    grads = GradientField(ix=rng.normal(0, 0.1, (7, 7)),
                          iy=rng.normal(0, 0.1, (7, 7)),
                          it=rng.normal(0, 0.05, (7, 7)))
    taus = [1e-6, 1e-4, 1e-2, 1.0]
    for x in range(1, 6):
        for y in range(1, 6):
            flags = [lk_solve_at(grads, (x, y), t)[1] for t in taus]
            # once invalid at some tau, stays invalid for larger tau
            assert all(not flags[i + 1] or flags[i] for i in range(len(flags) - 1))


# ---------------------------------------------------------------------------
# dense flow
# ---------------------------------------------------------------------------

def test_flow_identical_frames_zero():
    ref = full_frame(cosine_texture(seed=2).grid(64, 64))
    field = compute_flow(ref, ref)
    assert field.valid.any()
    assert field.magnitudes().max() <= 1e-6


def test_flow_integer_shift_blob():
    grid = blob_texture()
    shifted = integer_shift(grid, 2, 0)
    field = compute_flow(full_frame(grid), full_frame(shifted))
    interior = np.zeros_like(field.valid)
    interior[8:-8, 8:-8] = True
    sel = field.valid & interior
    assert sel.sum() > 200
    err = np.abs(np.median(field.d[sel], axis=0) - (2.0, 0.0)).max()
    assert err < 0.2


def test_flow_subpixel_shift():
    grid = cosine_texture(seed=21).grid(96, 96)
    shifted = bilinear_shift(grid, 0.5, -0.5)
    field = compute_flow(full_frame(grid), full_frame(shifted))
    interior = np.zeros_like(field.valid)
    interior[8:-8, 8:-8] = True
    sel = field.valid & interior
    med = np.median(field.d[sel], axis=0)
    assert np.abs(med - (0.5, -0.5)).max() < 0.2


def test_flow_antisymmetry():
    # per-site property, checked where both solves are well conditioned: at
    # near-threshold sites the weak-direction estimate is noise-limited, so
    # the conditioning gate is raised above the default for this check
    params = FlowParams(tau_eig=1e-3)
    for seed in (8, 21, 77):
        grid = cosine_texture(seed=seed, wavelengths=(32.0, 16.0), amplitude=0.45,
                              waves_per_scale=3).grid(128, 128)
        shifted = integer_shift(grid, 2, 1)
        fwd = compute_flow(full_frame(grid), full_frame(shifted), params)
        bwd = compute_flow(full_frame(shifted), full_frame(grid), params)
        both = fwd.valid & bwd.valid
        both[:12] = both[-12:] = False
        both[:, :12] = both[:, -12:] = False
        assert both.sum() > 500
        gap = np.linalg.norm(fwd.d[both] + bwd.d[both], axis=-1)
        assert gap.max() < 0.3


def test_flow_respects_coverage():
    grid = cosine_texture(seed=3).grid(64, 64)
    cov = np.ones_like(grid, dtype=bool)
    cov[:, :32] = False
    masked = CanonicalFrame(intensity=np.where(cov, grid, 0.0), coverage=cov)
    field = compute_flow(masked, masked)
    assert not field.valid[:, :32].any()


def test_flow_deterministic():
    grid = cosine_texture(seed=5).grid(64, 64)
    shifted = integer_shift(grid, 1, 1)
    a = compute_flow(full_frame(grid), full_frame(shifted))
    b = compute_flow(full_frame(grid), full_frame(shifted))
    assert np.array_equal(a.d, b.d)
    assert np.array_equal(a.valid, b.valid)
    assert np.array_equal(a.min_eig, b.min_eig)


def test_flow_step_subsamples_dense_result():
    grid = cosine_texture(seed=6).grid(48, 48)
    shifted = integer_shift(grid, 1, 0)
    dense = compute_flow(full_frame(grid), full_frame(shifted), FlowParams())
    coarse = compute_flow(full_frame(grid), full_frame(shifted), FlowParams(step=4))
    assert coarse.d.shape == (12, 12, 2)
    assert np.array_equal(coarse.d, dense.d[::4, ::4])
    assert np.array_equal(coarse.valid, dense.valid[::4, ::4])


def test_flow_dim_mismatch():
    a = full_frame(np.zeros((16, 16)))
    b = full_frame(np.zeros((16, 17)))
    with pytest.raises(ValueError, match="dim mismatch"):
        compute_flow(a, b)


def test_flow_params_validation():
    with pytest.raises(ValueError):
        FlowParams(step=0)
    with pytest.raises(ValueError):
        FlowParams(tau_eig=0.0)
    with pytest.raises(ValueError):
        FlowParams(patch=5)
    with pytest.raises(ValueError):
        FlowParams(pyramid_levels=0)


def test_flow_field_invariant():
    d = np.zeros((4, 4, 2))
    d[0, 0] = (1.0, 0.0)
    with pytest.raises(ValueError, match="zero displacement"):
        FlowField(width=4, height=4, step=1, d=d,
                  valid=np.zeros((4, 4), dtype=bool), min_eig=np.zeros((4, 4)))


# ---------------------------------------------------------------------------
# flow files
# ---------------------------------------------------------------------------

def test_flow_file_round_trip(tmp_path):
    grid = cosine_texture(seed=7).grid(48, 48)
    field = compute_flow(full_frame(grid), full_frame(integer_shift(grid, 1, -1)))
    path = tmp_path / "field.mflw"
    write_flow(path, field)
    back = read_flow(path)
    assert (back.width, back.height, back.step) == (48, 48, 1)
    assert np.array_equal(back.valid, field.valid)
    assert np.array_equal(back.d, field.d.astype(np.float32).astype(np.float64))
    assert np.array_equal(back.min_eig, field.min_eig.astype(np.float32).astype(np.float64))


def test_flow_file_layout(tmp_path):
    d = np.zeros((2, 3, 2))
    d[1, 2] = (1.5, -2.5)
    valid = np.zeros((2, 3), dtype=bool)
    valid[1, 2] = True
    field = FlowField(width=3, height=2, step=1, d=d, valid=valid,
                      min_eig=np.full((2, 3), 0.25))
    path = tmp_path / "tiny.mflw"
    write_flow(path, field)
    raw = path.read_bytes()
    assert raw[:4] == b"MFLW"
    assert len(raw) == 4 + 12 + 6 * 13  # magic + dims + 6 records of 13 bytes
    back = read_flow(path)
    assert back.d[1, 2].tolist() == [1.5, -2.5]
    assert back.valid[1, 2]


def test_flow_file_bad_magic(tmp_path):
    path = tmp_path / "bad.mflw"
    path.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(ValueError, match="magic"):
        read_flow(path)


def test_flow_csv(tmp_path):
    d = np.zeros((2, 2, 2))
    d[0, 1] = (0.25, 0.5)
    valid = np.zeros((2, 2), dtype=bool)
    valid[0, 1] = True
    field = FlowField(width=8, height=8, step=4, d=d, valid=valid, min_eig=np.zeros((2, 2)))
    path = tmp_path / "field.csv"
    write_flow_csv(path, field)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "u,v,dx,dy,valid,min_eig"
    assert len(lines) == 5
    assert lines[2] == "4,0,0.25,0.5,1,0"

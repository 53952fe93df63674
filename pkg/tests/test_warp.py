import numpy as np
import pytest

from microflow.facemesh import CanonicalModel, FaceMesh, Frame, ValidationError, triangle_index_map
from microflow.synth import cosine_texture, lattice_model
from microflow.warp import (
    DegenerateTriangleError,
    OutOfMeshError,
    SingularTransformError,
    TriangleAffine,
    apply_affine,
    invert_affine,
    map_vector_to_original,
    solve_affine,
    warp_to_canonical,
)

RNG = np.random.default_rng(42)


# ---------------------------------------------------------------------------
# oracle: plain Gaussian elimination over the stacked 6x6 vertex system
# ---------------------------------------------------------------------------

def gauss_solve(matrix, rhs):
    n = len(rhs)
    aug = [list(row) + [rhs[i]] for i, row in enumerate(matrix)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(aug[r][col]))
        aug[col], aug[piv] = aug[piv], aug[col]
        for r in range(col + 1, n):
            f = aug[r][col] / aug[col][col]
            for c in range(col, n + 1):
                aug[r][c] -= f * aug[col][c]
    x = [0.0] * n
    for r in reversed(range(n)):
        s = aug[r][n] - sum(aug[r][c] * x[c] for c in range(r + 1, n))
        x[r] = s / aug[r][r]
    return x


def affine_oracle(src, dst):
    """Stack all six vertex equations and solve them as one dense system."""
    rows, rhs = [], []
    for (x, y), (dx, dy) in zip(src, dst):
        rows.append([x, y, 1.0, 0.0, 0.0, 0.0])
        rhs.append(dx)
        rows.append([0.0, 0.0, 0.0, x, y, 1.0])
        rhs.append(dy)
    m = gauss_solve(rows, rhs)
    return np.array(m).reshape(2, 3)


def random_triangle(rng, span=100.0, min_area=1.0):
    while True:
        tri = rng.uniform(-span, span, size=(3, 2))
        u, v = tri[1] - tri[0], tri[2] - tri[0]
        area = 0.5 * abs(u[0] * v[1] - u[1] * v[0])
        if area > min_area:
            return tri


# ---------------------------------------------------------------------------
# solve_affine
# ---------------------------------------------------------------------------

def test_solve_identity():
    src = [(0, 0), (1, 0), (0, 1)]
    a = solve_affine(src, src)
    assert np.allclose(a.m, [[1, 0, 0], [0, 1, 0]], atol=1e-12)


def test_solve_translation():
    a = solve_affine([(0, 0), (1, 0), (0, 1)], [(5, 3), (6, 3), (5, 4)])
    assert np.allclose(a.m, [[1, 0, 5], [0, 1, 3]], atol=1e-12)


def test_solve_uniform_scale():
    a = solve_affine([(0, 0), (1, 0), (0, 1)], [(0, 0), (2, 0), (0, 2)])
    assert np.allclose(a.m, [[2, 0, 0], [0, 2, 0]], atol=1e-12)


def test_solve_matches_stacked_oracle():
    for _ in range(200):
        src = random_triangle(RNG)
        dst = random_triangle(RNG)
        a = solve_affine(src, dst)
        assert np.allclose(a.m, affine_oracle(src, dst), atol=1e-9)
        residual = np.abs(apply_affine(a, src) - dst).max()
        assert residual < 1e-9


def test_solve_degenerate_source_raises():
    with pytest.raises(DegenerateTriangleError):
        solve_affine([(0, 0), (1, 0), (2, 0)], [(0, 0), (1, 0), (0, 1)])


def test_solve_degenerate_destination_raises():
    with pytest.raises(DegenerateTriangleError):
        solve_affine([(0, 0), (1, 0), (0, 1)], [(0, 0), (1, 0), (2, 0)])


# ---------------------------------------------------------------------------
# invert / apply
# ---------------------------------------------------------------------------

def test_invert_identity():
    eye = TriangleAffine(m=np.array([[1.0, 0, 0], [0, 1.0, 0]]))
    assert np.allclose(invert_affine(eye).m, eye.m, atol=1e-15)


def test_invert_translation():
    a = TriangleAffine(m=np.array([[1.0, 0, 5], [0, 1.0, 3]]))
    assert np.allclose(invert_affine(a).m, [[1, 0, -5], [0, 1, -3]], atol=1e-15)


def test_invert_round_trip_random():
    for _ in range(200):
        while True:
            lin = RNG.uniform(-2, 2, size=(2, 2))
            if abs(np.linalg.det(lin)) > 0.1:
                break
        a = TriangleAffine(m=np.column_stack([lin, RNG.uniform(-50, 50, 2)]))
        pts = RNG.uniform(-5000, 5000, size=(16, 2))
        back = apply_affine(invert_affine(a), apply_affine(a, pts))
        assert np.abs(back - pts).max() < 1e-9


def test_invert_near_singular_raises():
    with pytest.raises(SingularTransformError):
        TriangleAffine(m=np.array([[1.0, 1.0, 0], [1.0, 1.0 + 1e-14, 0]]))


def test_apply_examples():
    eye = TriangleAffine(m=np.array([[1.0, 0, 0], [0, 1.0, 0]]))
    assert np.allclose(apply_affine(eye, (3.5, 7.25)), (3.5, 7.25))
    scale2 = TriangleAffine(m=np.array([[2.0, 0, 0], [0, 2.0, 0]]))
    assert np.allclose(apply_affine(scale2, (1, 1)), (2, 2))
    shift = TriangleAffine(m=np.array([[1.0, 0, 5], [0, 1.0, 3]]))
    assert np.allclose(apply_affine(shift, (0, 0)), (5, 3))


def test_edge_consistency_across_shared_edges():
    model = lattice_model(canvas=(64, 64), points=(4, 4), margin=4.0)
    landmarks = model.landmarks + RNG.uniform(-3, 3, size=model.landmarks.shape) + (20, 20)
    tris = model.triangles
    affines = [solve_affine(landmarks[t], model.landmarks[t]) for t in tris]
    ts = np.linspace(0, 1, 9)[:, None]
    checked = 0
    for i in range(len(tris)):
        for j in range(i + 1, len(tris)):
            shared = sorted(set(tris[i]) & set(tris[j]))
            if len(shared) != 2:
                continue
            seg = (1 - ts) * landmarks[shared[0]] + ts * landmarks[shared[1]]
            gap = np.abs(apply_affine(affines[i], seg) - apply_affine(affines[j], seg)).max()
            assert gap < 1e-9
            checked += 1
    assert checked > 10


# ---------------------------------------------------------------------------
# warp_to_canonical
# ---------------------------------------------------------------------------

def identity_setup(canvas=(32, 32)):
    model = lattice_model(canvas=canvas, points=(3, 3), margin=2.0)
    mesh = FaceMesh(landmarks=model.landmarks, triangles=model.triangles)
    return model, mesh


def test_warp_constant_frame():
    model, mesh = identity_setup()
    cf = warp_to_canonical(Frame(np.full((32, 32), 0.5)), mesh, model)
    assert cf.coverage.any()
    assert np.allclose(cf.intensity[cf.coverage], 0.5)
    assert np.all(cf.intensity[~cf.coverage] == 0.0)


def test_warp_identity_mesh_reproduces_frame():
    model, mesh = identity_setup()
    rng = np.random.default_rng(3)
    grid = rng.uniform(0.1, 0.9, size=(32, 32))
    cf = warp_to_canonical(Frame(grid), mesh, model)
    assert np.abs(cf.intensity[cf.coverage] - grid[cf.coverage]).max() < 1e-9


def test_warp_translated_ramp():
    # frame holds I(x, y) = x / W; mesh sits 4 px right of the canonical
    # layout, so canonical (u, v) must hold (u + 4) / W exactly.
    w = 32
    model = lattice_model(canvas=(16, 16), points=(3, 3), margin=2.0)
    mesh = FaceMesh(landmarks=model.landmarks + (4.0, 0.0), triangles=model.triangles)
    ramp = np.tile(np.arange(w) / w, (24, 1))
    cf = warp_to_canonical(Frame(ramp), mesh, model)
    ys, xs = np.nonzero(cf.coverage)
    expected = (xs + 4.0) / w
    assert np.abs(cf.intensity[ys, xs] - expected).max() < 1e-6


def test_warp_global_affine_reproduces_texture():
    model = lattice_model(canvas=(96, 96), points=(4, 4), margin=6.0)
    tex = cosine_texture(seed=5, wavelengths=(64.0, 48.0))
    theta = np.deg2rad(4.0)
    lin = 1.05 * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    t = np.array([30.0, 22.0])
    mesh = FaceMesh(landmarks=model.landmarks @ lin.T + t, triangles=model.triangles)

    h = w = 192
    xs, ys = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    inv = np.linalg.inv(lin)
    cx = inv[0, 0] * (xs - t[0]) + inv[0, 1] * (ys - t[1])
    cy = inv[1, 0] * (xs - t[0]) + inv[1, 1] * (ys - t[1])
    frame = Frame(np.clip(tex.sample(cx, cy), 0.0, 1.0))

    cf = warp_to_canonical(frame, mesh, model)
    expected = tex.grid(96, 96)
    interior = cf.coverage.copy()
    interior[:2] = interior[-2:] = False
    interior[:, :2] = interior[:, -2:] = False
    err = np.abs(cf.intensity - expected)[interior].max()
    assert err <= 1e-3


def test_coverage_mask_independent_of_content():
    model, mesh = identity_setup()
    rng = np.random.default_rng(4)
    cf1 = warp_to_canonical(Frame(rng.uniform(size=(32, 32))), mesh, model)
    cf2 = warp_to_canonical(Frame(rng.uniform(size=(32, 32))), mesh, model)
    assert np.array_equal(cf1.coverage, cf2.coverage)
    raster = triangle_index_map(model.landmarks, model.triangles, 32, 32)
    assert np.array_equal(cf1.coverage, raster >= 0)


def test_warp_skips_degenerate_triangles():
    model, mesh = identity_setup()
    landmarks = np.array(model.landmarks)
    collapsed = landmarks.copy()
    # collapse a corner cell by moving one landmark onto a neighbor
    collapsed[0] = collapsed[1]
    bad_mesh = FaceMesh(landmarks=collapsed, triangles=model.triangles)
    cf = warp_to_canonical(Frame(np.full((32, 32), 0.5)), bad_mesh, model)
    assert len(cf.degenerate_triangles) >= 1
    full = warp_to_canonical(Frame(np.full((32, 32), 0.5)), mesh, model)
    assert cf.coverage.sum() < full.coverage.sum()


def test_warp_all_degenerate_raises():
    model, _ = identity_setup()
    flat = np.array(model.landmarks)
    flat[:, 1] = 7.0
    mesh = FaceMesh(landmarks=flat, triangles=model.triangles)
    with pytest.raises(ValidationError, match="degenerate"):
        warp_to_canonical(Frame(np.full((32, 32), 0.5)), mesh, model)


def test_warp_topology_mismatch():
    model, mesh = identity_setup()
    other = lattice_model(canvas=(32, 32), points=(3, 3), margin=2.0)
    swapped = np.array(other.triangles)[::-1]
    bad = FaceMesh(landmarks=other.landmarks, triangles=swapped)
    with pytest.raises(ValidationError, match="topology"):
        warp_to_canonical(Frame(np.full((32, 32), 0.5)), bad, model)


# ---------------------------------------------------------------------------
# map_vector_to_original
# ---------------------------------------------------------------------------

def test_map_vector_identity_embedding():
    model = lattice_model(canvas=(32, 32), points=(3, 3), margin=2.0)
    mesh = FaceMesh(landmarks=model.landmarks, triangles=model.triangles)
    base, vec = map_vector_to_original((10, 10), (1, 0), model, mesh)
    assert np.allclose(base, (10, 10), atol=1e-9)
    assert np.allclose(vec, (1, 0), atol=1e-9)


def test_map_vector_scaled_embedding():
    model = lattice_model(canvas=(32, 32), points=(3, 3), margin=2.0)
    mesh = FaceMesh(landmarks=model.landmarks * 2.0, triangles=model.triangles)
    base, vec = map_vector_to_original((10, 10), (1, 0), model, mesh)
    assert np.allclose(base, (20, 20), atol=1e-9)
    assert np.allclose(vec, (2, 0), atol=1e-9)


def test_map_vector_outside_hull():
    model = lattice_model(canvas=(32, 32), points=(3, 3), margin=2.0)
    mesh = FaceMesh(landmarks=model.landmarks, triangles=model.triangles)
    with pytest.raises(OutOfMeshError):
        map_vector_to_original((31.5, 31.5), (1, 0), model, mesh)

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mfv3d.encoder import encode_fv, finalize_normalization
from mfv3d.errors import DegeneratePlaneError, MisuseError, NoPointError
from mfv3d.gmm import GMM, build_grid_gmm, soft_assignment
from mfv3d.reconstruct import (PlaneParams, estimate_points_per_gaussian, plane_errors, recover_plane,
                               recover_planes, recover_single_point, sample_plane_patch)

coords = st.floats(-2, 2, allow_nan=False)


def test_single_point_k1_example():
    g = GMM([1.0], [[0, 0, 0]], [0.5])
    fv = encode_fv(g, [[0.2, 0, 0]])
    np.testing.assert_allclose(recover_single_point(fv, g, 0), [0.2, 0, 0], atol=1e-9)
    fv = encode_fv(g, [[0, 0, 0]])
    np.testing.assert_allclose(recover_single_point(fv, g, 0), [0, 0, 0], atol=1e-15)


@given(st.tuples(coords, coords, coords), st.tuples(coords, coords, coords),
       st.floats(0.05, 3.0), st.booleans())
def test_single_point_k1_identity(p, mu, sigma, tnorm):
    g = GMM([1.0], [mu], [sigma])
    fv = encode_fv(g, [p], apply_t_norm=tnorm)
    np.testing.assert_allclose(recover_single_point(fv, g, 0), p, atol=1e-9)


def test_single_point_grid():
    g = build_grid_gmm(5, sigma=0.1)
    k = 62  # the centre cell
    p = g.means[k] + [0, 0, 0.02]
    np.testing.assert_allclose(recover_single_point(encode_fv(g, [p]), g, k), p, atol=1e-3)


def test_single_point_errors():
    g = build_grid_gmm(5, sigma=1e-3)
    fv = encode_fv(g, [[0.2, 0.2, 0.2]], underflow="zero")
    with pytest.raises(NoPointError):
        recover_single_point(fv, g, 0)
    g1 = GMM([1.0], [[0, 0, 0]], [1.0])
    with pytest.raises(MisuseError):
        recover_single_point(finalize_normalization(encode_fv(g1, [[1, 0, 0]])), g1, 0)


def test_estimate_k1_is_t():
    g = GMM([1.0], [[0, 0, 0]], [1.0])
    P = np.random.default_rng(0).normal(size=(37, 3))
    assert estimate_points_per_gaussian(encode_fv(g, P), g, 0, 37) == pytest.approx(37, rel=1e-12)


def test_estimate_far_cloud_is_zero():
    g = build_grid_gmm(5)
    P = g.means[0] + np.random.default_rng(1).normal(0, 0.02, size=(100, 3))
    est, clamped = estimate_points_per_gaussian(encode_fv(g, P), g, 124, 100, return_clamped=True)
    assert est == pytest.approx(0.0, abs=1e-9)
    assert est >= 0.0 and isinstance(clamped, (bool, np.bool_))


def test_estimate_matches_gamma_sum():
    rng = np.random.default_rng(2)
    g = build_grid_gmm(4)
    P = rng.uniform(-1, 1, size=(300, 3))
    fv = encode_fv(g, P)
    oracle = soft_assignment(g, P).sum(axis=0)
    est = [estimate_points_per_gaussian(fv, g, k, 300) for k in range(g.K)]
    np.testing.assert_allclose(est, oracle, rtol=1e-9, atol=1e-9)


def test_estimate_needs_t_normalized():
    g = build_grid_gmm(2)
    with pytest.raises(MisuseError):
        estimate_points_per_gaussian(encode_fv(g, [[0, 0, 0]], apply_t_norm=False), g, 0, 1)


def _plane_samples(rng, n, rho0, half=0.4):
    uv = rng.uniform(-half, half, size=(n, 2))
    return np.column_stack([np.full(n, rho0), uv])


def test_plane_single_gaussian():
    rng = np.random.default_rng(3)
    g = GMM([1.0], [[0, 0, 0]], [0.2])
    rho0 = 0.1
    P = _plane_samples(rng, 20_000, rho0)
    plane = recover_plane(encode_fv(g, P), g, 0, len(P))
    assert abs(np.linalg.norm(plane.normal) - 1.0) < 1e-12
    np.testing.assert_allclose(plane.normal, [1, 0, 0], atol=0.02)
    assert plane.rho0 == pytest.approx(rho0, rel=0.1)
    assert plane.rho == pytest.approx(plane.rho0 + g.means[0] @ plane.normal)
    d = plane.to_dict()
    assert set(d) == {"normal", "rho", "rho0", "gaussian_index", "t_k_estimate"}


def test_plane_sign_convention():
    rng = np.random.default_rng(4)
    g = GMM([1.0], [[0, 0, 0]], [0.2])
    P = _plane_samples(rng, 5000, -0.1)
    plane = recover_plane(encode_fv(g, P), g, 0, len(P))
    assert plane.rho0 >= 0
    np.testing.assert_allclose(plane.normal, [-1, 0, 0], atol=0.05)


def test_plane_through_centre_is_degenerate():
    # exactly symmetric samples about the centre give G_mu == 0
    g = GMM([1.0], [[0, 0, 0]], [0.2])
    ax = np.linspace(-0.4, 0.4, 21)
    yy, zz = np.meshgrid(ax, ax)
    P = np.column_stack([np.zeros(yy.size), yy.ravel(), zz.ravel()])
    with pytest.raises(DegeneratePlaneError) as info:
        recover_plane(encode_fv(g, P), g, 0, len(P))
    assert info.value.rho0 == 0.0


def test_plane_threshold():
    g = build_grid_gmm(5, sigma=0.1)
    P = _plane_samples(np.random.default_rng(5), 10, 0.05)
    with pytest.raises(NoPointError):
        recover_plane(encode_fv(g, P), g, 62, len(P))


def test_plane_error_shrinks_with_samples():
    g = GMM([1.0], [[0, 0, 0]], [0.2])
    normal = np.array([0.0, 1.0, 1.0]) / np.sqrt(2)
    mean_err = []
    for n in (100, 1000, 10_000):
        errs = []
        for seed in range(10):
            P = sample_plane_patch(normal, 0.1, n, seed=seed, method="random", half_extent=0.5)
            errs.append(plane_errors(recover_plane(encode_fv(g, P), g, 0, n, min_points=1),
                                     normal, 0.1)[0])
        mean_err.append(np.mean(errs))
    assert mean_err[0] > mean_err[1] > mean_err[2]


def test_recover_planes_skips_empty():
    g = build_grid_gmm(5, sigma=0.1)
    normal = np.array([0.0, 1.0, 1.0]) / np.sqrt(2)
    P = sample_plane_patch(normal, 0.05, 10_000, seed=0)
    planes = recover_planes(encode_fv(g, P), g, len(P))
    assert 0 < len(planes) < g.K
    assert all(p.t_k_estimate >= 30 for p in planes)
    # cells whose neighbourhood lies inside the patch meet 3 degrees / 0.02;
    # the cells on the cube border carry a systematic inward bias
    interior = [p for p in planes if np.abs(g.means[p.gaussian_index]).max() < 0.5]
    assert len(interior) == 15
    for p in interior:
        angle, drho = plane_errors(p, normal, 0.05)
        assert angle < 3.0 and drho < 0.02


def test_plane_errors_sign_alignment():
    p = PlaneParams(np.array([0, 0, -1.0]), -0.3, 0.1, 0, 50.0)
    angle, drho = plane_errors(p, [0, 0, 1], 0.3)
    assert angle == pytest.approx(0.0, abs=1e-12) and drho == pytest.approx(0.0, abs=1e-12)


def test_sample_plane_patch():
    normal = np.array([0.0, 1.0, 1.0]) / np.sqrt(2)
    for method in ("stratified", "random"):
        P = sample_plane_patch(normal, 0.05, 10_000, seed=1, method=method)
        assert P.shape == (10_000, 3)
        np.testing.assert_allclose(P @ normal, 0.05, atol=1e-12)
        assert np.abs(P).max() <= 1.0 + 1e-9
    np.testing.assert_array_equal(sample_plane_patch(normal, 0.05, 500, seed=2),
                                  sample_plane_patch(normal, 0.05, 500, seed=2))
    # oblique plane whose patch is not a rectangle in the chosen basis
    tilted = np.array([1.0, 2.0, 3.0]) / np.sqrt(14)
    assert sample_plane_patch(tilted, 0.2, 2000, seed=3).shape == (2000, 3)
    with pytest.raises(ValueError):
        sample_plane_patch(normal, 5.0, 10, seed=0)

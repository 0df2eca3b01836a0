import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.distance import pdist

from mfv3d.corrupt import (CorruptionSpec, augment_train, delete_region, delete_uniform,
                           euler_rotation, insert_outliers, perturb_gaussian, random_rotation,
                           rotate_euler, rotate_random)
from mfv3d.errors import EmptyInputError

seeds = st.integers(0, 2 ** 31 - 1)


@pytest.fixture
def cloud():
    return np.random.default_rng(0).uniform(-1, 1, size=(2048, 3))


def _rows(a):
    return {tuple(r) for r in a}


def test_delete_uniform_counts(cloud):
    np.testing.assert_array_equal(delete_uniform(cloud, 0.0, 1), cloud)
    half = delete_uniform(cloud, 0.5, 1)
    assert len(half) == 1024 and _rows(half) <= _rows(cloud)
    assert len(delete_uniform(cloud[:5], 0.5, 0)) == 3  # 2.5 rounds half up


def test_delete_uniform_seeds(cloud):
    np.testing.assert_array_equal(delete_uniform(cloud, 0.3, 7), delete_uniform(cloud, 0.3, 7))
    assert not np.array_equal(delete_uniform(cloud, 0.3, 7), delete_uniform(cloud, 0.3, 8))


def test_delete_errors(cloud):
    with pytest.raises(ValueError):
        delete_uniform(cloud, 1.0, 0)
    with pytest.raises(EmptyInputError):
        delete_uniform(cloud[:1], 0.9, 0)
    with pytest.raises(EmptyInputError):
        delete_region(cloud[:2], 0.9, 0)


def test_delete_region_nearest_removed(cloud):
    out = delete_region(cloud, 0.2, 3)
    assert len(out) == 2048 - round(2048 * 0.2)
    removed = np.array(sorted(_rows(cloud) - _rows(out)))
    # the removed set is a ball: some centre sits nearer every removed point
    # than every survivor, and that centre is one of the removed points
    found = False
    for c in removed:
        if np.linalg.norm(removed - c, axis=1).max() <= np.linalg.norm(out - c, axis=1).min():
            found = True
            break
    assert found
    np.testing.assert_array_equal(out, delete_region(cloud, 0.2, 3))


def test_delete_region_tiny_ratio(cloud):
    np.testing.assert_array_equal(delete_region(cloud, 1e-5, 0), cloud)
    assert len(delete_region(cloud, 1 / 2048, 0)) == 2047


def test_outliers(cloud):
    np.testing.assert_array_equal(insert_outliers(cloud, 0, 1), cloud)
    out = insert_outliers(cloud, 5000, 1)
    np.testing.assert_array_equal(out[:2048], cloud)
    extra = out[2048:]
    assert np.linalg.norm(extra, axis=1).max() <= 1.0
    assert np.linalg.norm(extra.mean(axis=0)) <= 3 / np.sqrt(5000)


def test_perturb(cloud):
    np.testing.assert_array_equal(perturb_gaussian(cloud, 0.0, 1), cloud)
    out = perturb_gaussian(cloud, 0.05, 1, bound=0.06)
    assert np.linalg.norm(out - cloud, axis=1).max() <= 0.06 + 1e-12
    assert len(out) == len(cloud)


def test_perturb_statistics():
    pts = np.zeros((100_000, 3))
    sigma = 0.01
    d = perturb_gaussian(pts, sigma, 2, bound=1.0)
    assert abs(d.std() - sigma) / sigma < 0.05
    # the default bound of 3 sigma clips only the tail
    dflt = perturb_gaussian(pts, sigma, 2)
    assert np.linalg.norm(dflt, axis=1).max() <= 3 * sigma + 1e-15


@given(seeds)
def test_rotation_is_isometry(seed):
    pts = np.random.default_rng(seed).normal(size=(30, 3))
    R = random_rotation(np.random.default_rng(seed))
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
    out = rotate_random(pts, seed)
    np.testing.assert_allclose(pdist(out), pdist(pts), atol=1e-9)


def test_rotation_inverse_and_identity():
    pts = np.random.default_rng(1).normal(size=(50, 3))
    np.testing.assert_array_equal(rotate_euler(pts, (0, 0, 0)), pts)
    angles = (0.3, -1.1, 2.0)
    R = euler_rotation(angles)
    np.testing.assert_allclose(rotate_euler(pts, angles) @ R, pts, atol=1e-12)


def test_rotation_uniform_axis_marginal():
    # for a Haar rotation the image of e_z is uniform on the sphere, so its
    # z component is uniform on [-1, 1]
    z = np.array([random_rotation(np.random.default_rng(s))[2, 2] for s in range(4000)])
    assert abs(z.mean()) < 0.05
    assert abs(np.mean(z ** 2) - 1 / 3) < 0.03


def test_augment_parameters_and_affinity():
    pts = np.random.default_rng(2).normal(size=(20, 3))
    out, scale, shift = augment_train(pts, 5, return_params=True)
    assert np.all((0.66 <= scale) & (scale <= 1.5))
    assert np.all((-0.2 <= shift) & (shift <= 0.2))
    np.testing.assert_allclose(out, pts * scale + shift, atol=1e-15)
    r_in = (pts[0] - pts[1]) / (pts[2] - pts[3])
    r_out = (out[0] - out[1]) / (out[2] - out[3])
    np.testing.assert_allclose(r_out, r_in, rtol=1e-9)
    np.testing.assert_array_equal(augment_train(pts, 5), augment_train(pts, 5))


def test_spec_parse_round_trip(cloud):
    spec = CorruptionSpec.parse("kind=perturb,sigma=0.01,seed=3")
    assert spec.kind == "perturb" and spec.params == {"sigma": 0.01} and spec.seed == 3
    assert CorruptionSpec.parse(str(spec)) == spec
    np.testing.assert_array_equal(spec.apply(cloud), perturb_gaussian(cloud, 0.01, 3))
    outl = CorruptionSpec.parse("kind=outliers, count=10, seed=1")
    assert outl.params["count"] == 10 and len(outl.apply(cloud)) == 2058


@pytest.mark.parametrize("text", ["sigma=0.1", "kind=explode", "kind=perturb,sigma=-1",
                                  "kind=delete_uniform,ratio=1.0", "kind=rotate,ratio=0.1",
                                  "kind=perturb,sigma"])
def test_spec_rejects(text):
    with pytest.raises(ValueError):
        CorruptionSpec.parse(text)


def test_transforms_use_independent_streams(cloud):
    # the same seed through two transforms must not reuse one stream
    a = delete_uniform(cloud, 0.5, 11)
    b = delete_region(cloud, 0.5, 11)
    assert not np.array_equal(a, b)

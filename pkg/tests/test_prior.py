import math

import numpy as np
import pytest

from aae_emotion.errors import ShapeError, ValidationError
from aae_emotion.prior import GaussianComponent, MixturePrior, default_layout


def test_four_class_circle_layout():
    p = default_layout(4, 2, 4.0, 0.5)
    np.testing.assert_array_equal(p.means, [[4, 0], [0, 4], [-4, 0], [0, -4]])
    np.testing.assert_array_equal(p.stddevs, np.full((4, 2), 0.5))


def test_single_class_layout():
    np.testing.assert_array_equal(default_layout(1, 2).means, [[4.0, 0.0]])


@pytest.mark.parametrize("c", [3, 4, 5, 7])
def test_adjacent_means_equidistant(c):
    m = default_layout(c, 3, radius=2.5).means
    d = [np.linalg.norm(m[i] - m[(i + 1) % c]) for i in range(c)]
    np.testing.assert_allclose(d, d[0], rtol=1e-12)
    assert np.all(m[:, 2] == 0)


def test_layout_validation():
    with pytest.raises(ValidationError):
        default_layout(0)
    with pytest.raises(ValidationError):
        default_layout(4, radius=0)
    with pytest.raises(ValidationError):
        default_layout(4, stddev=-1)


def test_degenerate_component_sample_equals_mean():
    p = MixturePrior([GaussianComponent([1.5, -2.0], 1e-12)], ["a"])
    z = p.sample("a", 50, np.random.default_rng(0))
    np.testing.assert_allclose(z, np.tile([1.5, -2.0], (50, 1)), atol=1e-9)


def test_sample_moments_law_of_large_numbers():
    # standard error of the mean is 0.5/sqrt(1e5) = 0.0016, far inside 0.02
    p = default_layout(["a", "b", "c", "d"], 2, 4.0, 0.5)
    z = p.sample("a", 100_000, np.random.default_rng(1))
    assert np.all(np.abs(z.mean(axis=0) - [4.0, 0.0]) < 0.02)
    assert np.all(np.abs(z.std(axis=0) - 0.5) < 0.02)


def test_sampling_is_deterministic():
    p = default_layout(3)
    a = p.sample("1", 10, np.random.default_rng(5))
    b = p.sample("1", 10, np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)


def test_sample_for_labels_uses_each_rows_component():
    p = MixturePrior([GaussianComponent([0.0, 0.0], 1e-9), GaussianComponent([10.0, 0.0], 1e-9)],
                     ["x", "y"])
    z = p.sample_for_labels(["y", "x", "y"], np.random.default_rng(0))
    np.testing.assert_allclose(z, [[10, 0], [0, 0], [10, 0]], atol=1e-6)
    with pytest.raises(ValidationError):
        p.sample_for_labels(["z"], np.random.default_rng(0))


def test_standard_normal_log_density_at_mean():
    for k in (1, 2, 5):
        p = MixturePrior([GaussianComponent(np.zeros(k), 1.0)], ["only"])
        assert p.log_density(np.zeros(k)) == pytest.approx(-(k / 2) * math.log(2 * math.pi))


def test_log_density_matches_direct_summation():
    p = default_layout(4, 2, 4.0, 0.5)
    rng = np.random.default_rng(0)
    for z in rng.uniform(-6, 6, (20, 2)):
        total = 0.0
        for m, s in zip(p.means, p.stddevs):
            norm = 1.0 / (2 * math.pi * s[0] * s[1])
            total += 0.25 * norm * math.exp(-0.5 * (((z - m) / s) ** 2).sum())
        assert p.log_density(z) == pytest.approx(math.log(total), rel=1e-10)


def test_log_density_at_isolated_mean():
    p = default_layout(4, 2, 4.0, 0.5)
    peak = -math.log(2 * math.pi * 0.25)
    assert p.log_density(np.array([4.0, 0.0])) == pytest.approx(math.log(0.25) + peak, abs=1e-6)


def test_density_integrates_to_one():
    p = default_layout(4, 2, 4.0, 0.5)
    # each component lies within +-8 sigma of the box edges
    lo, hi = -4.0 - 8 * 0.5, 4.0 + 8 * 0.5
    g = np.linspace(lo, hi, 401)
    h = g[1] - g[0]
    xx, yy = np.meshgrid(g, g)
    dens = np.exp(p.log_density(np.stack([xx.ravel(), yy.ravel()], axis=1)))
    assert abs(dens.sum() * h * h - 1.0) < 1e-2


def test_nearest_component_and_reorder():
    p = default_layout(["a", "b", "c", "d"])
    np.testing.assert_array_equal(p.nearest_component([[3.5, 0.2], [0.1, -3.0]]), [0, 3])
    r = p.reordered(["d", "c", "b", "a"])
    assert r.labels == ["d", "c", "b", "a"]
    np.testing.assert_array_equal(r.means[0], p.means[3])


def test_dict_round_trip():
    p = default_layout(["n", "h", "s"], 3, 2.0, 0.3)
    q = MixturePrior.from_dict(p.to_dict())
    assert q.labels == p.labels
    np.testing.assert_array_equal(q.means, p.means)
    np.testing.assert_array_equal(q.stddevs, p.stddevs)


def test_prior_validation():
    with pytest.raises(ValidationError):
        MixturePrior([GaussianComponent([0.0], 1.0)], ["a", "b"])
    with pytest.raises(ValidationError):
        MixturePrior([GaussianComponent([0.0], 1.0)] * 2, ["a", "a"])
    with pytest.raises(ShapeError):
        MixturePrior([GaussianComponent([0.0], 1.0), GaussianComponent([0.0, 1.0], 1.0)], ["a", "b"])
    with pytest.raises(ValidationError):
        GaussianComponent([0.0, 0.0], 0.0)
    with pytest.raises(ShapeError):
        default_layout(2).log_density(np.zeros(3))

import numpy as np
import pytest

from epimest import BoxDomain, EpiSpline, HypoDistanceConfig, dist_point_to_hypo, dl, dl_rho, evaluate, kuhn_triangulation
from epimest.exceptions import UnsupportedDimensionError
from epimest.hypodist import sampling_resolution

from conftest import random_spline


def _brute_distance(p, f, norm, res):
    """min over a dense grid x of the distance from p to the column {x} x (-inf, f(x)]."""
    d = f.dim
    axes = [np.linspace(f.complex.box.lower[i], f.complex.box.upper[i], res) for i in range(d)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    fx = evaluate(f, X)
    up = np.maximum(0.0, p[-1] - fx)
    if norm == "euclidean":
        return float(np.sqrt(np.sum((X - p[:-1]) ** 2, axis=1) + up**2).min())
    return float(np.maximum(np.abs(X - p[:-1]).max(axis=1), up).min())


def test_inside_hypograph_is_zero(rng):
    f = random_spline(rng, 2, 3)
    x = rng.random((10, 2))
    p = np.column_stack([x, evaluate(f, x) - 1.0])
    assert np.all(dist_point_to_hypo(p, f) == 0)


def test_straight_down():
    f = EpiSpline.constant(kuhn_triangulation(BoxDomain([0.0], [1.0]), 3), 0.0)
    assert dist_point_to_hypo([0.5, 1.0], f) == pytest.approx(1.0, abs=1e-15)
    assert dist_point_to_hypo([0.5, 1.0], f, norm="max") == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("norm", ["euclidean", "max"])
@pytest.mark.parametrize("d", [1, 2])
def test_matches_dense_oracle(rng, norm, d):
    f = random_spline(rng, d, 3)
    res = 20001 if d == 1 else 801
    for _ in range(8):
        p = np.concatenate([rng.uniform(-0.5, 1.5, d), rng.uniform(-1, 3, 1)])
        got = dist_point_to_hypo(p, f, norm)
        want = _brute_distance(p, f, norm, res)
        # the grid oracle over-estimates by at most its spacing times (1 + slope)
        assert got <= want + 1e-12
        assert want - got < 1e-3 * (1 + np.abs(f.heights).max())


def test_batch_matches_scalar(rng):
    f = random_spline(rng, 2, 2)
    P = rng.normal(size=(7, 3))
    batch = dist_point_to_hypo(P, f)
    assert np.allclose(batch, [dist_point_to_hypo(p, f) for p in P])


def test_constant_pair_rho2_against_dense_oracle():
    cx = kuhn_triangulation(BoxDomain([0, 0], [1, 1]), 2)
    f0, f1 = EpiSpline.constant(cx, 0.0), EpiSpline.constant(cx, 1.0)
    cfg = HypoDistanceConfig(center=(0.5, 0.5, 0.0))
    got = dl_rho(f0, f1, 2.0, cfg)
    # analytic point distances to box x (-inf, c] over 10^6 uniform ball points
    rng = np.random.default_rng(7)
    v = rng.normal(size=(10**6, 3))
    v *= (2.0 * rng.random(10**6) ** (1 / 3) / np.linalg.norm(v, axis=1))[:, None]
    p = v + [0.5, 0.5, 0.0]
    dxy = np.linalg.norm(p[:, :2] - np.clip(p[:, :2], 0, 1), axis=1)
    dist = lambda c: np.hypot(dxy, np.maximum(0.0, p[:, 2] - c))
    want = np.abs(dist(0.0) - dist(1.0)).max()
    assert abs(got - want) <= 0.02 * want


def test_identity_symmetry_and_monotone_curve(rng):
    f, g = random_spline(rng, 2, 2), random_spline(rng, 2, 2)
    cfg = HypoDistanceConfig(ball_samples=512)
    assert dl(f, f, cfg).dl_value == 0.0
    a, b = dl(f, g, cfg), dl(g, f, cfg)
    assert a.dl_value == b.dl_value
    curve = np.asarray(a.dl_rho_curve)
    assert np.all(np.diff(curve[:, 1]) >= 0)
    assert a.truncation_bound > 0 and a.sampling_resolution > 0


def test_max_norm_never_exceeds_euclidean(rng):
    f = random_spline(rng, 2, 2)
    P = rng.normal(size=(50, 3))
    assert np.all(dist_point_to_hypo(P, f, "max") <= dist_point_to_hypo(P, f, "euclidean") + 1e-12)


def test_sampling_resolution_shrinks_with_more_samples():
    few = sampling_resolution(HypoDistanceConfig(ball_samples=256), 2)
    many = sampling_resolution(HypoDistanceConfig(ball_samples=4096), 2)
    assert many < few


def test_config_validation_and_dimension_guard():
    with pytest.raises(ValueError):
        HypoDistanceConfig(norm="taxicab")
    with pytest.raises(ValueError):
        HypoDistanceConfig(rho_max=-1)
    cx = kuhn_triangulation(BoxDomain([0] * 4, [1] * 4), 1)
    f = EpiSpline.constant(cx, 0.0)
    with pytest.raises(UnsupportedDimensionError):
        dist_point_to_hypo(np.zeros(5), f)

import math

import numpy as np
import pytest
from scipy import integrate, stats

from slowvoter.brownian import (
    SignedHalfLinePoint, SnappingParams, hitting_density, hitting_probability,
    invariance_distance, regime_of, sample_B_beta, sample_bm_with_local_time,
    sample_hitting_time, sample_W, snapping_out_expectation,
)
from slowvoter.errors import DomainError
from slowvoter.lattice import MembraneRates
from slowvoter.rng import stream


def _ks_ok(sample, cdf, level=1e-3):
    return stats.kstest(sample, cdf).pvalue > level


def test_regimes_and_parameters():
    assert [regime_of(b) for b in (0.2, 1.0, 3.0)] == ["sub", "critical", "super"]
    assert SnappingParams.from_rates(MembraneRates(2.0, 1.0, 5)) == SnappingParams(2.0, "critical")
    with pytest.raises(DomainError):
        SnappingParams(1.0, "other")
    with pytest.raises(DomainError):
        SnappingParams(0.0, "sub")


def test_signed_points():
    assert SignedHalfLinePoint.plus().side == 1
    assert SignedHalfLinePoint.minus(2.0).value == -2.0
    assert SignedHalfLinePoint(-0.5).side == -1
    with pytest.raises(DomainError):
        SignedHalfLinePoint(0.0)
    with pytest.raises(DomainError):
        SignedHalfLinePoint(1.0, -1)


def test_hitting_law():
    assert hitting_probability(1.0, 4.0) == pytest.approx(2 * stats.norm.sf(0.5))
    mass, _ = integrate.quad(lambda s: hitting_density(np.array([s]), 1.0)[0], 0, 4.0)
    assert mass == pytest.approx(hitting_probability(1.0, 4.0), rel=1e-6)
    tau = sample_hitting_time(1.0, 50000, stream(1), t_max=4.0)
    assert tau.max() <= 4.0
    p = hitting_probability(1.0, 4.0)
    cdf = lambda s: np.array([hitting_probability(1.0, v) for v in np.atleast_1d(s)]) / p
    assert _ks_ok(tau, cdf)


@pytest.mark.parametrize("u", [0.0, 0.3, -1.2])
def test_terminal_value_is_gaussian(u):
    s = sample_bm_with_local_time(u, 0.7, stream(2), 60000)
    assert _ks_ok(s.terminal, stats.norm(u, math.sqrt(0.7)).cdf)


def test_local_time_from_the_origin_is_reflected_gaussian():
    s = sample_bm_with_local_time(0.0, 2.0, stream(3), 60000)
    assert _ks_ok(s.local_time, stats.halfnorm(scale=math.sqrt(2.0)).cdf)


@pytest.mark.parametrize("u", [0.5, -1.0])
def test_tanaka_identity_for_the_local_time_mean(u):
    t, n = 1.5, 200000
    s = sample_bm_with_local_time(u, t, stream(4), n)
    target = np.abs(s.terminal) - abs(u)  # E L_t = E |B_t| - |u|
    diff = s.local_time - target
    assert abs(diff.mean()) < 4 * diff.std() / math.sqrt(n)
    assert np.all(s.local_time[np.isinf(s.hit_time)] == 0)


def _reflected_expectation(f, u, t):
    # E f(|u + sqrt(t) Z|) by quadrature, with the side of u
    val, _ = integrate.quad(lambda z: f(math.copysign(1, u) * abs(u + math.sqrt(t) * z)) * stats.norm.pdf(z),
                            -12, 12, limit=200)
    return val


def _free_expectation(f, u, t):
    val, _ = integrate.quad(lambda z: f(u + math.sqrt(t) * z) * stats.norm.pdf(z), -12, 12, limit=200)
    return val


def test_snapping_out_interpolates_between_reflection_and_free_motion():
    f = lambda x: np.tanh(np.asarray(x, dtype=float) + 0.3)
    u, t = 0.4, 1.0
    weak = snapping_out_expectation(f, u, t, 0.0, 100000, seed=1)
    assert abs(weak.mean - _reflected_expectation(f, u, t)) < 4 * weak.stderr
    strong = snapping_out_expectation(f, u, t, 200.0, 100000, seed=1)
    assert abs(strong.mean - _free_expectation(f, u, t)) < 4 * strong.stderr + 2e-3


def test_snapping_out_conserves_mass():
    est = snapping_out_expectation(lambda x: np.ones_like(x), SignedHalfLinePoint.minus(), 0.5, 1.0, 5000, 0)
    assert est.mean == 1.0 and est.stderr == 0.0


def test_sample_B_beta_regimes():
    rng = stream(7)
    v, s = sample_B_beta(SignedHalfLinePoint.plus(), 1.0, SnappingParams(1.0, "super"), rng, 20000)
    assert np.all(v >= 0) and np.all(s == 1)
    v, _ = sample_B_beta(0.5, 1.0, SnappingParams(1.0, "sub"), rng, 60000)
    assert _ks_ok(v, stats.norm(0.5, 1.0).cdf)
    v, _ = sample_B_beta(0.5, 1.0, SnappingParams(1.0, "critical"), rng, 60000)
    # crossing is rarer than for free motion and more frequent than for reflection
    assert 0 < np.mean(v < 0) < stats.norm.cdf(-0.5)
    v, s = sample_B_beta(-0.3, 0.0, SnappingParams(1.0, "critical"), rng, 3)
    assert np.all(v == -0.3) and np.all(s == -1)


def test_sample_W_uses_doubled_time_in_every_coordinate():
    w = sample_W([0.0, 1.0], 0.5, SnappingParams(1.0, "sub"), stream(8), 60000, side=1)
    assert _ks_ok(w[:, 1], stats.norm(1.0, 1.0).cdf)
    assert _ks_ok(w[:, 0], stats.norm(0.0, 1.0).cdf)
    with pytest.raises(DomainError):
        sample_W([0.0], 0.5, SnappingParams(1.0, "sub"), stream(8), 5)


def test_invariance_distance_small_run():
    rates = MembraneRates(1.0, 1.0, 60)
    ks = invariance_distance(SignedHalfLinePoint.plus(), 0.5, rates, None, 20000, seed=3)
    assert ks < 0.05
    with pytest.raises(DomainError):
        invariance_distance(1.0, 0.5, rates, None, 100, seed=3)

import numpy as np
import pytest

from slowvoter.errors import ConfigurationError
from slowvoter.lattice import BoxGeometry, InitialProfile, MembraneRates
from slowvoter.master import (
    evolve, mean_field, product_distribution, site_moments, solve_master, two_time_moment,
    voter_generator, walk_generator,
)


def test_generator_is_conservative():
    g = BoxGeometry(1, 5)
    Q = voter_generator(g, MembraneRates(1.0, 1.0, 3))
    assert np.allclose(np.asarray(Q.sum(axis=1)).ravel(), 0.0)
    assert Q.shape == (32, 32)


def test_consensus_states_are_absorbing():
    g = BoxGeometry(1, 4)
    Q = voter_generator(g, MembraneRates(1.0, 0.0, 1)).toarray()
    assert np.all(Q[0] == 0) and np.all(Q[15] == 0)


def test_product_distribution_moments():
    p = np.array([0.1, 0.5, 0.7])
    dist = product_distribution(p)
    assert dist.sum() == pytest.approx(1.0)
    m, s2 = site_moments(dist, 3)
    assert m == pytest.approx(p)
    assert s2[0, 2] == pytest.approx(0.07)


@pytest.mark.parametrize("beta", [0.0, 1.0, 2.0])
def test_closed_mean_equation_matches_full_chain(beta):
    g = BoxGeometry(1, 6)
    r = MembraneRates(1.0, beta, 2)
    prof = InitialProfile.step(0.9, 0.3)
    sol = solve_master(g, r, prof, [0.1, 1.0])
    for t in (0.1, 1.0):
        assert sol.means[sol.times.index(t)] == pytest.approx(mean_field(g, r, prof, t), abs=1e-10)


def test_walk_generator_rows_sum_to_zero_and_long_time_mean_is_conserved():
    g = BoxGeometry(1, 6)
    r = MembraneRates(1.0, 1.0, 2)
    A = walk_generator(g, r)
    assert np.allclose(A.sum(axis=1), 0.0)
    assert np.allclose(A, A.T)  # symmetric rates, so total mass is conserved
    prof = InitialProfile.step(1.0, 0.0)
    m = mean_field(g, r, prof, 50.0)
    assert m == pytest.approx(np.full(6, 0.5), abs=1e-6)


def test_two_time_moment_reduces_to_equal_time_and_product_limits():
    g = BoxGeometry(1, 6)
    r = MembraneRates(1.0, 1.0, 2)
    prof = InitialProfile.step(0.8, 0.2)
    sol = solve_master(g, r, prof, [0.5])
    assert two_time_moment(g, r, prof, [0], [1], 0.5, 0.5) == pytest.approx(sol.two_point(0.5, [0], [1]))
    # eta_0 is a product law, so the moment with s = t = 0 factorises
    assert two_time_moment(g, r, prof, [0], [1], 0.0, 0.0) == pytest.approx(0.2 * 0.8)
    with pytest.raises(ConfigurationError):
        two_time_moment(g, r, prof, [0], [1], 0.1, 0.5)


def test_evolve_preserves_probability():
    g = BoxGeometry(1, 5)
    Q = voter_generator(g, MembraneRates(1.0, 1.0, 2))
    d = evolve(product_distribution(np.full(5, 0.4)), Q, 0.7)
    assert d.sum() == pytest.approx(1.0)
    assert d.min() > -1e-12


def test_master_equation_refuses_large_boxes():
    with pytest.raises(ConfigurationError):
        voter_generator(BoxGeometry(1, 15), MembraneRates(1.0, 1.0, 2))

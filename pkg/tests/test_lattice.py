import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from slowvoter.errors import ConfigurationError, DomainError
from slowvoter.lattice import (
    BoxGeometry, EventBatch, InitialProfile, LatticeConfig, MembraneRates, block_average,
    bond_rate, draw_events, empirical_pi, flip, replay, sample_initial, sample_initial_batch,
    simulate,
)
from slowvoter.master import mean_field
from slowvoter.rng import stream


# --- rates and geometry -----------------------------------------------------

def test_membrane_bond_is_slow_and_bulk_bonds_are_unit():
    r = MembraneRates(2.0, 1.0, 10)
    assert bond_rate(r, [0], [1]) == pytest.approx(0.2)
    assert bond_rate(r, [1, 3], [0, 3]) == pytest.approx(0.2)
    assert bond_rate(r, [1], [2]) == 1.0
    assert bond_rate(r, [0, 0], [0, 1]) == 1.0


def test_beta_zero_gives_alpha():
    assert bond_rate(MembraneRates(0.7, 0.0, 1000), [0], [1]) == pytest.approx(0.7)


def test_non_neighbours_are_rejected():
    r = MembraneRates(1.0, 1.0, 4)
    with pytest.raises(DomainError):
        bond_rate(r, [0], [2])
    with pytest.raises(DomainError):
        bond_rate(r, [0, 0], [1, 1])


def test_invalid_rates_are_rejected():
    for args in [(0.0, 1.0, 4), (1.0, -0.5, 4), (1.0, 1.0, 0), (math.inf, 1.0, 4)]:
        with pytest.raises(DomainError):
            MembraneRates(*args)


def test_wrap_bond_of_the_torus_is_a_bulk_bond():
    g = BoxGeometry(1, 6)
    r = MembraneRates(1.0, 2.0, 5)
    assert bond_rate(r, [g.hi], [g.lo], geometry=g) == 1.0
    src, dst, mem = g.directed_bonds()
    assert mem.sum() == 2 and src.size == 12


def test_width_two_is_a_configuration_error():
    with pytest.raises(ConfigurationError):
        BoxGeometry(1, 2)


def test_geometry_scale_and_index_roundtrip():
    g = BoxGeometry.from_scale(2, 1.0, 3)
    assert g.width == 6 and g.n_sites == 36
    idx = np.arange(g.n_sites)
    assert np.array_equal(g.index(g.coords(idx)), idx)
    assert g.lo == -2 and g.hi == 3


@given(st.integers(1, 3), st.integers(3, 7), st.data())
def test_neighbour_table_is_symmetric(d, width, data):
    g = BoxGeometry(d, width)
    nb = g.neighbor_table()
    i = data.draw(st.integers(0, g.n_sites - 1))
    for k in range(2 * d):
        j = nb[i, k]
        assert i in nb[j]
        assert g.distance(g.coords(i), g.coords(j)) == 1


# --- configurations ------------------------------------------------------------

def test_flip_copies_the_neighbour():
    g = BoxGeometry(1, 4)
    c = LatticeConfig(np.array([0, 1, 0, 0]), g)  # sites -1, 0, 1, 2
    out = flip(c, [1], [0])
    assert out[[1]] == 1 and c[[1]] == 0
    assert np.array_equal(flip(out, [1], [0]).occupancy, out.occupancy)
    with pytest.raises(DomainError):
        flip(c, [-1], [1])


def test_config_is_immutable_and_validated():
    g = BoxGeometry(1, 3)
    c = LatticeConfig(np.array([0, 1, 1]), g)
    with pytest.raises(ValueError):
        c.occupancy[0] = 1
    with pytest.raises(DomainError):
        LatticeConfig(np.array([0, 2, 1]), g)
    with pytest.raises(DomainError):
        LatticeConfig(np.array([0, 1]), g)


def test_sample_initial_constant_profiles_and_determinism():
    g = BoxGeometry(2, 5)
    assert sample_initial(InitialProfile.constant(0.0), g, 4, 1).occupancy.sum() == 0
    assert sample_initial(InitialProfile.constant(1.0), g, 4, 1).occupancy.sum() == g.n_sites
    a = sample_initial(InitialProfile.ramp(0.5, 0.3), g, 4, 9)
    b = sample_initial(InitialProfile.ramp(0.5, 0.3), g, 4, 9)
    assert np.array_equal(a.occupancy, b.occupancy)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 2 ** 20))
def test_initial_law_is_monotone_in_the_profile(c1, c2, seed):
    lo, hi = sorted((c1, c2))
    g = BoxGeometry(1, 9)
    a = sample_initial_batch(InitialProfile.constant(lo), g, 3, stream(seed), 4)
    b = sample_initial_batch(InitialProfile.constant(hi), g, 3, stream(seed), 4)
    assert np.all(a <= b)


def test_profiles():
    step = InitialProfile.step(0.8, 0.2)
    assert step(np.array([0.0, 1e-9]))[0] == 0.2 and step(np.array([1e-9]))[0] == 0.8
    assert step.outside_assumption and step.lipschitz_constant() == math.inf
    ramp = InitialProfile.ramp(0.5, 0.4)
    assert ramp(np.array([-10.0, 0.0, 10.0])).tolist() == [0.0, 0.5, 1.0]
    tab = InitialProfile.tabulated([0, 1], [0.2, 0.6])
    assert tab(np.array([0.5]))[0] == pytest.approx(0.4)
    assert InitialProfile.from_dict(tab.to_dict()) == tab
    with pytest.raises(DomainError):
        InitialProfile.constant(1.5)
    with pytest.raises(DomainError):
        InitialProfile.tabulated([0, 0], [0.1, 0.2])


def test_empirical_measure_and_block_average():
    g = BoxGeometry(1, 4)  # sites -1, 0, 1, 2
    c = LatticeConfig(np.array([1, 0, 1, 1]), g)
    # N^-1 * sum eta(x) x/N with N = 2: (-1/2 + 1/2 + 1) / 2
    assert empirical_pi(c, lambda u: u[..., 0], 2) == pytest.approx(0.5)
    assert block_average(c, [1], 1) == pytest.approx(2 / 3)
    assert block_average(c, [1], 1, side="minus") == pytest.approx(0.5)
    assert block_average(c, [1], 1, side="plus") == pytest.approx(1.0)
    with pytest.warns(UserWarning):
        assert block_average(c, [0], 3) == pytest.approx(0.75)


# --- event engine ------------------------------------------------------------------

def _manual_batch(g, r, t, times, src, dst):
    times = np.array(times, float)
    return EventBatch(g, r, t, np.array([np.isfinite(row).sum() for row in times]), times,
                      np.array(src), np.array(dst))


def test_replay_integrates_piecewise_constant_functionals_exactly():
    g = BoxGeometry(1, 3)  # sites 0, 1, 2
    r = MembraneRates(1.0, 0.0, 1)
    # replica 0: site 0 copies site 1 at 0.2, site 2 copies site 0 at 0.5
    # replica 1: no events at all
    ev = _manual_batch(g, r, 1.0, [[0.2, 0.5], [np.inf, np.inf]], [[0, 2], [0, 0]], [[1, 0], [0, 0]])
    init = np.array([[0, 1, 0], [1, 0, 0]], dtype=np.uint8)
    out = replay(init, ev, [0.3, 1.0], [lambda c: c.sum(axis=1).astype(float)])
    # replica 0: mass 1 on [0, 0.2), 2 on [0.2, 0.5), 3 after
    assert out["integrals"][0, :, 0] == pytest.approx([0.2 + 0.2, 0.2 + 0.6 + 1.5])
    assert out["integrals"][1, :, 0] == pytest.approx([0.3, 1.0])
    assert out["values"][0, :, 0].tolist() == [2.0, 3.0]
    assert out["snapshots"][0, 1].tolist() == [1, 1, 1]


def test_replay_agrees_with_single_trajectory_reconstruction():
    g = BoxGeometry(2, 3)
    r = MembraneRates(1.0, 1.0, 2)
    c0 = sample_initial(InitialProfile.step(0.9, 0.1), g, 2, 4)
    traj = simulate(c0, r, 0.3, seed=11)
    ev = _manual_batch(g, r, 0.3, traj.times[None, :], traj.src[None, :], traj.dst[None, :])
    obs = [0.05, 0.1, 0.3]
    out = replay(c0.occupancy[None, :], ev, obs)
    for k, t in enumerate(obs):
        assert np.array_equal(out["snapshots"][0, k], traj.config_at(t).occupancy)
    assert len(list(traj.events())) == len(traj)


def test_replay_rejects_bad_observation_grids():
    g = BoxGeometry(1, 3)
    r = MembraneRates(1.0, 0.0, 1)
    ev = draw_events(g, r, 1.0, 2, stream(0))
    init = np.zeros((2, 3), dtype=np.uint8)
    with pytest.raises(DomainError):
        replay(init, ev, [0.5, 0.2])
    with pytest.raises(DomainError):
        replay(init, ev, [2.0])


def test_event_counts_have_the_poisson_mean():
    g = BoxGeometry(1, 6)
    r = MembraneRates(1.0, 1.0, 2)
    ev = draw_events(g, r, 0.5, 20000, stream(1))
    # 10 bulk directed bonds and 2 membrane bonds at rate 1/2, times N^2 = 4
    lam = 4 * (10 + 2 * 0.5) * 0.5
    assert abs(ev.counts.mean() - lam) < 4 * math.sqrt(lam / 20000)
    mem_share = np.isin(ev.src[np.isfinite(ev.times)], g.index(np.array([[0], [1]]))).mean()
    assert 0 < mem_share < 1


def test_rate_overflow_is_reported():
    with pytest.raises(ConfigurationError):
        draw_events(BoxGeometry(1, 6), MembraneRates(1.0, 0.0, 10 ** 7), 1.0, 1, stream(0))


def test_simulated_means_follow_the_exact_mean_field():
    g = BoxGeometry(1, 6)
    r = MembraneRates(1.0, 1.0, 2)
    prof = InitialProfile.step(0.8, 0.2)
    rng = stream(2)
    R = 40000
    init = sample_initial_batch(prof, g, 2, rng, R)
    ev = draw_events(g, r, 0.25, R, rng)
    out = replay(init, ev, [0.25])
    emp = out["snapshots"][:, 0, :].mean(axis=0)
    exact = mean_field(g, r, prof, 0.25)
    se = np.sqrt(exact * (1 - exact) / R)
    assert np.all(np.abs(emp - exact) < 4 * se)

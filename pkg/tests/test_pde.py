import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from slowvoter.brownian import SnappingParams
from slowvoter.errors import ConfigurationError, DomainError
from slowvoter.lattice import InitialProfile
from slowvoter.pde import (
    Grid1D, InterfaceCondition, feynman_kac, interface_fluxes, solve_1d, trace_average,
    weak_residual,
)
from slowvoter.testfunctions import PiecewiseTestFunction

STEP = InitialProfile.step(0.8, 0.2)
RAMP = InitialProfile.ramp(0.5, 0.4)


def _mass(g: Grid1D, v=None):
    m = g.u_minus.size
    v = g.values() if v is None else v
    return np.trapezoid(v[:m], g.u_minus) + np.trapezoid(v[m:], g.u_plus)


def _robin_step_exact(u, t, alpha, a, b):
    # odd part of the step solves the half-line problem w_u(0+) = 2 alpha w(0+)
    z = np.abs(u) / (2 * math.sqrt(t))
    w = special.erf(z) + np.exp(-z * z) * special.erfcx(z + 2 * alpha * math.sqrt(t))
    return 0.5 * (a + b) + np.sign(u) * 0.5 * (a - b) * w


def test_free_heat_equation_matches_the_error_function_solution():
    g = solve_1d(STEP, 0.1, InterfaceCondition.none(), dx=0.005)
    u = np.linspace(-1.5, 1.5, 31)
    exact = 0.2 + 0.6 * stats.norm.cdf(u / math.sqrt(0.2))
    assert np.max(np.abs(g(u) - exact)) < 1e-3


@pytest.mark.parametrize("alpha", [0.5, 1.0, 3.0])
def test_robin_solution_matches_the_radiation_formula(alpha):
    g = solve_1d(STEP, 0.1, InterfaceCondition.robin(alpha), dx=0.005)
    u = np.concatenate([np.linspace(-1.5, -0.005, 15), np.linspace(0.005, 1.5, 15)])
    assert np.max(np.abs(g(u) - _robin_step_exact(u, 0.1, alpha, 0.8, 0.2))) < 1e-3
    assert g.trace(1) == pytest.approx(_robin_step_exact(np.array([1e-12]), 0.1, alpha, 0.8, 0.2)[0], abs=2e-3)


def test_neumann_keeps_one_sided_constants_and_reflects_the_ramp():
    g = solve_1d(STEP, 0.3, InterfaceCondition.neumann(), dx=0.01)
    assert np.allclose(g.rho_plus, 0.8) and np.allclose(g.rho_minus, 0.2)
    g = solve_1d(RAMP, 0.1, InterfaceCondition.neumann(), dx=0.005)
    kern = lambda x: stats.norm.pdf(x, scale=math.sqrt(0.2))
    for u in (0.05, 0.4, 1.0):
        exact, _ = integrate.quad(lambda v: (kern(u - v) + kern(u + v)) * RAMP(np.array(v)), 0, 4, limit=200)
        assert g(np.array([u]))[0] == pytest.approx(exact, abs=1e-3)


@pytest.mark.parametrize("cond", [InterfaceCondition.none(), InterfaceCondition.robin(1.0),
                                  InterfaceCondition.neumann()])
def test_mass_is_conserved(cond):
    g = solve_1d(STEP, 0.5, cond, dx=0.02, store_history=True)
    masses = [_mass(g, h) for h in g.history] if cond.kind != "none" else [_mass(g)]
    assert np.ptp(masses) < 1e-10
    assert _mass(g) == pytest.approx(0.2 * 4 + 0.8 * 4, abs=1e-10 if cond.kind != "none" else 1e-2)


def test_constant_profile_is_stationary():
    g = solve_1d(InitialProfile.constant(0.35), 1.0, InterfaceCondition.robin(2.0), dx=0.05)
    assert np.allclose(g.values(), 0.35, atol=1e-12)


def test_explicit_scheme_and_its_stability_limit():
    cn = solve_1d(RAMP, 0.05, InterfaceCondition.robin(1.0), dx=0.02)
    ex = solve_1d(RAMP, 0.05, InterfaceCondition.robin(1.0), dx=0.02, scheme="explicit")
    assert np.max(np.abs(cn.values() - ex.values())) < 1e-3
    with pytest.raises(ConfigurationError):
        solve_1d(RAMP, 0.05, InterfaceCondition.robin(1.0), dx=0.02, dt=0.01, scheme="explicit")
    with pytest.raises(ConfigurationError):
        solve_1d(RAMP, 0.05, InterfaceCondition.robin(1.0), scheme="leapfrog")


def test_interface_condition_selection():
    assert InterfaceCondition.for_beta(0.5, 1.0).kind == "none"
    assert InterfaceCondition.for_beta(1.0, 2.0) == InterfaceCondition.robin(2.0)
    assert InterfaceCondition.for_beta(1.5, 2.0).kind == "neumann"


@pytest.mark.parametrize("dx", [0.01, 0.005])
def test_discrete_fluxes_satisfy_the_robin_relation(dx):
    g = solve_1d(STEP, 0.1, InterfaceCondition.robin(1.0), dx=dx, store_history=True)
    f = interface_fluxes(g)
    assert np.all(np.abs(f["flux_plus"][1:] - f["jump"][1:]) <= 10 * dx)
    assert np.all(np.abs(f["flux_plus"][1:] - f["flux_minus"][1:]) <= 10 * dx)


H_CRIT = PiecewiseTestFunction("exp(-2*u**2)*(1 + 2*u)", "-exp(-2*u**2)*(1 - 2*u)")


def test_weak_residual_detects_the_interface_law():
    g = solve_1d(RAMP, 0.1, InterfaceCondition.robin(1.0), dx=0.005, store_history=True)
    good = weak_residual(g, H_CRIT, 0.1)
    bad = weak_residual(g, H_CRIT, 0.1, cond=InterfaceCondition.neumann())
    assert good < 1e-4
    assert bad > 100 * good
    smooth = PiecewiseTestFunction.smooth("exp(-2*u**2)")
    g0 = solve_1d(RAMP, 0.1, InterfaceCondition.none(), dx=0.005, store_history=True)
    assert weak_residual(g0, smooth) < 1e-4
    with pytest.raises(DomainError):
        weak_residual(g0, H_CRIT)
    with pytest.raises(DomainError):
        weak_residual(g, PiecewiseTestFunction.smooth("1"))


def test_trace_average():
    g = solve_1d(STEP, 0.1, InterfaceCondition.robin(1.0), dx=0.001)
    assert trace_average(g, 0.002, "plus") == pytest.approx(g.trace(1), abs=1e-3)
    assert trace_average(g, 0.002, "minus") == pytest.approx(g.trace(-1), abs=1e-3)
    f = lambda v: v[..., 0] ** 2 + v[..., 1]
    assert trace_average(f, 0.3, "plus", point=[0.0, 0.0]) == pytest.approx(0.03)
    with pytest.raises(DomainError):
        trace_average(g, 0.0001, "plus")


def test_grid_accessors():
    g = solve_1d(STEP, 0.02, InterfaceCondition.robin(1.0), dx=0.5, store_history=True)
    u, s = g.nodes()
    assert u.size == s.size == g.values().size
    assert g.snapshot(0).values() == pytest.approx(np.r_[np.full(9, 0.2), np.full(9, 0.8)])
    rows = g.to_rows()
    assert {r[2] for r in rows} <= {"-", "+", "bulk"}


def test_feynman_kac_matches_the_robin_solve():
    params = SnappingParams(1.0, "critical")
    g = solve_1d(RAMP, 0.1, InterfaceCondition.robin(1.0), dx=0.0025)
    for u in (-0.5, 0.2):
        est = feynman_kac([u], 0.1, RAMP, params, 40000, seed=3)
        assert abs(est.mean - g(np.array([u]))[0]) < 4 * est.stderr + 1e-3
    with pytest.raises(DomainError):
        feynman_kac([0.0], 0.1, RAMP, params, 10, seed=0)

"""Density fluctuation field, Dynkin decomposition and Ornstein-Uhlenbeck references.

Exact finite-N identities
-------------------------
For a test function ``H`` the process

``M_t = Y_t - Y_0 - int_0^t (N^2 L + d_s) Y_s ds``

with ``Y_t = N^-(1 + d/2) sum_x (eta_t(x) - E eta_t(x)) H(x/N)`` is a
martingale for every box, ``N``, ``alpha`` and ``beta``, and
``E M_t^2 = E int_0^t Q(eta_s) ds`` with the quadratic-variation integrand
``Q(eta) = N^-d sum_{|x - y| = 1} xi(x, y) (eta(x) - eta(y))^2 H(x/N)^2``.
:func:`martingale_check` verifies both identities on simulated batches, with
time integrals computed exactly between events.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy

from .errors import DomainError
from .lattice import BoxGeometry, EventBatch, InitialProfile, LatticeConfig, MembraneRates, replay
from .pde import Grid1D, InterfaceCondition, solve_1d
from .rng import Estimate, stream
from .testfunctions import U, PiecewiseTestFunction
from .walks import hitting_prob_Gamma, sample_pairs

__all__ = [
    "SBetaFunction", "SBetaReport", "validate_sbeta", "FieldSample", "field_eval",
    "DynkinTerms", "dynkin_terms", "generator_weights", "qv_integrand", "qv_limit_reference",
    "PairQV", "pair_correlation_qv", "ou_covariance", "limit_variance",
    "MartingaleLedger", "MartingaleReport", "martingale_check", "boundary_variance_scaling",
]


# ---------------------------------------------------------------------------
# test-function spaces


@dataclass(frozen=True)
class SBetaFunction(PiecewiseTestFunction):
    """Piecewise test function tagged with the interface regime it must respect.

    ``regime`` is ``'sub'`` (smooth across 0), ``'critical'`` (odd one-sided
    derivatives equal ``alpha`` times the jump of the preceding even ones) or
    ``'super'`` (odd one-sided derivatives vanish).
    """

    regime: str = "sub"
    alpha: float = 1.0
    verified_orders: int = -1

    def __post_init__(self):
        super().__post_init__()
        if self.regime not in ("sub", "critical", "super"):
            raise DomainError(f"unknown regime {self.regime!r}")
        if self.regime == "critical" and not self.alpha > 0:
            raise DomainError("critical regime needs alpha > 0")

    def mirrored(self) -> "SBetaFunction":
        """The function ``u_1 -> H(-u_1)`` (sides exchanged)."""
        return SBetaFunction(self.minus.subs(U, -U), self.plus.subs(U, -U), self.perp, self.name,
                             self.regime, self.alpha)


@dataclass
class SBetaReport:
    """Per-order residuals of the interface compatibility relations."""

    regime: str
    orders: list
    residual_plus: list
    residual_minus: list
    passed: list
    tolerance: float

    @property
    def ok(self) -> bool:
        return all(self.passed)

    def to_dict(self) -> dict:
        return {"regime": self.regime, "orders": self.orders, "residual_plus": self.residual_plus,
                "residual_minus": self.residual_minus, "passed": self.passed, "ok": self.ok}


def validate_sbeta(H: SBetaFunction, k_max: int, tol: float = 1e-6) -> SBetaReport:
    """Check the compatibility relations at ``u_1 = 0`` for ``k = 0..k_max``.

    Residuals are relative: divided by ``max(1, |left-hand side|, |right-hand side|)``.

    Raises
    ------
    DomainError
        If a one-sided derivative is not finite at 0.
    """
    if not isinstance(H, SBetaFunction):
        raise DomainError("validate_sbeta needs an SBetaFunction")
    if k_max < 0:
        raise DomainError("k_max must be nonnegative")

    def trace(side, order):
        v = sympy.N(H.derivative_expr(side, order).subs(U, 0), 30)
        if not v.is_finite:
            raise DomainError(f"one-sided derivative of order {order} is not finite at 0")
        return float(v)

    res_p, res_m, passed = [], [], []
    for k in range(k_max + 1):
        odd_p, odd_m = trace(1, 2 * k + 1), trace(-1, 2 * k + 1)
        even_p, even_m = trace(1, 2 * k), trace(-1, 2 * k)
        if H.regime == "critical":
            target = H.alpha * (even_p - even_m)
        elif H.regime == "super":
            target = 0.0
        else:
            # smooth across the interface: all one-sided derivatives agree
            target = None
        if target is None:
            scale_e = max(1.0, abs(even_p), abs(even_m))
            scale_o = max(1.0, abs(odd_p), abs(odd_m))
            rp = abs(even_p - even_m) / scale_e
            rm = abs(odd_p - odd_m) / scale_o
        else:
            rp = abs(odd_p - target) / max(1.0, abs(odd_p), abs(target))
            rm = abs(odd_m - target) / max(1.0, abs(odd_m), abs(target))
        res_p.append(rp)
        res_m.append(rm)
        passed.append(bool(rp <= tol and rm <= tol))
    return SBetaReport(H.regime, list(range(k_max + 1)), res_p, res_m, passed, tol)


# ---------------------------------------------------------------------------
# fields and generator terms


@dataclass(frozen=True)
class FieldSample:
    t: float
    value: float
    H_id: str = ""
    replica_id: int = 0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DomainError("field value must be finite")


def _h_on_sites(H, geometry: BoxGeometry, N: int) -> np.ndarray:
    return np.asarray(H(geometry.macro(N)), dtype=float).reshape(geometry.n_sites)


def field_eval(config, mean_field, H, N: int, geometry: BoxGeometry | None = None):
    """Fluctuation field ``N^-(1 + d/2) sum_x (eta(x) - E eta(x)) H(x / N)``.

    ``config`` may be a :class:`LatticeConfig` or an occupancy array of shape
    ``(R, n_sites)`` (then ``geometry`` is required and an array is returned).
    """
    if isinstance(config, LatticeConfig):
        geometry = config.geometry
        occ = config.occupancy.astype(float)
    else:
        if geometry is None:
            raise DomainError("geometry is required for raw occupancy arrays")
        occ = np.asarray(config, dtype=float)
    mean = np.asarray(mean_field, dtype=float)
    if mean.shape != (geometry.n_sites,):
        raise DomainError(f"mean field must have one value per site ({geometry.n_sites})")
    missing = ~np.isfinite(mean)
    if missing.any():
        if np.any(occ[..., missing] != 0):
            raise DomainError("mean field missing at an occupied site")
        mean = np.where(missing, 0.0, mean)
    h = _h_on_sites(H, geometry, N)
    h = np.where(missing, 0.0, h)
    val = (occ - mean) @ h / float(N) ** (1 + geometry.d / 2)
    return float(val) if np.ndim(val) == 0 else val


@dataclass(frozen=True)
class DynkinTerms:
    """The three groups of ``N^2 L pi^N(H)``; ``boundary`` is ``(plus, minus)``."""

    laplacian: float
    boundary: tuple
    membrane: float

    @property
    def total(self):
        return self.laplacian + self.boundary[0] + self.boundary[1] + self.membrane


def generator_weights(geometry: BoxGeometry, H, rates: MembraneRates) -> dict:
    """Site weights ``w`` such that each Dynkin group equals ``occupancy @ w``.

    Keys: ``laplacian``, ``boundary_plus``, ``boundary_minus``, ``membrane``.
    """
    N = rates.N
    d = geometry.d
    h = _h_on_sites(H, geometry, N)
    nb = geometry.neighbor_table()
    x1 = geometry.coords()[:, 0]
    S = geometry.n_sites
    pref = float(N) ** (2 - d)
    has = nb != np.arange(S)[:, None]
    diff = np.where(has, h[nb] - h[:, None], 0.0)  # H(y) - H(x) per direction
    w_lap = diff[:, 2:].sum(axis=1) if d > 1 else np.zeros(S)
    bulk1 = (x1 != 0) & (x1 != 1)
    w_lap = w_lap + np.where(bulk1, diff[:, 0] + diff[:, 1], 0.0)
    # x_1 = 1: outward neighbour +e1 is an ordinary bond, -e1 crosses the membrane
    w_bp = np.where(x1 == 1, diff[:, 0], 0.0)
    w_bm = np.where(x1 == 0, diff[:, 1], 0.0)
    p = rates.membrane_rate()
    w_mem = np.where(x1 == 0, p * diff[:, 0], 0.0) + np.where(x1 == 1, p * diff[:, 1], 0.0)
    if geometry.width <= 2:
        w_lap = w_lap + np.where(~bulk1, diff[:, 0] + diff[:, 1], 0.0)
        w_bp[:] = w_bm[:] = w_mem[:] = 0.0
    return {"laplacian": pref * w_lap, "boundary_plus": pref * w_bp,
            "boundary_minus": pref * w_bm, "membrane": pref * w_mem}


def dynkin_terms(config, H, rates: MembraneRates, N: int | None = None,
                 geometry: BoxGeometry | None = None):
    """Exact discrete decomposition of ``N^2 L_N pi^N(H)`` into three groups.

    * ``laplacian``: ``N^-d sum_x eta(x) N^2 (discrete second differences of H)``
      over the perpendicular axes everywhere and over axis 1 for ``x_1`` not in
      ``{0, 1}``;
    * ``boundary``: ``(N^(2-d) sum_{x_1=1} eta(x) (H(x+e1) - H(x)),
      N^(2-d) sum_{x_1=0} eta(x) (H(x-e1) - H(x)))``, the discrete one-sided
      derivatives ``+-N^(1-d) d^+- H`` at the membrane;
    * ``membrane``: ``alpha N^(2-d-beta)`` times the exchange sums across it.

    Their sum equals the generator applied to ``pi^N(H)`` with no remainder.
    ``config`` may be a batch ``(R, n_sites)`` when ``geometry`` is given.
    """
    if N is not None and N != rates.N:
        raise DomainError("N must match rates.N")
    if isinstance(config, LatticeConfig):
        geometry = config.geometry
        occ = config.occupancy.astype(float)
    else:
        if geometry is None:
            raise DomainError("geometry is required for raw occupancy arrays")
        occ = np.asarray(config, dtype=float)
    w = generator_weights(geometry, H, rates)
    f = lambda key: occ @ w[key]
    out = DynkinTerms(f("laplacian"), (f("boundary_plus"), f("boundary_minus")), f("membrane"))
    if occ.ndim == 1:
        out = DynkinTerms(float(out.laplacian), (float(out.boundary[0]), float(out.boundary[1])),
                          float(out.membrane))
    return out


def _qv_weights(geometry: BoxGeometry, H, rates: MembraneRates):
    src, dst, mem = geometry.directed_bonds()
    h = _h_on_sites(H, geometry, rates.N)
    xi = np.where(mem, rates.membrane_rate(), 1.0)
    return src, dst, xi * h[src] ** 2 / float(rates.N) ** geometry.d


def qv_integrand(config, H, rates: MembraneRates, N: int | None = None,
                 geometry: BoxGeometry | None = None):
    """``N^-d sum_{|x-y|=1} xi(x, y) (eta(x) - eta(y))^2 H(x/N)^2`` over ordered pairs."""
    if N is not None and N != rates.N:
        raise DomainError("N must match rates.N")
    if isinstance(config, LatticeConfig):
        geometry = config.geometry
        occ = config.occupancy
    else:
        if geometry is None:
            raise DomainError("geometry is required for raw occupancy arrays")
        occ = np.asarray(config)
    src, dst, w = _qv_weights(geometry, H, rates)
    differ = (occ[..., src] != occ[..., dst]).astype(float)
    val = differ @ w
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------
# limit references


def _rho_values(rho, u):
    if isinstance(rho, Grid1D):
        return rho(u)
    if callable(rho):
        return np.asarray(rho(u), dtype=float)
    return np.full(np.shape(u), float(rho))


def _sided_product_integral(f_minus, f_plus, L: float, n: int = 4001) -> float:
    um = np.linspace(-L, 0.0, n)
    up = np.linspace(0.0, L, n)
    return float(np.trapezoid(f_minus(um), um) + np.trapezoid(f_plus(up), up))


def qv_limit_reference(t: float, rho, H, gamma_d: float, d: int, window: float = 4.0,
                       perp_integral: float = 1.0, integrated: bool = False) -> float:
    """``4 d (1 - gamma_d) int rho (1 - rho) H^2`` in the reduction to ``u_1``.

    Parameters
    ----------
    t : float
        Time at which ``rho`` is taken (or the upper limit with ``integrated``).
    rho : Grid1D, callable of ``u_1``, or float
        Density profile.  With ``integrated=True`` it must be a ``Grid1D``
        carrying history, or a callable ``rho(s, u1)``.
    H : PiecewiseTestFunction or callable of ``u_1``
    perp_integral : float
        ``int H_perp^2`` over the remaining coordinates (1 when ``H`` depends on
        ``u_1`` only and the window has unit volume).
    """
    if not 0 <= gamma_d <= 1:
        raise DomainError("gamma_d must lie in [0, 1]")
    c = 4.0 * d * (1.0 - gamma_d) * perp_integral
    if isinstance(H, PiecewiseTestFunction):
        hm = lambda u: H.side_eval(u, -1) ** 2
        hp = lambda u: H.side_eval(u, 1) ** 2
    else:
        hm = hp = lambda u: np.asarray(H(u), dtype=float) ** 2

    def at(r):
        if isinstance(r, Grid1D):
            fm = lambda u: r(u, -1) * (1 - r(u, -1)) * hm(u)
            fp = lambda u: r(u, 1) * (1 - r(u, 1)) * hp(u)
        else:
            fm = lambda u: _rho_values(r, u) * (1 - _rho_values(r, u)) * hm(u)
            fp = lambda u: _rho_values(r, u) * (1 - _rho_values(r, u)) * hp(u)
        return _sided_product_integral(fm, fp, window)

    if not integrated:
        return c * at(rho)
    if isinstance(rho, Grid1D):
        if rho.history is None:
            raise DomainError("integrated variant needs a profile history")
        times = rho.history_t[rho.history_t <= t + 1e-12]
        vals = [at(rho.snapshot(k)) for k in range(times.size)]
    else:
        times = np.linspace(0.0, t, 101)
        vals = [at(lambda u, s=s: rho(s, u)) for s in times]
    return c * float(np.trapezoid(vals, times)) if times.size > 1 else 0.0


@dataclass
class PairQV:
    """Duality estimate of ``sum_y xi(x, y) E (eta_t(x) - eta_t(y))^2``."""

    x: tuple
    neighbors: list
    rates_: list
    estimates: list
    total: float
    total_stderr: float
    unweighted_total: float

    def to_dict(self) -> dict:
        return {"x": list(self.x), "total": self.total, "stderr": self.total_stderr,
                "unweighted_total": self.unweighted_total,
                "per_neighbor": [{"y": list(y), "xi": r, "estimate": e.mean, "stderr": e.stderr}
                                 for y, r, e in zip(self.neighbors, self.rates_, self.estimates)]}


def pair_correlation_qv(x, t: float, rates: MembraneRates, profile: InitialProfile, replicas: int,
                        seed: int, geometry: BoxGeometry | None = None) -> PairQV:
    """Estimate ``E (eta_t(x) - eta_t(y))^2`` for every neighbour ``y`` of ``x`` by duality.

    Each replica samples a coalescing pair from ``(x, y)`` run for ``t N^2``
    and contributes ``r(X) + r(Y) - 2 [met r(X) + (1 - met) r(X) r(Y)]`` with
    ``r = rho_0(. / N)``.
    """
    from .lattice import bond_rate

    x = np.atleast_1d(np.asarray(x, dtype=np.int64))
    d = x.size
    T = t * float(rates.N) ** 2
    neighbors, xis, ests = [], [], []
    for i in range(d):
        for k, step in enumerate((1, -1)):
            y = x.copy()
            y[i] += step
            rng = stream(seed, 0x9C, i, k)
            parts = []
            for start in range(0, replicas, 4096):
                n = min(4096, replicas - start)
                pair = sample_pairs(x, y, 0.0, T, rates, n, rng, geometry)
                ra = profile(pair.a[:, 0] / float(rates.N))
                rb = profile(pair.b[:, 0] / float(rates.N))
                both = np.where(pair.met, ra, ra * rb)
                parts.append(Estimate.from_samples(ra + rb - 2 * both))
            est = parts[0]
            for p in parts[1:]:
                est = est.merge(p)
            neighbors.append(tuple(y.tolist()))
            xis.append(bond_rate(rates, x, y, geometry))
            ests.append(est)
    total = sum(r * e.mean for r, e in zip(xis, ests))
    se = math.sqrt(sum((r * e.stderr) ** 2 for r, e in zip(xis, ests)))
    return PairQV(tuple(x.tolist()), neighbors, xis, ests, total, se, sum(e.mean for e in ests))


def ou_covariance(H, G, t: float, s: float, rho_path: Grid1D, gamma_d: float, d: int,
                  window: float = 4.0) -> float:
    """``4 d (1 - gamma_d) int_0^{t ^ s} int rho (1 - rho) H G du dtau``."""
    m = min(t, s)
    if m <= 0:
        return 0.0
    prod = PiecewiseTestFunction(H.plus * G.plus, H.minus * G.minus)
    c = 4.0 * d * (1.0 - gamma_d)
    times = rho_path.history_t[rho_path.history_t <= m + 1e-12]
    vals = []
    for k in range(times.size):
        r = rho_path.snapshot(k)
        fm = lambda u: r(u, -1) * (1 - r(u, -1)) * prod.side_eval(u, -1)
        fp = lambda u: r(u, 1) * (1 - r(u, 1)) * prod.side_eval(u, 1)
        vals.append(_sided_product_integral(fm, fp, window))
    if abs(times[-1] - m) > 1e-9:
        raise DomainError("t ^ s must be a stored time of rho_path")
    return c * float(np.trapezoid(vals, times)) if times.size > 1 else 0.0


def pde_semigroup(cond: InterfaceCondition, dx: float = 0.01, dt: float | None = None, L: float = 4.0):
    """Semigroup evaluator ``(H, t) -> callable (u, side) -> T_t H(u)`` built on :func:`solve_1d`."""
    def evaluate(H, t):
        if t == 0:
            return lambda u, side: np.where(np.asarray(side) > 0, H.side_eval(u, 1), H.side_eval(u, -1))
        g = solve_1d(H, t, cond, dx=dx, dt=dt, L=L, density=False)
        return lambda u, side: g(u, side)
    return evaluate


def limit_variance(H, t: float, rho_path: Grid1D, semigroup_eval: Callable, gamma_d: float, d: int,
                   window: float = 4.0, n_tau: int = 41) -> float:
    """``4 d (1 - gamma_d) int_0^t int rho (1 - rho) (T_{t - tau} H)^2 du dtau``.

    ``semigroup_eval(H, s)`` must return a callable ``(u, side) -> T_s H(u)``.
    ``rho_path`` supplies ``rho(tau, .)`` through its stored history
    (nearest stored time).
    """
    if t <= 0:
        return 0.0
    if rho_path.history is None:
        raise DomainError("rho_path needs a stored history")
    taus = np.linspace(0.0, t, n_tau)
    vals = []
    for tau in taus:
        k = int(np.argmin(np.abs(rho_path.history_t - tau)))
        r = rho_path.snapshot(k)
        TH = semigroup_eval(H, t - tau)
        fm = lambda u: r(u, -1) * (1 - r(u, -1)) * TH(u, -1) ** 2
        fp = lambda u: r(u, 1) * (1 - r(u, 1)) * TH(u, 1) ** 2
        vals.append(_sided_product_integral(fm, fp, window, n=801))
    return 4.0 * d * (1.0 - gamma_d) * float(np.trapezoid(vals, taus))


# ---------------------------------------------------------------------------
# finite-N martingale identities


@dataclass
class MartingaleLedger:
    """Per-replica martingale values and running quadratic variation."""

    times: np.ndarray
    M_values: np.ndarray
    QV_running: np.ndarray


@dataclass
class MartingaleReport:
    times: np.ndarray
    mean_M: np.ndarray
    stderr_M: np.ndarray
    mean_excess: np.ndarray
    stderr_excess: np.ndarray
    ledger: MartingaleLedger = field(repr=False)

    def z_scores(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            zm = np.where(self.stderr_M > 0, self.mean_M / self.stderr_M, 0.0)
            ze = np.where(self.stderr_excess > 0, self.mean_excess / self.stderr_excess, 0.0)
        return zm, ze

    def passed(self, k: float = 3.0) -> bool:
        ok_m = np.abs(self.mean_M) <= k * self.stderr_M + 1e-12
        ok_e = np.abs(self.mean_excess) <= k * self.stderr_excess + 1e-12
        return bool(np.all(ok_m) and np.all(ok_e))

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "mean_M": self.mean_M.tolist(),
                "stderr_M": self.stderr_M.tolist(), "mean_excess": self.mean_excess.tolist(),
                "stderr_excess": self.stderr_excess.tolist(), "passed": self.passed()}


def martingale_check(initial: np.ndarray, events: EventBatch, H, observe: Sequence[float],
                     mean_field: Callable[[float], np.ndarray]) -> MartingaleReport:
    """Verify ``E M_t = 0`` and ``E M_t^2 = E int_0^t Q ds`` on a simulated batch.

    Parameters
    ----------
    initial : ndarray, shape (R, n_sites)
        Initial occupancies (independent of ``events``).
    events : EventBatch
        Event streams of the ``R`` replicas.
    H : callable
        Test function of macroscopic points.
    observe : sequence of float
        Observation times.
    mean_field : callable
        ``mean_field(t)`` returns the exact ``E eta_t`` per site (for example
        from :func:`slowvoter.master.mean_field`).
    """
    geometry, rates = events.geometry, events.rates
    N, d = rates.N, geometry.d
    obs = np.asarray(observe, dtype=float)
    w = generator_weights(geometry, H, rates)
    w_total = w["laplacian"] + w["boundary_plus"] + w["boundary_minus"] + w["membrane"]
    scale = float(N) ** (d / 2.0 - 1.0)
    src, dst, wq = _qv_weights(geometry, H, rates)
    drift = lambda cfg: scale * (cfg @ w_total)
    qv = lambda cfg: (cfg[:, src] != cfg[:, dst]).astype(float) @ wq
    out = replay(initial, events, obs, [drift, qv], keep_snapshots=True)
    h = _h_on_sites(H, geometry, N)
    norm = float(N) ** (1 + d / 2.0)
    rho0 = np.asarray(mean_field(0.0), dtype=float)
    Y0 = (initial - rho0) @ h / norm
    M = np.empty((initial.shape[0], obs.size))
    for k, t in enumerate(obs):
        rho_t = np.asarray(mean_field(t), dtype=float)
        Yt = (out["snapshots"][:, k, :] - rho_t) @ h / norm
        # int_0^t d_s Y ds = -N^-(1+d/2) <rho_t - rho_0, H> exactly
        M[:, k] = Yt - Y0 - out["integrals"][:, k, 0] + (rho_t - rho0) @ h / norm
    QV = out["integrals"][:, :, 1]
    excess = M ** 2 - QV
    R = initial.shape[0]
    se = lambda a: a.std(axis=0, ddof=1) / math.sqrt(R)
    ledger = MartingaleLedger(obs, M, QV)
    return MartingaleReport(obs, M.mean(axis=0), se(M), excess.mean(axis=0), se(excess), ledger)


# ---------------------------------------------------------------------------
# boundary variance bound


def _gamma_table(k: int, radius: int, replicas: int, horizon: int, seed: int):
    """Monte Carlo ``Gamma(z)`` on the cube ``|z|_inf <= radius`` using lattice symmetries."""
    table = {(0,) * k: 1.0}
    for a in range(1, radius + 1):
        for j, combo in enumerate(_sorted_tuples(k, a)):
            est = hitting_prob_Gamma(combo, horizon=horizon, replicas=replicas, seed=seed + 1000 * a + j)
            table[combo] = est.estimate
    return table


def _sorted_tuples(k, maxv):
    """Nonincreasing tuples of length ``k`` with first entry ``maxv``."""
    def rec(prefix, left, cap):
        if left == 0:
            yield tuple(prefix)
            return
        for v in range(cap, -1, -1):
            yield from rec(prefix + [v], left - 1, v)
    yield from rec([maxv], k - 1, maxv)


def boundary_variance_scaling(rates: MembraneRates, profile: InitialProfile, H, N_list: Sequence[int],
                              t: float, replicas: int, seed: int, d: int = 4, L: float = 1.0,
                              gamma_radius: int = 3, horizon: int = 10 ** 5) -> dict:
    """Upper bounds on ``Var(int_0^t sum_{x_1=0} bar-eta_s(x) H(x/N) ds)`` for each ``N``.

    The bound is ``t^2 kappa sum_{x, y} |H(x/N)| |H(y/N)| Gamma((x - y)^perp)``
    over the plane ``x_1 = 0`` inside ``|u_perp|_inf <= L``, with ``kappa =
    min(max rho_0, max (1 - rho_0))`` and ``Gamma`` the hitting probability of
    the ``(d-1)``-dimensional simple walk: Monte Carlo on a small cube and a
    fitted envelope ``C |z|^(3-d)`` beyond it.  The double sum is a
    correlation computed by FFT.

    Returns
    -------
    dict
        ``N``, ``bound`` (lists), ``exponent`` (least-squares slope of
        ``log bound`` against ``log N``), ``envelope_C``.
    """
    if d < 2:
        raise DomainError("the membrane plane needs d >= 2")
    if gamma_radius < 1:
        raise DomainError("gamma_radius must be at least 1")
    k = d - 1
    u1 = np.linspace(-4, 4, 2001)
    r0 = profile(u1)
    kappa = float(min(r0.max(), (1 - r0).max()))
    table: dict = {}
    env_C = 0.0
    bounds = []
    for N in N_list:
        n = int(round(L * N))
        grid = np.arange(-n, n + 1)
        mesh = np.stack(np.meshgrid(*([grid] * k), indexing="ij"), axis=-1)
        pts = np.concatenate([np.zeros(mesh.shape[:-1] + (1,)), mesh / float(N)], axis=-1)
        a = np.abs(np.asarray(H(pts), dtype=float))
        if kappa == 0 or not a.any():
            bounds.append(0.0)
            continue
        if not table:
            table = _gamma_table(k, gamma_radius, replicas, horizon, seed)
            shell = [(z, g) for z, g in table.items() if max(z) == gamma_radius]
            env_C = max(g * math.sqrt(sum(c * c for c in z)) ** (k - 2) for z, g in shell)
        size = 2 * (2 * n + 1)
        F = np.fft.rfftn(a, s=(size,) * k, axes=tuple(range(k)))
        corr = np.fft.irfftn(F * np.conj(F), s=(size,) * k, axes=tuple(range(k)))
        lag = np.fft.fftfreq(size, 1.0 / size).astype(int)
        lags = np.stack(np.meshgrid(*([lag] * k), indexing="ij"), axis=-1)
        absl = np.sort(np.abs(lags), axis=-1)[..., ::-1]
        norm = np.sqrt((lags.astype(float) ** 2).sum(axis=-1))
        G = np.where(norm > 0, env_C / np.maximum(norm, 1.0) ** (k - 2), 1.0)
        inside = absl[..., 0] <= gamma_radius
        for z, g in table.items():
            sel = inside & np.all(absl == np.array(z), axis=-1)
            G[sel] = g
        total = float(np.sum(np.clip(corr, 0.0, None) * G))
        bounds.append(t * t * kappa * total)
    bounds_arr = np.array(bounds)
    if np.all(bounds_arr > 0) and len(N_list) > 1:
        slope = float(np.polyfit(np.log(np.asarray(N_list, float)), np.log(bounds_arr), 1)[0])
    else:
        slope = float("nan")
    return {"N": list(N_list), "bound": bounds, "exponent": slope, "envelope_C": env_C,
            "kappa": kappa, "gamma_table": {str(z): g for z, g in table.items()}}

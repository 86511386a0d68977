"""Finite-volume reference solutions of the heat equation across a membrane.

The line ``[-L, L]`` is cut at 0 and each half carries its own node at the
interface (``0-`` and ``0+``), so one-sided traces are grid values.  Interior
nodes use the standard three-point stencil; the interface nodes own a half
cell whose outer face carries the flux ``J`` between the two halves:

* ``robin(alpha)``: ``J = alpha (rho(0+) - rho(0-))``,
* ``neumann``: ``J = 0``,
* ``none``: the two copies are merged into one ordinary node.

The far ends are reflecting walls; with ``L`` several diffusion lengths
away they do not affect the observation window.  Time stepping is
Crank-Nicolson by default (with a few implicit half steps at start-up to
damp incompatible initial data), or explicit / implicit Euler.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigurationError, DomainError
from .testfunctions import PiecewiseTestFunction

__all__ = ["InterfaceCondition", "Grid1D", "solve_1d", "feynman_kac", "weak_residual",
           "trace_average", "interface_fluxes"]


@dataclass(frozen=True)
class InterfaceCondition:
    """Interface law at ``u_1 = 0``: ``none``, ``robin`` (with ``alpha``) or ``neumann``."""

    kind: str
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "robin", "neumann"):
            raise DomainError(f"unknown interface condition {self.kind!r}")
        if self.kind == "robin" and not self.alpha > 0:
            raise DomainError("robin condition needs alpha > 0")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def robin(cls, alpha: float):
        return cls("robin", float(alpha))

    @classmethod
    def neumann(cls):
        return cls("neumann")

    @classmethod
    def for_beta(cls, beta: float, alpha: float) -> "InterfaceCondition":
        """Condition matching the slowdown exponent ``beta``."""
        if beta < 1:
            return cls.none()
        if beta == 1:
            return cls.robin(alpha)
        return cls.neumann()


@dataclass
class Grid1D:
    """Profile on the doubled grid.

    ``u_minus`` runs from ``-L`` to ``0`` (its last node is ``0-``) and
    ``u_plus`` from ``0`` (``0+``) to ``L``.
    """

    dx: float
    u_minus: np.ndarray
    u_plus: np.ndarray
    rho_minus: np.ndarray
    rho_plus: np.ndarray
    t: float = 0.0
    cond: InterfaceCondition | None = None
    history_t: np.ndarray | None = field(default=None, repr=False)
    history: np.ndarray | None = field(default=None, repr=False)
    diagnostics: list = field(default_factory=list, repr=False)

    @property
    def n_half(self) -> int:
        return self.u_plus.size - 1

    def trace(self, side: int) -> float:
        return float(self.rho_plus[0] if side > 0 else self.rho_minus[-1])

    def values(self) -> np.ndarray:
        return np.concatenate([self.rho_minus, self.rho_plus])

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """All node positions and their side labels (-1 or +1)."""
        u = np.concatenate([self.u_minus, self.u_plus])
        s = np.concatenate([-np.ones(self.u_minus.size, int), np.ones(self.u_plus.size, int)])
        return u, s

    def __call__(self, u, side=None) -> np.ndarray:
        """Piecewise-linear interpolation; ``u = 0`` uses ``side`` (default ``+1``)."""
        u = np.asarray(u, dtype=float)
        if side is None:
            side = np.where(u < 0, -1, 1)
        side = np.broadcast_to(side, u.shape)
        plus = np.interp(u, self.u_plus, self.rho_plus)
        minus = np.interp(u, self.u_minus, self.rho_minus)
        return np.where(side > 0, plus, minus)

    def snapshot(self, k: int) -> "Grid1D":
        """The profile stored at history index ``k``."""
        if self.history is None:
            raise DomainError("the solution was computed without history")
        v = self.history[k]
        m = self.u_minus.size
        return Grid1D(self.dx, self.u_minus, self.u_plus, v[:m].copy(), v[m:].copy(),
                      float(self.history_t[k]), self.cond)

    def to_rows(self):
        """Rows ``(t, u1, side, rho)`` with side in ``{-, +, bulk}``."""
        rows = []
        merged = self.cond is not None and self.cond.kind == "none"
        for u, r in zip(self.u_minus, self.rho_minus):
            side = "bulk" if (u < 0 or merged) else "-"
            rows.append((self.t, float(u), side, float(r)))
        for u, r in zip(self.u_plus, self.rho_plus):
            if u == 0 and merged:
                continue
            side = "bulk" if u > 0 else "+"
            rows.append((self.t, float(u), side, float(r)))
        return rows


def _sided_eval(f, u: np.ndarray, side: int) -> np.ndarray:
    """Evaluate ``f`` on ``u`` taking one-sided limits at 0."""
    if isinstance(f, PiecewiseTestFunction):
        return f.side_eval(u, side)
    uu = np.where(u == 0, np.nextafter(0.0, float(side)), u)
    return np.asarray(f(uu), dtype=float)


def _operator(n: int, dx: float, cond: InterfaceCondition) -> sp.csr_matrix:
    """Semi-discrete operator on the doubled grid (``2 (n + 1)`` unknowns)."""
    size = 2 * (n + 1)
    A = sp.lil_matrix((size, size))
    h2 = 1.0 / (dx * dx)
    for offset in (0, n + 1):
        for i in range(1, n):
            k = offset + i
            A[k, k - 1] = h2
            A[k, k] = -2 * h2
            A[k, k + 1] = h2
    # reflecting walls (half cells)
    A[0, 0], A[0, 1] = -2 * h2, 2 * h2
    last = size - 1
    A[last, last], A[last, last - 1] = -2 * h2, 2 * h2
    im, ip = n, n + 1  # 0- and 0+
    A[im, im - 1] += 2 * h2
    A[im, im] += -2 * h2
    A[ip, ip + 1] += 2 * h2
    A[ip, ip] += -2 * h2
    if cond.kind == "robin":
        c = 2.0 * cond.alpha / dx
        A[im, ip] += c
        A[im, im] -= c
        A[ip, im] += c
        A[ip, ip] -= c
    return A.tocsr()


def _merged_operator(n: int, dx: float) -> sp.csr_matrix:
    size = 2 * n + 1
    h2 = 1.0 / (dx * dx)
    main = np.full(size, -2 * h2)
    off = np.full(size - 1, h2)
    A = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    A[0, 1] = 2 * h2
    A[size - 1, size - 2] = 2 * h2
    return A.tocsr()


def solve_1d(rho0, t: float, cond: InterfaceCondition, dx: float = 0.01, dt: float | None = None,
             L: float = 4.0, scheme: str = "cn", store_history: bool = False,
             density: bool = True, startup: int = 2) -> Grid1D:
    """Solve ``d_t rho = d_uu rho`` with the interface law ``cond`` up to time ``t``.

    Parameters
    ----------
    rho0 : callable or PiecewiseTestFunction
        Initial profile of ``u_1`` (an :class:`~slowvoter.lattice.InitialProfile`
        works); one-sided limits are used at the doubled node.
    t : float
        Final time (nonnegative).
    cond : InterfaceCondition
    dx : float
        Grid spacing; ``L / dx`` is rounded to an integer.
    dt : float, optional
        Time step.  Defaults to ``dx`` for implicit schemes and to 90 % of
        the stability limit for the explicit scheme.
    L : float
        Half-width of the computational window.
    scheme : {'cn', 'implicit', 'explicit'}
    store_history : bool
        Keep the profile after every step (needed by :func:`weak_residual`
        and :func:`interface_fluxes`).
    density : bool
        Treat the solution as a density: values leaving ``[0, 1]`` by more than
        ``1e-9`` are clipped and reported in ``diagnostics``.
    startup : int
        Number of initial Crank-Nicolson steps replaced by two implicit half
        steps each.

    Raises
    ------
    ConfigurationError
        Explicit scheme with a time step above the stability limit.
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    if scheme not in ("cn", "implicit", "explicit"):
        raise ConfigurationError(f"unknown scheme {scheme!r}", {"scheme": scheme})
    n = int(round(L / dx))
    if n < 2:
        raise ConfigurationError("grid too coarse", {"dx": str(dx)})
    dx = L / n
    u_minus = np.linspace(-L, 0.0, n + 1)
    u_plus = np.linspace(0.0, L, n + 1)
    vm = _sided_eval(rho0, u_minus, -1)
    vp = _sided_eval(rho0, u_plus, 1)
    merged = cond.kind == "none"
    if merged:
        A = _merged_operator(n, dx)
        v = np.concatenate([vm[:-1], [0.5 * (vm[-1] + vp[0])], vp[1:]])
    else:
        A = _operator(n, dx, cond)
        v = np.concatenate([vm, vp])
    diag_max = float(np.max(np.abs(A.diagonal())))
    if dt is None:
        dt = 0.9 / diag_max if scheme == "explicit" else dx
    if scheme == "explicit" and dt * diag_max > 1.0 + 1e-12:
        raise ConfigurationError("explicit scheme violates the stability limit",
                                 {"dt": f"{dt:g} > {1.0 / diag_max:g} (about dx^2/2)"})
    steps = max(1, int(math.ceil(t / dt - 1e-12))) if t > 0 else 0
    dt = t / steps if steps else 0.0
    I = sp.identity(A.shape[0], format="csc")
    A = A.tocsc()
    solvers = {}

    def implicit(theta, h):
        key = (theta, h)
        if key not in solvers:
            solvers[key] = (splu((I - theta * h * A).tocsc()), (I + (1 - theta) * h * A).tocsr())
        lu, rhs = solvers[key]
        return lambda x: lu.solve(rhs @ x)

    diagnostics = []
    hist_t = [0.0]
    hist = [v.copy()]
    for k in range(steps):
        if scheme == "explicit":
            v = v + dt * (A @ v)
        elif scheme == "implicit":
            v = implicit(1.0, dt)(v)
        elif k < startup:
            half = implicit(1.0, dt / 2)
            v = half(half(v))
        else:
            v = implicit(0.5, dt)(v)
        if density:
            lo, hi = float(v.min()), float(v.max())
            if lo < -1e-9 or hi > 1 + 1e-9:
                diagnostics.append({"step": k + 1, "min": lo, "max": hi})
                v = np.clip(v, 0.0, 1.0)
        if store_history:
            hist_t.append((k + 1) * dt)
            hist.append(v.copy())
    if diagnostics:
        warnings.warn(f"profile left [0, 1] at {len(diagnostics)} steps; values clipped", stacklevel=2)
    if merged:
        full = lambda x: np.concatenate([x[: n + 1], x[n:]])
        v = full(v)
        hist = [full(h) for h in hist]
    grid = Grid1D(dx, u_minus, u_plus, v[: n + 1].copy(), v[n + 1:].copy(), float(t), cond,
                  diagnostics=diagnostics)
    if store_history:
        grid.history_t = np.array(hist_t)
        grid.history = np.array(hist)
    return grid


def interface_fluxes(grid: Grid1D) -> dict:
    """One-sided difference quotients at the interface for every stored step.

    Returns arrays ``t``, ``flux_plus = (rho(dx) - rho(0+)) / dx``,
    ``flux_minus = (rho(0-) - rho(-dx)) / dx`` and ``jump = rho(0+) - rho(0-)``.
    """
    if grid.history is None:
        raise DomainError("interface_fluxes needs a solution with history")
    m = grid.u_minus.size
    H = grid.history
    fp = (H[:, m + 1] - H[:, m]) / grid.dx
    fm = (H[:, m - 1] - H[:, m - 2]) / grid.dx
    return {"t": grid.history_t, "flux_plus": fp, "flux_minus": fm, "jump": H[:, m] - H[:, m - 1]}


def _trapz(y, x) -> float:
    return float(np.trapezoid(y, x)) if hasattr(np, "trapezoid") else float(np.trapz(y, x))


def weak_residual(rho: Grid1D, H: PiecewiseTestFunction, t: float | None = None,
                  cond: InterfaceCondition | None = None) -> float:
    """Absolute residual of the weak formulation for the test function ``H``.

    The identity checked is

    ``int rho_t H - int rho_0 H = int_0^t [ int_{u != 0} rho_s H'' + B_s ] ds``

    with the interface term ``B_s = rho_s(0+) H'(0+) - rho_s(0-) H'(0-)``
    augmented by ``alpha (rho_s(0-) - rho_s(0+)) (H(0+) - H(0-))`` for the
    Robin law.  Without an interface (``none``) ``H`` must be continuously
    differentiable across 0 and ``B_s`` vanishes.  Space integrals use the
    composite trapezoid rule on each half-grid, time integrals the trapezoid
    rule over the stored steps.

    Raises
    ------
    DomainError
        ``H`` is not an admissible test function (not piecewise smooth, not
        negligible at the window edges, or discontinuous for ``none``).
    """
    if not isinstance(H, PiecewiseTestFunction):
        raise DomainError("weak_residual needs a PiecewiseTestFunction")
    if rho.history is None:
        raise DomainError("weak_residual needs a solution with history")
    cond = cond or rho.cond
    if cond is None:
        raise DomainError("interface condition unknown")
    L = rho.u_plus[-1]
    edge = max(abs(float(H.side_eval(L, 1))), abs(float(H.side_eval(-L, -1))),
               abs(float(H.side_eval(L, 1, 1))), abs(float(H.side_eval(-L, -1, 1))))
    if edge > 1e-8:
        raise DomainError("test function is not negligible at the window edges")
    if cond.kind == "none" and not H.is_continuous(order=1, tol=1e-10):
        raise DomainError("without an interface the test function must be C^1 across 0")
    times = rho.history_t
    if t is None:
        t = times[-1]
    k_end = int(np.searchsorted(times, t + 1e-12, side="right"))
    if k_end < 1 or abs(times[k_end - 1] - t) > 1e-9:
        raise DomainError("t must be one of the stored times")
    m = rho.u_minus.size
    um, up = rho.u_minus, rho.u_plus
    hm, hp = H.side_eval(um, -1), H.side_eval(up, 1)
    h2m, h2p = H.side_eval(um, -1, 2), H.side_eval(up, 1, 2)
    Hp, Hm = H.trace(1), H.trace(-1)
    dHp, dHm = H.trace(1, 1), H.trace(-1, 1)

    def pair(v, fm, fp):
        return _trapz(v[:m] * fm, um) + _trapz(v[m:] * fp, up)

    lhs = pair(rho.history[k_end - 1], hm, hp) - pair(rho.history[0], hm, hp)
    integrand = np.empty(k_end)
    for k in range(k_end):
        v = rho.history[k]
        val = pair(v, h2m, h2p)
        rp, rm = v[m], v[m - 1]
        if cond.kind != "none":
            val += rp * dHp - rm * dHm
            if cond.kind == "robin":
                val += cond.alpha * (rm - rp) * (Hp - Hm)
        integrand[k] = val
    rhs = _trapz(integrand, times[:k_end])
    return abs(lhs - rhs)


def trace_average(f, epsilon: float, side: str, point=None, order: int = 8) -> float:
    """Average of ``f`` over the one-sided box of size ``epsilon`` at ``point`` on the membrane.

    The box is ``0 < v_1 < epsilon`` (``side='plus'``) or ``-epsilon < v_1 < 0``
    (``'minus'``) times ``|v_i| < epsilon`` in the other coordinates.

    Parameters
    ----------
    f : Grid1D or callable
        A grid profile (averaged exactly as a piecewise-linear function of
        ``u_1``) or a function of points of shape ``(..., d)``.
    point : array_like, optional
        Point of ``{u_1 = 0}`` (``d`` coordinates, first one ignored); the
        origin of ``R^1`` by default.
    order : int
        Gauss-Legendre points per axis for callables.
    """
    if side not in ("plus", "minus"):
        raise DomainError("side must be 'plus' or 'minus'")
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    s = 1 if side == "plus" else -1
    if isinstance(f, Grid1D):
        if epsilon < f.dx - 1e-12:
            raise DomainError("epsilon must be at least the grid spacing")
        u = f.u_plus if s > 0 else f.u_minus[::-1]
        r = f.rho_plus if s > 0 else f.rho_minus[::-1]
        a = np.abs(u)
        inside = a < epsilon
        pts = np.concatenate([a[inside], [epsilon]])
        vals = np.concatenate([r[inside], [np.interp(epsilon, a, r)]])
        return _trapz(vals, pts) / epsilon
    point = np.zeros(1) if point is None else np.atleast_1d(np.asarray(point, dtype=float))
    d = point.size
    x, w = np.polynomial.legendre.leggauss(order)
    first = s * epsilon * (x + 1) / 2
    others = epsilon * x
    axes = [first] + [others] * (d - 1)
    weights = [w / 2] + [w / 2] * (d - 1)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    W = np.ones(mesh.shape[:-1])
    for i, wi in enumerate(weights):
        shape = [1] * d
        shape[i] = -1
        W = W * wi.reshape(shape)
    pts = point.copy()
    pts[0] = 0.0
    vals = np.asarray(f(mesh + pts), dtype=float)
    return float(np.sum(W * vals))


def feynman_kac(u, t: float, rho0, params, replicas: int, seed: int, side: int | None = None,
                workers: int = 1):
    """Monte Carlo ``E rho_0(W_t^u)`` with ``W`` the product process of :mod:`slowvoter.brownian`.

    ``rho0`` is a function of ``u_1`` (such as an ``InitialProfile``); its
    argument is the first coordinate of ``W_t``.
    """
    from .brownian import sample_W
    from .rng import estimate_blocks

    if not t > 0:
        raise DomainError("t must be positive")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u[0] == 0 and side is None:
        raise DomainError("a start on the interface needs a side label")
    return estimate_blocks(_FK(u, t, rho0, params, side), replicas, seed, (0xF4,), workers)


class _FK:
    def __init__(self, u, t, rho0, params, side):
        self.u, self.t, self.rho0, self.params, self.side = u, t, rho0, params, side

    def __call__(self, rng, size):
        from .brownian import sample_W

        w = sample_W(self.u, self.t, self.params, rng, size, side=self.side)
        return _sided_eval_points(self.rho0, w[:, 0])


def _sided_eval_points(f, x):
    if isinstance(f, PiecewiseTestFunction):
        return f.profile(x)
    return np.asarray(f(x), dtype=float)

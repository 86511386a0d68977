"""Continuum reference processes: Brownian motion with local time at 0,
reflected and snapping-out Brownian motion, and the product process ``W``.

Joint sampling of ``(B_t, L_t)``
--------------------------------
For a start ``u != 0`` the first hitting time ``tau`` of 0 has density
``|u| / sqrt(2 pi) * exp(-u^2 / (2 s)) * s^(-3/2)``, i.e. ``tau = u^2 / Z^2``
with ``Z`` standard normal.  Whether the path reaches 0 before ``t`` is
decided by drawing the terminal value and the running minimum of a free
Brownian path jointly (the minimum given the terminal value has an explicit
inverse CDF), so the no-hit branch needs no rejection.  On the hit branch,
``tau`` is drawn from its law conditioned on ``tau <= t`` and the remaining
piece uses Levy's identity: ``(|B|, L)`` has the law of ``(M - B, M)`` where
``M`` is the running maximum of a Brownian motion started at 0.  ``L`` is the
semimartingale local time (``|B_t| - |B_0| - int sgn(B) dB``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .errors import DomainError
from .lattice import MembraneRates
from .rng import Estimate, estimate_blocks, map_blocks, stream
from .walks import sample_slow_coordinate

__all__ = [
    "SnappingParams", "SignedHalfLinePoint", "BMPathSample", "regime_of",
    "hitting_probability", "hitting_density", "sample_hitting_time",
    "sample_bm_with_local_time", "snapping_out_expectation", "sample_B_beta",
    "sample_W", "invariance_distance",
]

_REGIMES = ("sub", "critical", "super")


def regime_of(beta: float) -> str:
    """Continuum regime selected by the slowdown exponent."""
    if beta < 1:
        return "sub"
    if beta == 1:
        return "critical"
    return "super"


@dataclass(frozen=True)
class SnappingParams:
    """Snapping strength ``alpha`` and the regime of the interface."""

    alpha: float
    beta_regime: str

    def __post_init__(self):
        if self.beta_regime not in _REGIMES:
            raise DomainError(f"regime must be one of {_REGIMES}")
        if not self.alpha > 0:
            raise DomainError("alpha must be positive")

    @classmethod
    def from_rates(cls, rates: MembraneRates) -> "SnappingParams":
        return cls(rates.alpha, regime_of(rates.beta))


@dataclass(frozen=True)
class SignedHalfLinePoint:
    """A point of ``(-inf, 0-] U [0+, inf)``; ``side`` is +1 or -1."""

    value: float
    side: int = 0

    def __post_init__(self):
        side = self.side
        if side == 0:
            if self.value == 0:
                raise DomainError("the origin needs a side label (+1 for 0+, -1 for 0-)")
            side = 1 if self.value > 0 else -1
        if side not in (1, -1):
            raise DomainError("side must be +1 or -1")
        if self.value != 0 and (self.value > 0) != (side > 0):
            raise DomainError("side label contradicts the sign of the value")
        object.__setattr__(self, "side", int(side))
        object.__setattr__(self, "value", float(self.value))

    @classmethod
    def plus(cls, value: float = 0.0) -> "SignedHalfLinePoint":
        return cls(abs(value), 1)

    @classmethod
    def minus(cls, value: float = 0.0) -> "SignedHalfLinePoint":
        return cls(-abs(value), -1)

    @classmethod
    def coerce(cls, u) -> "SignedHalfLinePoint":
        return u if isinstance(u, cls) else cls(float(u))


@dataclass
class BMPathSample:
    """Terminal values, local times at 0 and first hitting times (``inf`` if none)."""

    terminal: np.ndarray
    local_time: np.ndarray
    hit_time: np.ndarray

    def __len__(self) -> int:
        return self.terminal.size


def hitting_probability(u: float, t: float) -> float:
    """``P(tau_0 <= t)`` for Brownian motion from ``u``: ``2 Phi(-|u| / sqrt(t))``."""
    if t <= 0:
        return 0.0 if u != 0 else 1.0
    return float(2.0 * ndtr(-abs(u) / math.sqrt(t)))


def hitting_density(theta, a: float) -> np.ndarray:
    """Density of the hitting time of 0 from distance ``a``."""
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    pos = theta > 0
    out[pos] = a / math.sqrt(2 * math.pi) * np.exp(-a * a / (2 * theta[pos])) * theta[pos] ** -1.5
    return out


def sample_hitting_time(u: float, size: int, rng: np.random.Generator, t_max: float | None = None) -> np.ndarray:
    """Hitting times of 0 from ``u``; conditioned on ``tau <= t_max`` when given."""
    a = abs(float(u))
    if a == 0:
        return np.zeros(size)
    if t_max is None:
        z = rng.standard_normal(size)
        return a * a / (z * z)
    # |Z| conditioned on |Z| >= a / sqrt(t_max): inverse survival function
    c = a / math.sqrt(t_max)
    tail = stats.norm.sf(c)
    z = stats.norm.isf(rng.random(size) * tail)
    z = np.maximum(z, c)
    return a * a / (z * z)


def _free_terminal_and_min(t, size, rng):
    """Terminal value and running minimum of Brownian motion from 0 on ``[0, t]``."""
    w = rng.standard_normal(size) * np.sqrt(t)
    e = -np.log1p(-rng.random(size))  # Exp(1)
    m = 0.5 * (w - np.sqrt(w * w + 2.0 * t * e))
    return w, m


def _reflected_from_zero(t, size, rng):
    """``(|B_t|, L_t)`` for Brownian motion from 0 via Levy's identity."""
    b, neg_min = _free_terminal_and_min(t, size, rng)
    # the maximum of B equals minus the minimum of -B
    M = -neg_min
    b = -b
    return M - b, M


def sample_bm_with_local_time(u: float, t: float, rng: np.random.Generator, size: int = 1) -> BMPathSample:
    """Exact joint samples of ``(B_t, L_t)`` for Brownian motion started at ``u``.

    Parameters
    ----------
    u : float
        Starting point (``0`` means a start at the origin).
    t : float
        Positive time horizon (the Brownian motion has variance ``t``).
    rng : numpy.random.Generator
    size : int
    """
    if not t > 0:
        raise DomainError("t must be positive")
    u = float(u)
    terminal = np.empty(size)
    local = np.zeros(size)
    hit = np.full(size, np.inf)
    if u == 0:
        hit_mask = np.ones(size, dtype=bool)
        tau = np.zeros(size)
    else:
        w, m = _free_terminal_and_min(t, size, rng)
        a = abs(u)
        # the path from u reaches 0 iff its excursion toward 0 exceeds a
        hit_mask = m <= -a
        nh = ~hit_mask
        terminal[nh] = u + math.copysign(1.0, u) * w[nh]
        tau = np.zeros(size)
        k = int(hit_mask.sum())
        if k:
            tau[hit_mask] = sample_hitting_time(u, k, rng, t_max=t)
    idx = np.flatnonzero(hit_mask)
    if idx.size:
        rest = t - tau[idx]
        absb, L = _reflected_from_zero(rest, idx.size, rng)
        sign = np.where(rng.random(idx.size) < 0.5, 1.0, -1.0)
        terminal[idx] = sign * absb
        local[idx] = L
        hit[idx] = tau[idx]
    return BMPathSample(terminal, local, hit)


def _snapping_values(f, u: SignedHalfLinePoint, t: float, alpha: float, rng, size):
    s = sample_bm_with_local_time(u.value, t, rng, size)
    mag = np.abs(s.terminal)
    keep = 0.5 * (1.0 + np.exp(-2.0 * alpha * s.local_time))
    return keep * np.asarray(f(u.side * mag), dtype=float) + (1.0 - keep) * np.asarray(f(-u.side * mag), dtype=float)


class _Snap:
    def __init__(self, f, u, t, alpha):
        self.f, self.u, self.t, self.alpha = f, u, t, alpha

    def __call__(self, rng, size):
        return _snapping_values(self.f, self.u, self.t, self.alpha, rng, size)


def snapping_out_expectation(f: Callable[[np.ndarray], np.ndarray], u, t: float, alpha: float,
                             replicas: int, seed: int, workers: int = 1) -> Estimate:
    """``E_u f(B_t)`` for snapping-out Brownian motion, by local-time weighting.

    Each replica contributes ``w f(s |B_t|) + (1 - w) f(-s |B_t|)`` with
    ``w = (1 + exp(-2 alpha L_t)) / 2`` and ``s`` the side of ``u``.  The
    terminal value is nonzero almost surely, so ``f`` is an ordinary function
    of a real argument.  ``alpha = 0`` gives reflected Brownian motion.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    if alpha < 0:
        raise DomainError("alpha must be nonnegative")
    u = SignedHalfLinePoint.coerce(u)
    return estimate_blocks(_Snap(f, u, t, alpha), replicas, seed, (0xB1,), workers)


def sample_B_beta(u, t: float, params: SnappingParams, rng: np.random.Generator, size: int = 1):
    """Samples of ``B_{t, beta}`` started at ``u``.

    Returns ``(values, sides)``; ``sides`` disambiguates the (null) event of
    ending at 0.  ``t`` is the Brownian time (variance ``t``).
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    u = SignedHalfLinePoint.coerce(u)
    if t == 0:
        return np.full(size, u.value), np.full(size, u.side)
    s = sample_bm_with_local_time(u.value, t, rng, size)
    if params.beta_regime == "sub":
        vals = s.terminal
    else:
        mag = np.abs(s.terminal)
        if params.beta_regime == "super":
            vals = u.side * mag
        else:
            flip = rng.random(size) < 0.5 * (1.0 - np.exp(-2.0 * params.alpha * s.local_time))
            vals = np.where(flip, -u.side, u.side) * mag
    sides = np.where(vals > 0, 1, np.where(vals < 0, -1, u.side))
    return vals, sides


def sample_W(u, t: float, params: SnappingParams, rng: np.random.Generator, size: int = 1,
             side: int | None = None) -> np.ndarray:
    """Samples of ``W_t``: coordinate 1 is ``B_{2t, beta}``, the rest are free ``B_{2t}``.

    Parameters
    ----------
    u : array_like, shape (d,)
    side : {+1, -1}, optional
        Required when ``u[0] == 0``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u[0] == 0 and side is None:
        raise DomainError("a start on the interface needs a side label")
    start = SignedHalfLinePoint(u[0], side or 0)
    out = np.empty((size, u.size))
    out[:, 0], _ = sample_B_beta(start, 2.0 * t, params, rng, size)
    if u.size > 1:
        out[:, 1:] = u[1:] + rng.standard_normal((size, u.size - 1)) * math.sqrt(2.0 * t)
    return out


def invariance_distance(u, t: float, rates: MembraneRates, params: SnappingParams | None,
                        replicas: int, seed: int) -> float:
    """Kolmogorov-Smirnov distance between the rescaled walk and its continuum limit.

    The slow-bond walk starts at ``floor(u N)`` (``1`` for ``0+`` and ``0`` for
    ``0-``) and runs for ``t N^2``; its position divided by ``N`` is compared
    with ``B_{2t, beta}`` started at ``u``.
    """
    if replicas < 1000:
        raise DomainError("invariance_distance needs at least 1000 replicas")
    u = SignedHalfLinePoint.coerce(u)
    params = params or SnappingParams.from_rates(rates)
    N = rates.N
    if u.value == 0:
        x0 = 1 if u.side > 0 else 0
    else:
        x0 = int(math.floor(u.value * N))
    rng_walk = stream(seed, 0x1D, 1)
    rng_bm = stream(seed, 0x1D, 2)
    walk = sample_slow_coordinate(np.full(replicas, x0), t * N * N, rates.membrane_rate(), rng_walk) / float(N)
    cont, _ = sample_B_beta(u, 2.0 * t, params, rng_bm, replicas)
    return float(stats.ks_2samp(walk, cont).statistic)

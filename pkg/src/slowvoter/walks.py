"""Slow-bond random walks, coalescing pairs and duality estimators.

Walk conventions
----------------
Coordinate 1 of a walk on ``Z^d`` jumps to each neighbour at rate 1, except
across the bond ``0 <-> 1`` where the rate is ``p = alpha * N**-beta``.  The
other coordinates are independent rate-1 simple walks.  Times passed to
:func:`step_walk` are microscopic; the duality estimators take macroscopic
times and run the walks for ``t * N**2``.

Sampling strategy
-----------------
All samplers are exact.  Coordinate 1 is uniformised at rate
``max(2, 1 + p)`` so that it becomes a discrete chain with a Poisson number
of events.  A walker whose coordinate 1 is ``r`` events away from the sites
``{0, 1}`` behaves like a lazy simple walk for the next ``r`` events, so the
net displacement of those events is drawn in one step (a binomial split).
At the sites ``{0, 1}`` the holding time is geometric.  Pairs and return
problems use the same idea with the L1 distance: a pair at distance ``r``
cannot meet within ``r - 1`` events.  The event counts of such a block are
drawn as independent Poisson variables and the block is accepted only when
the total does not exceed the safe length; the decision depends on the total
alone, so accepted blocks carry the exact multinomial law of their events.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .errors import DomainError
from .lattice import BoxGeometry, InitialProfile, MembraneRates
from .rng import Estimate, estimate_blocks, map_blocks, merge_all, stream

__all__ = [
    "SlowWalk1D", "WalkD", "FrozenWalk", "CoalescingPair", "step_walk",
    "sample_slow_coordinate", "sample_walks", "sample_pairs", "PairSample",
    "one_point_function", "two_point_function", "meeting_time_sample",
    "GammaEstimate", "gamma_d", "hitting_prob_Gamma", "extrapolate_gamma",
    "lclt_tail_bound", "gamma_quadrature",
]

# walkers closer than this (in safe events) take single events
_SMALL = 3


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class SlowWalk1D:
    """Position of a walk on ``Z`` with a slow bond between 0 and 1."""

    position: int
    rates: MembraneRates

    def jump_rates(self) -> tuple[float, float]:
        """Rates ``(left, right)`` from the current position."""
        p = self.rates.membrane_rate()
        if self.position == 0:
            return 1.0, p
        if self.position == 1:
            return p, 1.0
        return 1.0, 1.0


@dataclass(frozen=True)
class WalkD:
    """Walk on ``Z^d`` whose first coordinate is a :class:`SlowWalk1D`."""

    coords: tuple
    rates: MembraneRates

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))
        if len(self.coords) < 1:
            raise DomainError("a walk needs at least one coordinate")

    @property
    def d(self) -> int:
        return len(self.coords)

    def perp(self) -> tuple:
        """Coordinates 2..d."""
        return self.coords[1:]


@dataclass(frozen=True)
class FrozenWalk:
    """A walk held at ``origin`` until microscopic time ``freeze_until``."""

    walk: WalkD
    freeze_until: float
    origin: tuple

    def __post_init__(self):
        if self.freeze_until < 0:
            raise DomainError("freeze time must be nonnegative")

    def position(self, t: float) -> tuple:
        return tuple(self.origin) if t <= self.freeze_until else self.walk.coords


@dataclass(frozen=True)
class CoalescingPair:
    """A free walker and a frozen walker that merge when they meet.

    ``meet_time`` is measured from the end of the freeze, in microscopic time.
    """

    walker: WalkD
    frozen: FrozenWalk
    met: bool = False
    meet_time: float = math.inf

    def __post_init__(self):
        if self.met and self.walker.coords != self.frozen.walk.coords:
            raise DomainError("a coalesced pair must occupy a single site")


def _site(x, d=None) -> np.ndarray:
    a = np.atleast_1d(np.asarray(x, dtype=np.int64))
    if a.ndim != 1 or (d is not None and a.size != d):
        raise DomainError(f"bad site {x!r}")
    return a


# ---------------------------------------------------------------------------
# single walks


def step_walk(walk: WalkD, dt_budget: float, rng: np.random.Generator, record: bool = False):
    """Run ``walk`` for microscopic time ``dt_budget``.

    With ``record=True`` the walk is simulated jump by jump and the list of
    jumps ``(time, axis, step)`` is returned alongside the final walk.
    """
    if dt_budget < 0:
        raise DomainError("dt_budget must be nonnegative")
    if not record:
        end = sample_walks(np.asarray(walk.coords)[None, :], dt_budget, walk.rates, rng)[0]
        return replace(walk, coords=tuple(end.tolist()))
    p = walk.rates.membrane_rate()
    x = list(walk.coords)
    d = len(x)
    t = 0.0
    jumps = []
    while True:
        left = p if x[0] == 1 else 1.0
        right = p if x[0] == 0 else 1.0
        rates = np.array([right, left] + [1.0] * (2 * (d - 1)))
        total = rates.sum()
        t += rng.exponential(1.0 / total)
        if t > dt_budget:
            break
        k = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
        k = min(k, rates.size - 1)
        axis, step = divmod(k, 2)
        step = 1 if step == 0 else -1
        x[axis] += step
        jumps.append((t, axis, step))
    return replace(walk, coords=tuple(x)), jumps


def sample_slow_coordinate(x0, T, p: float, rng: np.random.Generator) -> np.ndarray:
    """Positions at microscopic times ``T`` of independent slow-bond walks on ``Z``.

    Parameters
    ----------
    x0 : array_like of int
        Starting positions.
    T : float or array_like
        Durations, broadcast against ``x0``.
    p : float
        Rate across the bond ``0 <-> 1``.
    """
    x = np.array(np.broadcast_to(np.asarray(x0, dtype=np.int64), np.shape(x0)), dtype=np.int64).ravel()
    T = np.broadcast_to(np.asarray(T, dtype=float), np.shape(x0)).ravel()
    lam = max(2.0, 1.0 + p)
    K = rng.poisson(lam * T).astype(np.int64)
    move = 2.0 / lam
    leave = (1.0 + p) / lam
    cross = p / (1.0 + p)
    active = np.flatnonzero(K > 0)
    while active.size:
        xa = x[active]
        r = np.where(xa >= 1, xa - 1, -xa)
        at_end = r == 0
        idx = active[~at_end]
        if idx.size:
            m = np.minimum(r[~at_end], K[idx])
            moves = m if lam == 2.0 else rng.binomial(m, move)
            right = rng.binomial(moves, 0.5)
            x[idx] += 2 * right - moves
            K[idx] -= m
        idx = active[at_end]
        if idx.size:
            used = rng.geometric(leave, size=idx.size)
            exhausted = used > K[idx]
            K[idx] = np.where(exhausted, 0, K[idx] - used)
            mv = idx[~exhausted]
            xe = x[mv]
            jump_across = rng.random(mv.size) < cross
            outward = np.where(xe >= 1, 1, -1)
            x[mv] = np.where(jump_across, 1 - xe, xe + outward)
        active = active[K[active] > 0]
    return x.reshape(np.shape(x0))


def _perp_displacement(n: int, k: int, T, rng) -> np.ndarray:
    """Net displacement of ``k`` independent rate-1 simple walk coordinates."""
    T = np.broadcast_to(np.asarray(T, dtype=float), (n,))[:, None]
    lamb = np.broadcast_to(T, (n, k))
    return rng.poisson(lamb) - rng.poisson(lamb)


def sample_walks(starts, T, rates: MembraneRates, rng: np.random.Generator,
                 geometry: BoxGeometry | None = None) -> np.ndarray:
    """End points of independent walks run for microscopic times ``T``.

    Parameters
    ----------
    starts : array_like, shape (n, d)
    T : float or array_like of shape (n,)
    geometry : BoxGeometry, optional
        Run on the periodic box instead of ``Z^d``; coordinates are returned
        in the box range.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=np.int64))
    n, d = starts.shape
    if geometry is not None:
        idx = _torus_walk_indices(geometry.index(starts), T, geometry, rates, rng)
        return geometry.coords(idx)
    out = np.empty_like(starts)
    out[:, 0] = sample_slow_coordinate(starts[:, 0], T, rates.membrane_rate(), rng)
    if d > 1:
        out[:, 1:] = starts[:, 1:] + _perp_displacement(n, d - 1, T, rng)
    return out


def _direction_rates(geometry: BoxGeometry, rates: MembraneRates):
    nb = geometry.neighbor_table()
    c = geometry.coords()
    rate = np.ones(nb.shape)
    rate[nb == np.arange(geometry.n_sites)[:, None]] = 0.0
    p = rates.membrane_rate()
    rate[c[:, 0] == 0, 0] = p  # +e1 from the plane x_1 = 0
    rate[c[:, 0] == 1, 1] = p  # -e1 from the plane x_1 = 1
    return nb, rate


def _torus_walk_indices(idx, T, geometry, rates, rng, nb_rate=None) -> np.ndarray:
    """Event-by-event walks on a periodic box (intended for tiny boxes)."""
    idx = np.array(idx, dtype=np.int64).ravel()
    n = idx.size
    nb, rate = nb_rate if nb_rate is not None else _direction_rates(geometry, rates)
    lam_dir = max(1.0, float(rate.max()))
    ndir = nb.shape[1]
    T = np.broadcast_to(np.asarray(T, dtype=float), (n,))
    K = rng.poisson(ndir * lam_dir * T)
    for j in range(int(K.max()) if n else 0):
        rows = np.flatnonzero(K > j)
        if rows.size == 0:
            break
        dirs = rng.integers(0, ndir, rows.size)
        accept = rng.random(rows.size) * lam_dir < rate[idx[rows], dirs]
        r = rows[accept]
        idx[r] = nb[idx[r], dirs[accept]]
    return idx


# ---------------------------------------------------------------------------
# coalescing pairs


@dataclass
class PairSample:
    """Batch of coalescing-pair outcomes.

    ``a`` and ``b`` are end points of the free and of the (initially frozen)
    walker; ``met`` flags coalescence after the freeze and ``meet_time`` is
    the microscopic time from the end of the freeze to the meeting
    (``inf`` when they did not meet).
    """

    a: np.ndarray
    b: np.ndarray
    met: np.ndarray
    meet_time: np.ndarray


def _pair_phase(A, B, T, rates, rng):
    """Run two independent walks on ``Z^d`` for time ``T`` until they meet.

    Returns the end points, meeting flags and meeting times (from the start
    of this phase).  After meeting the pair moves as one walker.
    """
    n, d = A.shape
    A = A.copy()
    B = B.copy()
    p = rates.membrane_rate()
    lam1 = max(2.0, 1.0 + p)
    lam_w = lam1 + 2.0 * (d - 1)
    Lam = 2.0 * lam_w
    T = np.broadcast_to(np.asarray(T, dtype=float), (n,)).copy()
    K = rng.poisson(Lam * T).astype(np.int64)
    used = np.zeros(n, dtype=np.int64)
    met = np.all(A == B, axis=1)
    meet_event = np.where(met, 0, -1)
    active = np.flatnonzero(~met & (K > 0))
    n_move = 4 * d  # (walker, axis, sign) categories
    null_rate = 2.0 * (lam1 - 2.0)
    while active.size:
        Aa, Ba = A[active], B[active]
        dist = np.abs(Aa - Ba).sum(axis=1)
        dA = np.where(Aa[:, 0] >= 1, Aa[:, 0] - 1, -Aa[:, 0])
        dB = np.where(Ba[:, 0] >= 1, Ba[:, 0] - 1, -Ba[:, 0])
        rem = K[active] - used[active]
        m = np.minimum(np.minimum(dist - 1, rem), np.minimum(dA, dB))
        big = m >= _SMALL
        # block moves
        rows = active[big]
        if rows.size:
            mb = m[big]
            mu = 0.5 * mb
            counts = rng.poisson((mu / Lam)[:, None] * np.ones((1, n_move)))
            nulls = rng.poisson(mu * null_rate / Lam) if null_rate > 0 else np.zeros(rows.size, dtype=np.int64)
            total = counts.sum(axis=1) + nulls
            ok = total <= mb
            r = rows[ok]
            c = counts[ok].reshape(-1, 2, d, 2)  # walker, axis, (+, -)
            A[r] += c[:, 0, :, 0] - c[:, 0, :, 1]
            B[r] += c[:, 1, :, 0] - c[:, 1, :, 1]
            used[r] += total[ok]
        # single events
        rows = active[~big]
        if rows.size:
            k = rows.size
            which = rng.random(k) < 0.5
            W = np.where(which[:, None], A[rows], B[rows])
            u = rng.random(k) * lam_w
            on1 = u < lam1
            x1 = W[:, 0]
            left_rate = np.where(x1 == 1, p, 1.0)
            right_rate = np.where(x1 == 0, p, 1.0)
            step1 = np.where(u < right_rate, 1, np.where(u < right_rate + left_rate, -1, 0))
            W[:, 0] += np.where(on1, step1, 0)
            perp = ~on1
            if d > 1 and perp.any():
                v = np.minimum(((u[perp] - lam1) / 2.0).astype(np.int64), d - 2)
                sgn = np.where(rng.random(perp.sum()) < 0.5, 1, -1)
                Wp = W[perp]
                Wp[np.arange(Wp.shape[0]), 1 + v] += sgn
                W[perp] = Wp
            A[rows] = np.where(which[:, None], W, A[rows])
            B[rows] = np.where(which[:, None], B[rows], W)
            used[rows] += 1
            hit = np.all(A[rows] == B[rows], axis=1)
            meet_event[rows[hit]] = used[rows[hit]]
        still = (meet_event[active] < 0) & (used[active] < K[active])
        active = active[still]
    met = meet_event >= 0
    meet_time = np.full(n, np.inf)
    mi = np.flatnonzero(met & (meet_event > 0))
    if mi.size:
        meet_time[mi] = T[mi] * rng.beta(meet_event[mi], K[mi] - meet_event[mi] + 1)
    meet_time[met & (meet_event == 0)] = 0.0
    mi = np.flatnonzero(met)
    if mi.size:
        after = sample_walks(A[mi], T[mi] - meet_time[mi], rates, rng)
        A[mi] = after
        B[mi] = after
    return A, B, met, meet_time


def _torus_pair_phase(ia, ib, T, geometry, rates, rng):
    nb, rate = _direction_rates(geometry, rates)
    n = ia.size
    ia = ia.copy()
    ib = ib.copy()
    lam_dir = max(1.0, float(rate.max()))
    ndir = nb.shape[1]
    T = np.broadcast_to(np.asarray(T, dtype=float), (n,)).copy()
    K = rng.poisson(2 * ndir * lam_dir * T)
    meet_event = np.where(ia == ib, 0, -1)
    for j in range(int(K.max()) if n else 0):
        rows = np.flatnonzero((K > j) & (meet_event < 0))
        if rows.size == 0:
            break
        which = rng.random(rows.size) < 0.5
        cur = np.where(which, ia[rows], ib[rows])
        dirs = rng.integers(0, ndir, rows.size)
        accept = rng.random(rows.size) * lam_dir < rate[cur, dirs]
        new = np.where(accept, nb[cur, dirs], cur)
        ia[rows] = np.where(which, new, ia[rows])
        ib[rows] = np.where(which, ib[rows], new)
        hit = ia[rows] == ib[rows]
        meet_event[rows[hit]] = j + 1
    met = meet_event >= 0
    meet_time = np.full(n, np.inf)
    mi = np.flatnonzero(met & (meet_event > 0))
    if mi.size:
        meet_time[mi] = T[mi] * rng.beta(meet_event[mi], K[mi] - meet_event[mi] + 1)
    meet_time[met & (meet_event == 0)] = 0.0
    mi = np.flatnonzero(met)
    if mi.size:
        ia[mi] = _torus_walk_indices(ia[mi], T[mi] - meet_time[mi], geometry, rates, rng, (nb, rate))
        ib[mi] = ia[mi]
    return ia, ib, met, meet_time


def sample_pairs(x, y, freeze: float, duration: float, rates: MembraneRates, n: int,
                 rng: np.random.Generator, geometry: BoxGeometry | None = None) -> PairSample:
    """Sample ``n`` coalescing pairs.

    The walker from ``x`` moves during ``[0, freeze + duration]``; the walker
    from ``y`` is frozen during ``[0, freeze]`` and then moves.  Meetings
    count only after the freeze.  Times are microscopic.
    """
    x = _site(x)
    y = _site(y, x.size)
    if freeze < 0 or duration < 0:
        raise DomainError("freeze and duration must be nonnegative")
    if geometry is not None:
        ia = np.full(n, int(geometry.index(x)))
        ib = np.full(n, int(geometry.index(y)))
        nbr = _direction_rates(geometry, rates)
        if freeze > 0:
            ia = _torus_walk_indices(ia, freeze, geometry, rates, rng, nbr)
        ia, ib, met, tau = _torus_pair_phase(ia, ib, duration, geometry, rates, rng)
        return PairSample(geometry.coords(ia), geometry.coords(ib), met, tau)
    A = np.repeat(x[None, :], n, axis=0)
    B = np.repeat(y[None, :], n, axis=0)
    if freeze > 0:
        A = sample_walks(A, freeze, rates, rng)
    A, B, met, tau = _pair_phase(A, B, duration, rates, rng)
    return PairSample(A, B, met, tau)


# ---------------------------------------------------------------------------
# duality estimators


class _OnePoint:
    def __init__(self, x, T, rates, profile, geometry):
        self.x, self.T, self.rates, self.profile, self.geometry = x, T, rates, profile, geometry

    def __call__(self, rng, size):
        start = np.repeat(self.x[None, :], size, axis=0)
        end = sample_walks(start, self.T, self.rates, rng, self.geometry)
        return self.profile(end[:, 0] / float(self.rates.N))


def one_point_function(x, t: float, rates: MembraneRates, profile: InitialProfile, replicas: int,
                       seed: int, geometry: BoxGeometry | None = None, workers: int = 1) -> Estimate:
    """Estimate ``E eta_t(x)`` as the mean of ``rho_0(X_{t N^2} / N)``.

    Parameters
    ----------
    x : sequence of int
        Site; its length fixes the dimension.
    t : float
        Macroscopic time.
    geometry : BoxGeometry, optional
        Evaluate the duality on a periodic box instead of ``Z^d``.
    """
    if replicas < 1:
        raise DomainError("replicas must be at least 1")
    if t < 0:
        raise DomainError("t must be nonnegative")
    x = _site(x)
    T = t * float(rates.N) ** 2
    return estimate_blocks(_OnePoint(x, T, rates, profile, geometry), replicas, seed, (0x0E1,), workers)


class _TwoPoint:
    def __init__(self, x, y, freeze, dur, rates, profile, geometry):
        self.args = (x, y, freeze, dur, rates, geometry)
        self.profile = profile

    def __call__(self, rng, size):
        x, y, freeze, dur, rates, geometry = self.args
        pair = sample_pairs(x, y, freeze, dur, rates, size, rng, geometry)
        N = float(rates.N)
        fa = self.profile(pair.a[:, 0] / N)
        fb = self.profile(pair.b[:, 0] / N)
        return np.where(pair.met, fa, fa * fb)


def two_point_function(x, y, t: float, s: float, rates: MembraneRates, profile: InitialProfile,
                       replicas: int, seed: int, geometry: BoxGeometry | None = None,
                       workers: int = 1) -> Estimate:
    """Estimate ``P(eta_t(x) = eta_s(y) = 1)`` for ``s <= t`` (macroscopic times).

    The walker from ``y`` is frozen for ``(t - s) N^2`` and the pair then
    runs for ``s N^2``; a met pair contributes ``rho_0(X / N)`` and a separated
    pair the product ``rho_0(X / N) rho_0(Y / N)``.  With ``s == t`` the freeze
    is empty.
    """
    if s > t:
        raise DomainError("two_point_function needs s <= t")
    if s < 0 or replicas < 1:
        raise DomainError("need s >= 0 and replicas >= 1")
    n2 = float(rates.N) ** 2
    fn = _TwoPoint(_site(x), _site(y, len(np.atleast_1d(x))), (t - s) * n2, s * n2, rates, profile, geometry)
    return estimate_blocks(fn, replicas, seed, (0x0E2,), workers)


def meeting_time_sample(x, y, rates: MembraneRates, s: float, horizon: float, seed: int,
                        replicas: int = 1, geometry: BoxGeometry | None = None) -> np.ndarray:
    """Meeting times after a freeze of ``s``, censored at ``horizon`` (macroscopic units).

    Returns an array of ``replicas`` meeting times measured from the end of
    the freeze; censored samples are ``inf``.
    """
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    if s < 0:
        raise DomainError("freeze time must be nonnegative")
    n2 = float(rates.N) ** 2
    parts = map_blocks(_Meet(_site(x), _site(y), s * n2, horizon * n2, rates, geometry), replicas, seed, (0x0E3,))
    tau = np.concatenate(parts) / n2
    return np.where(tau <= horizon, tau, np.inf)


class _Meet:
    def __init__(self, *args):
        self.args = args

    def __call__(self, rng, size):
        x, y, freeze, dur, rates, geometry = self.args
        return sample_pairs(x, y, freeze, dur, rates, size, rng, geometry).meet_time


# ---------------------------------------------------------------------------
# return and hitting probabilities of the discrete-time simple walk


def lclt_tail_bound(k: int, horizon: float) -> float:
    """Local-CLT bound on the expected number of visits to 0 after ``horizon`` steps.

    Uses ``P(S_n = 0) ~ 2 (k / (2 pi n))**(k/2)`` on even ``n`` in dimension
    ``k``; infinite for recurrent dimensions.
    """
    if k <= 2:
        return math.inf
    return (k / (2.0 * math.pi)) ** (k / 2.0) * horizon ** (1.0 - k / 2.0) / (k / 2.0 - 1.0)


@dataclass
class GammaEstimate:
    """Censored hitting-probability estimate.

    Attributes
    ----------
    estimate, stderr : float
        Monte Carlo estimate of the probability to hit 0 within ``horizon``
        steps; it is a lower bound for the uncensored probability.
    tail_bound : float
        Upper bound on the probability of a first hit after ``horizon``.
    curve_horizons, curve_values : ndarray
        The censored estimate at a ladder of smaller horizons, computed from
        the same sample (nondecreasing by construction).
    """

    dimension: int
    horizon: int
    replicas: int
    estimate: float
    stderr: float
    tail_bound: float
    censored_fraction: float
    curve_horizons: np.ndarray = field(repr=False)
    curve_values: np.ndarray = field(repr=False)

    @property
    def upper(self) -> float:
        return min(1.0, self.estimate + self.tail_bound)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "replicas": self.replicas,
                "horizon": self.horizon, "tail_bound": self.tail_bound,
                "censored_fraction": self.censored_fraction}


def _first_hits(k: int, start: np.ndarray, steps0: int, horizon: int, n: int, rng,
                roulette: tuple | None):
    """Step of the first visit to 0 (``-1`` if none within ``horizon``) and weights.

    ``roulette=(radius, keep)``: each time a walker first exceeds L1 radius
    ``radius * 4**j`` it survives with probability ``keep`` and its weight is
    divided by ``keep``; killed walkers contribute zero.  The resulting
    weighted estimator is unbiased.
    """
    pos = np.repeat(start[None, :].astype(np.int64), n, axis=0)
    steps = np.full(n, steps0, dtype=np.int64)
    weight = np.ones(n)
    level = np.zeros(n, dtype=np.int64)
    hit = np.full(n, -1, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    if not start.any():
        hit[:] = steps0
        return hit, weight, alive
    active = np.arange(n)
    while active.size:
        P = pos[active]
        r = np.abs(P).sum(axis=1)
        if roulette is not None:
            radius, keep = roulette
            crossing = r >= radius * 4 ** level[active]
            if crossing.any():
                ci = active[crossing]
                level[ci] += 1
                survive = rng.random(ci.size) < keep
                weight[ci[survive]] /= keep
                weight[ci[~survive]] = 0.0
                alive[ci[~survive]] = False
        small = r <= _SMALL + 1
        rows = active[small]
        if rows.size:
            axis = rng.integers(0, k, rows.size)
            sgn = np.where(rng.random(rows.size) < 0.5, 1, -1)
            pos[rows, axis] += sgn
            steps[rows] += 1
            at0 = ~pos[rows].any(axis=1)
            hit[rows[at0]] = steps[rows[at0]]
        rows = active[~small]
        if rows.size:
            m = r[~small] - 1
            c = rng.poisson(np.broadcast_to((0.5 * m / (2 * k))[:, None], (rows.size, 2 * k)))
            tot = c.sum(axis=1)
            ok = tot <= m
            rr = rows[ok]
            pos[rr] += c[ok, :k] - c[ok, k:]
            steps[rr] += tot[ok]
        active = active[alive[active] & (hit[active] < 0) & (steps[active] < horizon)]
    hit[(hit > horizon)] = -1
    return hit, weight, alive


def _ladder(horizon: int) -> np.ndarray:
    hs = [int(horizon)]
    while hs[-1] > 64:
        hs.append(hs[-1] // 2)
    return np.array(sorted(set(hs)), dtype=np.int64)


class _Hits:
    def __init__(self, k, start, steps0, horizon, roulette, ladder):
        self.args = (k, start, steps0, horizon)
        self.roulette = roulette
        self.ladder = ladder

    def __call__(self, rng, size):
        k, start, steps0, horizon = self.args
        hit, w, alive = _first_hits(k, start, steps0, horizon, size, rng, self.roulette)
        contrib = np.where(hit >= 0, w, 0.0)
        curve = np.array([np.sum(np.where((hit >= 0) & (hit <= h), w, 0.0)) for h in self.ladder])
        censored = float(np.sum(np.where(alive & (hit < 0), w, 0.0)))
        return Estimate.from_samples(contrib), curve, censored


def _hitting(k, start, steps0, horizon, replicas, seed, key, workers, roulette):
    if replicas < 1:
        raise DomainError("replicas must be at least 1")
    horizon = int(horizon)
    ladder = _ladder(horizon)
    parts = map_blocks(_Hits(k, start, steps0, horizon, roulette, ladder), replicas, seed, key, workers)
    est = merge_all([p[0] for p in parts])
    curve = np.sum([p[1] for p in parts], axis=0) / replicas
    curve = np.maximum.accumulate(curve)
    censored = sum(p[2] for p in parts) / replicas
    return est, ladder, curve, censored


def _default_roulette(k: int, start_norm: int):
    if k <= 2:
        return None
    return (max(16, 4 * start_norm), 0.25)


def gamma_d(d: int, horizon: float = 10 ** 6, replicas: int = 10 ** 5, seed: int = 0,
            workers: int = 1, roulette="auto") -> GammaEstimate:
    """Return probability of the simple walk on ``Z^d``, censored at ``horizon`` steps.

    The walk is started after its first step (at ``e_1`` by symmetry).  In
    transient dimensions far-away walkers are thinned by an unbiased
    splitting rule (see ``_first_hits``); pass ``roulette=None`` to disable it.
    """
    if d < 1:
        raise DomainError("dimension must be at least 1")
    start = np.zeros(d, dtype=np.int64)
    start[0] = 1
    rl = _default_roulette(d, 1) if roulette == "auto" else roulette
    est, ladder, curve, censored = _hitting(d, start, 1, horizon, replicas, seed, (0x6A, d), workers, rl)
    return GammaEstimate(d, int(horizon), replicas, est.mean, est.stderr,
                         lclt_tail_bound(d, horizon), censored, ladder, curve)


def gamma_quadrature(d: int, cutoff: float = 1e4) -> float:
    """Deterministic value of the return probability from the lattice Green function.

    ``gamma_d = 1 - 1 / G(0)`` with ``G(0) = int_0^inf (e^(-s/d) I_0(s/d))^d ds``
    (expected time at the origin of the rate-one continuous-time walk).  The
    integral is split at ``cutoff`` and the tail is taken from the local
    limit ``(d / (2 pi s))^(d/2)``.  Recurrent dimensions return 1.
    """
    if d < 1:
        raise DomainError("dimension must be at least 1")
    if d <= 2:
        return 1.0
    head, _ = integrate.quad(lambda s: special.ive(0, s / d) ** d, 0.0, cutoff, limit=2000)
    tail = (d / (2 * math.pi)) ** (d / 2) * cutoff ** (1 - d / 2) / (d / 2 - 1)
    return 1.0 - 1.0 / (head + tail)


def hitting_prob_Gamma(z, horizon: float = 10 ** 6, replicas: int = 10 ** 5, seed: int = 0,
                       workers: int = 1, roulette="auto") -> GammaEstimate:
    """Probability that the simple walk on ``Z^k`` from ``z`` visits 0 within ``horizon`` steps.

    ``k = len(z)``; in the pair problem ``k = d - 1`` and ``z`` is the
    perpendicular separation.
    """
    z = _site(z)
    k = z.size
    rl = _default_roulette(k, int(np.abs(z).sum())) if roulette == "auto" else roulette
    est, ladder, curve, censored = _hitting(k, z, 0, horizon, replicas, seed, (0x6B, k), workers, rl)
    return GammaEstimate(k, int(horizon), replicas, est.mean, est.stderr,
                         lclt_tail_bound(k, horizon) if z.any() else 0.0, censored, ladder, curve)


def extrapolate_gamma(est: GammaEstimate, min_horizon: int = 1000) -> tuple[float, float]:
    """Infinite-horizon extrapolation of a censored return-probability curve.

    Fits ``v(h) = g - c * h**e`` over horizons ``h >= min_horizon`` with
    ``e = 1 - d/2`` (``e = -1/2`` for ``d = 1``); in ``d = 2`` the deficit
    decays like ``1 / log h`` and that form is fitted instead.

    Returns
    -------
    (g, c) : tuple of float
    """
    h = est.curve_horizons.astype(float)
    v = est.curve_values
    keep = h >= min_horizon
    if keep.sum() < 2:
        keep = np.ones_like(h, dtype=bool)
    h, v = h[keep], v[keep]
    if est.dimension == 2:
        basis = 1.0 / np.log(h)
    elif est.dimension == 1:
        basis = h ** -0.5
    else:
        basis = h ** (1.0 - est.dimension / 2.0)
    X = np.column_stack([np.ones_like(h), -basis])
    (g, c), *_ = np.linalg.lstsq(X, v, rcond=None)
    return float(g), float(c)

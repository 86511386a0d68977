"""Voter model with a slow membrane on a finite periodic box.

A site ``x`` copies the opinion of a neighbour ``y`` at rate ``xi(x, y)``,
which equals ``alpha * N**-beta`` for the bonds joining the planes
``x_1 = 0`` and ``x_1 = 1`` and ``1`` for every other bond.  The dynamics is
accelerated by ``N**2`` so that the public API speaks macroscopic time.

Events are drawn with the two-class composition method: a Poisson number of
events is placed uniformly on ``[0, t]``, each event picks the bulk or the
membrane class with probability proportional to the class rate and then a
uniform directed bond within the class.  The event stream does not depend on
the configuration (copying equal opinions is a silent event), so a whole
batch of replicas can be drawn first and replayed afterwards with vectorised
array updates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .rng import stream

__all__ = [
    "MembraneRates", "BoxGeometry", "LatticeConfig", "InitialProfile",
    "bond_rate", "flip", "sample_initial", "sample_initial_batch",
    "EventBatch", "draw_events", "replay", "Trajectory", "simulate",
    "empirical_pi", "block_average", "MAX_TOTAL_RATE",
]

#: Largest total event rate (per unit macroscopic time) accepted by the engine.
MAX_TOTAL_RATE = 1e12


@dataclass(frozen=True)
class MembraneRates:
    """Bond-rate parameters ``(alpha, beta, N)``."""

    alpha: float
    beta: float
    N: int

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise DomainError(f"alpha must be positive and finite, got {self.alpha}")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise DomainError(f"beta must be nonnegative and finite, got {self.beta}")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    def membrane_rate(self) -> float:
        """Copy rate across the membrane, ``alpha * N**-beta``."""
        return self.alpha * float(self.N) ** (-self.beta)


@dataclass(frozen=True)
class BoxGeometry:
    """Periodic box ``{lo, ..., lo + width - 1}**d`` with ``lo = 1 - width // 2``.

    The membrane separates the planes ``x_1 = 0`` and ``x_1 = 1``; the box is
    centred on it for even widths.  Sites are indexed by the mixed-radix
    (row-major) encoding of ``x - lo``, coordinate 1 being the slowest axis.
    The wrap bond closing coordinate 1 is an ordinary rate-1 bond.
    """

    d: int
    width: int
    wrap: str = "torus"

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("dimension must be at least 1")
        if self.width < 1:
            raise DomainError("width must be at least 1")
        if self.width == 2:
            raise ConfigurationError("width 2 makes the membrane bond and the wrap bond coincide")
        if self.wrap != "torus":
            raise ConfigurationError(f"unsupported boundary mode {self.wrap!r}")

    @classmethod
    def from_scale(cls, d: int, L: float, N: int) -> "BoxGeometry":
        """Box of macroscopic half-width ``L`` at scale ``N`` (``2 L N`` sites per axis)."""
        width = int(round(2 * L * N))
        return cls(d, max(width, 1))

    @property
    def lo(self) -> int:
        return 1 - self.width // 2

    @property
    def hi(self) -> int:
        return self.lo + self.width - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.width,) * self.d

    @property
    def n_sites(self) -> int:
        return self.width ** self.d

    def index(self, x) -> np.ndarray:
        """Site index of coordinates ``x`` (shape ``(..., d)``), wrapping periodically."""
        x = np.asarray(x, dtype=np.int64)
        if x.shape[-1] != self.d:
            raise DomainError(f"expected {self.d} coordinates, got shape {x.shape}")
        off = np.mod(x - self.lo, self.width)
        idx = np.zeros(off.shape[:-1], dtype=np.int64)
        for i in range(self.d):
            idx = idx * self.width + off[..., i]
        return idx

    def coords(self, idx=None) -> np.ndarray:
        """Coordinates of site indices ``idx`` (all sites when omitted)."""
        if idx is None:
            idx = np.arange(self.n_sites)
        idx = np.asarray(idx, dtype=np.int64)
        out = np.empty(idx.shape + (self.d,), dtype=np.int64)
        rem = idx.copy()
        for i in range(self.d - 1, -1, -1):
            out[..., i] = rem % self.width + self.lo
            rem //= self.width
        return out

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x >= self.lo) & (x <= self.hi)))

    def distance(self, x, y) -> int:
        """L1 distance in the periodic metric."""
        diff = np.mod(np.asarray(x, dtype=np.int64) - np.asarray(y, dtype=np.int64), self.width)
        return int(np.sum(np.minimum(diff, self.width - diff)))

    def neighbor_table(self) -> np.ndarray:
        """Array ``(n_sites, 2 d)`` of neighbour indices in the order +e1, -e1, +e2, ...

        Entries equal to the site itself mark missing bonds (axes of width 1).
        """
        c = self.coords()
        out = np.empty((self.n_sites, 2 * self.d), dtype=np.int64)
        for i in range(self.d):
            for k, step in enumerate((1, -1)):
                y = c.copy()
                y[:, i] += step
                out[:, 2 * i + k] = self.index(y)
        return out

    def directed_bonds(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Directed bonds ``(src, dst, is_membrane)``; ``src`` copies ``dst``."""
        nb = self.neighbor_table()
        src = np.repeat(np.arange(self.n_sites), 2 * self.d)
        dst = nb.ravel()
        keep = src != dst
        src, dst = src[keep], dst[keep]
        x1 = self.coords(src)[:, 0]
        y1 = self.coords(dst)[:, 0]
        if self.width > 2:
            mem = ((x1 == 0) & (y1 == 1)) | ((x1 == 1) & (y1 == 0))
        else:
            mem = np.zeros(src.shape, dtype=bool)
        return src, dst, mem

    def macro(self, N: int) -> np.ndarray:
        """Macroscopic positions ``x / N`` of all sites, shape ``(n_sites, d)``."""
        return self.coords() / float(N)


def bond_rate(rates: MembraneRates, x, y, geometry: BoxGeometry | None = None) -> float:
    """Copy rate of the bond ``{x, y}``.

    Parameters
    ----------
    rates : MembraneRates
    x, y : sequence of int
        Neighbouring sites of ``Z^d`` (or of ``geometry`` when given).
    geometry : BoxGeometry, optional
        Use the periodic metric of this box to decide adjacency.

    Raises
    ------
    DomainError
        If ``x`` and ``y`` are not nearest neighbours.
    """
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("sites must be coordinate vectors of equal length")
    if geometry is None:
        dist = int(np.abs(x - y).sum())
        xw, yw = x, y
    else:
        dist = geometry.distance(x, y)
        xw = geometry.coords(geometry.index(x))
        yw = geometry.coords(geometry.index(y))
    if dist != 1:
        raise DomainError(f"sites {x.tolist()} and {y.tolist()} are not nearest neighbours")
    if {int(xw[0]), int(yw[0])} == {0, 1} and np.array_equal(xw[1:], yw[1:]):
        return rates.membrane_rate()
    return 1.0


@dataclass(frozen=True)
class InitialProfile:
    """Initial density ``rho_0`` as a function of the first macroscopic coordinate.

    Use the constructors :meth:`constant`, :meth:`step`, :meth:`ramp` and
    :meth:`tabulated`.  The step profile is discontinuous and therefore outside
    the Lipschitz class required by the hydrodynamic theory; such runs are
    flagged through :attr:`outside_assumption`.
    """

    kind: str
    params: tuple = ()
    grid: tuple = field(default=(), repr=False)
    values: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in ("constant", "step", "ramp", "tabulated"):
            raise DomainError(f"unknown profile kind {self.kind!r}")
        if self.kind == "constant":
            (c,) = self.params
            if not 0.0 <= c <= 1.0:
                raise DomainError("constant profile must lie in [0, 1]")
        elif self.kind == "step":
            a, b = self.params
            if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
                raise DomainError("step levels must lie in [0, 1]")
        elif self.kind == "ramp":
            c0, slope = self.params
            if not (math.isfinite(c0) and math.isfinite(slope)):
                raise DomainError("ramp parameters must be finite")
        else:
            g = np.asarray(self.grid, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if g.ndim != 1 or g.shape != v.shape or g.size < 2 or np.any(np.diff(g) <= 0):
                raise DomainError("tabulated profile needs an increasing grid and matching values")
            if np.any(v < 0) or np.any(v > 1):
                raise DomainError("tabulated values must lie in [0, 1]")

    @classmethod
    def constant(cls, c: float) -> "InitialProfile":
        return cls("constant", (float(c),))

    @classmethod
    def step(cls, a: float, b: float) -> "InitialProfile":
        """Level ``a`` for ``u_1 > 0`` and ``b`` for ``u_1 <= 0``."""
        return cls("step", (float(a), float(b)))

    @classmethod
    def ramp(cls, c0: float, slope: float) -> "InitialProfile":
        """``clip(c0 + slope * u_1, 0, 1)``."""
        return cls("ramp", (float(c0), float(slope)))

    @classmethod
    def tabulated(cls, grid, values) -> "InitialProfile":
        """Piecewise-linear interpolation, constant beyond the end points."""
        return cls("tabulated", (), tuple(map(float, grid)), tuple(map(float, values)))

    @property
    def outside_assumption(self) -> bool:
        """True for profiles that are not globally Lipschitz."""
        return self.kind == "step"

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, u1) -> np.ndarray:
        u1 = np.asarray(u1, dtype=float)
        if self.kind == "constant":
            return np.full(u1.shape, self.params[0])
        if self.kind == "step":
            a, b = self.params
            return np.where(u1 > 0, a, b)
        if self.kind == "ramp":
            c0, slope = self.params
            return np.clip(c0 + slope * u1, 0.0, 1.0)
        return np.interp(u1, np.asarray(self.grid), np.asarray(self.values))

    def lipschitz_constant(self) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "step":
            return math.inf
        if self.kind == "ramp":
            return abs(self.params[1])
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.grid))))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "params": list(self.params)}
        if self.kind == "tabulated":
            out["grid"] = list(self.grid)
            out["values"] = list(self.values)
        return out

    @classmethod
    def from_dict(cls, spec: dict) -> "InitialProfile":
        kind = spec.get("kind")
        if kind == "tabulated":
            return cls.tabulated(spec["grid"], spec["values"])
        params = spec.get("params", ())
        try:
            return getattr(cls, kind)(*params)
        except (TypeError, AttributeError) as exc:
            raise DomainError(f"bad profile specification {spec!r}: {exc}") from None


@dataclass(frozen=True)
class LatticeConfig:
    """Occupancies of a box at a macroscopic time.

    ``occupancy`` is a ``uint8`` array indexed by site index.
    """

    occupancy: np.ndarray
    geometry: BoxGeometry
    time: float = 0.0

    def __post_init__(self):
        occ = np.asarray(self.occupancy)
        if occ.shape != (self.geometry.n_sites,):
            raise DomainError(f"occupancy must have shape ({self.geometry.n_sites},)")
        if occ.size and (occ.min() < 0 or occ.max() > 1):
            raise DomainError("occupancy values must be 0 or 1")
        occ = occ.astype(np.uint8)
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        if self.time < 0:
            raise DomainError("time must be nonnegative")

    def __getitem__(self, x) -> int:
        return int(self.occupancy[self.geometry.index(x)])

    def with_occupancy(self, occ, time=None) -> "LatticeConfig":
        return LatticeConfig(occ, self.geometry, self.time if time is None else time)


def flip(config: LatticeConfig, x, y) -> LatticeConfig:
    """Configuration after site ``x`` copies the opinion of its neighbour ``y``."""
    g = config.geometry
    if g.distance(x, y) != 1:
        raise DomainError(f"sites {list(x)} and {list(y)} are not nearest neighbours")
    occ = config.occupancy.copy()
    occ[g.index(x)] = occ[g.index(y)]
    return config.with_occupancy(occ)


def sample_initial_batch(profile: InitialProfile, geometry: BoxGeometry, N: int,
                         rng: np.random.Generator, replicas: int) -> np.ndarray:
    """Independent Bernoulli occupancies, shape ``(replicas, n_sites)``.

    Site ``x`` is occupied when a uniform variable falls below
    ``rho_0(x_1 / N)``, so raising the profile pointwise can only add
    particles under common random numbers.
    """
    p = profile(geometry.coords()[:, 0] / float(N))
    u = rng.random((replicas, geometry.n_sites))
    return (u < p).astype(np.uint8)


def sample_initial(profile: InitialProfile, geometry: BoxGeometry, N: int, seed: int) -> LatticeConfig:
    """One product-Bernoulli configuration with densities ``rho_0(x / N)``."""
    occ = sample_initial_batch(profile, geometry, N, stream(seed, 0x1A7), 1)[0]
    return LatticeConfig(occ, geometry, 0.0)


@dataclass
class EventBatch:
    """Pre-drawn copy events for ``R`` replicas on ``[0, t_macro]``.

    Arrays have shape ``(R, K)``; row ``r`` holds ``counts[r]`` events sorted
    by time followed by padding (time ``inf``).
    """

    geometry: BoxGeometry
    rates: MembraneRates
    t_macro: float
    counts: np.ndarray
    times: np.ndarray
    src: np.ndarray
    dst: np.ndarray

    @property
    def replicas(self) -> int:
        return self.counts.shape[0]


def class_rates(geometry: BoxGeometry, rates: MembraneRates) -> tuple[float, float]:
    """Total accelerated rates ``(bulk, membrane)`` of the two bond classes."""
    _, _, mem = geometry.directed_bonds()
    n_mem = int(mem.sum())
    n_bulk = int(mem.size - n_mem)
    n2 = float(rates.N) ** 2
    return n2 * n_bulk, n2 * rates.membrane_rate() * n_mem


def draw_events(geometry: BoxGeometry, rates: MembraneRates, t_macro: float,
                replicas: int, rng: np.random.Generator) -> EventBatch:
    """Draw the event streams of ``replicas`` independent runs."""
    if t_macro < 0:
        raise DomainError("t_macro must be nonnegative")
    src_all, dst_all, mem = geometry.directed_bonds()
    bulk_idx = np.flatnonzero(~mem)
    mem_idx = np.flatnonzero(mem)
    lam_bulk, lam_mem = class_rates(geometry, rates)
    lam = lam_bulk + lam_mem
    if not math.isfinite(lam) or lam * max(t_macro, 1.0) > MAX_TOTAL_RATE:
        raise ConfigurationError("total event rate overflows the engine",
                                 {"N": f"{rates.N}", "beta": f"{rates.beta}"})
    if lam == 0.0 or t_macro == 0.0:
        counts = np.zeros(replicas, dtype=np.int64)
    else:
        counts = rng.poisson(lam * t_macro, size=replicas).astype(np.int64)
    K = int(counts.max()) if replicas else 0
    times = rng.random((replicas, K)) * t_macro
    pad = np.arange(K)[None, :] >= counts[:, None]
    times[pad] = np.inf
    times.sort(axis=1)
    is_mem = rng.random((replicas, K)) * lam < lam_mem
    pick_b = rng.integers(0, max(bulk_idx.size, 1), size=(replicas, K))
    pick_m = rng.integers(0, max(mem_idx.size, 1), size=(replicas, K))
    bond = np.where(is_mem, mem_idx[pick_m] if mem_idx.size else 0,
                    bulk_idx[pick_b] if bulk_idx.size else 0)
    src = src_all[bond] if src_all.size else np.zeros((replicas, K), dtype=np.int64)
    dst = dst_all[bond] if dst_all.size else np.zeros((replicas, K), dtype=np.int64)
    return EventBatch(geometry, rates, float(t_macro), counts, times, src, dst)


def replay(initial: np.ndarray, events: EventBatch, observe: Sequence[float] = (),
           functionals: Sequence[Callable[[np.ndarray], np.ndarray]] = (),
           keep_snapshots: bool = True) -> dict:
    """Replay pre-drawn events from the configurations ``initial``.

    Parameters
    ----------
    initial : ndarray, shape (R, n_sites)
    events : EventBatch
    observe : sequence of float
        Increasing observation times in ``[0, events.t_macro]``.
    functionals : sequence of callables
        Each maps configurations ``(R, n_sites)`` to values ``(R,)``.  Their
        values at the observation times and their exact time integrals from 0
        are returned; the integrand is piecewise constant between events.
    keep_snapshots : bool
        Store full configurations at observation times.

    Returns
    -------
    dict
        ``final`` (R, n_sites); ``snapshots`` (R, n_obs, n_sites) when kept;
        ``values`` and ``integrals`` of shape (R, n_obs, n_func).
    """
    cfg = np.array(initial, dtype=np.uint8, copy=True)
    R = cfg.shape[0]
    obs = np.asarray(observe, dtype=float)
    if obs.size and (np.any(np.diff(obs) < 0) or obs[0] < 0 or obs[-1] > events.t_macro + 1e-12):
        raise DomainError("observation times must be increasing within [0, t_macro]")
    nf = len(functionals)
    values = np.zeros((R, obs.size, nf))
    integrals = np.zeros((R, obs.size, nf))
    snaps = np.zeros((R, obs.size, cfg.shape[1]), dtype=np.uint8) if keep_snapshots and obs.size else None
    last = np.zeros(R)

    def close_segment(tj):
        # the configuration is constant on [last, tj)
        if not obs.size:
            return
        if nf:
            fv = np.stack([np.asarray(f(cfg), dtype=float) for f in functionals], axis=-1)
            seg = np.clip(np.minimum(tj[:, None], obs[None, :]) - last[:, None], 0.0, None)
            integrals[...] += seg[:, :, None] * fv[:, None, :]
        hit = (last[:, None] <= obs[None, :]) & (obs[None, :] < tj[:, None])
        if hit.any():
            r, k = np.nonzero(hit)
            if snaps is not None:
                snaps[r, k] = cfg[r]
            if nf:
                values[r, k] = fv[r]

    K = events.times.shape[1]
    rows_all = np.arange(R)
    for j in range(K):
        active = j < events.counts
        if not active.any():
            break
        tj = np.where(active, events.times[:, j], np.inf)
        close_segment(tj)
        r = rows_all[active]
        cfg[r, events.src[r, j]] = cfg[r, events.dst[r, j]]
        # finished rows were closed up to infinity in this pass
        last = np.where(active, tj, np.inf)
    close_segment(np.full(R, np.inf))
    out = {"final": cfg, "values": values, "integrals": integrals}
    if snaps is not None:
        out["snapshots"] = snaps
    return out


@dataclass
class Trajectory:
    """Event log of a single realisation.

    Attributes
    ----------
    initial : LatticeConfig
    times : ndarray
        Event times in macroscopic units.
    src, dst : ndarray
        Site indices; at ``times[k]`` site ``src[k]`` copies ``dst[k]``.
    t_end : float
    """

    initial: LatticeConfig
    times: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    t_end: float

    def __len__(self) -> int:
        return int(self.times.size)

    def config_at(self, t: float) -> LatticeConfig:
        if t < 0 or t > self.t_end + 1e-12:
            raise DomainError(f"time {t} outside [0, {self.t_end}]")
        occ = self.initial.occupancy.copy()
        n = int(np.searchsorted(self.times, t, side="right"))
        for k in range(n):
            occ[self.src[k]] = occ[self.dst[k]]
        return self.initial.with_occupancy(occ, time=t)

    def snapshots(self, times: Sequence[float]) -> list[LatticeConfig]:
        return [self.config_at(t) for t in times]

    def final(self) -> LatticeConfig:
        return self.config_at(self.t_end)

    def events(self):
        """Iterate over ``(t, x_coords, y_coords)`` with ``x`` copying ``y``."""
        g = self.initial.geometry
        xs = g.coords(self.src)
        ys = g.coords(self.dst)
        for k in range(len(self)):
            yield float(self.times[k]), tuple(xs[k].tolist()), tuple(ys[k].tolist())


def simulate(config: LatticeConfig, rates: MembraneRates, t_macro: float, seed: int) -> Trajectory:
    """Exact realisation of the accelerated voter dynamics up to ``t_macro``.

    The returned :class:`Trajectory` stores every event, including silent
    copies between equal opinions.
    """
    ev = draw_events(config.geometry, rates, t_macro, 1, stream(seed, 0x5E7))
    n = int(ev.counts[0])
    return Trajectory(config, ev.times[0, :n].copy(), ev.src[0, :n].copy(),
                      ev.dst[0, :n].copy(), float(t_macro))


def _evaluate(H, geometry: BoxGeometry, N: int) -> np.ndarray:
    return np.asarray(H(geometry.macro(N)), dtype=float).reshape(geometry.n_sites)


def empirical_pi(config: LatticeConfig, H, N: int) -> float:
    """``N**-d * sum_x eta(x) H(x / N)`` for a test function ``H(u)``, ``u`` of shape (..., d)."""
    g = config.geometry
    h = _evaluate(H, g, N)
    return float(np.dot(config.occupancy.astype(float), h)) / float(N) ** g.d


def block_average(config: LatticeConfig, x, k: int, side: str = "both") -> float:
    """Mean occupancy over the sup-norm block of radius ``k`` around ``x``.

    ``side='plus'`` keeps ``y_1 >= x_1`` and ``side='minus'`` keeps
    ``y_1 <= x_1``.  Blocks larger than the box are clipped to its distinct
    sites with a warning.
    """
    if k < 0:
        raise DomainError("block radius must be nonnegative")
    if side not in ("both", "plus", "minus"):
        raise DomainError(f"unknown side {side!r}")
    g = config.geometry
    x = np.asarray(x, dtype=np.int64)
    r = np.arange(-k, k + 1)
    if 2 * k + 1 > g.width:
        import warnings

        warnings.warn("block exceeds the box; clipping to distinct sites", stacklevel=2)
    axes = [r] * g.d
    if side == "plus":
        axes[0] = np.arange(0, k + 1)
    elif side == "minus":
        axes[0] = np.arange(-k, 1)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, g.d)
    idx = np.unique(g.index(x[None, :] + mesh))
    return float(config.occupancy[idx].mean())

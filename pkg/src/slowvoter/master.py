"""Exact reference computations for tiny boxes.

The voter chain on a box of ``S`` sites has ``2**S`` states; for ``S <= 14``
its forward equation is integrated exactly with a sparse matrix exponential.
The mean occupancy obeys a closed linear system (the generator of a single
slow-bond walk on the box), which gives exact means for boxes of any size.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .errors import ConfigurationError
from .lattice import BoxGeometry, InitialProfile, MembraneRates

__all__ = ["voter_generator", "product_distribution", "evolve", "site_moments",
           "walk_generator", "mean_field", "MasterSolution", "solve_master", "two_time_moment"]

MAX_MASTER_SITES = 14


def _bond_lists(geometry: BoxGeometry, rates: MembraneRates):
    src, dst, mem = geometry.directed_bonds()
    rate = np.where(mem, rates.membrane_rate(), 1.0) * float(rates.N) ** 2
    return src, dst, rate


def voter_generator(geometry: BoxGeometry, rates: MembraneRates) -> sp.csr_matrix:
    """Transition-rate matrix ``Q`` (rows sum to zero) of the accelerated voter chain.

    State ``s`` encodes occupancies as bits: site ``i`` is occupied when bit
    ``i`` of ``s`` is set.
    """
    S = geometry.n_sites
    if S > MAX_MASTER_SITES:
        raise ConfigurationError(f"master equation limited to {MAX_MASTER_SITES} sites")
    src, dst, rate = _bond_lists(geometry, rates)
    states = np.arange(2 ** S, dtype=np.int64)
    rows, cols, vals = [], [], []
    for x, y, r in zip(src, dst, rate):
        bx = (states >> x) & 1
        by = (states >> y) & 1
        change = bx != by
        s = states[change]
        new = np.where(by[change] == 1, s | (1 << x), s & ~(1 << x))
        rows.append(s)
        cols.append(new)
        vals.append(np.full(s.size, r))
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    Q = sp.coo_matrix((vals, (rows, cols)), shape=(2 ** S, 2 ** S)).tocsr()
    Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
    return Q.tocsr()


def product_distribution(p) -> np.ndarray:
    """Law of independent Bernoulli occupancies with probabilities ``p``."""
    p = np.asarray(p, dtype=float)
    S = p.size
    states = np.arange(2 ** S, dtype=np.int64)
    prob = np.ones(2 ** S)
    for i in range(S):
        bit = (states >> i) & 1
        prob *= np.where(bit == 1, p[i], 1.0 - p[i])
    return prob


def evolve(dist: np.ndarray, Q: sp.csr_matrix, t: float) -> np.ndarray:
    """Distribution at time ``t`` started from ``dist``."""
    if t == 0:
        return np.array(dist, dtype=float)
    return expm_multiply(Q.T * t, np.asarray(dist, dtype=float))


def site_moments(dist: np.ndarray, S: int) -> tuple[np.ndarray, np.ndarray]:
    """First moments ``E eta(x)`` and the matrix ``E eta(x) eta(y)``."""
    states = np.arange(dist.size, dtype=np.int64)
    bits = ((states[:, None] >> np.arange(S)[None, :]) & 1).astype(float)
    mean = dist @ bits
    second = (bits * dist[:, None]).T @ bits
    return mean, second


def walk_generator(geometry: BoxGeometry, rates: MembraneRates) -> np.ndarray:
    """Dense generator ``A`` of one dual walk; ``d/dt E eta = A E eta``."""
    S = geometry.n_sites
    src, dst, rate = _bond_lists(geometry, rates)
    A = np.zeros((S, S))
    np.add.at(A, (src, dst), rate)
    A[np.arange(S), np.arange(S)] -= A.sum(axis=1)
    return A


def mean_field(geometry: BoxGeometry, rates: MembraneRates, profile: InitialProfile, t: float) -> np.ndarray:
    """Exact ``E eta_t(x)`` for every site from product initial law ``rho_0(x_1 / N)``."""
    rho0 = profile(geometry.coords()[:, 0] / float(rates.N))
    if t == 0:
        return rho0
    return scipy.linalg.expm(walk_generator(geometry, rates) * t) @ rho0


class MasterSolution:
    """Moments of the exact voter law on a tiny box at several times."""

    def __init__(self, geometry, rates, profile, times):
        self.geometry = geometry
        self.rates = rates
        self.times = tuple(float(t) for t in times)
        S = geometry.n_sites
        Q = voter_generator(geometry, rates)
        dist = product_distribution(profile(geometry.coords()[:, 0] / float(rates.N)))
        self.means, self.seconds = [], []
        last = 0.0
        for t in self.times:
            dist = evolve(dist, Q, t - last)
            last = t
            m, s2 = site_moments(dist, S)
            self.means.append(m)
            self.seconds.append(s2)

    def one_point(self, t: float, x) -> float:
        k = self.times.index(float(t))
        return float(self.means[k][self.geometry.index(x)])

    def two_point(self, t: float, x, y) -> float:
        k = self.times.index(float(t))
        g = self.geometry
        return float(self.seconds[k][g.index(x), g.index(y)])


def solve_master(geometry: BoxGeometry, rates: MembraneRates, profile: InitialProfile, times) -> MasterSolution:
    """Integrate the full forward equation and return site moments at ``times``."""
    return MasterSolution(geometry, rates, profile, sorted(times))


def two_time_moment(geometry: BoxGeometry, rates: MembraneRates, profile: InitialProfile,
                    x, y, t: float, s: float) -> float:
    """Exact ``P(eta_t(x) = 1, eta_s(y) = 1)`` for ``s <= t``.

    The law at time ``s`` is restricted to ``eta(y) = 1``, evolved for
    ``t - s`` and the mass on ``eta(x) = 1`` is returned.
    """
    if s > t:
        raise ConfigurationError("two_time_moment needs s <= t")
    Q = voter_generator(geometry, rates)
    dist = evolve(product_distribution(profile(geometry.coords()[:, 0] / float(rates.N))), Q, s)
    states = np.arange(dist.size, dtype=np.int64)
    iy, ix = int(geometry.index(y)), int(geometry.index(x))
    dist = np.where((states >> iy) & 1 == 1, dist, 0.0)
    dist = evolve(dist, Q, t - s)
    return float(dist[(states >> ix) & 1 == 1].sum())

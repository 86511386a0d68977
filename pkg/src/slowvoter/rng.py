"""Reproducible random streams and order-independent Monte Carlo accumulators.

Every random quantity in the package is drawn from a counter-based Philox
generator keyed by ``(seed, *keys)``.  Replicas are grouped in blocks of fixed
size and each block owns a stream keyed by its index, so the result of a run
does not depend on how many workers evaluate the blocks.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

#: Number of replicas simulated with one random stream.
BLOCK_SIZE = 4096


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return a Philox generator keyed by ``seed`` and integer ``keys``."""
    material = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(material)))


def blocks(replicas: int, block_size: int = BLOCK_SIZE) -> Iterator[tuple[int, int]]:
    """Yield ``(block_index, block_length)`` pairs covering ``replicas``."""
    if replicas < 0:
        raise ValueError("replicas must be nonnegative")
    for b, start in enumerate(range(0, replicas, block_size)):
        yield b, min(block_size, replicas - start)


@dataclass(frozen=True)
class Estimate:
    """Running sample summary ``(count, mean, sum of squared deviations)``.

    Merging uses the pairwise update of Chan, Golub and LeVeque, which is
    associative up to rounding; the package always merges in block order,
    which makes results bit-reproducible.  Samples that are all equal give a
    standard error of exactly zero.
    """

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def from_samples(cls, x) -> "Estimate":
        x = np.asarray(x, dtype=float).ravel()
        if x.size == 0:
            return cls()
        mu = float(x.mean())
        if np.all(x == x[0]):
            return cls(int(x.size), float(x[0]), 0.0)
        return cls(int(x.size), mu, float(np.sum((x - mu) ** 2)))

    def merge(self, other: "Estimate") -> "Estimate":
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        if delta == 0.0:
            mean = self.mean
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return Estimate(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def stderr(self) -> float:
        return float(np.sqrt(self.variance / self.n)) if self.n > 0 else float("inf")

    def __iter__(self):
        # allows ``value, err = estimate``
        yield self.mean
        yield self.stderr

    def to_dict(self) -> dict:
        return {"estimate": self.mean, "stderr": self.stderr, "replicas": self.n}


def merge_all(parts: Sequence[Estimate]) -> Estimate:
    out = Estimate()
    for p in parts:
        out = out.merge(p)
    return out


def _call(args):
    fn, seed, keys, b, size = args
    return fn(stream(seed, *keys, b), size)


def map_blocks(fn: Callable[[np.random.Generator, int], object], replicas: int, seed: int,
               keys: Sequence[int] = (), workers: int = 1,
               block_size: int = BLOCK_SIZE) -> list:
    """Evaluate ``fn(rng, size)`` on every replica block, in block order.

    ``fn`` must be picklable when ``workers > 1``.  The returned list is
    ordered by block index whatever the number of workers.
    """
    jobs = [(fn, seed, tuple(keys), b, size) for b, size in blocks(replicas, block_size)]
    if workers <= 1 or len(jobs) <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))


def estimate_blocks(sample: Callable[[np.random.Generator, int], np.ndarray], replicas: int,
                    seed: int, keys: Sequence[int] = (), workers: int = 1) -> Estimate:
    """Monte Carlo mean of per-replica samples produced block by block."""
    parts = map_blocks(_Summarize(sample), replicas, seed, keys, workers)
    return merge_all(parts)


class _Summarize:
    """Picklable wrapper turning a sampler into a per-block :class:`Estimate`."""

    def __init__(self, sample):
        self.sample = sample

    def __call__(self, rng, size):
        return Estimate.from_samples(self.sample(rng, size))

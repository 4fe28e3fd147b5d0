"""Monte Carlo estimates and the deterministic path-parallel executor."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

CHUNK = 1000


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n: int

    @property
    def ci95(self):
        return (self.mean - 1.96 * self.stderr, self.mean + 1.96 * self.stderr)

    @classmethod
    def from_samples(cls, samples) -> "MCEstimate":
        """Mean and standard error with exactly rounded (order-free) sums."""
        x = np.asarray(samples, dtype=float).ravel()
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        mean = math.fsum(x) / n
        if n == 1:
            return cls(mean, math.nan, 1)
        var = math.fsum((x - mean) ** 2) / (n - 1)
        return cls(mean, math.sqrt(var / n), n)

    def z(self, target=0.0):
        """Studentized distance from ``target``; 0 when both gap and stderr vanish."""
        gap = self.mean - target
        if self.stderr == 0:
            return 0.0 if gap == 0 else math.copysign(math.inf, gap)
        return gap / self.stderr

    def as_dict(self):
        lo, hi = self.ci95
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n, "ci95": [lo, hi]}


def worker_count(workers=None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("SEPMP_THREADS")
    return max(1, int(env)) if env else 1


def chunk_ranges(n_paths: int, chunk: int = CHUNK):
    return [range(lo, min(lo + chunk, n_paths)) for lo in range(0, n_paths, chunk)]


def map_paths(fn, n_paths: int, workers=None, chunk: int = CHUNK):
    """Apply ``fn(range_of_path_ids)`` to fixed chunks and return results in chunk order.

    Chunk boundaries depend only on ``n_paths`` so the output is identical for
    any worker count.
    """
    ranges = chunk_ranges(n_paths, chunk)
    w = worker_count(workers)
    if w == 1 or len(ranges) == 1:
        return [fn(r) for r in ranges]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, ranges))

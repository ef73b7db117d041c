"""Batch-means error estimation and small statistical helpers."""

from __future__ import annotations

import numpy as np

N_BATCHES = 20


def batch_mean_error(batch_means: np.ndarray):
    """Standard error of the grand mean from (approximately independent) batch means."""
    b = np.asarray(batch_means)
    if b.shape[0] < 2:
        return float("nan")
    err = np.std(b, ddof=1, axis=0) / np.sqrt(b.shape[0])
    return float(err) if np.ndim(err) == 0 else err


def batch_means(values: np.ndarray, n_batches: int = N_BATCHES) -> np.ndarray:
    """Means of ``n_batches`` contiguous blocks along the first axis (remainder dropped)."""
    v = np.asarray(values)
    size = v.shape[0] // n_batches
    if size == 0:
        raise ValueError(f"need at least {n_batches} values, got {v.shape[0]}")
    return v[:size * n_batches].reshape((n_batches, size) + v.shape[1:]).mean(axis=1)


class BatchAccumulator:
    """Running per-batch sums for a stream of ``n_items`` equally weighted items."""

    def __init__(self, n_items: int, n_batches: int = N_BATCHES, dtype=float):
        if n_items < n_batches:
            raise ValueError(f"need at least {n_batches} items, got {n_items}")
        self.n_items = n_items
        self.n_batches = n_batches
        self.sums = np.zeros(n_batches, dtype=dtype)
        self.counts = np.zeros(n_batches)
        self._seen = 0

    def batch_of(self, k: int) -> int:
        return min(k * self.n_batches // self.n_items, self.n_batches - 1)

    def add(self, total, count: float = 1.0):
        b = self.batch_of(self._seen)
        self.sums[b] += total
        self.counts[b] += count
        self._seen += 1

    def means(self) -> np.ndarray:
        return self.sums / self.counts


def combined_sigma(*sigmas: float) -> float:
    return float(np.sqrt(np.sum(np.square(sigmas))))


def within_sigma(value: float, target: float, sigma: float, k: float = 3.0,
                 floor: float = 1e-10) -> bool:
    """``|value - target| <= k sigma``, with an absolute floor for exact-zero cases."""
    return abs(value - target) <= k * sigma + floor

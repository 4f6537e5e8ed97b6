"""Deterministic train/test splitting and k-fold assignment."""

from __future__ import annotations

import numpy as np

__all__ = ["split_indices", "kfold"]


def split_indices(
    n: int,
    fractions: tuple[float, ...],
    seed: int = 0,
    shuffle: bool = True,
) -> list[np.ndarray]:
    """Partition row indices 0..n-1 into len(fractions) disjoint groups.

    Fractions must sum to 1. Shuffled splits are seed-deterministic;
    chronological splits (shuffle=False) keep natural order, which is what
    sliding-window data needs to avoid leakage across the boundary.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    order = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
    bounds = [int(round(f * n)) for f in np.cumsum(fractions)]
    bounds[-1] = n
    out = []
    start = 0
    for b in bounds:
        part = order[start:b]
        if part.size == 0:
            raise ValueError("a split came out empty; use more rows or fewer parts")
        out.append(np.sort(part) if not shuffle else part)
        start = b
    return out


def kfold(
    n: int,
    k: int = 5,
    seed: int = 0,
    shuffle: bool = True,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """k (train, test) index pairs; test folds are disjoint, exhaustive and
    differ in size by at most one row. shuffle=False gives contiguous blocks."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise ValueError(f"cannot make {k} folds from {n} rows")
    order = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
    folds = np.array_split(order, k)
    out = []
    for i in range(k):
        test = folds[i]
        train = np.concatenate([folds[j] for j in range(k) if j != i])
        out.append((train, test))
    return out

"""Turning comparison or utility oracles into rankings.

Oracles are batched: ``compare_batch(pairs)`` receives an ``(k, 2)`` integer
array of item indices and returns ``k`` reals (positive means the first item
is preferred, zero is a tie); ``utility_batch(indices)`` returns one real per
index. ``comparator_calls`` counts oracle invocations, not pairs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

CompareBatch = Callable[[np.ndarray], np.ndarray]
UtilityBatch = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Ranking:
    order: tuple[int, ...]
    comparator_calls: int = 0

    def __post_init__(self):
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError("ranking order must be a permutation")
        if self.comparator_calls < 0:
            raise ValueError("comparator_calls must be non-negative")

    def positions(self) -> np.ndarray:
        """Rank position of every item (0 = most preferred)."""
        pos = np.empty(len(self.order), dtype=np.int64)
        pos[list(self.order)] = np.arange(len(self.order))
        return pos


def _size(items) -> int:
    return items if isinstance(items, (int, np.integer)) else len(items)


def _call(oracle, arg, expected: int) -> np.ndarray:
    out = np.asarray(oracle(arg), dtype=np.float64).ravel()
    if out.shape[0] != expected:
        raise ValueError(f"oracle returned {out.shape[0]} values for {expected} queries")
    return out


def quicksort_rank(items, compare_batch: CompareBatch, seed: int = 0) -> Ranking:
    """Quicksort evaluating every pivot query of one recursion depth in a single oracle call.

    Each active partition draws a uniform random pivot. Items comparing
    greater than the pivot go before it, smaller ones after, and exact ties
    join the pivot in a band (kept in index order) that is not sorted
    further.
    """
    n = _size(items)
    rng = np.random.default_rng(seed)
    # each segment: (indices in stable input order, finished?)
    segments: list[tuple[list[int], bool]] = [(list(range(n)), n <= 1)]
    calls = 0
    while any(not done for _, done in segments):
        queries, plan = [], []
        for seg, done in segments:
            if done:
                plan.append(None)
                continue
            pivot = seg[int(rng.integers(len(seg)))]
            others = [i for i in seg if i != pivot]
            plan.append((pivot, others, len(queries)))
            queries.extend((i, pivot) for i in others)
        out = _call(compare_batch, np.asarray(queries, dtype=np.int64).reshape(-1, 2), len(queries))
        calls += 1

        new_segments = []
        for (seg, done), step in zip(segments, plan):
            if step is None:
                new_segments.append((seg, done))
                continue
            pivot, others, start = step
            res = out[start:start + len(others)]
            above = [i for i, r in zip(others, res) if r > 0]
            below = [i for i, r in zip(others, res) if r < 0]
            tied = sorted([pivot] + [i for i, r in zip(others, res) if r == 0])
            for part in (above, tied, below):
                if part:
                    new_segments.append((part, part is tied or len(part) == 1))
        segments = new_segments
    order = tuple(i for seg, _ in segments for i in seg)
    return Ranking(order, calls)


def utility_rank(items, utility_batch: UtilityBatch) -> Ranking:
    """Sort by descending utility from one oracle call; ties keep index order."""
    n = _size(items)
    u = _call(utility_batch, np.arange(n), n)
    order = np.lexsort((np.arange(n), -u))
    return Ranking(tuple(order.tolist()), 1)


def borda_counts(n: int, compare_batch: CompareBatch) -> np.ndarray:
    i, j = np.nonzero(~np.eye(n, dtype=bool))
    pairs = np.stack([i, j], axis=1)
    out = _call(compare_batch, pairs, pairs.shape[0])
    return np.bincount(i[out > 0], minlength=n)


def borda_rank(items, compare_batch: CompareBatch) -> Ranking:
    """Order by number of pairwise wins over all ``n(n-1)`` ordered pairs."""
    n = _size(items)
    counts = borda_counts(n, compare_batch) if n > 1 else np.zeros(n, dtype=np.int64)
    order = np.lexsort((np.arange(n), -counts))
    return Ranking(tuple(order.tolist()), 1 if n > 1 else 0)


def write_ranking_csv(path: str | Path, ranking: Ranking, graph_ids: Sequence[str],
                      utilities: Sequence[float] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank_position", "graph_id", "utility"])
        for pos, idx in enumerate(ranking.order):
            u = "" if utilities is None else repr(float(utilities[idx]))
            w.writerow([pos, graph_ids[idx], u])


def read_ranking_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["rank_position"] = int(r["rank_position"])
        r["utility"] = float(r["utility"]) if r["utility"] else None
    return rows

"""Kendall's tau-b with ties, inversion counts and utility curves."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .ranking import Ranking

log = logging.getLogger(__name__)

# rows per block when counting pairs, bounds memory at ~CHUNK * n
_CHUNK = 1024


class UndefinedCorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class PairCounts:
    concordant: int
    discordant: int
    tied_first: int
    tied_second: int


def _aligned(r1, r2) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(r1, Mapping) or isinstance(r2, Mapping):
        if not (isinstance(r1, Mapping) and isinstance(r2, Mapping)):
            raise TypeError("both rank assignments must be mappings or both sequences")
        if set(r1) != set(r2):
            raise ValueError("rank assignments cover different graphs")
        keys = list(r1)
        a = np.array([r1[k] for k in keys], dtype=np.float64)
        b = np.array([r2[k] for k in keys], dtype=np.float64)
    else:
        a = np.asarray(r1, dtype=np.float64).ravel()
        b = np.asarray(r2, dtype=np.float64).ravel()
        if a.shape != b.shape:
            raise ValueError(f"rank assignments differ in length: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def pair_counts(r1, r2) -> PairCounts:
    """Concordant, discordant and singly-tied pair counts over all unordered pairs.

    A pair tied in both assignments is counted in neither tie total.
    """
    a, b = _aligned(r1, r2)
    n = a.shape[0]
    c = d = t1 = t2 = 0
    for start in range(0, n, _CHUNK):
        rows = slice(start, min(start + _CHUNK, n))
        s1 = np.sign(a[rows, None] - a[None, :])
        s2 = np.sign(b[rows, None] - b[None, :])
        # keep only j > i
        upper = np.arange(rows.start, rows.stop)[:, None] < np.arange(n)[None, :]
        prod = s1 * s2
        c += int(np.count_nonzero((prod > 0) & upper))
        d += int(np.count_nonzero((prod < 0) & upper))
        t1 += int(np.count_nonzero((s1 == 0) & (s2 != 0) & upper))
        t2 += int(np.count_nonzero((s2 == 0) & (s1 != 0) & upper))
    return PairCounts(c, d, t1, t2)


def kendall_tau_b(r1, r2) -> float:
    """tau_B = (C - D) / sqrt((C + D + T1)(C + D + T2)).

    ``r1``/``r2`` are rank assignments (lower = more preferred), either
    mappings from graph id to rank or aligned sequences.
    """
    a, _ = _aligned(r1, r2)
    if a.shape[0] < 2:
        raise UndefinedCorrelationError("tau_B needs at least two graphs")
    k = pair_counts(r1, r2)
    denom = (k.concordant + k.discordant + k.tied_first) * (k.concordant + k.discordant + k.tied_second)
    if denom == 0:
        raise UndefinedCorrelationError("tau_B undefined: one assignment ties every graph")
    return (k.concordant - k.discordant) / np.sqrt(denom)


def count_inversions(r1, r2) -> int:
    return pair_counts(r1, r2).discordant


def ranks_from_ranking(ranking: Ranking, graph_ids: Sequence[str]) -> dict[str, float]:
    pos = ranking.positions()
    return {gid: float(pos[i]) for i, gid in enumerate(graph_ids)}


def ranks_from_targets(graph_ids: Sequence[str], targets: Sequence[float]) -> dict[str, float]:
    """Higher utility means more preferred, hence a lower rank value."""
    return {gid: -float(t) for gid, t in zip(graph_ids, targets)}


def ranking_tau_b(ranking: Ranking, targets: Sequence[float]) -> float:
    ids = [str(i) for i in range(len(targets))]
    return kendall_tau_b(ranks_from_ranking(ranking, ids), ranks_from_targets(ids, targets))


def _minmax(x: np.ndarray, what: str) -> np.ndarray:
    lo, hi = x.min(), x.max()
    if hi == lo:
        log.warning("constant %s; normalized curve set to 0.5", what)
        return np.full_like(x, 0.5)
    return (x - lo) / (hi - lo)


def utility_curve(scores: Sequence[float], targets: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Min-max normalized scores and targets, ordered by ascending ground truth.

    Returns ``(normalized_scores, normalized_targets)``; ties in the ground
    truth keep input order.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if s.shape != t.shape or s.size == 0:
        raise ValueError("scores and targets must be non-empty and equally long")
    order = np.argsort(t, kind="stable")
    return _minmax(s[order], "scores"), _minmax(t[order], "targets")


def write_curve_csv(path: str | Path, norm_scores, norm_targets) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "normalized_score", "normalized_target"])
        for i, (s, t) in enumerate(zip(norm_scores, norm_targets)):
            w.writerow([i, repr(float(s)), repr(float(t))])


METRIC_FIELDS = ["dataset", "model", "repeat", "split", "tau_b"]


def write_metrics_csv(path: str | Path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in METRIC_FIELDS})


def read_metrics_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["repeat"] = int(r["repeat"])
        r["tau_b"] = float(r["tau_b"])
    return rows

"""Graphs, JSONL dataset I/O, synthetic generators and redundancy-free batching."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DatasetParseError(ValueError):
    pass


class GraphValidationError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    id: str
    num_nodes: int
    edges: tuple[tuple[int, int], ...] = ()
    node_features: np.ndarray | None = field(default=None, compare=False)
    target: float | None = None
    edge_array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        object.__setattr__(self, "edges", edges)
        arr = np.array(edges, dtype=np.int64).reshape(-1, 2)
        arr.setflags(write=False)
        object.__setattr__(self, "edge_array", arr)
        if self.node_features is not None:
            x = np.array(self.node_features, dtype=np.float64)
            if x.ndim == 1:
                x = x.reshape(-1, 1)
            x.setflags(write=False)
            object.__setattr__(self, "node_features", x)
        self.validate()

    def validate(self) -> None:
        if self.num_nodes < 0:
            raise GraphValidationError(f"graph {self.id!r}: negative num_nodes")
        seen = set()
        for u, v in self.edges:
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise GraphValidationError(
                    f"graph {self.id!r}: edge ({u}, {v}) out of range for {self.num_nodes} nodes")
            if u == v:
                raise GraphValidationError(f"graph {self.id!r}: self-loop on node {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphValidationError(f"graph {self.id!r}: duplicate edge {key}")
            seen.add(key)
        if self.node_features is not None and self.node_features.shape[0] != self.num_nodes:
            raise GraphValidationError(
                f"graph {self.id!r}: {self.node_features.shape[0]} feature rows "
                f"for {self.num_nodes} nodes")

    @property
    def feature_dim(self) -> int | None:
        return None if self.node_features is None else self.node_features.shape[1]

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes), dtype=np.int64)
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1
        return a

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def relabel(self, perm: Sequence[int], new_id: str | None = None) -> "Graph":
        """Copy with node ``i`` renamed to ``perm[i]``."""
        perm = list(perm)
        edges = tuple((perm[u], perm[v]) for u, v in self.edges)
        feats = None
        if self.node_features is not None:
            feats = np.empty_like(self.node_features)
            feats[perm] = self.node_features
        return Graph(new_id or self.id, self.num_nodes, edges, feats, self.target)

    def with_target(self, target: float | None) -> "Graph":
        return Graph(self.id, self.num_nodes, self.edges, self.node_features, target)

    def same_as(self, other: "Graph") -> bool:
        if (self.id, self.num_nodes, self.edges, self.target) != (
                other.id, other.num_nodes, other.edges, other.target):
            return False
        if (self.node_features is None) != (other.node_features is None):
            return False
        return self.node_features is None or np.array_equal(self.node_features, other.node_features)


@dataclass(frozen=True)
class GraphBatch:
    """Many graphs concatenated into one disjoint union.

    ``edge_index`` is a ``(2, E)`` array holding both directions of every
    undirected edge, ``segment_ids`` maps each node to its graph.
    """

    node_features: np.ndarray
    edge_index: np.ndarray
    segment_ids: np.ndarray
    graph_count: int
    graph_ids: tuple[str, ...]

    @property
    def num_nodes(self) -> int:
        return int(self.segment_ids.shape[0])

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edge_index[0], minlength=self.num_nodes)


@dataclass(frozen=True)
class PreferencePair:
    a: int
    b: int
    label: float = 1.0

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("preference pair needs two distinct graphs")
        if not 0.0 <= self.label <= 1.0:
            raise ValueError(f"label {self.label} outside [0, 1]")


def build_batch(graphs: Sequence[Graph]) -> GraphBatch:
    dims = {g.feature_dim for g in graphs}
    if len(dims) > 1:
        raise DimensionMismatchError(f"mixed node feature dimensions: {sorted(dims, key=str)}")
    dim = next(iter(dims)) if dims else None
    if not graphs:
        return GraphBatch(np.zeros((0, 1)), np.zeros((2, 0), dtype=np.int64),
                          np.zeros(0, dtype=np.int64), 0, ())

    counts = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    segment_ids = np.repeat(np.arange(len(graphs)), counts)
    if dim is None:
        node_features = np.ones((int(counts.sum()), 1))
    else:
        node_features = np.concatenate([g.node_features for g in graphs], axis=0)
    edge_counts = np.array([g.edge_array.shape[0] for g in graphs], dtype=np.int64)
    if edge_counts.sum():
        e = np.concatenate([g.edge_array for g in graphs], axis=0)
        e = e + np.repeat(offsets, edge_counts)[:, None]
        edge_index = np.stack([np.concatenate([e[:, 0], e[:, 1]]),
                               np.concatenate([e[:, 1], e[:, 0]])])
    else:
        edge_index = np.zeros((2, 0), dtype=np.int64)
    return GraphBatch(
        node_features=node_features,
        edge_index=edge_index,
        segment_ids=segment_ids,
        graph_count=len(graphs),
        graph_ids=tuple(g.id for g in graphs),
    )


def batch_pairs(graphs: Sequence[Graph], pairs: Iterable[tuple[int, int]]
                ) -> tuple[GraphBatch, np.ndarray, list[int]]:
    """Encode every graph referenced by ``pairs`` exactly once.

    Returns the batch, the pairs re-indexed into the batch as an ``(k, 2)``
    array, and the original indices of the batched graphs.
    """
    if not isinstance(pairs, np.ndarray):
        pairs = list(pairs)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    used, local = np.unique(pairs, return_inverse=True)
    batch = build_batch([graphs[i] for i in used])
    return batch, local.reshape(-1, 2), used.tolist()


# -- dataset I/O ------------------------------------------------------------

def graph_to_record(g: Graph) -> dict:
    rec = {"id": g.id, "num_nodes": g.num_nodes, "edges": [list(e) for e in g.edges]}
    if g.node_features is not None:
        rec["features"] = g.node_features.tolist()
    if g.target is not None:
        rec["target"] = g.target
    return rec


def graph_from_record(rec: dict) -> Graph:
    return Graph(
        id=str(rec["id"]),
        num_nodes=int(rec["num_nodes"]),
        edges=tuple(tuple(e) for e in rec.get("edges", [])),
        node_features=rec.get("features"),
        target=None if rec.get("target") is None else float(rec["target"]),
    )


def load_dataset(path: str | Path) -> list[Graph]:
    graphs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict) or "id" not in rec or "num_nodes" not in rec:
                    raise ValueError("record needs 'id' and 'num_nodes'")
                for e in rec.get("edges", []):
                    if len(e) != 2:
                        raise ValueError(f"edge {e} is not a pair")
                graphs.append(graph_from_record(rec))
            except GraphValidationError:
                raise
            except (ValueError, TypeError, KeyError) as exc:
                raise DatasetParseError(f"{path}:{lineno}: {exc}") from exc
    return graphs


def save_dataset(graphs: Iterable[Graph], path: str | Path) -> None:
    with open(path, "w") as fh:
        for g in graphs:
            fh.write(json.dumps(graph_to_record(g)) + "\n")


# -- synthetic data ---------------------------------------------------------

def count_triangles(g: Graph) -> int:
    adj = [set() for _ in range(g.num_nodes)]
    for u, v in g.edges:
        adj[u].add(v)
        adj[v].add(u)
    # count each triangle once via its ordered triple u < v < w
    total = 0
    for u, v in g.edges:
        lo, hi = min(u, v), max(u, v)
        total += sum(1 for w in adj[lo] & adj[hi] if w > hi)
    return total


def erdos_renyi_edges(n: int, p: float, rng: np.random.Generator) -> tuple[tuple[int, int], ...]:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.shape[0]) < p
    return tuple(zip(iu[keep].tolist(), ju[keep].tolist()))


def _random_graphs(n_graphs, min_nodes, max_nodes, seed, prefix):
    rng = np.random.default_rng(seed)
    for i in range(n_graphs):
        n = int(rng.integers(min_nodes, max_nodes + 1))
        p = float(rng.uniform(0.1, 0.5))
        yield Graph(f"{prefix}{i}", n, erdos_renyi_edges(n, p, rng))


def generate_triangles_dataset(n_graphs: int, min_nodes: int = 3, max_nodes: int = 85,
                               seed: int = 0) -> list[Graph]:
    if not 3 <= min_nodes <= max_nodes:
        raise ValueError("need 3 <= min_nodes <= max_nodes")
    return [g.with_target(float(count_triangles(g)))
            for g in _random_graphs(n_graphs, min_nodes, max_nodes, seed, "tri")]


def generate_edgecount_dataset(n_graphs: int, min_nodes: int = 5, max_nodes: int = 30,
                               seed: int = 0) -> list[Graph]:
    if not 1 <= min_nodes <= max_nodes:
        raise ValueError("need 1 <= min_nodes <= max_nodes")
    return [g.with_target(float(len(g.edges)))
            for g in _random_graphs(n_graphs, min_nodes, max_nodes, seed, "ec")]


def random_regular_graph(n: int, d: int, rng: np.random.Generator, max_tries: int = 1000
                         ) -> tuple[tuple[int, int], ...]:
    """Uniform-ish d-regular simple graph by the pairing model with rejection."""
    if (n * d) % 2 or d >= n:
        raise ValueError(f"no simple {d}-regular graph on {n} nodes")
    for _ in range(max_tries):
        stubs = rng.permutation(np.repeat(np.arange(n), d))
        pairs = stubs.reshape(-1, 2)
        if np.any(pairs[:, 0] == pairs[:, 1]):
            continue
        keys = {(min(u, v), max(u, v)) for u, v in pairs.tolist()}
        if len(keys) == len(pairs):
            return tuple(sorted(keys))
    raise RuntimeError(f"failed to sample a {d}-regular graph on {n} nodes")


def generate_regular_triangles_dataset(n_graphs: int, seed: int = 0,
                                       sizes: Sequence[int] = (8, 10, 12),
                                       degrees: Sequence[int] = (3, 4)) -> list[Graph]:
    """Regular graphs sharing (n, d) but differing in triangle count.

    Graphs with the same node count and degree are indistinguishable by
    1-WL colour refinement, so only their triangle counts tell them apart.
    """
    rng = np.random.default_rng(seed)
    combos = [(n, d) for n, d in itertools.product(sizes, degrees) if (n * d) % 2 == 0 and d < n]
    graphs = []
    i = 0
    while len(graphs) < n_graphs:
        n, d = combos[int(rng.integers(len(combos)))]
        g = Graph(f"reg{i}", n, random_regular_graph(n, d, rng))
        graphs.append(g.with_target(float(count_triangles(g))))
        i += 1
    return graphs


def split_dataset(graphs: Sequence[Graph], fractions: Sequence[float], seed: int
                  ) -> tuple[list[Graph], list[Graph], list[Graph]]:
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError(f"split fractions must be three non-negative numbers summing to 1, got {fractions}")
    n = len(graphs)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_valid = int(round(fractions[1] * n))
    n_valid = min(n_valid, n - n_train)
    idx = [order[:n_train], order[n_train:n_train + n_valid], order[n_train + n_valid:]]
    return tuple([graphs[i] for i in sorted(part)] for part in idx)

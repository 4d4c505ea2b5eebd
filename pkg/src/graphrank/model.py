"""An embedder plus a head, sharing one parameter store."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import heads
from .embed import EmbedderConfig, embed, init_embedder
from .graphs import Graph, build_batch
from .heads import HeadConfig
from .ranking import Ranking, borda_rank, quicksort_rank, utility_rank

# graphs per inference forward pass
INFERENCE_CHUNK = 512


@dataclass
class RankModel:
    embedder: EmbedderConfig
    head: HeadConfig
    in_dim: int
    params: ad.ParamStore = field(default=None, repr=False)

    @classmethod
    def create(cls, embedder: EmbedderConfig, head: HeadConfig, in_dim: int, seed: int) -> "RankModel":
        params = ad.ParamStore(seed)
        init_embedder(params, embedder, in_dim)
        heads.init_head(params, head, embedder.width)
        return cls(embedder, head, in_dim, params)

    # -- inference ---------------------------------------------------------

    def embed_graphs(self, graphs: Sequence[Graph]) -> np.ndarray:
        p = ad.constants(self.params)
        if not graphs:
            return np.zeros((0, self.embedder.width))
        chunks = [embed(build_batch(graphs[i:i + INFERENCE_CHUNK]), self.embedder, p).value
                  for i in range(0, len(graphs), INFERENCE_CHUNK)]
        return np.concatenate(chunks, axis=0)

    def utilities(self, graphs: Sequence[Graph]) -> np.ndarray:
        return heads.utility(self.head, self.embed_graphs(graphs), self.params)

    def comparator(self, graphs: Sequence[Graph]):
        """Batched comparison oracle over ``graphs``; each graph is embedded once."""
        Z = self.embed_graphs(graphs)
        p = ad.constants(self.params)

        def compare_batch(pairs) -> np.ndarray:
            pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
            if pairs.shape[0] == 0:
                return np.zeros(0)
            return heads.compare(self.head, Z, pairs, p)

        return compare_batch

    def rank(self, graphs: Sequence[Graph], method: str = "auto", seed: int = 0) -> Ranking:
        if method == "auto":
            method = "utility" if self.head.has_utility else "quicksort"
        if method == "utility":
            if not self.head.has_utility:
                raise IncompatibleMethodError(f"utility ranking needs a utility head, not {self.head.kind}")
            u = self.utilities(graphs)
            return utility_rank(len(graphs), lambda idx: u[idx])
        if method == "quicksort":
            return quicksort_rank(len(graphs), self.comparator(graphs), seed)
        if method == "borda":
            return borda_rank(len(graphs), self.comparator(graphs))
        raise ValueError(f"unknown ranking method {method!r}")

    # -- persistence -------------------------------------------------------

    def meta(self) -> dict:
        return {"embedder": self.embedder.to_dict(), "head": self.head.to_dict(), "in_dim": self.in_dim}

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        meta = self.meta()
        meta.update(extra or {})
        ad.save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path: str | Path) -> "RankModel":
        params, meta = ad.load_checkpoint(path)
        return cls(EmbedderConfig(**meta["embedder"]), HeadConfig(**meta["head"]),
                   int(meta["in_dim"]), params)


class IncompatibleMethodError(ValueError):
    pass


def feature_dim(graphs: Sequence[Graph]) -> int:
    dims = {g.feature_dim for g in graphs}
    if len(dims) > 1:
        raise ValueError(f"mixed node feature dimensions: {dims}")
    d = next(iter(dims), None)
    return 1 if d is None else d

"""Message-passing graph embedders (GCN, GIN) with pooling and a readout MLP."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .graphs import GraphBatch

CONV_TYPES = ("GCN", "GIN")
POOLINGS = ("mean", "sum", "softmax")


@dataclass(frozen=True)
class EmbedderConfig:
    conv_type: str = "GIN"
    conv_layers: int = 3
    width: int = 32
    pooling: str = "sum"
    mlp_hidden_layers: int = 2
    activation: str = "sigmoid"
    gin_eps: float = 0.0

    def __post_init__(self):
        if self.conv_type not in CONV_TYPES:
            raise ValueError(f"conv_type must be one of {CONV_TYPES}, got {self.conv_type!r}")
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.conv_layers < 1 or self.width < 1:
            raise ValueError("conv_layers and width must be positive")
        if self.mlp_hidden_layers != 2:
            raise ValueError("the readout MLP has exactly two hidden layers")
        ad.activation(self.activation)

    def to_dict(self) -> dict:
        return asdict(self)


def gcn_matrix(batch: GraphBatch) -> sp.csr_matrix:
    """Self-loop augmented symmetric normalization.

    Diagonal entries are 1/(deg_i+1), off-diagonal 1/sqrt((deg_i+1)(deg_j+1)).
    """
    n = batch.num_nodes
    deg1 = batch.degrees().astype(np.float64) + 1.0
    src, dst = batch.edge_index
    inv_sqrt = 1.0 / np.sqrt(deg1)
    rows = np.concatenate([dst, np.arange(n)])
    cols = np.concatenate([src, np.arange(n)])
    vals = np.concatenate([inv_sqrt[dst] * inv_sqrt[src], 1.0 / deg1])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def gin_matrix(batch: GraphBatch, eps: float = 0.0) -> sp.csr_matrix:
    n = batch.num_nodes
    src, dst = batch.edge_index
    rows = np.concatenate([dst, np.arange(n)])
    cols = np.concatenate([src, np.arange(n)])
    vals = np.concatenate([np.ones(src.shape[0]), np.full(n, 1.0 + eps)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def gcn_conv(batch: GraphBatch, x: Tensor, W: Tensor, act: str = "sigmoid",
             matrix: sp.spmatrix | None = None) -> Tensor:
    if x.shape[0] != batch.num_nodes:
        raise ad.ShapeError(f"gcn_conv: {x.shape[0]} feature rows for {batch.num_nodes} nodes")
    m = gcn_matrix(batch) if matrix is None else matrix
    return ad.linear(ad.sparse_matmul(m, x), W, None, act)


def gin_conv(batch: GraphBatch, x: Tensor, mlp: Callable[[Tensor], Tensor],
             eps: float = 0.0, matrix: sp.spmatrix | None = None) -> Tensor:
    if x.shape[0] != batch.num_nodes:
        raise ad.ShapeError(f"gin_conv: {x.shape[0]} feature rows for {batch.num_nodes} nodes")
    m = gin_matrix(batch, eps) if matrix is None else matrix
    return mlp(ad.sparse_matmul(m, x))


def dense(x: Tensor, W: Tensor, b: Tensor | None, act: str) -> Tensor:
    return ad.linear(x, W, b, act)


def init_embedder(params: ad.ParamStore, config: EmbedderConfig, in_dim: int) -> None:
    w = config.width
    for k in range(config.conv_layers):
        d_in = in_dim if k == 0 else w
        if config.conv_type == "GCN":
            params.add(f"conv{k}.W", (d_in, w))
        else:
            params.add(f"conv{k}.W0", (d_in, w))
            params.add(f"conv{k}.b0", (1, w), init="zeros")
            params.add(f"conv{k}.W1", (w, w))
            params.add(f"conv{k}.b1", (1, w), init="zeros")
    if config.pooling == "softmax":
        params.add("pool.a", (w, 1))
        params.add("pool.c", (1, 1), init="zeros")
    for k in range(config.mlp_hidden_layers):
        params.add(f"mlp{k}.W", (w, w))
        params.add(f"mlp{k}.b", (1, w), init="zeros")


def embed(batch: GraphBatch, config: EmbedderConfig, p: dict[str, Tensor]) -> Tensor:
    """Graph embeddings, one row per graph in ``batch``.

    ``p`` maps parameter names to tensors (differentiable leaves during
    training, constants at inference).
    """
    act = config.activation
    x = Tensor(batch.node_features)
    if config.conv_type == "GCN":
        m = gcn_matrix(batch)
        for k in range(config.conv_layers):
            x = gcn_conv(batch, x, p[f"conv{k}.W"], act, matrix=m)
    else:
        m = gin_matrix(batch, config.gin_eps)
        for k in range(config.conv_layers):
            def mlp(h, k=k):
                h = dense(h, p[f"conv{k}.W0"], p[f"conv{k}.b0"], act)
                return dense(h, p[f"conv{k}.W1"], p[f"conv{k}.b1"], act)
            x = gin_conv(batch, x, mlp, matrix=m)

    pooled = ad.segment_reduce(x, batch.segment_ids, config.pooling, batch.graph_count,
                               score_weights=p.get("pool.a"), score_bias=p.get("pool.c"))
    z = pooled
    for k in range(config.mlp_hidden_layers):
        z = dense(z, p[f"mlp{k}.W"], p[f"mlp{k}.b"], act)
    return z

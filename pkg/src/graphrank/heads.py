"""Comparator and scoring heads on top of graph embeddings.

All heads work on an embedding matrix ``Z`` and an ``(k, 2)`` array of row
index pairs, so one call evaluates a whole batch of comparisons. The
``*_logits`` functions return the pre-activation comparison (used with
binary cross-entropy during training); ``compare`` applies the odd output
activation.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

HEAD_KINDS = ("DirectRanker", "CmpNN", "PointwiseRegression")

_ODD_ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class HeadConfig:
    kind: str = "DirectRanker"
    hidden_dim: int = 32
    output_activation: str = "tanh"
    internal_activation: str = "sigmoid"

    def __post_init__(self):
        if self.kind not in HEAD_KINDS:
            raise ValueError(f"head kind must be one of {HEAD_KINDS}, got {self.kind!r}")
        # sigma must be odd and sign-preserving
        if self.output_activation not in _ODD_ACTIVATIONS:
            raise ValueError(f"output_activation must be odd and sign-preserving: {_ODD_ACTIVATIONS}")
        ad.activation(self.internal_activation)

    @property
    def pairwise(self) -> bool:
        return self.kind != "PointwiseRegression"

    @property
    def has_utility(self) -> bool:
        return self.kind != "CmpNN"

    def to_dict(self) -> dict:
        return asdict(self)


def init_head(params: ad.ParamStore, config: HeadConfig, emb_dim: int) -> None:
    if config.kind == "DirectRanker":
        params.add("head.w", (emb_dim, 1))
    elif config.kind == "PointwiseRegression":
        params.add("head.w", (emb_dim, 1))
        params.add("head.b", (1, 1), init="zeros")
    else:
        d = config.hidden_dim
        params.add("head.W1", (emb_dim, d))
        params.add("head.W2", (emb_dim, d))
        params.add("head.b", (1, d), init="zeros")
        params.add("head.w1", (d, 1))
        params.add("head.w2", (d, 1))
        params.add("head.b2", (1, 1), init="zeros")


def _check_pairs(Z: Tensor, pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= Z.shape[0]):
        raise ad.ShapeError(f"pair index out of range for {Z.shape[0]} embeddings")
    return pairs


def direct_ranker_utility(Z: Tensor, p: dict[str, Tensor]) -> Tensor:
    """``w . z`` for every row: the implicit utility learned by DirectRanker."""
    w = p["head.w"]
    if Z.shape[1] != w.shape[0]:
        raise ad.ShapeError(f"direct_ranker: embedding dim {Z.shape[1]} != weight dim {w.shape[0]}")
    return ad.matmul(Z, w)


def direct_ranker_logits(Z: Tensor, pairs, p: dict[str, Tensor]) -> Tensor:
    # difference of utilities, so compare(i, j) == sigma(u_i - u_j) holds bit-exactly
    pairs = _check_pairs(Z, pairs)
    u = direct_ranker_utility(Z, p)
    return ad.sub(ad.gather_rows(u, pairs[:, 0]), ad.gather_rows(u, pairs[:, 1]))


def cmpnn_logits(Z: Tensor, pairs, p: dict[str, Tensor], tau: str = "sigmoid") -> Tensor:
    """``z_ge - z_le`` of the comparator network with mirrored weight paths."""
    pairs = _check_pairs(Z, pairs)
    if Z.shape[1] != p["head.W1"].shape[0]:
        raise ad.ShapeError(f"cmpnn: embedding dim {Z.shape[1]} != weight rows {p['head.W1'].shape[0]}")
    act = ad.activation(tau)
    # project every embedding once, then gather per pair
    P1 = ad.matmul(Z, p["head.W1"])
    P2 = ad.matmul(Z, p["head.W2"])
    a, b = pairs[:, 0], pairs[:, 1]
    z1 = act(ad.add(ad.add(ad.gather_rows(P1, a), ad.gather_rows(P2, b)), p["head.b"]))
    z2 = act(ad.add(ad.add(ad.gather_rows(P2, a), ad.gather_rows(P1, b)), p["head.b"]))
    w1, w2, b2 = p["head.w1"], p["head.w2"], p["head.b2"]
    z_ge = act(ad.add(ad.add(ad.matmul(z1, w1), ad.matmul(z2, w2)), b2))
    z_le = act(ad.add(ad.add(ad.matmul(z1, w2), ad.matmul(z2, w1)), b2))
    return ad.sub(z_ge, z_le)


def pointwise_score(Z: Tensor, p: dict[str, Tensor]) -> Tensor:
    return ad.add(ad.matmul(Z, p["head.w"]), p["head.b"])


def pair_logits(config: HeadConfig, Z: Tensor, pairs, p: dict[str, Tensor]) -> Tensor:
    if config.kind == "DirectRanker":
        return direct_ranker_logits(Z, pairs, p)
    if config.kind == "CmpNN":
        return cmpnn_logits(Z, pairs, p, config.internal_activation)
    # a point-wise model still induces a comparator through its scores
    pairs = _check_pairs(Z, pairs)
    s = pointwise_score(Z, p)
    return ad.sub(ad.gather_rows(s, pairs[:, 0]), ad.gather_rows(s, pairs[:, 1]))


def compare(config: HeadConfig, Z, pairs, params) -> np.ndarray:
    """Comparator outputs in (-1, 1) for each pair; positive means first is preferred."""
    p = params if isinstance(params, dict) else ad.constants(params)
    logits = pair_logits(config, ad.as_tensor(Z), pairs, p)
    return ad.activation(config.output_activation)(logits).value.ravel()


def utility(config: HeadConfig, Z, params) -> np.ndarray:
    if not config.has_utility:
        raise ValueError(f"{config.kind} head has no per-graph utility")
    p = params if isinstance(params, dict) else ad.constants(params)
    Z = ad.as_tensor(Z)
    out = direct_ranker_utility(Z, p) if config.kind == "DirectRanker" else pointwise_score(Z, p)
    return out.value.ravel()

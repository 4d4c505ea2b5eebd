"""Pair sampling, losses, Adam, early-stopped training and grid search."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from . import autodiff as ad
from . import heads
from .embed import EmbedderConfig, embed
from .graphs import Graph, PreferencePair, batch_pairs, build_batch
from .heads import HeadConfig
from .metrics import UndefinedCorrelationError, ranking_tau_b
from .model import RankModel, feature_dim

log = logging.getLogger(__name__)

TARGET_MODES = ("original_utility", "normalized_rank", "pairwise")


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 20.0
    learning_rate: float = 1e-3
    max_epochs: int = 2000
    patience: int = 100
    min_delta: float = 1e-4
    batch_size: int = 256
    seed: int = 0
    target_mode: str = "pairwise"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.target_mode not in TARGET_MODES:
            raise ValueError(f"target_mode must be one of {TARGET_MODES}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GridSpec:
    widths: tuple[int, ...] = (32, 64)
    conv_layers: tuple[int, ...] = (3, 5)
    poolings: tuple[str, ...] = ("mean", "sum", "softmax")
    learning_rates: tuple[float, ...] = (1e-2, 1e-3, 1e-4)

    def points(self) -> list[dict]:
        return [dict(width=w, conv_layers=c, pooling=p, learning_rate=lr)
                for w, c, p, lr in itertools.product(
                    self.widths, self.conv_layers, self.poolings, self.learning_rates)]


def config_key(point: dict) -> str:
    return ",".join(f"{k}={point[k]}" for k in sorted(point))


# -- sampling and targets ---------------------------------------------------

def sample_pairs(graphs: Sequence[Graph], alpha: float, seed: int) -> list[PreferencePair]:
    """Draw ``round(alpha * N)`` ordered pairs uniformly with replacement.

    Pairs whose targets tie are discarded and redrawn.
    """
    y = np.array([g.target for g in graphs], dtype=np.float64)
    n = len(y)
    if n < 2:
        raise ValueError("need at least two graphs to sample pairs")
    if np.isnan(y).any():
        raise ValueError("every graph needs a target")
    if np.all(y == y[0]):
        raise ValueError("all targets are equal; no labeled pair exists")
    m = int(round(alpha * n))
    rng = np.random.default_rng(seed)
    a_all, b_all = [], []
    have = 0
    while have < m:
        k = max(m - have, 16)
        a = rng.integers(n, size=k)
        b = rng.integers(n - 1, size=k)
        b = b + (b >= a)  # uniform over b != a
        keep = y[a] != y[b]
        a, b = a[keep], b[keep]
        a_all.append(a)
        b_all.append(b)
        have += a.shape[0]
    a = np.concatenate(a_all)[:m]
    b = np.concatenate(b_all)[:m]
    return [PreferencePair(int(i), int(j), 1.0 if y[i] > y[j] else 0.0) for i, j in zip(a, b)]


def pairs_to_arrays(pairs: Sequence[PreferencePair]) -> tuple[np.ndarray, np.ndarray]:
    idx = np.array([(p.a, p.b) for p in pairs], dtype=np.int64).reshape(-1, 2)
    labels = np.array([p.label for p in pairs], dtype=np.float64)
    return idx, labels


def normalized_ranks(targets: Sequence[float]) -> np.ndarray:
    """Ascending ordinal position scaled to [0, 1]; ties share their mean position."""
    y = np.asarray(targets, dtype=np.float64)
    n = y.shape[0]
    if n == 0:
        raise ValueError("no targets")
    if n == 1:
        return np.zeros(1)
    return (rankdata(y, method="average") - 1.0) / (n - 1)


# -- losses -----------------------------------------------------------------

def pairwise_loss(logits, labels) -> ad.Tensor:
    return ad.bce_with_logits(ad.as_tensor(logits), labels)


def pointwise_loss(scores, targets) -> ad.Tensor:
    return ad.mse(ad.as_tensor(scores), targets)


# -- optimizer --------------------------------------------------------------

@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: ad.ParamStore, lr: float, t: int, state: AdamState) -> ad.ParamStore:
    """In-place bias-corrected Adam update at step ``t`` (1-based)."""
    b1, b2 = state.beta1, state.beta2
    for name, value in params.params.items():
        g = params.grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        value -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    state.t = t
    return params


# -- training ---------------------------------------------------------------

@dataclass
class Splits:
    train: list[Graph]
    valid: list[Graph]
    test: list[Graph] = field(default_factory=list)


@dataclass
class TrainResult:
    model: RankModel
    history: list[dict]
    best_epoch: int
    stopped_epoch: int


class TrainingDiverged(ad.NumericError):
    pass


class EarlyStopping:
    """Tracks the best monitored value; stops after ``patience`` epochs without
    an improvement of at least ``min_delta``."""

    def __init__(self, patience: int, min_delta: float):
        self.patience = patience
        self.min_delta = min_delta
        self.best = math.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, value: float, epoch: int) -> bool:
        """Record ``value``; returns True when it is a new best."""
        if value < self.best - self.min_delta:
            self.best, self.best_epoch, self.wait = value, epoch, 0
            return True
        self.wait += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.wait >= self.patience


def _check_mode(head: HeadConfig, mode: str) -> None:
    if (mode == "pairwise") != head.pairwise:
        raise ValueError(f"target_mode {mode!r} does not fit a {head.kind} head")


def point_targets(graphs: Sequence[Graph], mode: str) -> np.ndarray:
    y = np.array([g.target for g in graphs], dtype=np.float64)
    return normalized_ranks(y) if mode == "normalized_rank" else y


class _Objective:
    """Loss over one set of graphs plus either pairs or point targets."""

    def __init__(self, embedder: EmbedderConfig, head: HeadConfig):
        self.embedder, self.head = embedder, head

    def pairs(self, graphs, pair_idx, labels):
        batch, local, _ = batch_pairs(graphs, pair_idx)

        def f(p):
            Z = embed(batch, self.embedder, p)
            return pairwise_loss(heads.pair_logits(self.head, Z, local, p), labels)
        return f

    def points(self, graphs, targets):
        batch = build_batch(graphs)

        def f(p):
            Z = embed(batch, self.embedder, p)
            return pointwise_loss(heads.pointwise_score(Z, p), targets)
        return f


def train(embedder: EmbedderConfig, head: HeadConfig, splits: Splits, config: TrainConfig,
          log_every: int = 0) -> TrainResult:
    """Train from scratch and return the parameters of the best validation epoch."""
    _check_mode(head, config.target_mode)
    if not splits.valid:
        raise ValueError("validation split is empty")
    model = RankModel.create(embedder, head, feature_dim(splits.train), config.seed)
    objective = _Objective(embedder, head)
    rng = np.random.default_rng(config.seed + 3)

    if config.target_mode == "pairwise":
        train_idx, train_lab = pairs_to_arrays(sample_pairs(splits.train, config.alpha, config.seed + 1))
        val_idx, val_lab = pairs_to_arrays(sample_pairs(splits.valid, config.alpha, config.seed + 2))
        val_loss_fn = objective.pairs(splits.valid, val_idx, val_lab)
        n_items = train_idx.shape[0]
    else:
        train_y = point_targets(splits.train, config.target_mode)
        val_loss_fn = objective.points(splits.valid, point_targets(splits.valid, config.target_mode))
        n_items = len(splits.train)

    state = AdamState()
    stopper = EarlyStopping(config.patience, config.min_delta)
    best_params = model.params.copy()
    history = []
    step = 0
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(n_items)
        total, count = 0.0, 0
        try:
            for start in range(0, n_items, config.batch_size):
                sel = perm[start:start + config.batch_size]
                if config.target_mode == "pairwise":
                    f = objective.pairs(splits.train, train_idx[sel], train_lab[sel])
                else:
                    sel = np.sort(sel)
                    f = objective.points([splits.train[i] for i in sel], train_y[sel])
                loss = ad.forward_backward(lambda p: f(p), model.params)
                step += 1
                adam_step(model.params, config.learning_rate, step, state)
                total += loss * len(sel)
                count += len(sel)
            val_loss = float(val_loss_fn(ad.constants(model.params)).value)
        except ad.NumericError as exc:
            raise TrainingDiverged(f"epoch {epoch}: {exc}") from exc
        train_loss = total / count
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingDiverged(f"epoch {epoch}: non-finite loss")
        history.append({"epoch": epoch, "train_loss": train_loss, "valid_loss": val_loss})
        if stopper.update(val_loss, epoch):
            best_params = model.params.copy()
        if log_every and epoch % log_every == 0:
            log.info("epoch %d train %.5f valid %.5f (best %.5f @ %d)",
                     epoch, train_loss, val_loss, stopper.best, stopper.best_epoch)
        if stopper.should_stop:
            break
    model.params = best_params
    return TrainResult(model, history, stopper.best_epoch, epoch)


def write_history_csv(path, history: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "valid_loss"])
        for h in history:
            w.writerow([h["epoch"], repr(h["train_loss"]), repr(h["valid_loss"])])


def evaluate_tau(model: RankModel, graphs: Sequence[Graph], method: str = "auto", seed: int = 0) -> float:
    """Kendall tau_B between the model's ranking of ``graphs`` and their targets."""
    ranking = model.rank(graphs, method, seed)
    return ranking_tau_b(ranking, [g.target for g in graphs])


def _safe_tau(model, graphs, seed):
    try:
        return evaluate_tau(model, graphs, seed=seed)
    except UndefinedCorrelationError:
        return float("nan")


# -- grid search ------------------------------------------------------------

GRID_FIELDS = ["config_key", "width", "conv_layers", "pooling", "learning_rate",
               "repeat", "seed", "valid_tau_b", "test_tau_b", "best_epoch", "status"]


def _run_point(args) -> dict:
    point, repeat, embedder, head, train_cfg, splits = args
    emb = replace(embedder, width=point["width"], conv_layers=point["conv_layers"],
                  pooling=point["pooling"])
    hd = replace(head, hidden_dim=point["width"]) if head.kind == "CmpNN" else head
    cfg = replace(train_cfg, learning_rate=point["learning_rate"], seed=train_cfg.seed + repeat)
    row = dict(point, config_key=config_key(point), repeat=repeat, seed=cfg.seed)
    try:
        res = train(emb, hd, splits, cfg)
        row.update(valid_tau_b=_safe_tau(res.model, splits.valid, cfg.seed),
                   test_tau_b=_safe_tau(res.model, splits.test, cfg.seed) if splits.test else float("nan"),
                   best_epoch=res.best_epoch, status="ok")
    except Exception as exc:  # recorded per config; the grid carries on
        row.update(valid_tau_b=float("nan"), test_tau_b=float("nan"), best_epoch=0,
                   status=f"error: {type(exc).__name__}: {exc}".replace("\n", " "))
    return row


def read_grid_csv(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("width", "conv_layers", "repeat", "seed", "best_epoch"):
            r[k] = int(r[k])
        for k in ("learning_rate", "valid_tau_b", "test_tau_b"):
            r[k] = float(r[k])
    return rows


def select_best(rows: Sequence[dict]) -> tuple[str, float]:
    """Config key with the highest mean validation tau_B; ties go to the smallest key."""
    by_key: dict[str, list[float]] = {}
    for r in rows:
        if r["status"] == "ok" and not math.isnan(r["valid_tau_b"]):
            by_key.setdefault(r["config_key"], []).append(r["valid_tau_b"])
    if not by_key:
        raise RuntimeError("no grid configuration finished successfully")
    scored = sorted((-float(np.mean(v)), k) for k, v in by_key.items())
    return scored[0][1], -scored[0][0]


@dataclass
class GridResult:
    best_point: dict
    best_valid_tau: float
    rows: list[dict]


def grid_search(grid: GridSpec, embedder: EmbedderConfig, head: HeadConfig, train_cfg: TrainConfig,
                splits: Splits, repeats: int = 3, results_path=None, jobs: int = 1) -> GridResult:
    """Train every grid point ``repeats`` times and pick the best by mean validation tau_B.

    With ``results_path`` each finished run is appended as a CSV row, and rows
    already present are skipped, so an interrupted search resumes where it
    stopped.
    """
    points = grid.points()
    if not points:
        raise ValueError("empty grid")
    done = read_grid_csv(results_path) if results_path else []
    finished = {(r["config_key"], r["repeat"]) for r in done}
    todo = [(pt, rep, embedder, head, train_cfg, splits)
            for pt in points for rep in range(repeats)
            if (config_key(pt), rep) not in finished]

    fh = writer = None
    if results_path:
        new_file = not Path(results_path).exists() or not done
        fh = open(results_path, "a" if not new_file else "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=GRID_FIELDS)
        if new_file:
            writer.writeheader()
    rows = list(done)
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = pool.map(_run_point, todo)
                for row in results:
                    rows.append(row)
                    if writer:
                        writer.writerow({k: row[k] for k in GRID_FIELDS})
                        fh.flush()
        else:
            for args in todo:
                row = _run_point(args)
                rows.append(row)
                if writer:
                    writer.writerow({k: row[k] for k in GRID_FIELDS})
                    fh.flush()
    finally:
        if fh:
            fh.close()

    keys = {config_key(pt) for pt in points}
    rows = [r for r in rows if r["config_key"] in keys]
    best_key, best_tau = select_best(rows)
    best_point = next(pt for pt in points if config_key(pt) == best_key)
    return GridResult(best_point, best_tau, rows)

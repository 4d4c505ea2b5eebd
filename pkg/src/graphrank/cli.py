"""Command line: generate, train, rank, eval, grid, curve.

On failure the last stderr line is ``error: <category>: <message>`` and the
exit code is non-zero.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import autodiff as ad
from .config import ConfigError, RunConfig, load_grid_spec, load_run_config, save_run_config
from .graphs import (DatasetParseError, DimensionMismatchError, GraphValidationError,
                     generate_edgecount_dataset, generate_regular_triangles_dataset,
                     generate_triangles_dataset, load_dataset, save_dataset, split_dataset)
from .metrics import (UndefinedCorrelationError, ranking_tau_b, utility_curve,
                      write_curve_csv, write_metrics_csv)
from .model import IncompatibleMethodError, RankModel
from .ranking import write_ranking_csv
from .training import Splits, evaluate_tau, grid_search, train, write_history_csv

log = logging.getLogger("graphrank")

EXIT_CODES = {"usage": 2, "config": 3, "data": 4, "io": 5, "numeric": 6,
              "incompatible": 7, "metric": 8, "internal": 1}


def _load_splits(cfg: RunConfig) -> Splits:
    return Splits(load_dataset(cfg.data.train), load_dataset(cfg.data.valid),
                  load_dataset(cfg.data.test) if cfg.data.test else [])


def cmd_generate(args) -> None:
    if args.task == "triangles":
        graphs = generate_triangles_dataset(args.n, args.min_nodes or 3, args.max_nodes or 85, args.seed)
    elif args.task == "edgecount":
        graphs = generate_edgecount_dataset(args.n, args.min_nodes or 5, args.max_nodes or 30, args.seed)
    else:
        graphs = generate_regular_triangles_dataset(args.n, args.seed)
    train_g, valid_g, test_g = split_dataset(graphs, args.split, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train_g), ("valid", valid_g), ("test", test_g)):
        if not part:
            log.warning("%s split is empty", name)
        save_dataset(part, out / f"{name}.jsonl")
    print(f"wrote {len(train_g)}/{len(valid_g)}/{len(test_g)} graphs to {out}")


def run_training(cfg: RunConfig, out: Path) -> dict:
    """Train per ``cfg`` and write checkpoint, history and metrics into ``out``."""
    splits = _load_splits(cfg)
    out.mkdir(parents=True, exist_ok=True)
    result = train(cfg.embedder, cfg.head, splits, cfg.train)
    result.model.save(out / "checkpoint.json", {"best_epoch": result.best_epoch})
    write_history_csv(out / "history.csv", result.history)
    save_run_config(cfg, out / "run_config.json")
    rows = []
    for split, graphs in (("valid", splits.valid), ("test", splits.test)):
        if len(graphs) < 2:
            continue
        try:
            tau = evaluate_tau(result.model, graphs, seed=cfg.train.seed)
        except UndefinedCorrelationError:
            tau = float("nan")
        rows.append(dict(dataset=cfg.dataset_name or Path(cfg.data.train).parent.name,
                         model=cfg.model_name, repeat=0, split=split, tau_b=tau))
    write_metrics_csv(out / "metrics.csv", rows)
    return {"best_epoch": result.best_epoch, "stopped_epoch": result.stopped_epoch,
            **{f"{r['split']}_tau_b": r["tau_b"] for r in rows}}


def cmd_train(args) -> None:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, seed=args.seed))
    out = Path(args.out or cfg.output_dir)
    summary = run_training(cfg, out)
    print(json.dumps(summary))


def _model_and_graphs(args):
    model = RankModel.load(args.checkpoint)
    graphs = load_dataset(args.data)
    dims = {g.feature_dim or 1 for g in graphs}
    if graphs and dims != {model.in_dim}:
        raise IncompatibleMethodError(
            f"checkpoint expects {model.in_dim} node features, dataset has {sorted(dims)}")
    return model, graphs


def cmd_rank(args) -> None:
    model, graphs = _model_and_graphs(args)
    ranking = model.rank(graphs, args.method, args.seed)
    utilities = model.utilities(graphs) if model.head.has_utility and graphs else None
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "ranking.csv"
    write_ranking_csv(out, ranking, [g.id for g in graphs], utilities)
    log.info("comparator_calls=%d", ranking.comparator_calls)
    print(json.dumps({"ranking": str(out), "comparator_calls": ranking.comparator_calls}))


def cmd_eval(args) -> None:
    model, graphs = _model_and_graphs(args)
    ranking = model.rank(graphs, args.method, args.seed)
    tau = ranking_tau_b(ranking, [g.target for g in graphs])
    if args.out:
        out = Path(args.out)
        if out.suffix != ".csv":
            out.mkdir(parents=True, exist_ok=True)
            out = out / "metrics.csv"
        write_metrics_csv(out, [dict(dataset=Path(args.data).parent.name, model=model.head.kind,
                                     repeat=0, split=Path(args.data).stem, tau_b=tau)])
    print(json.dumps({"tau_b": tau, "comparator_calls": ranking.comparator_calls}))


def cmd_grid(args) -> None:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, seed=args.seed))
    grid = load_grid_spec(args.grid)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = grid_search(grid, cfg.embedder, cfg.head, cfg.train, _load_splits(cfg),
                         repeats=args.repeats, results_path=out / "grid_results.csv", jobs=args.jobs)
    pt = result.best_point
    best = dataclasses.replace(
        cfg,
        embedder=dataclasses.replace(cfg.embedder, width=pt["width"], conv_layers=pt["conv_layers"],
                                     pooling=pt["pooling"]),
        head=dataclasses.replace(cfg.head, hidden_dim=pt["width"]) if cfg.head.kind == "CmpNN" else cfg.head,
        train=dataclasses.replace(cfg.train, learning_rate=pt["learning_rate"]),
        output_dir=str(out / "best"),
    )
    save_run_config(best, out / "best_config.json")
    failed = sum(1 for r in result.rows if r["status"] != "ok")
    print(json.dumps({"best": pt, "valid_tau_b": result.best_valid_tau,
                      "runs": len(result.rows), "failed": failed}))


def cmd_curve(args) -> None:
    model, graphs = _model_and_graphs(args)
    if not model.head.has_utility:
        raise IncompatibleMethodError(f"{model.head.kind} exposes no scalar score")
    scores = model.utilities(graphs)
    norm_scores, norm_targets = utility_curve(scores, [g.target for g in graphs])
    write_curve_csv(args.out, norm_scores, norm_targets)
    print(json.dumps({"curve": str(args.out), "points": len(graphs)}))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphrank", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic train/valid/test JSONL splits")
    p.add_argument("--task", choices=["triangles", "edgecount", "regular-triangles"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--min-nodes", type=int)
    p.add_argument("--max-nodes", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", type=float, nargs=3, default=(0.8, 0.1, 0.1), metavar=("TRAIN", "VALID", "TEST"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("rank", cmd_rank, "rank a dataset with a checkpoint"),
                                 ("eval", cmd_eval, "Kendall tau_B of a checkpoint on a dataset")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--method", choices=["auto", "quicksort", "utility", "borda"],
                       default="quicksort" if name == "rank" else "auto")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=(name == "rank"))
        p.set_defaults(func=func)

    p = sub.add_parser("grid", help="hyperparameter grid search")
    p.add_argument("--config", required=True, help="base run config")
    p.add_argument("--grid", help="JSON with widths/conv_layers/poolings/learning_rates")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("curve", help="normalized utility curve CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curve)
    return parser


def _category(exc: BaseException) -> str:
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, (DatasetParseError, GraphValidationError, DimensionMismatchError)):
        return "data"
    if isinstance(exc, IncompatibleMethodError):
        return "incompatible"
    if isinstance(exc, ad.NumericError):
        return "numeric"
    if isinstance(exc, UndefinedCorrelationError):
        return "metric"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, ValueError):
        return "usage"
    return "internal"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:
        cat = _category(exc)
        print(f"error: {cat}: {exc}".replace("\n", " "), file=sys.stderr)
        return EXIT_CODES[cat]
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Pairwise vs point-wise training on the edge-count ranking task.

    python scripts/learnability.py --graphs 500 --out runs/learnability
"""

import argparse
import csv
import json
import logging
import time
from pathlib import Path

from graphrank.embed import EmbedderConfig
from graphrank.graphs import generate_edgecount_dataset, split_dataset
from graphrank.heads import HeadConfig
from graphrank.training import Splits, TrainConfig, evaluate_tau, train, write_history_csv

SETUPS = {
    "GIN-DirectRanker": (HeadConfig("DirectRanker"), dict(target_mode="pairwise", alpha=20, batch_size=1024)),
    "GIN-CmpNN": (HeadConfig("CmpNN", hidden_dim=32), dict(target_mode="pairwise", alpha=20, batch_size=1024)),
    "GIN-pointwise-rank": (HeadConfig("PointwiseRegression"), dict(target_mode="normalized_rank", batch_size=32)),
    "GIN-pointwise-utility": (HeadConfig("PointwiseRegression"), dict(target_mode="original_utility", batch_size=32)),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--graphs", type=int, default=500)
    ap.add_argument("--max-epochs", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--models", nargs="*", default=list(SETUPS), choices=list(SETUPS))
    ap.add_argument("--out", default="runs/learnability")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    graphs = generate_edgecount_dataset(args.graphs, 5, 30, seed=args.seed)
    splits = Splits(*split_dataset(graphs, (0.8, 0.1, 0.1), seed=args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emb = EmbedderConfig("GIN", 3, 32, "sum")
    rows = []
    for name in args.models:
        head, overrides = SETUPS[name]
        cfg = TrainConfig(learning_rate=1e-3, max_epochs=args.max_epochs, seed=args.seed, **overrides)
        start = time.perf_counter()
        res = train(emb, head, splits, cfg, log_every=50)
        row = dict(model=name, test_tau_b=evaluate_tau(res.model, splits.test),
                   valid_tau_b=evaluate_tau(res.model, splits.valid), best_epoch=res.best_epoch,
                   stopped_epoch=res.stopped_epoch, seconds=round(time.perf_counter() - start, 1))
        write_history_csv(out / f"{name}_history.csv", res.history)
        print(json.dumps(row))
        rows.append(row)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()

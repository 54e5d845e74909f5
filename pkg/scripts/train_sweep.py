"""Seed x projection-period sweep of the training loop.

Writes one summary row per run to results/train_sweep.csv (or --out).

    python scripts/train_sweep.py --seeds 0-4 --periods 8,10,12,16,100 [--learn-alpha]
"""

import argparse
import json
import time
from pathlib import Path

from lieednn.cli import config_hash, write_table
from lieednn.learning import TrainConfig, default_setup, train


def int_list(text):
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int_list, default=list(range(5)))
    ap.add_argument("--periods", type=int_list, default=[8, 10, 12, 16, 100])
    ap.add_argument("--learn-alpha", action="store_true")
    ap.add_argument("--ablate-projection", action="store_true")
    ap.add_argument("--max-epochs", type=int, default=25000)
    ap.add_argument("--out", default="results/train_sweep.csv")
    args = ap.parse_args()

    rows = []
    for p in args.periods:
        for s in args.seeds:
            w0, params, target = default_setup(4, s)
            cfg = TrainConfig(target, proj_period=p, seed=s, learn_alpha=args.learn_alpha,
                              ablate_projection=args.ablate_projection, max_epochs=args.max_epochs)
            t0 = time.perf_counter()
            rec = train(w0, params, cfg)
            dt = time.perf_counter() - t0
            rows.append((p, s, rec.status, rec.epochs, rec.final_loss, rec.final_deviation, dt))
            print(f"P={p:4d} seed={s:3d} {rec.status:20s} epochs={rec.epochs:6d} "
                  f"loss={rec.final_loss:.3e} dev={rec.final_deviation:.2e} {dt:.1f}s", flush=True)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = {"learn_alpha": args.learn_alpha, "ablate": args.ablate_projection, "max_epochs": args.max_epochs}
    write_table(out, ["proj_period", "seed", "status", "epochs", "final_loss", "final_deviation", "seconds"],
                rows, config_hash(meta), args.seeds[0])
    for p in args.periods:
        sub = [r for r in rows if r[0] == p]
        print(f"P={p}: {sum(r[2] == 'converged' for r in sub)}/{len(sub)} converged")
    print(json.dumps(meta))


if __name__ == "__main__":
    main()

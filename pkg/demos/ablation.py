"""Ablation table on the pinned benchmark.

    python3 demos/ablation.py [--seeds 0,1,2] [--small]

Each row switches off one component. Runs that differ only in test-time
settings share their training run. --small uses a quarter of the data.
"""

import argparse

from vdt import TrainConfig
from vdt.benchmark import benchmark
from vdt.pipeline import AblationSpec, ablate

ROWS = ["full", "no_ttt", "no_cvf", "no_diva", "no_dcc", "no_gate", "no_diva+no_dcc+no_ttt"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--small", action="store_true")
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]

    data = benchmark(n_train=1000, n_test=250) if args.small else benchmark()
    out = ablate(data, TrainConfig(), [AblationSpec.parse(r) for r in ROWS], seeds)
    print(f"{'ablation':24s} {'macro-F1':>9s} {'std':>7s} {'acc':>7s}")
    for label in ROWS:
        s = out["summary"][label]
        print(f"{label:24s} {s['f1_macro']['mean']:9.4f} {s['f1_macro']['std']:7.4f} {s['accuracy']['mean']:7.4f}")


if __name__ == "__main__":
    main()

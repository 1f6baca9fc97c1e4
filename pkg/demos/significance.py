"""Is one configuration really better than another across seeds?

    python3 demos/significance.py [--seeds 0,1,2,3,4,5,6,7]

Runs the full method and the no_dcc ablation on the same seeds and applies
the exact two-sided Wilcoxon signed-rank test to the paired macro-F1s.
"""

import argparse

from vdt import TrainConfig
from vdt.benchmark import benchmark
from vdt.pipeline import AblationSpec, ablate, compare


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0,1,2,3,4,5,6,7")
    ap.add_argument("--epochs", type=int, default=8)
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]

    data = benchmark(n_train=1000, n_test=250)
    out = ablate(data, TrainConfig(epochs=args.epochs), [AblationSpec(), AblationSpec(no_dcc=True)], seeds)
    for r in sorted(out["rows"], key=lambda r: (r["seed"], r["ablation"])):
        print(f"seed {r['seed']}  {r['ablation']:7s}  F1 {r['f1_macro']:.4f}")
    res = compare(out, out, min_seeds=len(seeds), select_a="full", select_b="no_dcc")["tests"]["f1_macro"]
    print(f"mean full {res['mean_a']:.4f} vs no_dcc {res['mean_b']:.4f}")
    print(f"W = {res['statistic']}, n = {res['n_nonzero']}, p = {res['p_value']:.4f} ({res['significance']})")
    # with 8 seeds the smallest possible two-sided p is 2/256 = 0.0078


if __name__ == "__main__":
    main()

"""How far apart are the domains, before and after encoding?

    python3 demos/domain_gap.py [--out projection.csv]

Prints the MMD between source and target test sets on raw inputs and on
the gated latent features, then writes 2-d PCA coordinates of both
domains for plotting.
"""

import argparse

import numpy as np

from vdt import TrainConfig, fit
from vdt.benchmark import benchmark
from vdt.metrics import export_projection, mmd
from vdt.model import DomainPath
from vdt.pipeline import gated_features


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="projection.csv")
    ap.add_argument("--epochs", type=int, default=10)
    args = ap.parse_args()

    data = benchmark(n_train=1000, n_test=400)
    params = fit(data.source_train, data.target_train.without_labels(), TrainConfig(epochs=args.epochs)).params
    src, tgt = data.source_test, data.target_test

    raw = mmd(src.X, tgt.X)
    F_s = gated_features(params, src.X, DomainPath.SOURCE)
    F_t = gated_features(params, tgt.X, DomainPath.TARGET)
    gated = mmd(F_s, F_t)
    print(f"MMD raw   {raw.statistic:.4f}  (bandwidth {raw.bandwidth:.2f})")
    print(f"MMD gated {gated.statistic:.4f}  (bandwidth {gated.bandwidth:.2f})")
    print(f"ratio     {gated.statistic / raw.statistic:.3f}")

    F = np.vstack([F_s, F_t])
    export_projection(args.out, F, np.concatenate([src.domain, tgt.domain]), np.concatenate([src.y, tgt.y]))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()

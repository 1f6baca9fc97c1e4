"""The fixed synthetic transfer task used by the acceptance checks and demos.

Two Gaussian domains in 32 dims. The target is the source rotated by 30
degrees in the (f0, f1) plane and shifted by a length-4 vector. Each domain
has 4000 training and 1000 test samples.
"""

from __future__ import annotations

from .data import Dataset, DomainSpec, SynthSpec, synth
from .pipeline import DataBundle

ROTATION = 30.0
SHIFT = 4.0
SEPARATION = 3.3
NOISE = 1.0


def benchmark_spec(seed: int = 0, n_train: int = 4000, n_test: int = 1000) -> SynthSpec:
    return SynthSpec(
        dim=32,
        domains=[
            DomainSpec("source", 0.0, 0.0, SEPARATION, NOISE, n_train, n_test),
            DomainSpec("target", ROTATION, SHIFT, SEPARATION, NOISE, n_train, n_test),
        ],
        targets=[1],
        seed=seed,
    )


def split_bundle(train: Dataset, test: Dataset, spec: SynthSpec) -> DataBundle:
    """Partition synthetic train/test sets into source and target parts."""
    src, tgt = spec.sources, spec.targets
    return DataBundle(train.where_domain(src), train.where_domain(tgt), test.where_domain(src), test.where_domain(tgt))


def benchmark(seed: int = 0, **kw) -> DataBundle:
    spec = benchmark_spec(seed, **kw)
    return split_bundle(synth(spec, "train"), synth(spec, "test"), spec)

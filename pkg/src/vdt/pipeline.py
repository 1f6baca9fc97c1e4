"""End-to-end runs: train, evaluate, measure domain gap, adapt at test time.

Also hosts the ablation and sweep drivers that the command line exposes.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, TrainConfig
from .data import Dataset
from .metrics import evaluate, mmd, summarize
from .model import DomainPath, ModelParams, encode, gate_features, predict
from .trainer import LOSS_KEYS, FitResult, fit
from .ttt import ttt_adapt

ABLATION_FLAGS = ("no_diva", "no_dcc", "no_ttt", "no_cvf", "no_gate")
SWEEP_PARAMS = ("beta", "theta", "tau", "alpha1", "alpha2")


@dataclass(frozen=True)
class AblationSpec:
    no_diva: bool = False
    no_dcc: bool = False
    no_ttt: bool = False
    no_cvf: bool = False
    no_gate: bool = False
    drop_source_domain: int | None = None

    @classmethod
    def parse(cls, text: str) -> "AblationSpec":
        """``"full"`` or ``+``-joined flags, e.g. ``"no_diva+no_ttt"`` or ``"drop=2"``."""
        kw: dict = {}
        for tok in filter(None, text.strip().split("+")):
            if tok == "full":
                continue
            if tok.startswith("drop="):
                kw["drop_source_domain"] = int(tok[5:])
            elif tok in ABLATION_FLAGS:
                kw[tok] = True
            else:
                raise ConfigError(f"unknown ablation flag {tok!r}")
        return cls(**kw)

    @property
    def label(self) -> str:
        toks = [f for f in ABLATION_FLAGS if getattr(self, f)]
        if self.drop_source_domain is not None:
            toks.append(f"drop={self.drop_source_domain}")
        return "+".join(toks) or "full"

    def apply(self, cfg: TrainConfig) -> TrainConfig:
        changes: dict = {}
        if self.no_diva:
            changes["lambda2"] = 0.0
        if self.no_dcc:
            changes.update(lambda3=0.0, dcc_in_ttt=False)
        if self.no_ttt:
            changes["ttt_passes"] = 0
        if self.no_cvf:
            changes["use_cvf"] = False
        if self.no_gate:
            changes["use_gate"] = False
        return cfg.replace(**changes)


@dataclass
class DataBundle:
    source_train: Dataset
    target_train: Dataset
    source_test: Dataset
    target_test: Dataset

    def drop_source(self, domain_id: int | None) -> "DataBundle":
        if domain_id is None:
            return self
        keep_tr = self.source_train.domain != domain_id
        keep_te = self.source_test.domain != domain_id
        if not keep_tr.any():
            raise ValueError(f"dropping domain {domain_id} leaves no source data")
        return DataBundle(
            self.source_train.subset(np.flatnonzero(keep_tr)),
            self.target_train,
            self.source_test.subset(np.flatnonzero(keep_te)) if keep_te.any() else self.source_test,
            self.target_test,
        )


@dataclass
class RunReport:
    config: dict
    config_hash: str
    seed: int
    ablation: str
    epochs: list[dict]
    best_epoch: int
    stopped_epoch: int
    eval_pre_ttt: dict
    eval_post_ttt: dict | None
    eval_source_test: dict | None
    mmd_raw: dict | None
    mmd_gated: dict | None
    ttt: dict | None
    wall_clock: float = 0.0

    def to_json(self) -> dict:
        return dict(self.__dict__)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, d: dict) -> "RunReport":
        return cls(**d)

    @property
    def final(self) -> dict:
        return self.eval_post_ttt or self.eval_pre_ttt

    def without_clock(self) -> dict:
        d = self.to_json()
        d.pop("wall_clock")
        return d


def gated_features(params: ModelParams, X, path: DomainPath, use_gate: bool = True) -> np.ndarray:
    return gate_features(encode(params, np.asarray(X, dtype=np.float64), path), use_gate).value


def target_path(cfg: TrainConfig) -> DomainPath:
    """Head pair used for target predictions.

    The target heads only ever receive gradient through the contrastive term,
    the consistency term or test-time training. With all three switched off
    they keep their initial weights, so target data goes through the trained
    source heads instead (the plain source-only classifier).
    """
    if cfg.lambda2 == 0 and cfg.lambda3 == 0 and cfg.ttt_passes == 0:
        return DomainPath.SOURCE
    return DomainPath.TARGET


def domain_gap(params: ModelParams, data: DataBundle, cfg: TrainConfig) -> tuple[dict, dict]:
    """MMD between source and target test sets, on raw inputs and on gated features."""
    raw = mmd(data.source_test.X, data.target_test.X)
    F_s = gated_features(params, data.source_test.X, DomainPath.SOURCE, cfg.use_gate)
    F_t = gated_features(params, data.target_test.X, target_path(cfg), cfg.use_gate)
    return raw.to_json(), mmd(F_s, F_t).to_json()


def run(
    data: DataBundle,
    cfg: TrainConfig,
    ablation: AblationSpec = AblationSpec(),
    fitted: FitResult | None = None,
    with_mmd: bool = True,
) -> tuple[RunReport, ModelParams]:
    """Full pipeline for one seed; returns the report and the final parameters.

    ``fitted`` lets callers reuse a training run whose configuration differs
    only in test-time settings.
    """
    t0 = time.perf_counter()
    cfg = ablation.apply(cfg)
    data = data.drop_source(ablation.drop_source_domain)
    if fitted is None:
        fitted = fit(data.source_train, data.target_train.without_labels(), cfg)
    params = fitted.params.copy()

    tt = data.target_test
    path = target_path(cfg)
    pre = evaluate(predict(params, tt.X, path, cfg.use_gate), tt.y)
    src_eval = evaluate(predict(params, data.source_test.X, DomainPath.SOURCE, cfg.use_gate), data.source_test.y)
    mmd_raw, mmd_gated = domain_gap(params, data, cfg) if with_mmd else (None, None)

    post = ttt_rep = None
    if cfg.ttt_passes > 0:
        rep = ttt_adapt(params, tt.without_labels(), cfg)
        post = evaluate(predict(params, tt.X, path, cfg.use_gate), tt.y).to_json()
        ttt_rep = rep.to_json()

    report = RunReport(
        config=cfg.to_dict(),
        config_hash=cfg.hash(),
        seed=cfg.seed,
        ablation=ablation.label,
        epochs=fitted.epochs,
        best_epoch=fitted.best_epoch,
        stopped_epoch=fitted.stopped_epoch,
        eval_pre_ttt=pre.to_json(),
        eval_post_ttt=post,
        eval_source_test=src_eval.to_json(),
        mmd_raw=mmd_raw,
        mmd_gated=mmd_gated,
        ttt=ttt_rep,
        wall_clock=time.perf_counter() - t0,
    )
    return report, params


def _training_key(cfg: TrainConfig, ablation: AblationSpec) -> str:
    """Hash of everything that influences training (test-time settings zeroed)."""
    c = ablation.apply(cfg).replace(
        ttt_lr=1.0, alpha1=0.0, alpha2=0.0, theta=0.0, ttt_passes=0, ttt_batch_size=None, use_cvf=True, dcc_in_ttt=True
    )
    return f"{c.hash()}:{ablation.drop_source_domain}"


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def ablate(
    data: DataBundle,
    cfg: TrainConfig,
    ablations: list[AblationSpec],
    seeds: list[int],
    threads: int = 1,
) -> dict:
    """Every ablation for every seed, plus per-ablation means.

    Ablations that differ only in test-time behaviour share one training run
    per seed.
    """
    if not seeds:
        raise ConfigError("at least one seed required")
    fits: dict[str, FitResult] = {}

    def train_cell(key_ab_seed):
        key, ab, seed = key_ab_seed
        c = ab.apply(cfg.replace(seed=seed))
        d = data.drop_source(ab.drop_source_domain)
        return key, fit(d.source_train, d.target_train.without_labels(), c)

    todo = {}
    for seed in seeds:
        for ab in ablations:
            key = (seed, _training_key(cfg.replace(seed=seed), ab))
            todo.setdefault(key, (key, ab, seed))
    for key, res in _map(train_cell, list(todo.values()), threads):
        fits[key] = res

    def run_cell(ab_seed):
        ab, seed = ab_seed
        key = (seed, _training_key(cfg.replace(seed=seed), ab))
        rep, _ = run(data, cfg.replace(seed=seed), ab, fitted=fits[key])
        return rep

    cells = [(ab, s) for ab in ablations for s in seeds]
    reports = _map(run_cell, cells, threads)
    rows = [_row(rep) for rep in reports]
    summary = {}
    for ab in ablations:
        sel = [r for r in rows if r["ablation"] == ab.label]
        summary[ab.label] = {
            k: summarize([r[k] for r in sel]) for k in ("f1_macro", "accuracy", "f1_real", "f1_fake")
        }
    return {"rows": rows, "summary": summary, "seeds": list(seeds), "config_hash": cfg.hash()}


def _row(rep: RunReport) -> dict:
    fin = rep.final
    return {
        "ablation": rep.ablation,
        "seed": rep.seed,
        "f1_macro": fin["f1_macro"],
        "accuracy": fin["accuracy"],
        "f1_real": fin["f1_real"],
        "f1_fake": fin["f1_fake"],
        "f1_macro_pre_ttt": rep.eval_pre_ttt["f1_macro"],
        "mmd_raw": rep.mmd_raw["statistic"] if rep.mmd_raw else None,
        "mmd_gated": rep.mmd_gated["statistic"] if rep.mmd_gated else None,
        "retained": rep.ttt["retained"] if rep.ttt else None,
    }


def sweep(
    data: DataBundle,
    cfg: TrainConfig,
    param: str,
    values: list[float],
    seeds: list[int],
    threads: int = 1,
) -> dict:
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"cannot sweep {param!r}; choose from {SWEEP_PARAMS}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    ttt_only = param in ("theta", "alpha1", "alpha2")
    fits: dict[int, FitResult] = {}
    if ttt_only:
        for seed, res in zip(
            seeds,
            _map(lambda s: fit(data.source_train, data.target_train.without_labels(), cfg.replace(seed=s)), seeds, threads),
        ):
            fits[seed] = res

    def cell(vs):
        v, s = vs
        c = cfg.replace(seed=s, **{param: float(v)})
        rep, _ = run(data, c, fitted=fits.get(s))
        return _row(rep) | {"value": float(v)}

    rows = _map(cell, [(v, s) for v in values for s in seeds], threads)
    summary = {
        repr(float(v)): summarize([r["f1_macro"] for r in rows if r["value"] == float(v)]) for v in values
    }
    return {"param": param, "values": [float(v) for v in values], "seeds": list(seeds), "rows": rows, "summary": summary}


def _select(rows: list[dict], select: str | None) -> list[dict]:
    if select is None:
        return rows
    if select.startswith("value="):
        v = float(select[6:])
        return [r for r in rows if r.get("value") == v]
    return [r for r in rows if r["ablation"] == select]


def compare(
    report_a: dict,
    report_b: dict,
    min_seeds: int = 5,
    select_a: str | None = None,
    select_b: str | None = None,
) -> dict:
    """Paired Wilcoxon tests on per-seed final metrics of two ablation/sweep outputs.

    ``select_a``/``select_b`` pick rows by ablation label (``"no_ttt"``) or by
    sweep value (``"value=0.9"``) when a report holds several cells per seed.
    """
    from .metrics import significance_stars, wilcoxon_signed_rank

    def per_seed(rep, select):
        rows = rep["rows"] if "rows" in rep else [_row(RunReport.from_json(rep))]
        out: dict[int, dict] = {}
        for r in _select(rows, select):
            if r["seed"] in out:
                raise ConfigError(f"several rows for seed {r['seed']}; pass a selector")
            out[r["seed"]] = r
        return out

    a, b = per_seed(report_a, select_a), per_seed(report_b, select_b)
    if set(a) != set(b):
        raise ConfigError(f"seed sets differ: {sorted(a)} vs {sorted(b)}")
    seeds = sorted(a)
    if len(seeds) < min_seeds:
        raise ConfigError(f"need at least {min_seeds} paired seeds, got {len(seeds)}")
    out = {"seeds": seeds, "tests": {}}
    for metric in ("f1_macro", "accuracy"):
        xa = [a[s][metric] for s in seeds]
        xb = [b[s][metric] for s in seeds]
        res = wilcoxon_signed_rank(xa, xb)
        out["tests"][metric] = {
            "statistic": res.statistic,
            "p_value": res.p_value,
            "n_nonzero": res.n,
            "significance": significance_stars(res.p_value),
            "mean_a": float(np.mean(xa)),
            "mean_b": float(np.mean(xb)),
        }
    return out


__all__ = [
    "AblationSpec",
    "DataBundle",
    "RunReport",
    "run",
    "ablate",
    "sweep",
    "compare",
    "domain_gap",
    "target_path",
    "LOSS_KEYS",
]

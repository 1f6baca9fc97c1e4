"""Command-line driver.

    vdt [--config C] [--seed S] [--out DIR] [--threads N] <command> ...

Every command prints a JSON document on stdout and, where it produces
artifacts, writes them under ``--out``. Exit codes: 0 ok, 2 bad
configuration, 3 unreadable or malformed data, 4 contract violation.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .autodiff import ContractError, DomainError, ShapeError
from .config import ConfigError, TrainConfig, load_config
from .data import Dataset, FormatError, ParseError, SynthSpec, load_csv, load_vdtf, save_csv, save_vdtf, synth
from .metrics import evaluate, export_projection, mmd
from .model import CheckpointError, DomainPath, load_checkpoint, params_digest, predict, save_checkpoint
from .pipeline import (
    SWEEP_PARAMS,
    AblationSpec,
    DataBundle,
    RunReport,
    ablate,
    compare,
    domain_gap,
    gated_features,
    sweep,
    target_path,
)
from .trainer import fit
from .ttt import ttt_adapt

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CONTRACT = 0, 2, 3, 4


class DataError(Exception):
    pass


# config fields that get their own flag; anything else goes through --set
_FLAG_FIELDS = {
    "lr": float,
    "ttt_lr": float,
    "batch_size": int,
    "epochs": int,
    "beta": float,
    "theta": float,
    "tau": float,
    "alpha1": float,
    "alpha2": float,
    "source_train": str,
    "target_train": str,
    "source_test": str,
    "target_test": str,
}


def _common() -> argparse.ArgumentParser:
    # SUPPRESS lets the same flag appear before or after the subcommand
    p = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON config file")
    p.add_argument("--seed", type=int, default=S, help="overrides the config seed")
    p.add_argument("--out", default=S, help="output directory (default: current)")
    p.add_argument("--threads", type=int, default=S, help="worker threads for ablate/sweep")
    for name, typ in _FLAG_FIELDS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=S)
    p.add_argument("--set", action="append", default=S, metavar="KEY=JSON", help="override any config field")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="vdt", description=__doc__.splitlines()[0], parents=[common], allow_abbrev=False)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], allow_abbrev=False, help="write synthetic train/test files per role")
    p.add_argument("spec", help="SynthSpec JSON")
    p.add_argument("--format", choices=("vdtf", "csv"), default="vdtf")

    sub.add_parser("train", parents=[common], allow_abbrev=False, help="fit on source + unlabeled target, save a checkpoint")

    p = sub.add_parser("ttt", parents=[common], allow_abbrev=False, help="adapt a checkpoint on a target stream")
    p.add_argument("checkpoint")
    p.add_argument("target", nargs="?", help="target stream (default: config target_test)")

    p = sub.add_parser("eval", parents=[common], allow_abbrev=False, help="metrics of a checkpoint on labeled data")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("--path", choices=("source", "target"), default="target")

    p = sub.add_parser("ablate", parents=[common], allow_abbrev=False, help="ablation table over seeds")
    p.add_argument("--ablations", default="full,no_diva,no_dcc,no_ttt,no_cvf,no_diva+no_dcc+no_ttt")
    p.add_argument("--seeds", default=None, help="comma list (default: the config seed)")

    p = sub.add_parser("sweep", parents=[common], allow_abbrev=False, help="one hyperparameter over values and seeds")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma list")
    p.add_argument("--seeds", default=None)

    p = sub.add_parser("mmd", parents=[common], allow_abbrev=False, help="MMD between two files, raw and gated")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--checkpoint", default=None, help="also measure gated features (a: source path, b: target path)")

    p = sub.add_parser("project", parents=[common], allow_abbrev=False, help="2-d PCA coordinates as CSV")
    p.add_argument("--source", nargs="*", default=[])
    p.add_argument("--target", nargs="*", default=[])
    p.add_argument("--checkpoint", default=None, help="project gated features instead of raw inputs")
    p.add_argument("--name", default="projection.csv")

    p = sub.add_parser("compare", parents=[common], allow_abbrev=False, help="paired Wilcoxon test of two reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--select-a", default=None, help="ablation label or value=X")
    p.add_argument("--select-b", default=None)
    p.add_argument("--min-seeds", type=int, default=5)
    return ap


# ------------------------------------------------------------------ helpers


def _config(args) -> TrainConfig:
    over = {name: getattr(args, name, None) for name in _FLAG_FIELDS}
    for item in getattr(args, "set", None) or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            over[key] = json.loads(val)
        except json.JSONDecodeError:
            over[key] = val
    over["seed"] = getattr(args, "seed", None)
    path = getattr(args, "config", None)
    if path is not None and not Path(path).is_file():
        raise ConfigError(f"config file not found: {path}")
    return load_config(path, **over)


def _out(args) -> Path:
    out = Path(getattr(args, "out", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_dataset(path) -> Dataset:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"no such data file: {path}")
    return load_csv(p) if p.suffix.lower() == ".csv" else load_vdtf(p)


def _need(cfg: TrainConfig, *keys) -> list[Dataset]:
    out = []
    for k in keys:
        path = getattr(cfg, k)
        if path is None:
            raise ConfigError(f"{k} is not set (config key or --{k.replace('_', '-')})")
        out.append(load_dataset(path))
    return out


def _optional(cfg: TrainConfig, key) -> Dataset | None:
    path = getattr(cfg, key)
    return None if path is None else load_dataset(path)


def _emit(doc: dict, out: Path | None = None, name: str | None = None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out is not None and name is not None:
        (out / name).write_text(text + "\n")
    print(text)


def _seeds(text, cfg: TrainConfig) -> list[int]:
    if text is None:
        return [cfg.seed]
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None
    if not seeds:
        raise ConfigError("at least one seed required")
    return seeds


def _check_dim(params, ds: Dataset, what: str) -> None:
    if ds.dim != params.arch.input_dim:
        raise ContractError(f"{what} has dim {ds.dim} but the checkpoint expects {params.arch.input_dim}")


def _eval_or_none(params, ds: Dataset | None, path: DomainPath, cfg: TrainConfig):
    if ds is None or len(ds) == 0 or not ds.labeled:
        return None
    return evaluate(predict(params, ds.X, path, cfg.use_gate), ds.y).to_json()


# ----------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    try:
        spec = SynthSpec.from_json(Path(args.spec).read_text())
    except FileNotFoundError:
        raise ConfigError(f"spec not found: {args.spec}") from None
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid synth spec: {e}") from None
    if getattr(args, "seed", None) is not None:
        spec.seed = args.seed
    out = _out(args)
    ext = args.format
    save = save_vdtf if ext == "vdtf" else save_csv
    files = {}
    for split in ("train", "test"):
        ds = synth(spec, split)
        for role, ids in (("source", spec.sources), ("target", spec.targets)):
            path = out / f"{role}_{split}.{ext}"
            part = ds.where_domain(ids)
            save(part, path)
            files[f"{role}_{split}"] = {"path": str(path), "n": len(part), "dim": part.dim}
    _emit({"files": files, "dim": spec.dim, "seed": spec.seed})
    return EXIT_OK


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    cfg = _config(args)
    src, tgt = _need(cfg, "source_train", "target_train")
    src_test, tgt_test = _optional(cfg, "source_test"), _optional(cfg, "target_test")
    fitted = fit(src, tgt.without_labels(), cfg)
    params = fitted.params
    out = _out(args)
    save_checkpoint(params, out / "model.vdtc", cfg.hash(), meta=fitted.to_json())

    mmd_raw = mmd_gated = None
    if src_test is not None and tgt_test is not None:
        mmd_raw, mmd_gated = domain_gap(params, DataBundle(src, tgt, src_test, tgt_test), cfg)
    report = RunReport(
        config=cfg.to_dict(),
        config_hash=cfg.hash(),
        seed=cfg.seed,
        ablation="full",
        epochs=fitted.epochs,
        best_epoch=fitted.best_epoch,
        stopped_epoch=fitted.stopped_epoch,
        eval_pre_ttt=_eval_or_none(params, tgt_test, target_path(cfg), cfg),
        eval_post_ttt=None,
        eval_source_test=_eval_or_none(params, src_test, DomainPath.SOURCE, cfg),
        mmd_raw=mmd_raw,
        mmd_gated=mmd_gated,
        ttt=None,
        wall_clock=time.perf_counter() - t0,
    )
    _emit(report.to_json() | {"checkpoint": str(out / "model.vdtc"), "params_sha256": params_digest(params)},
          out, "train_report.json")
    return EXIT_OK


def cmd_ttt(args) -> int:
    t0 = time.perf_counter()
    cfg = _config(args)
    params, header = _load_ckpt(args.checkpoint)
    stream = load_dataset(args.target) if args.target else _need(cfg, "target_test")[0]
    _check_dim(params, stream, "target stream")
    src_test = _optional(cfg, "source_test")

    path = DomainPath.TARGET
    pre = _eval_or_none(params, stream, path, cfg)
    mmd_raw = mmd_gated = None
    if src_test is not None and len(src_test) >= 2 and len(stream) >= 2:
        mmd_raw, mmd_gated = domain_gap(params, DataBundle(src_test, stream, src_test, stream), cfg)
    rep = ttt_adapt(params, stream.without_labels(), cfg)
    post = _eval_or_none(params, stream, path, cfg)

    out = _out(args)
    save_checkpoint(params, out / "adapted.vdtc", cfg.hash(), meta=header.get("meta"))
    meta = header.get("meta") or {}
    report = RunReport(
        config=cfg.to_dict(),
        config_hash=cfg.hash(),
        seed=cfg.seed,
        ablation="full",
        epochs=meta.get("epochs", []),
        best_epoch=meta.get("best_epoch", -1),
        stopped_epoch=meta.get("stopped_epoch", -1),
        eval_pre_ttt=pre,
        eval_post_ttt=post,
        eval_source_test=_eval_or_none(params, src_test, DomainPath.SOURCE, cfg),
        mmd_raw=mmd_raw,
        mmd_gated=mmd_gated,
        ttt=rep.to_json(),
        wall_clock=time.perf_counter() - t0,
    )
    _emit(report.to_json() | {"checkpoint": str(out / "adapted.vdtc"), "params_sha256": params_digest(params)},
          out, "ttt_report.json")
    return EXIT_OK


def _load_ckpt(path):
    if not Path(path).is_file():
        raise DataError(f"no such checkpoint: {path}")
    return load_checkpoint(path)


def cmd_eval(args) -> int:
    cfg = _config(args)
    params, _ = _load_ckpt(args.checkpoint)
    ds = load_dataset(args.data)
    _check_dim(params, ds, "data")
    if len(ds) == 0 or not ds.labeled:
        raise DataError("eval needs a non-empty, fully labeled dataset")
    path = DomainPath(args.path)
    res = evaluate(predict(params, ds.X, path, cfg.use_gate), ds.y)
    _emit({"path": path.value, "n": len(ds), **res.to_json()})
    return EXIT_OK


def _bundle(cfg: TrainConfig) -> DataBundle:
    return DataBundle(*_need(cfg, "source_train", "target_train", "source_test", "target_test"))


def cmd_ablate(args) -> int:
    cfg = _config(args)
    seeds = _seeds(args.seeds, cfg)
    abls = [AblationSpec.parse(t) for t in args.ablations.split(",") if t.strip()]
    if not abls:
        raise ConfigError("no ablations given")
    res = ablate(_bundle(cfg), cfg, abls, seeds, getattr(args, "threads", None) or 1)
    _emit(res, _out(args), "ablate.json")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {args.param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad value list {args.values!r}") from None
    res = sweep(_bundle(cfg), cfg, args.param, values, _seeds(args.seeds, cfg), getattr(args, "threads", None) or 1)
    _emit(res, _out(args), f"sweep_{args.param}.json")
    return EXIT_OK


def cmd_mmd(args) -> int:
    cfg = _config(args)
    a, b = load_dataset(args.a), load_dataset(args.b)
    if a.dim != b.dim:
        raise DataError(f"dims differ: {a.dim} vs {b.dim}")
    doc = {"raw": mmd(a.X, b.X).to_json()}
    if args.checkpoint:
        params, _ = _load_ckpt(args.checkpoint)
        _check_dim(params, a, "a")
        Fa = gated_features(params, a.X, DomainPath.SOURCE, cfg.use_gate)
        Fb = gated_features(params, b.X, DomainPath.TARGET, cfg.use_gate)
        doc["gated"] = mmd(Fa, Fb).to_json()
        doc["ratio"] = doc["gated"]["statistic"] / doc["raw"]["statistic"] if doc["raw"]["statistic"] > 0 else None
    _emit(doc)
    return EXIT_OK


def cmd_project(args) -> int:
    cfg = _config(args)
    if not args.source and not args.target:
        raise ConfigError("project needs at least one --source or --target file")
    params = _load_ckpt(args.checkpoint)[0] if args.checkpoint else None
    feats, doms, labels = [], [], []
    for files, path in ((args.source, DomainPath.SOURCE), (args.target, DomainPath.TARGET)):
        for f in files:
            ds = load_dataset(f)
            if params is not None:
                _check_dim(params, ds, f)
                feats.append(gated_features(params, ds.X, path, cfg.use_gate))
            else:
                feats.append(ds.X.astype(np.float64))
            doms.append(ds.domain)
            labels.append(ds.y)
    X = np.vstack(feats)
    if params is None and len({x.shape[1] for x in feats}) > 1:
        raise DataError("input files have different dims")
    out = _out(args)
    coords = export_projection(out / args.name, X, np.concatenate(doms), np.concatenate(labels))
    _emit({"path": str(out / args.name), "n": len(coords), "features": "gated" if params else "raw"})
    return EXIT_OK


def cmd_compare(args) -> int:
    docs = []
    for p in (args.report_a, args.report_b):
        try:
            docs.append(json.loads(Path(p).read_text()))
        except FileNotFoundError:
            raise DataError(f"no such report: {p}") from None
        except json.JSONDecodeError as e:
            raise DataError(f"{p}: {e}") from None
    res = compare(docs[0], docs[1], args.min_seeds, args.select_a, args.select_b)
    _emit(res, _out(args) if getattr(args, "out", None) else None, "compare.json")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "ttt": cmd_ttt,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "mmd": cmd_mmd,
    "project": cmd_project,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors, which matches the config-error code
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"vdt: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, ParseError, CheckpointError, OSError) as e:
        print(f"vdt: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ContractError, ShapeError, DomainError) as e:
        print(f"vdt: contract violation: {e}", file=sys.stderr)
        return EXIT_CONTRACT
    except ValueError as e:
        # remaining value errors come from inconsistent inputs (e.g. source/target dims)
        print(f"vdt: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

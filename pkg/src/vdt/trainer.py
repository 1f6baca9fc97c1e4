"""Joint source/target training: Adam, per-step objective assembly, early stopping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import losses as L
from .autodiff import ContractError
from .config import TrainConfig
from .data import UNKNOWN, Dataset, paired_batches
from .metrics import evaluate
from .model import (
    Architecture,
    DomainPath,
    ModelParams,
    classify,
    decode,
    encode,
    gate_features,
    init_params,
    predict,
    reparameterize,
)

log = logging.getLogger(__name__)

LOSS_KEYS = ("cls", "diva", "recon", "kl", "total")


@dataclass
class OptimState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams, names=None) -> "OptimState":
        names = params.names() if names is None else names
        return cls(
            {n: np.zeros_like(params[n].value) for n in names},
            {n: np.zeros_like(params[n].value) for n in names},
        )


def adam_step(
    params: ModelParams,
    state: OptimState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update using the gradients stored on each parameter.

    Only parameters tracked by ``state`` are touched.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, m in state.m.items():
        node = params[name]
        g = node.grad
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        node.value = node.value - lr * (m / c1) / (np.sqrt(v / c2) + eps)


def train_step(
    params: ModelParams,
    X_s: np.ndarray,
    y_s: np.ndarray,
    X_t: np.ndarray,
    cfg: TrainConfig,
    state: OptimState,
    rng: np.random.Generator,
) -> dict[str, float]:
    """One optimisation step on a paired source/target batch; returns component losses.

    ``X_t`` is used without labels. When the two batches differ in size the
    contrastive term uses the leading ``min(len)`` rows of each and is skipped
    for fewer than two pairs.
    """
    y_s = np.asarray(y_s)
    if np.any(y_s == UNKNOWN):
        raise ContractError("source batch contains unlabeled samples")
    w = cfg.weights
    X_s = np.asarray(X_s, dtype=np.float64)
    X_t = np.asarray(X_t, dtype=np.float64)

    st_s = encode(params, X_s, DomainPath.SOURCE)
    st_t = encode(params, X_t, DomainPath.TARGET)
    F_s = gate_features(st_s, cfg.use_gate)
    probs = classify(params, F_s)
    l_cls = L.cls_loss(probs, y_s)

    k = min(len(X_s), len(X_t))
    if w.lambda2 != 0 and k >= 2:
        mu_s, mu_t = st_s.mu, st_t.mu
        if len(X_s) != k:
            mu_s = ad.take_rows(mu_s, np.arange(k))
        if len(X_t) != k:
            mu_t = ad.take_rows(mu_t, np.arange(k))
        l_diva = L.diva_loss(mu_s, mu_t, w.tau)
    else:
        l_diva = ad.constant(0.0)

    if w.lambda3 != 0:
        Xh_s = decode(params, reparameterize(st_s, rng))
        Xh_t = decode(params, reparameterize(st_t, rng))
        l_rec = L.recon_loss(X_s, Xh_s, X_t, Xh_t)
        l_kl = L.kl_loss(st_s, st_t)
        l_dcc = L.dcc_loss(l_rec, l_kl, w.beta)
    else:
        l_rec = l_kl = l_dcc = ad.constant(0.0)

    total = L.total_loss(l_cls, l_diva, l_dcc, w)
    params.zero_grad()
    total.backward()
    adam_step(params, state, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    return {
        "cls": float(l_cls.value),
        "diva": float(l_diva.value),
        "recon": float(l_rec.value),
        "kl": float(l_kl.value),
        "total": float(total.value),
    }


@dataclass
class FitResult:
    params: ModelParams
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_f1: float = float("-inf")
    stopped_epoch: int = -1

    def to_json(self) -> dict:
        return {
            "epochs": self.epochs,
            "best_epoch": self.best_epoch,
            "best_val_f1": self.best_val_f1,
            "stopped_epoch": self.stopped_epoch,
        }


def split_validation(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng([seed, 3]).permutation(n)
    n_val = int(round(fraction * n))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def build_params(cfg: TrainConfig, input_dim: int) -> ModelParams:
    arch = Architecture.default_for(input_dim, cfg.latent_dim, cfg.classifier_hidden)
    if cfg.encoder_hidden is not None:
        arch = Architecture(input_dim, cfg.encoder_hidden, cfg.latent_dim, cfg.classifier_hidden)
    return init_params(arch, cfg.seed)


def fit(src: Dataset, tgt: Dataset, cfg: TrainConfig, params: ModelParams | None = None) -> FitResult:
    """Train on labeled ``src`` and unlabeled ``tgt``.

    A seeded fraction of ``src`` is held out; the parameters from the epoch
    with the best held-out macro-F1 are returned, and training stops once
    ``early_stop_patience`` epochs pass without a strict improvement.
    """
    if len(src) == 0 or len(tgt) == 0:
        raise ValueError("source and target datasets must be non-empty")
    if not src.labeled:
        raise ContractError("source dataset contains unlabeled samples")
    if src.dim != tgt.dim:
        raise ValueError(f"source dim {src.dim} != target dim {tgt.dim}")
    if params is None:
        params = build_params(cfg, src.dim)

    tr_idx, val_idx = split_validation(len(src), cfg.val_fraction, cfg.seed)
    if len(val_idx) == 0:
        val_idx = tr_idx
    Xs, ys = src.X[tr_idx].astype(np.float64), src.y[tr_idx]
    Xv, yv = src.X[val_idx].astype(np.float64), src.y[val_idx]
    Xt = tgt.X.astype(np.float64)  # target labels are never read

    state = OptimState.for_params(params)
    rng = np.random.default_rng([cfg.seed, 5])
    result = FitResult(params)
    best_state = params.state()

    for epoch in range(cfg.epochs):
        sums = dict.fromkeys(LOSS_KEYS, 0.0)
        steps = 0
        for bs, bt in paired_batches(len(Xs), len(Xt), cfg.batch_size, cfg.seed, epoch):
            out = train_step(params, Xs[bs], ys[bs], Xt[bt], cfg, state, rng)
            for k in LOSS_KEYS:
                sums[k] += out[k]
            steps += 1
        val = evaluate(predict(params, Xv, DomainPath.SOURCE, cfg.use_gate), yv)
        row = {k: sums[k] / steps for k in LOSS_KEYS}
        row.update(epoch=epoch, steps=steps, val_f1=val.f1_macro, val_acc=val.accuracy)
        result.epochs.append(row)
        log.debug("epoch %d %s", epoch, row)
        if val.f1_macro > result.best_val_f1:
            result.best_val_f1 = val.f1_macro
            result.best_epoch = epoch
            best_state = params.state()
        result.stopped_epoch = epoch
        if epoch - result.best_epoch >= cfg.early_stop_patience:
            break

    params.load_state(best_state)
    return result

"""Test-time training on unlabeled target data with confidence-variance filtering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import losses as L
from .config import TrainConfig
from .data import Dataset
from .model import DomainPath, ModelParams, classify, decode, encode, gate_features, reparameterize
from .trainer import OptimState, adam_step

# parameter groups that test-time training is allowed to move
TRAINABLE_PREFIXES = ("encoder.", "head.target.", "classifier.")
FROZEN_PREFIXES = ("decoder.", "head.source.")


@dataclass
class PseudoBatch:
    """Column view of a batch of pseudo-labeled target samples."""

    pseudo_label: np.ndarray  # argmax, ties to class 0
    conf: np.ndarray  # max class probability, in [0.5, 1]
    var_score: np.ndarray  # mean posterior variance over latent dims
    probs: np.ndarray
    mu: np.ndarray
    logvar: np.ndarray
    F: np.ndarray

    def __len__(self) -> int:
        return len(self.conf)

    def scores(self, alpha1: float, alpha2: float) -> np.ndarray:
        return alpha1 * self.conf + alpha2 * self.var_score


def pseudo_label(params: ModelParams, X, use_gate: bool = True) -> PseudoBatch:
    stats = encode(params, np.asarray(X, dtype=np.float64), DomainPath.TARGET)
    F = gate_features(stats, use_gate)
    probs = classify(params, F).value
    return PseudoBatch(
        pseudo_label=np.argmax(probs, axis=1),
        conf=probs.max(axis=1),
        var_score=np.exp(stats.logvar.value).mean(axis=1),
        probs=probs,
        mu=stats.mu.value,
        logvar=stats.logvar.value,
        F=F.value,
    )


def cvf_filter(batch: PseudoBatch, alpha1: float, alpha2: float, theta: float) -> np.ndarray:
    """Indices of samples whose score strictly exceeds ``theta``."""
    return np.flatnonzero(batch.scores(alpha1, alpha2) > theta)


@dataclass
class TTTReport:
    total: int = 0
    retained: int = 0
    retained_per_batch: list[int] = field(default_factory=list)
    batch_sizes: list[int] = field(default_factory=list)
    losses: list[float | None] = field(default_factory=list)
    updated: dict[str, bool] = field(
        default_factory=lambda: {"encoder": True, "heads_target": True, "classifier": True, "decoder": False, "heads_source": False}
    )

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "retained": self.retained,
            "retained_per_batch": self.retained_per_batch,
            "batch_sizes": self.batch_sizes,
            "losses": self.losses,
            "updated": self.updated,
        }


def ttt_step(
    params: ModelParams,
    X: np.ndarray,
    y_pseudo: np.ndarray,
    cfg: TrainConfig,
    state: OptimState,
    rng: np.random.Generator,
) -> float:
    """One update of the trainable groups on retained samples; returns the loss."""
    stats = encode(params, X, DomainPath.TARGET)
    probs = classify(params, gate_features(stats, cfg.use_gate))
    loss = L.cls_loss(probs, y_pseudo)
    if cfg.dcc_in_ttt:
        # single-domain consistency term: reconstruction + beta * KL of the target posterior
        Xh = decode(params, reparameterize(stats, rng))
        loss = L.ttt_loss(loss, L.dcc_loss(L.mse(X, Xh), L.kl_term(stats), cfg.beta))
    params.zero_grad()
    loss.backward()
    adam_step(params, state, cfg.ttt_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    return float(loss.value)


def ttt_adapt(params: ModelParams, stream: Dataset, cfg: TrainConfig) -> TTTReport:
    """Adapt ``params`` in place on ``stream``, batch by batch in stream order.

    Each batch is pseudo-labeled with the current parameters, filtered, and
    (when anything survives) used for one Adam step at ``cfg.ttt_lr`` on the
    encoder trunk, the target heads and the classifier. ``use_cvf=False``
    retains every sample.
    """
    X_all = stream.X.astype(np.float64)
    bsz = cfg.ttt_batch_size or cfg.batch_size
    state = OptimState.for_params(params, params.group(*TRAINABLE_PREFIXES))
    rng = np.random.default_rng([cfg.seed, 9])
    report = TTTReport()
    for _ in range(cfg.ttt_passes):
        for start in range(0, len(X_all), bsz):
            X = X_all[start : start + bsz]
            pb = pseudo_label(params, X, cfg.use_gate)
            keep = np.arange(len(pb)) if not cfg.use_cvf else cvf_filter(pb, cfg.alpha1, cfg.alpha2, cfg.theta)
            report.total += len(X)
            report.batch_sizes.append(len(X))
            report.retained_per_batch.append(int(keep.size))
            report.retained += int(keep.size)
            if keep.size == 0:
                report.losses.append(None)
                continue
            report.losses.append(ttt_step(params, X[keep], pb.pseudo_label[keep], cfg, state, rng))
    return report

"""Training objectives. Every function takes and returns autodiff nodes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Node, ShapeError
from .model import LatentStats

PROB_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 2.0
    lambda2: float = 0.5
    lambda3: float = 1.0
    beta: float = 1.5
    tau: float = 0.5

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")


def diva_loss(mu_s: Node, mu_t: Node, tau: float) -> Node:
    """Symmetric InfoNCE over the 2N means with index-aligned source/target positives.

    Each of the 2N anchors is scored against the other 2N - 1 vectors by
    cosine similarity / tau; the result is the mean of the per-anchor
    negative log-probabilities of the positive.
    """
    if mu_s.shape != mu_t.shape:
        raise ShapeError(f"diva_loss: {mu_s.shape} vs {mu_t.shape}")
    n = mu_s.shape[0]
    if n < 2:
        raise ContractError("diva_loss needs at least 2 pairs")
    if tau <= 0:
        raise ValueError("tau must be positive")
    z = ad.l2_normalize_rowwise(ad.concat_rows(mu_s, mu_t))
    sim = ad.scalar_mul(ad.matmul(z, ad.transpose(z)), 1.0 / tau)
    eye = np.eye(2 * n, dtype=bool)
    pos = np.roll(eye, n, axis=1)  # anchor i <-> i+n (mod 2n)
    lse = ad.mean(ad.logsumexp_rowwise(sim, exclude=eye))
    positive = ad.scalar_mul(ad.sum(ad.mul(sim, Node(pos.astype(np.float64)))), 1.0 / (2 * n))
    return ad.sub(lse, positive)


def mse(X, Xhat: Node) -> Node:
    X = X if isinstance(X, Node) else Node(X)
    if X.shape != Xhat.shape:
        raise ShapeError(f"mse: {X.shape} vs {Xhat.shape}")
    return ad.mean(ad.square(ad.sub(X, Xhat)))


def recon_loss(X_s, Xhat_s: Node, X_t, Xhat_t: Node) -> Node:
    return ad.add(mse(X_s, Xhat_s), mse(X_t, Xhat_t))


def kl_term(stats: LatentStats) -> Node:
    """KL(N(mu, sigma^2) || N(0, I)): summed over latent dims, averaged over the batch."""
    mu, logvar = stats
    per = ad.sub(ad.add(ad.square(mu), ad.exp(logvar)), logvar)
    per = ad.sub(per, Node(np.ones(per.shape)))
    return ad.scalar_mul(ad.mean(ad.sum_rows(per)), 0.5)


def kl_loss(stats_s: LatentStats, stats_t: LatentStats) -> Node:
    return ad.scalar_mul(ad.add(kl_term(stats_s), kl_term(stats_t)), 0.5)


def dcc_loss(recon: Node, kl: Node, beta: float) -> Node:
    return ad.add(recon, ad.scalar_mul(kl, beta))


def cls_loss(probs: Node, y) -> Node:
    """Binary cross-entropy on clamped two-class probabilities."""
    y = np.asarray(y)
    if probs.value.ndim != 2 or probs.shape[1] != 2 or probs.shape[0] != y.shape[0]:
        raise ShapeError(f"cls_loss: probs {probs.shape} vs labels {y.shape}")
    if np.any((y != 0) & (y != 1)):
        raise ContractError("cls_loss needs labels in {0, 1}")
    onehot = np.zeros(probs.shape)
    onehot[np.arange(y.shape[0]), y.astype(np.intp)] = 1.0
    logp = ad.log(ad.clip(probs, PROB_EPS, 1.0 - PROB_EPS))
    return ad.scalar_mul(ad.sum(ad.mul(logp, Node(onehot))), -1.0 / y.shape[0])


def total_loss(cls: Node, diva: Node, dcc: Node, weights: LossWeights) -> Node:
    return ad.add(
        ad.add(ad.scalar_mul(cls, weights.lambda1), ad.scalar_mul(diva, weights.lambda2)),
        ad.scalar_mul(dcc, weights.lambda3),
    )


def ttt_loss(cls_pseudo: Node, dcc: Node) -> Node:
    return ad.add(cls_pseudo, dcc)

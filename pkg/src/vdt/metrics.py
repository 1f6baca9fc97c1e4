"""Classification metrics, MMD, exact Wilcoxon signed-rank test, PCA projection."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import rankdata


@dataclass
class EvalResult:
    accuracy: float
    f1_macro: float
    f1_real: float
    f1_fake: float
    tp: list[int]  # per class (index 0 real, 1 fake)
    fp: list[int]
    tn: list[int]
    fn: list[int]

    def to_json(self) -> dict:
        return asdict(self)


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def evaluate(preds, labels) -> EvalResult:
    preds = np.asarray(preds).astype(int)
    labels = np.asarray(labels).astype(int)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels differ in length")
    if preds.size == 0:
        raise ValueError("cannot evaluate an empty prediction set")
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError("labels must be 0 or 1")
    tp, fp, tn, fn = [], [], [], []
    for c in (0, 1):
        tp.append(int(np.sum((preds == c) & (labels == c))))
        fp.append(int(np.sum((preds == c) & (labels != c))))
        tn.append(int(np.sum((preds != c) & (labels != c))))
        fn.append(int(np.sum((preds != c) & (labels == c))))
    f_real = _f1(tp[0], fp[0], fn[0])
    f_fake = _f1(tp[1], fp[1], fn[1])
    return EvalResult(
        accuracy=(tp[0] + tp[1]) / preds.size,
        f1_macro=(f_real + f_fake) / 2,
        f1_real=f_real,
        f1_fake=f_fake,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
    )


# ---------------------------------------------------------------------- MMD


@dataclass
class MMDResult:
    statistic: float
    bandwidth: float
    n: int
    m: int

    def to_json(self) -> dict:
        return asdict(self)


def _sqdist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def mmd(A, B, bandwidth: float | None = None) -> MMDResult:
    """Biased squared MMD with a Gaussian kernel.

    Bandwidth defaults to the median pairwise distance over the pooled
    sample; it falls back to 1 when every pooled point coincides.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValueError("mmd needs two 2-d samples with equal width")
    if len(A) < 2 or len(B) < 2:
        raise ValueError("mmd needs at least two points per sample")
    if bandwidth is None:
        bandwidth = float(np.median(pdist(np.vstack([A, B]))))
        if not bandwidth > 0:
            bandwidth = 1.0
    gamma = 1.0 / (2.0 * bandwidth**2)
    kxx = np.exp(-gamma * _sqdist(A, A)).mean()
    kyy = np.exp(-gamma * _sqdist(B, B)).mean()
    kxy = np.exp(-gamma * _sqdist(A, B)).mean()
    return MMDResult(max(kxx + kyy - 2.0 * kxy, 0.0), bandwidth, len(A), len(B))


# ----------------------------------------------------------------- Wilcoxon


@dataclass
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    p_value: float
    n: int  # non-zero differences used


def signed_rank_null(ranks) -> dict[int, int]:
    """Exact null distribution of W+ for the given ranks, in half-rank units.

    Returns ``{2 * w: count}`` over all ``2**n`` sign assignments; doubling
    keeps averaged (tied) ranks integral.
    """
    counts = {0: 1}
    for r in np.asarray(ranks, dtype=np.float64):
        step = int(round(2 * r))
        nxt = dict(counts)
        for w, c in counts.items():
            nxt[w + step] = nxt.get(w + step, 0) + c
        counts = nxt
    return counts


def wilcoxon_signed_rank(x, y, max_n: int = 25) -> WilcoxonResult:
    """Two-sided exact Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; tied magnitudes share their average rank.
    The p-value is ``min(1, 2 * min(P(W+ <= w), P(W+ >= w)))`` under the
    exact permutation distribution.
    """
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    if d.ndim != 1:
        raise ValueError("paired samples must be 1-d of equal length")
    d = d[d != 0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0)
    if n > max_n:
        raise ValueError(f"exact test limited to n <= {max_n}, got {n}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    null = signed_rank_null(ranks)
    total = 2**n
    w2 = int(round(2 * w_plus))
    lower = sum(c for w, c in null.items() if w <= w2) / total
    upper = sum(c for w, c in null.items() if w >= w2) / total
    return WilcoxonResult(min(w_plus, w_minus), min(1.0, 2.0 * min(lower, upper)), n)


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "ns"


# ---------------------------------------------------------------------- PCA


def pca_project(X, dims: int = 2) -> np.ndarray:
    """Coordinates of ``X`` on its top principal axes.

    Each axis is signed so that its largest-magnitude loading is positive.
    Directions with zero variance yield zero coordinates.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("pca_project needs a 2-d array")
    n, k = X.shape
    if n <= dims:
        raise ValueError(f"need more than {dims} rows, got {n}")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    out = np.zeros((n, dims))
    scale = max(float(evals[0]) if evals.size else 0.0, 1.0)
    for j in range(min(dims, k)):
        if evals[j] <= 1e-12 * scale:
            continue
        v = evecs[:, j]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        out[:, j] = Xc @ v
    return out


def export_projection(path, X, domains, labels) -> np.ndarray:
    coords = pca_project(X)
    with open(path, "w") as fh:
        fh.write("domain,label,pc1,pc2\n")
        for d, lab, (a, b) in zip(domains, labels, coords):
            fh.write(f"{int(d)},{int(lab)},{float(a)!r},{float(b)!r}\n")
    return coords


def summarize(values) -> dict:
    v = [float(x) for x in values]
    mean = sum(v) / len(v)
    sd = math.sqrt(sum((x - mean) ** 2 for x in v) / (len(v) - 1)) if len(v) > 1 else 0.0
    return {"mean": mean, "std": sd, "n": len(v)}

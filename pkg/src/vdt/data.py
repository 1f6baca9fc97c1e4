"""Feature datasets: VDTF/CSV ingestion, synthetic domain shift, seeded batching."""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

UNKNOWN = -1

VDTF_MAGIC = b"VDTF"
VDTF_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


class FormatError(ValueError):
    """Malformed binary feature file."""

    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (at byte {offset})")
        self.offset = offset


class ParseError(ValueError):
    """Malformed CSV feature file."""

    def __init__(self, msg: str, line: int):
        super().__init__(f"line {line}: {msg}")
        self.line = line


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    domain_id: int
    label: int  # 0 pristine, 1 out-of-context, UNKNOWN


@dataclass
class Dataset:
    """Column-oriented collection of samples sharing one feature dimension.

    Features are stored as float32, the on-disk precision, so that a
    save/load cycle is lossless.
    """

    X: np.ndarray
    domain: np.ndarray
    y: np.ndarray
    domain_names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float32)
        if self.X.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {self.X.shape}")
        n = self.X.shape[0]
        self.domain = np.asarray(self.domain, dtype=np.uint16).reshape(n)
        self.y = np.asarray(self.y, dtype=np.int8).reshape(n)
        if np.any((self.y != 0) & (self.y != 1) & (self.y != UNKNOWN)):
            raise ValueError("labels must be 0, 1 or -1 (unknown)")

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.X[i], int(self.domain[i]), int(self.y[i]))

    @property
    def labeled(self) -> bool:
        return bool(np.all(self.y != UNKNOWN))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.X[idx], self.domain[idx], self.y[idx], dict(self.domain_names))

    def where_domain(self, ids) -> "Dataset":
        mask = np.isin(self.domain, np.atleast_1d(ids))
        return self.subset(np.flatnonzero(mask))

    def without_labels(self) -> "Dataset":
        return Dataset(self.X, self.domain, np.full(len(self), UNKNOWN), dict(self.domain_names))

    def equals(self, other: "Dataset") -> bool:
        return (
            self.X.shape == other.X.shape
            and self.X.tobytes() == other.X.tobytes()
            and np.array_equal(self.domain, other.domain)
            and np.array_equal(self.y, other.y)
        )

    @staticmethod
    def concat(parts: list["Dataset"]) -> "Dataset":
        names: dict[int, str] = {}
        for p in parts:
            names.update(p.domain_names)
        return Dataset(
            np.vstack([p.X for p in parts]),
            np.concatenate([p.domain for p in parts]),
            np.concatenate([p.y for p in parts]),
            names,
        )


# --------------------------------------------------------------------- VDTF


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("domain", "<u2"), ("label", "i1"), ("x", "<f4", (dim,))])


def save_vdtf(ds: Dataset, path) -> None:
    rec = np.zeros(len(ds), dtype=_record_dtype(ds.dim))
    rec["domain"] = ds.domain
    rec["label"] = ds.y
    rec["x"] = ds.X
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(VDTF_MAGIC, VDTF_VERSION, ds.dim, len(ds)))
        fh.write(rec.tobytes())


def load_vdtf(path) -> Dataset:
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header", len(buf))
    magic, version, dim, count = _HEADER.unpack_from(buf, 0)
    if magic != VDTF_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VDTF_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if dim < 1:
        raise FormatError("dimension must be positive", 8)
    dt = _record_dtype(dim)
    need = _HEADER.size + count * dt.itemsize
    if len(buf) < need:
        # offset of the first incomplete record
        whole = (len(buf) - _HEADER.size) // dt.itemsize
        raise FormatError(
            f"truncated: expected {count} records, found {whole}",
            _HEADER.size + whole * dt.itemsize,
        )
    if len(buf) > need:
        raise FormatError("trailing bytes after last record", need)
    rec = np.frombuffer(buf, dtype=dt, count=count, offset=_HEADER.size)
    labels = rec["label"]
    bad = np.flatnonzero((labels != 0) & (labels != 1) & (labels != UNKNOWN))
    if bad.size:
        raise FormatError(f"invalid label {labels[bad[0]]}", _HEADER.size + bad[0] * dt.itemsize + 2)
    return Dataset(rec["x"].reshape(count, dim).copy(), rec["domain"].copy(), labels.copy())


# ---------------------------------------------------------------------- CSV


def load_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if len(header) < 3 or header[0] != "domain" or header[1] != "label":
            raise ParseError("header must be domain,label,f0..f{d-1}", 1)
        dim = len(header) - 2
        if header[2:] != [f"f{i}" for i in range(dim)]:
            raise ParseError("feature columns must be named f0..f{d-1}", 1)

        names: dict[str, int] = {}
        rows, doms, labels = [], [], []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != dim + 2:
                raise ParseError(f"expected {dim + 2} fields, got {len(row)}", line)
            dom = row[0]
            if dom not in names:
                names[dom] = len(names)
            try:
                lab = int(row[1])
                feats = [float(v) for v in row[2:]]
            except ValueError as e:
                raise ParseError(f"non-numeric field ({e})", line) from None
            if lab not in (0, 1, UNKNOWN):
                raise ParseError(f"label must be 0, 1 or -1, got {lab}", line)
            doms.append(names[dom])
            labels.append(lab)
            rows.append(feats)
    X = np.array(rows, dtype=np.float32).reshape(len(rows), dim)
    return Dataset(X, doms, labels, {i: s for s, i in names.items()})


def save_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["domain", "label", *[f"f{i}" for i in range(ds.dim)]])
        for i in range(len(ds)):
            d = int(ds.domain[i])
            w.writerow([ds.domain_names.get(d, str(d)), int(ds.y[i]), *map(repr, ds.X[i].tolist())])


# ---------------------------------------------------------------- synthetic


@dataclass
class DomainSpec:
    name: str = "domain"
    rotation: float = 0.0  # degrees, applied in the (f0, f1) plane
    shift: float = 0.0  # length of the domain's mean-shift vector
    separation: float = 3.0  # distance between the two class means
    noise: float = 1.0
    n_train: int = 1000
    n_test: int = 250

    def __post_init__(self):
        if self.noise <= 0:
            raise ValueError("noise must be positive")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("sample counts must be positive")


@dataclass
class SynthSpec:
    dim: int = 32
    domains: list[DomainSpec] = field(default_factory=lambda: [DomainSpec("source"), DomainSpec("target")])
    targets: list[int] = field(default_factory=lambda: [1])
    seed: int = 0

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("synthetic data needs dim >= 2")
        self.domains = [d if isinstance(d, DomainSpec) else DomainSpec(**d) for d in self.domains]
        if not self.domains:
            raise ValueError("at least one domain required")
        for t in self.targets:
            if not 0 <= t < len(self.domains):
                raise ValueError(f"target index {t} out of range")

    @property
    def sources(self) -> list[int]:
        return [i for i in range(len(self.domains)) if i not in self.targets]

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        raw = json.loads(text)
        unknown = set(raw) - {"dim", "domains", "targets", "seed"}
        if unknown:
            raise ValueError(f"unknown synth keys: {sorted(unknown)}")
        return cls(**raw)


def _rotation(dim: int, degrees: float) -> np.ndarray:
    R = np.eye(dim)
    a = math.radians(degrees)
    R[:2, :2] = [[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]]
    return R


def class_means(spec: SynthSpec) -> np.ndarray:
    """Array ``(n_domains, 2, dim)`` of the generating class means."""
    rng = np.random.default_rng([spec.seed, 0])
    # class axis lies in the rotation plane so the rotation actually moves it
    phi = rng.uniform(0, 2 * math.pi)
    u = np.zeros(spec.dim)
    u[:2] = math.cos(phi), math.sin(phi)
    out = np.empty((len(spec.domains), 2, spec.dim))
    for k, dom in enumerate(spec.domains):
        v = np.random.default_rng([spec.seed, 1, k]).standard_normal(spec.dim)
        v /= np.linalg.norm(v)
        R = _rotation(spec.dim, dom.rotation)
        for c in (0, 1):
            out[k, c] = R @ (c * dom.separation * u) + dom.shift * v
    return out


def synth(spec: SynthSpec, split: str = "train") -> Dataset:
    """Draw a labeled dataset covering every domain in ``spec``.

    Class ``c`` of domain ``k`` is Gaussian with mean
    ``R_k (c * sep_k * u) + shift_k * v_k`` and covariance ``noise_k**2 * I``.
    Classes are balanced (odd counts give class 0 the extra sample).
    """
    if split not in ("train", "test"):
        raise ValueError("split must be 'train' or 'test'")
    means = class_means(spec)
    parts = []
    for k, dom in enumerate(spec.domains):
        n = dom.n_train if split == "train" else dom.n_test
        rng = np.random.default_rng([spec.seed, 2, k, 0 if split == "train" else 1])
        y = np.zeros(n, dtype=np.int8)
        y[(n + 1) // 2 :] = 1
        y = y[rng.permutation(n)]
        X = means[k, y] + dom.noise * rng.standard_normal((n, spec.dim))
        parts.append(Dataset(X, np.full(n, k), y, {k: dom.name}))
    return Dataset.concat(parts)


# ----------------------------------------------------------------- batching


def batches(n: int, batch_size: int, seed: int, epoch: int, stream: int = 0) -> list[np.ndarray]:
    """Shuffled index batches for one epoch; the final short batch is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    perm = np.random.default_rng([seed, epoch, 7, stream]).permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def paired_batches(
    n_src: int, n_tgt: int, batch_size: int, seed: int, epoch: int
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Source and target index batches paired by step; the shorter stream cycles."""
    src = batches(n_src, batch_size, seed, epoch)
    tgt = batches(n_tgt, batch_size, seed, epoch, stream=1)
    for step in range(max(len(src), len(tgt))):
        yield src[step % len(src)], tgt[step % len(tgt)]

"""Network components: shared encoder trunk, per-domain Gaussian heads,
variance gate, reparameterisation, shared decoder and classifier."""

from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ShapeError


class DomainPath(str, Enum):
    SOURCE = "source"
    TARGET = "target"


class LatentStats(NamedTuple):
    mu: Node
    logvar: Node


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    encoder_hidden: tuple[int, ...] = (64, 64)
    latent_dim: int = 128
    classifier_hidden: int = 500

    @classmethod
    def default_for(cls, input_dim: int, latent_dim: int = 128, classifier_hidden: int = 500):
        hidden = (512, 256) if input_dim >= 512 else (64, 64)
        return cls(input_dim, hidden, latent_dim, classifier_hidden)

    def to_json(self) -> dict:
        d = asdict(self)
        d["encoder_hidden"] = list(self.encoder_hidden)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Architecture":
        return cls(d["input_dim"], tuple(d["encoder_hidden"]), d["latent_dim"], d["classifier_hidden"])


class ModelParams:
    """Named, ordered collection of trainable leaf nodes.

    The encoder trunk and decoder exist once and serve both domain paths;
    only the mean/log-variance heads are duplicated per domain.
    """

    def __init__(self, arch: Architecture, tensors: "OrderedDict[str, Node]"):
        self.arch = arch
        self.tensors = tensors

    def __getitem__(self, name: str) -> Node:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.items())

    def names(self) -> list[str]:
        return list(self.tensors)

    def group(self, *prefixes: str) -> list[str]:
        return [n for n in self.tensors if n.startswith(prefixes)]

    def nodes(self, names: Iterable[str] | None = None) -> list[Node]:
        names = self.names() if names is None else names
        return [self.tensors[n] for n in names]

    def zero_grad(self) -> None:
        for node in self.tensors.values():
            node.zero_grad()

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.arch, OrderedDict((k, Node(v.value.copy(), name=k)) for k, v in self.tensors.items())
        )

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.value.copy() for k, v in self.tensors.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, v in state.items():
            self.tensors[k].value = np.array(v, dtype=np.float64)

    def n_parameters(self) -> int:
        return sum(v.value.size for v in self.tensors.values())


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(arch: Architecture, seed: int) -> ModelParams:
    """Xavier-uniform weights, zero biases.

    The target heads start as exact copies of the source heads, so before any
    adaptation the target path computes what a source-only model would.
    """
    rng = np.random.default_rng([seed, 11])
    t: OrderedDict[str, Node] = OrderedDict()

    def linear(prefix, fan_in, fan_out):
        t[f"{prefix}.W"] = Node(_xavier(rng, fan_in, fan_out), name=f"{prefix}.W")
        t[f"{prefix}.b"] = Node(np.zeros(fan_out), name=f"{prefix}.b")

    dims = [arch.input_dim, *arch.encoder_hidden]
    for i in range(len(dims) - 1):
        linear(f"encoder.{i}", dims[i], dims[i + 1])
    hidden = dims[-1]
    linear("head.source.mu", hidden, arch.latent_dim)
    linear("head.source.logvar", hidden, arch.latent_dim)
    for kind in ("mu", "logvar"):
        for p in ("W", "b"):
            src = t[f"head.source.{kind}.{p}"].value
            t[f"head.target.{kind}.{p}"] = Node(src.copy(), name=f"head.target.{kind}.{p}")
    ddims = [arch.latent_dim, *reversed(arch.encoder_hidden), arch.input_dim]
    for i in range(len(ddims) - 1):
        linear(f"decoder.{i}", ddims[i], ddims[i + 1])
    linear("classifier.0", arch.latent_dim, arch.classifier_hidden)
    linear("classifier.1", arch.classifier_hidden, 2)
    return ModelParams(arch, t)


def _linear(params: ModelParams, prefix: str, x: Node) -> Node:
    return ad.add_bias(ad.matmul(x, params[f"{prefix}.W"]), params[f"{prefix}.b"])


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(np.asarray(x, dtype=np.float64))


def encode(params: ModelParams, X, path: DomainPath) -> LatentStats:
    X = _as_node(X)
    if X.value.ndim != 2 or X.shape[1] != params.arch.input_dim:
        raise ShapeError(f"encode: expected (batch, {params.arch.input_dim}), got {X.shape}")
    h = X
    for i in range(len(params.arch.encoder_hidden)):
        h = ad.relu(_linear(params, f"encoder.{i}", h))
    side = DomainPath(path).value
    return LatentStats(_linear(params, f"head.{side}.mu", h), _linear(params, f"head.{side}.logvar", h))


def gate_features(stats: LatentStats, use_gate: bool = True) -> Node:
    """``mu * (1 - sigmoid(logvar))``; with ``use_gate=False`` returns ``mu``."""
    if not use_gate:
        return stats.mu
    return ad.mul(stats.mu, ad.sub(Node(np.ones(stats.mu.shape)), ad.sigmoid(stats.logvar)))


def reparameterize(stats: LatentStats, rng: np.random.Generator) -> Node:
    eps = Node(rng.standard_normal(stats.mu.shape))
    sigma = ad.exp(ad.scalar_mul(stats.logvar, 0.5))
    return ad.add(stats.mu, ad.mul(sigma, eps))


def decode(params: ModelParams, z) -> Node:
    z = _as_node(z)
    if z.value.ndim != 2 or z.shape[1] != params.arch.latent_dim:
        raise ShapeError(f"decode: expected (batch, {params.arch.latent_dim}), got {z.shape}")
    n_layers = len(params.arch.encoder_hidden) + 1
    h = z
    for i in range(n_layers):
        h = _linear(params, f"decoder.{i}", h)
        if i < n_layers - 1:
            h = ad.relu(h)
    return h


def classifier_logits(params: ModelParams, F) -> Node:
    F = _as_node(F)
    return _linear(params, "classifier.1", ad.relu(_linear(params, "classifier.0", F)))


def classify(params: ModelParams, F) -> Node:
    """Class probabilities, one row per sample; column 1 is out-of-context."""
    return ad.softmax_rowwise(classifier_logits(params, F))


def predict_proba(params: ModelParams, X, path: DomainPath, use_gate: bool = True) -> np.ndarray:
    """Deterministic (no sampling) probabilities through the given path."""
    stats = encode(params, X, path)
    return classify(params, gate_features(stats, use_gate)).value


def predict(params: ModelParams, X, path: DomainPath, use_gate: bool = True) -> np.ndarray:
    # argmax returns the first maximum, so an exact tie goes to class 0
    return np.argmax(predict_proba(params, X, path, use_gate), axis=1)


# ---------------------------------------------------------------- checkpoint

CKPT_MAGIC = b"VDTC"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(params: ModelParams, path, config_hash: str = "", meta: dict | None = None) -> None:
    """Write ``params`` bit-exactly; ``meta`` is any JSON-serialisable extra (e.g. training history)."""
    header = {
        "architecture": params.arch.to_json(),
        "config_hash": config_hash,
        "meta": meta or {},
        "tensors": [[name, list(node.shape)] for name, node in params],
    }
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(hb)))
        fh.write(hb)
        for _, node in params:
            fh.write(node.value.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    buf = Path(path).read_bytes()
    if len(buf) < 12 or buf[:4] != CKPT_MAGIC:
        raise CheckpointError("not a VDTC checkpoint")
    version, hlen = struct.unpack_from("<II", buf, 4)
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(buf[12 : 12 + hlen])
    except ValueError:
        raise CheckpointError("corrupt checkpoint header") from None
    arch = Architecture.from_json(header["architecture"])
    offset = 12 + hlen
    tensors: OrderedDict[str, Node] = OrderedDict()
    for name, shape in header["tensors"]:
        count = int(np.prod(shape))
        if offset + 8 * count > len(buf):
            raise CheckpointError(f"checkpoint truncated in tensor {name!r}")
        arr = np.frombuffer(buf, dtype="<f8", count=count, offset=offset).reshape(shape)
        tensors[name] = Node(arr.astype(np.float64), name=name)
        offset += 8 * count
    if offset != len(buf):
        raise CheckpointError("trailing bytes after the last tensor")
    expected = init_params(arch, 0).names()
    if list(tensors) != expected:
        raise CheckpointError("checkpoint tensors do not match the architecture")
    return ModelParams(arch, tensors), header


def params_digest(params: ModelParams) -> str:
    h = hashlib.sha256()
    for name, node in params:
        h.update(name.encode())
        h.update(node.value.tobytes())
    return h.hexdigest()

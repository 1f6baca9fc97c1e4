"""Variational domain-invariant learning with test-time training on feature vectors."""

from .autodiff import ContractError, DomainError, Node, ShapeError
from .config import ConfigError, TrainConfig, load_config
from .data import UNKNOWN, Dataset, DomainSpec, SynthSpec, load_csv, load_vdtf, save_csv, save_vdtf, synth
from .metrics import evaluate, mmd, pca_project, wilcoxon_signed_rank
from .model import DomainPath, LatentStats, ModelParams, encode, gate_features, init_params, predict
from .pipeline import AblationSpec, DataBundle, RunReport, ablate, compare, run, sweep
from .trainer import fit
from .ttt import cvf_filter, pseudo_label, ttt_adapt

__version__ = "0.1.0"

__all__ = [
    "AblationSpec",
    "ConfigError",
    "ContractError",
    "DataBundle",
    "Dataset",
    "DomainError",
    "DomainPath",
    "DomainSpec",
    "LatentStats",
    "ModelParams",
    "Node",
    "RunReport",
    "ShapeError",
    "SynthSpec",
    "TrainConfig",
    "UNKNOWN",
    "ablate",
    "compare",
    "cvf_filter",
    "encode",
    "evaluate",
    "fit",
    "gate_features",
    "init_params",
    "load_config",
    "load_csv",
    "load_vdtf",
    "mmd",
    "pca_project",
    "predict",
    "pseudo_label",
    "run",
    "save_csv",
    "save_vdtf",
    "sweep",
    "synth",
    "ttt_adapt",
    "wilcoxon_signed_rank",
]

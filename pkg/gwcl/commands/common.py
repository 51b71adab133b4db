"""
Flags and loaders shared by several subcommands
"""
import argparse
from pathlib import Path
from typing import Dict

from gwcl.config import THREADS, KNN_BACKEND, read_key_values
from gwcl.errors import ConfigError
from gwcl.services.pipeline import EXPERIMENT_KEYS, ExperimentSpec
from gwcl.services.trainer import TrainConfig
from presets.loader import available_presets, load_preset

# flag dest -> TrainConfig field, for switches that only turn something on
ABLATION_FLAGS = {
    "skip_stage1": "skip_stage1",
    "skip_stage2": "skip_stage2",
    "no_gwcl": "disable_gwcl",
    "no_ce": "disable_ce",
    "no_spatial": "no_spatial_input",
}


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--config", help="Flat key=value config file")
    source.add_argument("--preset", help=f"Built-in dataset preset ({', '.join(available_presets()) or 'none found'})")


def add_train_flags(parser: argparse.ArgumentParser) -> None:
    """Training overrides; anything left unset keeps the config file value"""
    parser.add_argument("--seed", type=int, help="Seed (base seed for experiments)")
    parser.add_argument("--skip-stage1", action="store_true", help="Ablation: no supervised pre-training")
    parser.add_argument("--skip-stage2", action="store_true", help="Ablation: no mini-batch stage")
    parser.add_argument("--no-gwcl", action="store_true", help="Ablation: drop the graph-weighted contrastive loss")
    parser.add_argument("--no-ce", action="store_true", help="Ablation: drop cross-entropy in stage 2")
    parser.add_argument("--no-spatial", action="store_true", help="Ablation: feed h' only to the classifier")
    parser.add_argument("--similarity", choices=("gaussian", "indicator", "graph"), help="Pair weighting")
    parser.add_argument("--knn-backend", choices=("brute", "kdtree", "faiss"), help="Exact K-NN backend")
    parser.add_argument("--threads", type=int, help="Threads for graph construction")
    parser.add_argument("--workers", type=int, help="Data-parallel row shards for forward/backward")
    parser.add_argument("--pretrain-epochs", type=int)
    parser.add_argument("--main-epochs", type=int)
    parser.add_argument("--checkpoint-every", type=int, help="Save a checkpoint every N epochs")


def train_overrides(args: argparse.Namespace) -> Dict[str, object]:
    overrides: Dict[str, object] = {}
    for flag, key in ABLATION_FLAGS.items():
        if getattr(args, flag, False):
            overrides[key] = True
    plain = {
        "seed": "seed",
        "similarity": "similarity_kind",
        "knn_backend": "knn_backend",
        "threads": "threads",
        "workers": "workers",
        "pretrain_epochs": "pretrain_epochs",
        "main_epochs": "main_epochs",
        "checkpoint_every": "checkpoint_every",
    }
    for flag, key in plain.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return overrides


def _source_values(args: argparse.Namespace) -> Dict[str, str]:
    if getattr(args, "config", None):
        return read_key_values(Path(args.config))
    if getattr(args, "preset", None):
        return load_preset(args.preset)
    return {}


def _environment_defaults() -> TrainConfig:
    return TrainConfig(threads=THREADS, knn_backend=KNN_BACKEND)


def load_train_config(args: argparse.Namespace) -> TrainConfig:
    """defaults < config file / preset < CLI flags; experiment-only keys are ignored"""
    values = {k: v for k, v in _source_values(args).items() if k not in EXPERIMENT_KEYS}
    config = TrainConfig.from_mapping(values, _environment_defaults())
    return TrainConfig.from_mapping(train_overrides(args), config)


def load_experiment(args: argparse.Namespace) -> ExperimentSpec:
    values = _source_values(args)
    if not values:
        raise ConfigError("Pass --config or --preset")
    for flag, key in (("cube", "cube"), ("labels", "labels"), ("reps", "reps"), ("out", "out")):
        value = getattr(args, flag, None)
        if value is not None:
            values[key] = str(value)
    seed = getattr(args, "seed", None)
    if seed is not None:
        values["base_seed"] = str(seed)
    spec = ExperimentSpec.from_mapping(values, _environment_defaults())
    overrides = {k: v for k, v in train_overrides(args).items() if k != "seed"}
    spec.config = TrainConfig.from_mapping(overrides, spec.config)
    return spec


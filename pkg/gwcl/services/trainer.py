"""
Trainer
Two-stage training: supervised pre-training on the labeled pixels, then
mini-batch semi-supervised training where every batch holds all labeled
pixels plus a slice of the unlabeled pool, and the batch's pair weights are
read from the pre-built graph.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, TextIO

import numpy as np
from tqdm import tqdm

from gwcl.config import progress_disabled, read_key_values
from gwcl.errors import ConfigError, TrainingDivergedError
from gwcl.services import raw_store
from gwcl.services.features import FeatureMatrix
from gwcl.services.graph_service import SYMMETRIZE_MODES, SparseGraph, batch_submatrix
from gwcl.services.hsi_data import Split
from gwcl.services.net import (
    ACTIVATIONS,
    MlpParams,
    OptimizerState,
    adam_step,
    backward,
    forward,
    init_params,
    load_params,
    save_params,
)
from gwcl.services.objective import (
    SIMILARITY_KINDS,
    PairSet,
    ce_loss,
    gwcl_loss,
    one_hot,
    total_loss,
)

logger = logging.getLogger("gwcl.trainer")

LOG_HEADER = "step,l_gwcl,l_ce,total,pair_count"
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}
# file keys that differ from the field name
_ALIASES = {"lambda": "lam"}


@dataclass(frozen=True)
class TrainConfig:
    """Every hyperparameter of a run; defaults are the Indian Pines settings"""

    beta: int = 20
    sigma_m: float = 0.04
    sigma_n: float = 0.001
    k: int = 10
    lam: float = 8.0
    eta1: float = 0.001
    eta2: float = 0.001
    pretrain_epochs: int = 300
    pretrain_batch: int = 1
    main_epochs: int = 1000
    main_batch: int = 512
    hidden: int = 180
    activation: str = "relu"
    optimizer: str = "adam"
    seed: int = 0
    quota: int = 30
    fallback: int = 15
    normalize_spectral: bool = True
    symmetrize: str = "union"
    knn_backend: str = "brute"
    threads: int = 1
    workers: int = 1
    checkpoint_every: int = 0
    predict_batch: int = 4096
    similarity_kind: str = "graph"
    skip_stage1: bool = False
    skip_stage2: bool = False
    disable_gwcl: bool = False
    disable_ce: bool = False
    no_spatial_input: bool = False

    def __post_init__(self):
        positive = ("k", "hidden", "pretrain_batch", "main_batch", "threads", "workers", "predict_batch")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("beta", "quota", "fallback"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("sigma_m", "sigma_n", "eta1", "eta2"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("lam", "pretrain_epochs", "main_epochs", "checkpoint_every"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        choices = {
            "activation": tuple(ACTIVATIONS),
            "optimizer": ("adam", "sgd"),
            "symmetrize": SYMMETRIZE_MODES,
            "knn_backend": ("brute", "kdtree", "faiss"),
            "similarity_kind": SIMILARITY_KINDS,
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object], base: Optional["TrainConfig"] = None) -> "TrainConfig":
        """
        Build a config from string (or typed) values over ``base``

        Raises:
            ConfigError: unknown key or unparsable value
        """
        base = base or cls()
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        updates: Dict[str, object] = {}
        for raw_key, raw_value in values.items():
            key = _ALIASES.get(raw_key.lower().replace("-", "_"), raw_key.lower().replace("-", "_"))
            if key not in types:
                raise ConfigError(f"Unknown config key '{raw_key}'")
            updates[key] = _coerce(key, types[key], raw_value)
        return dataclasses.replace(base, **updates)

    @classmethod
    def from_file(cls, path: str | Path, base: Optional["TrainConfig"] = None) -> "TrainConfig":
        return cls.from_mapping(read_key_values(Path(path)), base)

    def to_lines(self) -> List[str]:
        out = []
        for f in dataclasses.fields(self):
            key = "lambda" if f.name == "lam" else f.name
            value = getattr(self, f.name)
            out.append(f"{key}={str(value).lower() if isinstance(value, bool) else value}")
        return out


def _coerce(key: str, kind, value):
    if not isinstance(value, str):
        return value
    text = value.strip()
    try:
        if kind in (bool, "bool"):
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
    except ValueError as e:
        raise ConfigError(f"Invalid value for {key}: {value!r}") from e
    return text


def training_rng(seed: int) -> np.random.Generator:
    """Batch-order generator, a separate stream from parameter init"""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 1])))


@dataclass
class TrainState:
    """Parameters, optimizer, progress counters, batch-order RNG and loss history"""

    params: MlpParams
    optimizer: OptimizerState
    rng: np.random.Generator
    stage: str = "pretrain"
    epoch: int = 0
    step: int = 0
    history: List[Dict[str, float]] = field(default_factory=list)

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_params(directory / "params", self.params)
        for name, moments in (("m", self.optimizer.m), ("v", self.optimizer.v)):
            for pname, arr in moments.items():
                raw_store.write_array(directory / f"moment_{name}_{pname}", arr)
        rng_state = self.rng.bit_generator.state
        raw_store.write_header(directory / "state", {
            "stage": self.stage,
            "epoch": self.epoch,
            "step": self.step,
            "lr": repr(self.optimizer.lr),
            "method": self.optimizer.method,
            "beta1": repr(self.optimizer.beta1),
            "beta2": repr(self.optimizer.beta2),
            "epsilon": repr(self.optimizer.epsilon),
            "optimizer_step": self.optimizer.step,
            "moments": ",".join(sorted(self.optimizer.m)),
            "rng_state": rng_state["state"]["state"],
            "rng_inc": rng_state["state"]["inc"],
            "rng_has_uint32": rng_state["has_uint32"],
            "rng_uinteger": rng_state["uinteger"],
        })
        history = np.array([[h["stage_code"], h["epoch"], h["l_gwcl"], h["l_ce"], h["total"]]
                            for h in self.history], dtype=np.float64).reshape(-1, 5)
        raw_store.write_array(directory / "history", history)
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "TrainState":
        directory = Path(directory)
        header = raw_store.read_header(directory / "state")
        params = load_params(directory / "params")
        optimizer = OptimizerState(
            lr=float(header["lr"]),
            method=header["method"],
            beta1=float(header["beta1"]),
            beta2=float(header["beta2"]),
            epsilon=float(header["epsilon"]),
            step=int(header["optimizer_step"]),
        )
        for pname in filter(None, header.get("moments", "").split(",")):
            optimizer.m[pname], _ = raw_store.read_array(directory / f"moment_m_{pname}")
            optimizer.v[pname], _ = raw_store.read_array(directory / f"moment_v_{pname}")
        bit_gen = np.random.PCG64()
        bit_gen.state = {
            "bit_generator": "PCG64",
            "state": {"state": int(header["rng_state"]), "inc": int(header["rng_inc"])},
            "has_uint32": int(header["rng_has_uint32"]),
            "uinteger": int(header["rng_uinteger"]),
        }
        history_arr, _ = raw_store.read_array(directory / "history")
        history = [
            {"stage_code": row[0], "epoch": row[1], "l_gwcl": row[2], "l_ce": row[3], "total": row[4]}
            for row in history_arr.reshape(-1, 5)
        ]
        return cls(params=params, optimizer=optimizer, rng=np.random.Generator(bit_gen),
                   stage=header["stage"], epoch=int(header["epoch"]), step=int(header["step"]), history=history)


def new_state(config: TrainConfig, input_dim: int, n_classes: int) -> TrainState:
    """Freshly initialized parameters, stage-1 optimizer and batch RNG"""
    params = init_params(input_dim, config.hidden, n_classes, config.seed, config.activation)
    optimizer = OptimizerState(lr=config.eta1, method=config.optimizer)
    return TrainState(params=params, optimizer=optimizer, rng=training_rng(config.seed))


def _check_finite(stage: str, step: int, report) -> None:
    if not np.isfinite(report.total):
        raise TrainingDivergedError(stage, step, "non-finite loss",
                                    {"l_gwcl": report.l_gwcl, "l_ce": report.l_ce})


def _record(state: TrainState, stage_code: int, sums: Dict[str, float], batches: int) -> None:
    n = max(batches, 1)
    state.history.append({
        "stage_code": stage_code,
        "epoch": state.epoch,
        "l_gwcl": sums["l_gwcl"] / n,
        "l_ce": sums["l_ce"] / n,
        "total": sums["total"] / n,
    })


def pretrain(
    features: FeatureMatrix,
    split: Split,
    config: TrainConfig,
    state: Optional[TrainState] = None,
    n_classes: Optional[int] = None,
    log: Optional[TextIO] = None,
    checkpoint_dir: Optional[Path] = None,
) -> TrainState:
    """
    Stage 1: cross-entropy only, shuffled labeled pixels, batch ``pretrain_batch``, rate eta1

    Returns:
        The (possibly resumed) state; untouched when ``skip_stage1`` is set
    """
    x = features.classifier_inputs(spatial=not config.no_spatial_input)
    c = n_classes or int(split.labeled_classes.max())
    if state is None:
        state = new_state(config, x.shape[1], c)
    if config.skip_stage1 or state.stage != "pretrain":
        return state
    if split.labeled.size == 0:
        raise TrainingDivergedError("pretrain", 0, "no labeled samples")

    x_l = x[split.labeled]
    targets = one_hot(split.labeled_classes, c)
    bs = config.pretrain_batch
    logger.info(f"Stage 1: {x_l.shape[0]} labeled x {config.pretrain_epochs} epochs (batch {bs}, eta1={config.eta1})")

    bar = tqdm(total=config.pretrain_epochs, initial=state.epoch, desc="pretrain", unit="epoch",
               disable=progress_disabled())
    while state.epoch < config.pretrain_epochs:
        sums = {"l_gwcl": 0.0, "l_ce": 0.0, "total": 0.0}
        order = state.rng.permutation(x_l.shape[0])
        batches = 0
        for start in range(0, order.size, bs):
            idx = order[start:start + bs]
            trace = forward(state.params, x_l[idx], config.workers)
            ce = ce_loss(trace.z, targets[idx])
            report, grad = total_loss((0.0, np.zeros_like(trace.z)), ce, 1.0, np.arange(idx.size))
            state.step += 1
            _check_finite("pretrain", state.step, report)
            adam_step(state.params, backward(trace, grad, config.workers), state.optimizer)
            if log is not None:
                log.write(report.as_row(state.step) + "\n")
            for key in sums:
                sums[key] += getattr(report, key)
            batches += 1
        state.epoch += 1
        _record(state, 1, sums, batches)
        bar.update(1)
        if checkpoint_dir and config.checkpoint_every and state.epoch % config.checkpoint_every == 0:
            state.save(checkpoint_dir)
    bar.close()
    return state


def compose_batches(split: Split, rng: np.random.Generator, batch_size: int) -> Iterator[np.ndarray]:
    """
    One epoch of batches: every labeled index followed by ``batch_size``
    unlabeled indices; each unlabeled index appears exactly once per epoch
    and the last batch may be smaller.
    """
    order = rng.permutation(split.unlabeled)
    if order.size == 0:
        yield split.labeled.copy()
        return
    for start in range(0, order.size, batch_size):
        yield np.concatenate([split.labeled, order[start:start + batch_size]])


def _start_main(state: TrainState, config: TrainConfig) -> None:
    # moments from stage 1 were accumulated at eta1; start stage 2 clean
    state.optimizer.reset(lr=config.eta2)
    state.stage = "main"
    state.epoch = 0


def train_main(
    features: FeatureMatrix,
    graph: SparseGraph,
    split: Split,
    state: TrainState,
    config: TrainConfig,
    n_classes: Optional[int] = None,
    log: Optional[TextIO] = None,
    checkpoint_dir: Optional[Path] = None,
) -> TrainState:
    """
    Stage 2: L = L_gwcl + lambda * L_ce over batches of all labeled + a slice
    of unlabeled pixels, pair weights taken from the graph block of the batch
    """
    if config.skip_stage2 or state.stage == "done":
        return state
    if graph.n_nodes != features.n_pixels:
        raise ValueError(f"Graph has {graph.n_nodes} nodes but features have {features.n_pixels} rows")
    if state.stage != "main":
        _start_main(state, config)

    x = features.classifier_inputs(spatial=not config.no_spatial_input)
    c = n_classes or state.params.n_classes
    n_lab = split.labeled.size
    targets = one_hot(split.labeled_classes, c)
    labeled_rows = np.arange(n_lab)
    zero_objective = config.disable_gwcl and config.disable_ce
    empty_batches = 0
    logger.info(
        f"Stage 2: {n_lab} labeled + {split.unlabeled.size} unlabeled, batch {config.main_batch}, "
        f"{config.main_epochs} epochs, lambda={config.lam}, eta2={config.eta2}"
    )

    bar = tqdm(total=config.main_epochs, initial=state.epoch, desc="main", unit="epoch",
               disable=progress_disabled())
    while state.epoch < config.main_epochs:
        sums = {"l_gwcl": 0.0, "l_ce": 0.0, "total": 0.0}
        batches = 0
        for nodes in compose_batches(split, state.rng, config.main_batch):
            trace = forward(state.params, x[nodes], config.workers)
            pair_count = 0
            if config.disable_gwcl:
                gw = (0.0, np.zeros_like(trace.z))
            else:
                pairs = PairSet.from_block(batch_submatrix(graph, nodes), config.similarity_kind)
                pair_count = len(pairs)
                if pair_count == 0:
                    empty_batches += 1
                gw = gwcl_loss(trace.z, pairs)
            if config.disable_ce or n_lab == 0:
                ce = (0.0, np.zeros((n_lab, c)))
            else:
                ce = ce_loss(trace.z[:n_lab], targets)
            report, grad = total_loss(gw, ce, config.lam, labeled_rows, pair_count)
            state.step += 1
            _check_finite("main", state.step, report)
            if not zero_objective:
                adam_step(state.params, backward(trace, grad, config.workers), state.optimizer)
            if log is not None:
                log.write(report.as_row(state.step) + "\n")
            for key in sums:
                sums[key] += getattr(report, key)
            batches += 1
        state.epoch += 1
        _record(state, 2, sums, batches)
        bar.update(1)
        if checkpoint_dir and config.checkpoint_every and state.epoch % config.checkpoint_every == 0:
            state.save(checkpoint_dir)
    bar.close()
    if empty_batches:
        logger.warning(f"{empty_batches} batches had no positive pairs")
    state.stage = "done"
    return state


def train(
    features: FeatureMatrix,
    graph: Optional[SparseGraph],
    split: Split,
    config: TrainConfig,
    n_classes: int,
    state: Optional[TrainState] = None,
    log_path: Optional[Path] = None,
    checkpoint_dir: Optional[Path] = None,
) -> TrainState:
    """Both stages with the per-step loss log written to ``log_path``"""
    log = None
    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        resuming = state is not None and log_path.exists()
        log = open(log_path, "a" if resuming else "w", encoding="utf-8")
        if not resuming:
            log.write(LOG_HEADER + "\n")
    try:
        state = pretrain(features, split, config, state, n_classes, log, checkpoint_dir)
        if graph is None and not config.skip_stage2:
            raise ValueError("Stage 2 needs a graph")
        if graph is not None:
            state = train_main(features, graph, split, state, config, n_classes, log, checkpoint_dir)
    finally:
        if log is not None:
            log.close()
    if checkpoint_dir:
        state.save(checkpoint_dir)
    return state


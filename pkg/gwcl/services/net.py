"""
Classifier network
Two-layer fully connected network with a softmax output, written directly
in numpy with analytic gradients, plus the Adam / SGD optimizers.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from gwcl.errors import DataFormatError, TrainingDivergedError
from gwcl.services import raw_store
from gwcl.services.hsi_data import make_rng

logger = logging.getLogger("gwcl.net")

PARAM_NAMES = ("W1", "b1", "W2", "b2")
DEFAULT_HIDDEN = 180


def _relu(h):
    return np.maximum(h, 0.0)


def _relu_grad(h, a):
    return (h > 0.0).astype(h.dtype)


def _tanh_grad(h, a):
    return 1.0 - a * a


def _sigmoid(h):
    return 0.5 * (1.0 + np.tanh(0.5 * h))


def _sigmoid_grad(h, a):
    return a * (1.0 - a)


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
    "sigmoid": (_sigmoid, _sigmoid_grad),
}


@dataclass
class MlpParams:
    """W1 (d x H), b1 (H), W2 (H x c), b2 (c)"""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    activation: str = "relu"

    @property
    def input_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.W2.shape[1]

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "MlpParams":
        return MlpParams(*(getattr(self, n).copy() for n in PARAM_NAMES), activation=self.activation)

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays().values())


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    h1: np.ndarray
    a1: np.ndarray
    logits: np.ndarray
    z: np.ndarray
    params: MlpParams


@dataclass
class OptimizerState:
    """Adam moments (empty for SGD), step counter and hyperparameters"""

    lr: float
    method: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def reset(self, lr: Optional[float] = None) -> None:
        """Zero moments and step counter, optionally switching the learning rate"""
        self.m.clear()
        self.v.clear()
        self.step = 0
        if lr is not None:
            self.lr = lr


def init_params(d: int, hidden: int = DEFAULT_HIDDEN, c: int = 2, seed: int = 0,
                activation: str = "relu") -> MlpParams:
    """
    Uniform fan-in/fan-out initialization (limit sqrt(6 / (fan_in + fan_out))), zero biases

    Args:
        d: Input dimension
        hidden: Hidden width
        c: Number of classes
        seed: PCG64 seed
        activation: Hidden activation name
    """
    if min(d, hidden, c) < 1:
        raise ValueError(f"d, hidden and c must be >= 1, got {d}, {hidden}, {c}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"Unknown activation '{activation}' (expected one of {sorted(ACTIVATIONS)})")
    rng = make_rng(seed)
    lim1 = np.sqrt(6.0 / (d + hidden))
    lim2 = np.sqrt(6.0 / (hidden + c))
    return MlpParams(
        W1=rng.uniform(-lim1, lim1, size=(d, hidden)),
        b1=np.zeros(hidden),
        W2=rng.uniform(-lim2, lim2, size=(hidden, c)),
        b2=np.zeros(c),
        activation=activation,
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_rows(params: MlpParams, x: np.ndarray):
    act, _ = ACTIVATIONS[params.activation]
    h1 = x @ params.W1 + params.b1
    a1 = act(h1)
    logits = a1 @ params.W2 + params.b2
    return h1, a1, logits


def _shards(n: int, workers: int) -> List[slice]:
    bounds = np.linspace(0, n, max(1, min(workers, n)) + 1).astype(int)
    return [slice(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


def forward(params: MlpParams, batch: np.ndarray, workers: int = 1) -> ForwardTrace:
    """
    z = softmax(act(x W1 + b1) W2 + b2), row-wise

    Args:
        params: Network parameters
        batch: B x d inputs
        workers: Row shards evaluated in parallel (rows are independent)
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise DataFormatError(f"Expected B x {params.input_dim} inputs, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataFormatError("Non-finite network input")
    if workers > 1 and x.shape[0] > 1:
        shards = _shards(x.shape[0], workers)
        with ThreadPoolExecutor(max_workers=len(shards)) as pool:
            parts = list(pool.map(lambda s: _forward_rows(params, x[s]), shards))
        h1, a1, logits = (np.concatenate([p[i] for p in parts]) for i in range(3))
    else:
        h1, a1, logits = _forward_rows(params, x)
    return ForwardTrace(inputs=x, h1=h1, a1=a1, logits=logits, z=softmax(logits), params=params)


def _backward_rows(params: MlpParams, x, h1, a1, dlogits) -> Dict[str, np.ndarray]:
    _, act_grad = ACTIVATIONS[params.activation]
    dh1 = (dlogits @ params.W2.T) * act_grad(h1, a1)
    return {
        "W1": x.T @ dh1,
        "b1": dh1.sum(axis=0),
        "W2": a1.T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }


def backward(trace: ForwardTrace, dl_dz: np.ndarray, workers: int = 1) -> Dict[str, np.ndarray]:
    """
    Parameter gradients of a scalar loss given dL/dz (softmax Jacobian included)

    With workers > 1 the batch is split into row shards whose partial
    gradients are summed in shard order.
    """
    dl_dz = np.asarray(dl_dz, dtype=np.float64)
    if dl_dz.shape != trace.z.shape:
        raise DataFormatError(f"dL/dz shape {dl_dz.shape} does not match z {trace.z.shape}")
    z = trace.z
    dlogits = z * (dl_dz - np.sum(dl_dz * z, axis=1, keepdims=True))
    params = trace.params
    if workers > 1 and z.shape[0] > 1:
        shards = _shards(z.shape[0], workers)
        with ThreadPoolExecutor(max_workers=len(shards)) as pool:
            parts = list(pool.map(
                lambda s: _backward_rows(params, trace.inputs[s], trace.h1[s], trace.a1[s], dlogits[s]),
                shards,
            ))
        grads = parts[0]
        for part in parts[1:]:
            grads = {k: grads[k] + part[k] for k in PARAM_NAMES}
        return grads
    return _backward_rows(params, trace.inputs, trace.h1, trace.a1, dlogits)


def adam_step(params: MlpParams, grads: Dict[str, np.ndarray], state: OptimizerState) -> None:
    """
    In-place bias-corrected Adam update (or plain SGD when state.method == "sgd")

    Raises:
        TrainingDivergedError: a gradient is non-finite
    """
    for name in PARAM_NAMES:
        if grads[name].shape != getattr(params, name).shape:
            raise DataFormatError(f"Gradient {name} has shape {grads[name].shape}")
        if not np.all(np.isfinite(grads[name])):
            raise TrainingDivergedError("optimizer", state.step + 1, f"non-finite gradient in {name}")

    state.step += 1
    if state.method == "sgd":
        for name in PARAM_NAMES:
            getattr(params, name)[...] -= state.lr * grads[name]
        return

    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    step_size = state.lr / bc1
    for name in PARAM_NAMES:
        g = grads[name]
        p = getattr(params, name)
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        state.m[name] *= state.beta1
        state.m[name] += (1.0 - state.beta1) * g
        state.v[name] *= state.beta2
        state.v[name] += (1.0 - state.beta2) * (g * g)
        p -= step_size * state.m[name] / (np.sqrt(state.v[name] / bc2) + state.epsilon)


def predict_proba(params: MlpParams, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
    """Softmax outputs for many rows, evaluated in batches"""
    batch_size = max(1, int(batch_size))
    out = np.empty((x.shape[0], params.n_classes))
    for start in range(0, x.shape[0], batch_size):
        out[start:start + batch_size] = forward(params, x[start:start + batch_size]).z
    return out


def save_params(stem: str | Path, params: MlpParams) -> None:
    stem = Path(stem)
    for name in PARAM_NAMES:
        raw_store.write_array(stem.with_name(f"{stem.name}_{name}"), getattr(params, name),
                              activation=params.activation)


def load_params(stem: str | Path) -> MlpParams:
    stem = Path(stem)
    arrays = {}
    activation = "relu"
    for name in PARAM_NAMES:
        arrays[name], header = raw_store.read_array(stem.with_name(f"{stem.name}_{name}"))
        activation = header.get("activation", activation)
    return MlpParams(**arrays, activation=activation)

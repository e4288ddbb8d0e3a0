"""Dense-network numerical core.

Small float64 MLPs with manual reverse-mode gradients, an SGD/Adam step,
and a self-describing checkpoint format. Everything here is a pure function
of its inputs: nothing mutates parameters in place.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "relu")
LOSSES = ("mse", "softmax_cross_entropy")


@dataclass
class NetParams:
    """MLP parameters. weights[l] has shape (widths[l], widths[l+1])."""

    layer_widths: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"

    def copy(self) -> "NetParams":
        return NetParams(
            layer_widths=list(self.layer_widths),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
        )

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]


@dataclass
class OptState:
    """Optimizer state. Moment accumulators mirror NetParams shapes (adam only)."""

    algorithm: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m_weights: list[np.ndarray] = field(default_factory=list)
    m_biases: list[np.ndarray] = field(default_factory=list)
    v_weights: list[np.ndarray] = field(default_factory=list)
    v_biases: list[np.ndarray] = field(default_factory=list)


def net_init(layer_widths, activation="tanh", seed=0) -> NetParams:
    """Deterministic init: fan-in scaled uniform weights, zero biases.

    A width list [n_in, n_out] (no hidden layers) is a single affine map.
    """
    widths = [int(w) for w in layer_widths]
    if len(widths) < 2:
        raise ValueError(f"need at least input and output widths, got {widths}")
    if any(w < 1 for w in widths):
        raise ValueError(f"layer widths must be >= 1, got {widths}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        scale = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-scale, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetParams(widths, weights, biases, activation)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activate_grad(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    return (z > 0.0).astype(np.float64)


def net_forward_batch(params: NetParams, inputs: np.ndarray) -> np.ndarray:
    """Forward pass on a (batch, input_dim) matrix. No activation on the output layer."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValueError(
            f"expected inputs of shape (batch, {params.input_dim}), got {x.shape}"
        )
    n_maps = len(params.weights)
    for l in range(n_maps):
        x = x @ params.weights[l] + params.biases[l]
        if l < n_maps - 1:
            x = _activate(x, params.activation)
    return x


def net_forward(params: NetParams, x) -> np.ndarray:
    """Forward pass on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.input_dim,):
        raise ValueError(f"expected input of shape ({params.input_dim},), got {x.shape}")
    return net_forward_batch(params, x[None, :])[0]


def _check_batch(params, inputs, targets, loss):
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValueError(f"bad input batch shape {x.shape}")
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if loss == "mse":
        y = np.asarray(targets, dtype=np.float64)
        if y.shape != (x.shape[0], params.output_dim):
            raise ValueError(f"bad target batch shape {y.shape}")
    else:
        y = np.asarray(targets)
        if y.shape != (x.shape[0],):
            raise ValueError(f"bad target batch shape {y.shape}")
        y = y.astype(np.int64)
        if np.any(y < 0) or np.any(y >= params.output_dim):
            raise ValueError("cross-entropy target index out of range")
    return x, y


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def net_loss(params: NetParams, inputs, targets, loss="mse") -> float:
    """Mean batch loss. mse sums squared error over output dims, averages over the batch."""
    x, y = _check_batch(params, inputs, targets, loss)
    out = net_forward_batch(params, x)
    if loss == "mse":
        return float(np.mean(np.sum((out - y) ** 2, axis=1)))
    logp = np.log(_softmax(out))
    return float(-np.mean(logp[np.arange(len(y)), y]))


def net_grad(params: NetParams, inputs, targets, loss="mse") -> NetParams:
    """Gradients of the mean batch loss w.r.t. every parameter (NetParams-shaped)."""
    x, y = _check_batch(params, inputs, targets, loss)
    n_maps = len(params.weights)
    batch = x.shape[0]

    # forward with caches
    acts = [x]  # post-activation inputs to each layer
    zs = []
    a = x
    for l in range(n_maps):
        z = a @ params.weights[l] + params.biases[l]
        zs.append(z)
        a = _activate(z, params.activation) if l < n_maps - 1 else z
        acts.append(a)

    out = acts[-1]
    if loss == "mse":
        delta = 2.0 * (out - y) / batch
    else:
        p = _softmax(out)
        p[np.arange(batch), y] -= 1.0
        delta = p / batch

    gw = [None] * n_maps
    gb = [None] * n_maps
    for l in range(n_maps - 1, -1, -1):
        gw[l] = acts[l].T @ delta
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l].T) * _activate_grad(zs[l - 1], params.activation)
    return NetParams(list(params.layer_widths), gw, gb, params.activation)


def init_opt_state(params: NetParams, algorithm="adam", learning_rate=1e-3,
                   beta1=0.9, beta2=0.999, eps=1e-8) -> OptState:
    if algorithm not in ("sgd", "adam"):
        raise ValueError(f"unknown optimizer {algorithm!r}")
    state = OptState(algorithm=algorithm, learning_rate=learning_rate,
                     beta1=beta1, beta2=beta2, eps=eps)
    if algorithm == "adam":
        state.m_weights = [np.zeros_like(w) for w in params.weights]
        state.m_biases = [np.zeros_like(b) for b in params.biases]
        state.v_weights = [np.zeros_like(w) for w in params.weights]
        state.v_biases = [np.zeros_like(b) for b in params.biases]
    return state


def opt_step(params: NetParams, grads: NetParams, state: OptState):
    """One optimizer step. Returns (new params, new state); inputs untouched."""
    if grads.layer_widths != params.layer_widths:
        raise ValueError("gradient shapes do not match parameters")
    new = params.copy()
    if state.algorithm == "sgd":
        for l in range(len(new.weights)):
            new.weights[l] -= state.learning_rate * grads.weights[l]
            new.biases[l] -= state.learning_rate * grads.biases[l]
        new_state = OptState(algorithm="sgd", learning_rate=state.learning_rate,
                             beta1=state.beta1, beta2=state.beta2, eps=state.eps,
                             step=state.step + 1)
        return new, new_state

    t = state.step + 1
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    mw, mb, vw, vb = [], [], [], []
    for l in range(len(new.weights)):
        for p, g, m_old, v_old, ms, vs in (
            (new.weights[l], grads.weights[l], state.m_weights[l], state.v_weights[l], mw, vw),
            (new.biases[l], grads.biases[l], state.m_biases[l], state.v_biases[l], mb, vb),
        ):
            m = state.beta1 * m_old + (1.0 - state.beta1) * g
            v = state.beta2 * v_old + (1.0 - state.beta2) * g * g
            p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
            ms.append(m)
            vs.append(v)
    new_state = OptState(algorithm="adam", learning_rate=state.learning_rate,
                         beta1=state.beta1, beta2=state.beta2, eps=state.eps,
                         step=t, m_weights=mw, m_biases=mb, v_weights=vw, v_biases=vb)
    return new, new_state


def save_params(path, params: NetParams, meta: dict | None = None) -> None:
    """Checkpoint: layer widths, activation and row-major arrays; round-trips bit-exactly."""
    arrays = {"layer_widths": np.asarray(params.layer_widths, dtype=np.int64)}
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"w{l}"] = np.ascontiguousarray(w, dtype=np.float64)
        arrays[f"b{l}"] = np.ascontiguousarray(b, dtype=np.float64)
    header = {"activation": params.activation, "n_maps": len(params.weights)}
    if meta is not None:
        header["meta"] = meta
    arrays["header"] = np.frombuffer(
        json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_params(path):
    """Load a checkpoint written by save_params. Returns (NetParams, meta dict or None)."""
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode("utf-8"))
        widths = [int(w) for w in data["layer_widths"]]
        weights = [data[f"w{l}"] for l in range(header["n_maps"])]
        biases = [data[f"b{l}"] for l in range(header["n_maps"])]
    params = NetParams(widths, weights, biases, header["activation"])
    return params, header.get("meta")

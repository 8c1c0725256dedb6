"""Dense MLP recorded on the autodiff tape: six activation kinds, seeded
Glorot-uniform initialization, flat parameter round-trips, JSON checkpoints."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

from .autodiff import Dual, Tape
from .errors import ConfigError, FormatError, ShapeError

LEAKY_RELU_SLOPE = 0.01
ELU_ALPHA = 1.0


class ActivationKind(str, Enum):
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    LEAKY_RELU = "leaky_relu"
    ELU = "elu"
    SWISH = "swish"


# Canonical report order.
ALL_ACTIVATIONS = (
    ActivationKind.RELU,
    ActivationKind.TANH,
    ActivationKind.SIGMOID,
    ActivationKind.LEAKY_RELU,
    ActivationKind.ELU,
    ActivationKind.SWISH,
)


def activation_eval(kind: ActivationKind, x: float) -> float:
    """Closed-form activation value, independent of the tape (oracle use)."""
    if kind == ActivationKind.RELU:
        return x if x > 0.0 else 0.0
    if kind == ActivationKind.TANH:
        return math.tanh(x)
    if kind == ActivationKind.SIGMOID:
        return 1.0 / (1.0 + math.exp(-x))
    if kind == ActivationKind.LEAKY_RELU:
        return x if x > 0.0 else LEAKY_RELU_SLOPE * x
    if kind == ActivationKind.ELU:
        return x if x > 0.0 else ELU_ALPHA * (math.exp(x) - 1.0)
    if kind == ActivationKind.SWISH:
        return x / (1.0 + math.exp(-x))
    raise ConfigError(f"unknown activation {kind!r}")


def activation_apply(tape: Tape, kind: ActivationKind, d: Dual) -> Dual:
    """Record an activation (and its tangent) from the tape primitives."""
    if kind == ActivationKind.RELU:
        return tape.dual_max0(d)
    if kind == ActivationKind.TANH:
        return tape.dual_tanh(d)
    if kind == ActivationKind.SIGMOID:
        one = tape.lift(tape.one)
        return tape.dual_div(one, tape.dual_add(one, tape.dual_exp(tape.dual_neg(d))))
    if kind == ActivationKind.LEAKY_RELU:
        slope = tape.lift(tape.const(LEAKY_RELU_SLOPE))
        neg_branch = tape.dual_mul(slope, tape.dual_max0(tape.dual_neg(d)))
        return tape.dual_sub(tape.dual_max0(d), neg_branch)
    if kind == ActivationKind.ELU:
        # max(x,0) + alpha*(exp(-max(-x,0)) - 1): the exp argument is min(x,0),
        # so the branch never overflows and vanishes exactly for x > 0.
        alpha = tape.lift(tape.const(ELU_ALPHA))
        neg_part = tape.dual_max0(tape.dual_neg(d))
        decayed = tape.dual_exp(tape.dual_neg(neg_part))
        neg_branch = tape.dual_mul(alpha, tape.dual_sub(decayed, tape.lift(tape.one)))
        return tape.dual_add(tape.dual_max0(d), neg_branch)
    if kind == ActivationKind.SWISH:
        one = tape.lift(tape.one)
        sig = tape.dual_div(one, tape.dual_add(one, tape.dual_exp(tape.dual_neg(d))))
        return tape.dual_mul(d, sig)
    raise ConfigError(f"unknown activation {kind!r}")


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    biases: np.ndarray   # (out_dim,)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Mlp:
    """Feed-forward net, hidden layers activated, linear output layer."""

    layers: list[DenseLayer]
    activation: ActivationKind

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.layers[0].in_dim,) + tuple(l.out_dim for l in self.layers)


def param_count(dims: Sequence[int]) -> int:
    return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


def init_glorot(dims: Sequence[int], seed: int, activation: ActivationKind = ActivationKind.TANH) -> Mlp:
    """Weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero, seeded."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2:
        raise ConfigError(f"need at least input and output dims, got {dims}")
    if dims[0] != 2 or dims[-1] != 1:
        raise ConfigError(f"network maps 2 inputs to 1 output, got dims {dims}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append(DenseLayer(w, np.zeros(fan_out)))
    return Mlp(layers, ActivationKind(activation))


def emit_params(mlp: Mlp, tape: Tape) -> list[tuple[list[list[int]], list[int]]]:
    """Record every weight and bias as a variable node; ids in flat order."""
    out = []
    for layer in mlp.layers:
        w_ids = [[tape.var(float(w)) for w in row] for row in layer.weights]
        b_ids = [tape.var(float(b)) for b in layer.biases]
        out.append((w_ids, b_ids))
    return out


def param_node_ids(params: list[tuple[list[list[int]], list[int]]]) -> list[int]:
    """Flatten emitted param node ids in get_params order."""
    flat = []
    for w_ids, b_ids in params:
        for row in w_ids:
            flat.extend(row)
        flat.extend(b_ids)
    return flat


InputPair = Union[Sequence[int], Sequence[Dual]]


def forward(mlp: Mlp, tape: Tape, inputs: InputPair, params=None):
    """Record the network on the tape.

    Plain node-id inputs return the output node id; Dual inputs return a Dual
    whose tangent is the network's directional derivative.
    """
    if len(inputs) != 2:
        raise ShapeError(f"network takes 2 inputs, got {len(inputs)}")
    plain = not isinstance(inputs[0], Dual)
    h = [d if isinstance(d, Dual) else tape.lift(d) for d in inputs]
    if params is None:
        params = emit_params(mlp, tape)
    last = len(mlp.layers) - 1
    for li, (w_ids, b_ids) in enumerate(params):
        if len(w_ids[0]) != len(h):
            raise ShapeError(f"layer {li} expects {len(w_ids[0])} inputs, got {len(h)}")
        out = []
        for r in range(len(w_ids)):
            acc = tape.dual_mul(tape.lift(w_ids[r][0]), h[0])
            for c in range(1, len(h)):
                acc = tape.dual_add(acc, tape.dual_mul(tape.lift(w_ids[r][c]), h[c]))
            acc = tape.dual_add(acc, tape.lift(b_ids[r]))
            if li != last:
                acc = activation_apply(tape, mlp.activation, acc)
            out.append(acc)
        h = out
    result = h[0]
    return result.primal if plain else result


def preactivations(mlp: Mlp, x: float, t: float) -> list[np.ndarray]:
    """Hidden-layer preactivation values by plain numpy (kink-avoidance probes)."""
    h = np.array([x, t])
    pre = []
    for li, layer in enumerate(mlp.layers):
        z = layer.weights @ h + layer.biases
        if li == len(mlp.layers) - 1:
            break
        pre.append(z)
        h = np.array([activation_eval(mlp.activation, v) for v in z])
    return pre


def get_params(mlp: Mlp) -> np.ndarray:
    """Flat parameter vector: layer-major, weights row-major, then biases."""
    return np.concatenate([np.concatenate([l.weights.ravel(), l.biases]) for l in mlp.layers])


def set_params(mlp: Mlp, vec: np.ndarray) -> None:
    vec = np.asarray(vec, dtype=float)
    expect = param_count(mlp.dims)
    if vec.ndim != 1 or vec.size != expect:
        raise ShapeError(f"parameter vector length {vec.size}, expected {expect}")
    pos = 0
    for layer in mlp.layers:
        nw = layer.weights.size
        layer.weights = vec[pos : pos + nw].reshape(layer.weights.shape).copy()
        pos += nw
        nb = layer.biases.size
        layer.biases = vec[pos : pos + nb].copy()
        pos += nb


def save_checkpoint(mlp: Mlp, seed: int, path) -> None:
    """JSON checkpoint {dims, activation, params, seed}; params serialized at
    17 significant digits so reloads are bit-exact."""
    params = get_params(mlp)
    body = ",".join(format(v, ".17g") for v in params)
    text = (
        "{"
        + f'"dims": {json.dumps(list(mlp.dims))}, '
        + f'"activation": "{mlp.activation.value}", '
        + f'"seed": {int(seed)}, '
        + f'"params": [{body}]'
        + "}\n"
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def load_checkpoint(path) -> tuple[Mlp, int]:
    with open(path, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    try:
        dims = [int(d) for d in blob["dims"]]
        kind = ActivationKind(blob["activation"])
        seed = int(blob["seed"])
        params = np.asarray(blob["params"], dtype=float)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad checkpoint file {path}: {exc}") from None
    mlp = init_glorot(dims, seed, kind)
    set_params(mlp, params)
    return mlp, seed

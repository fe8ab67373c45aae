"""Feed-forward networks with hand-written reverse mode, Adam, and a
central-difference gradient checker."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import ShapeError, matmul

ACTIVATIONS = ("tanh", "sigmoid", "linear")


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return sigmoid(z)
    return z


def _activation_grad(a: np.ndarray, kind: str) -> np.ndarray | None:
    """Derivative of the activation expressed through its output ``a``."""
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "sigmoid":
        return a * (1.0 - a)
    return None


@dataclass
class Layer:
    weight: np.ndarray  # (in, out)
    bias: np.ndarray  # (out,)
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match weight {self.weight.shape}"
            )

    @property
    def n_in(self) -> int:
        return self.weight.shape[0]

    @property
    def n_out(self) -> int:
        return self.weight.shape[1]


@dataclass
class Tape:
    """Forward intermediates for one pass; consumed by a single backward."""

    inputs: list[np.ndarray]
    preacts: list[np.ndarray]
    outputs: list[np.ndarray]
    used: bool = False

    @property
    def logits(self) -> np.ndarray:
        return self.preacts[-1]


class MLP:
    def __init__(self, layers: Sequence[Layer]):
        if not layers:
            raise ValueError("an MLP needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i - 1].n_out != layers[i].n_in:
                raise ShapeError(
                    f"layer {i - 1} outputs {layers[i - 1].n_out} but layer {i} "
                    f"expects {layers[i].n_in}"
                )
        self.layers = list(layers)

    @classmethod
    def glorot(
        cls,
        sizes: Sequence[int],
        activations: Sequence[str],
        rng: np.random.Generator,
    ) -> "MLP":
        """Glorot-uniform weights, zero biases. ``sizes`` includes the input width."""
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        layers = []
        for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            layers.append(Layer(w, np.zeros(fan_out), act))
        return cls(layers)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "MLP":
        return MLP([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, Tape]:
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"input shape {x.shape} does not fit network input width {self.n_in}")
        tape = Tape([], [], [])
        a = x
        for layer in self.layers:
            tape.inputs.append(a)
            z = matmul(a, layer.weight) + layer.bias
            a = _activate(z, layer.activation)
            tape.preacts.append(z)
            tape.outputs.append(a)
        return a, tape

    def backward(
        self, tape: Tape, output_grad: np.ndarray, *, wrt_logits: bool = False
    ) -> tuple[list[np.ndarray], np.ndarray]:
        """Parameter gradients (aligned with ``params()``) and the input gradient.

        With ``wrt_logits`` the incoming gradient is taken with respect to the
        final pre-activation instead of the final output.
        """
        if tape.used:
            raise RuntimeError("tape already consumed by a previous backward pass")
        if output_grad.shape != tape.outputs[-1].shape:
            raise ShapeError(
                f"output gradient {output_grad.shape} does not match output {tape.outputs[-1].shape}"
            )
        tape.used = True
        grads: list[np.ndarray] = [None] * (2 * len(self.layers))  # type: ignore[list-item]
        g = output_grad
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            if not (wrt_logits and idx == len(self.layers) - 1):
                d = _activation_grad(tape.outputs[idx], layer.activation)
                if d is not None:
                    g = g * d
            grads[2 * idx] = matmul(tape.inputs[idx].T, g)
            grads[2 * idx + 1] = g.sum(axis=0)
            g = matmul(g, layer.weight.T)
        return grads, g


@dataclass
class AdamState:
    lr: float = 0.003
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = 0.003) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState
) -> tuple[Sequence[np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ShapeError("params, grads and Adam accumulators differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"param {p.shape}, grad {g.shape}, moment {m.shape} disagree")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest elementwise |a - n| / max(|a|, |n|, floor).

    The floor keeps entries that are zero up to rounding from dominating.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def check_gradients(
    params: Sequence[np.ndarray],
    analytic: Sequence[np.ndarray],
    loss: Callable[[], float],
    h: float = 1e-5,
    floor: float = 1e-6,
) -> float:
    """Compare ``analytic`` with central differences of ``loss()``.

    Each parameter entry is perturbed in place and restored; ``loss`` must
    read the current parameter values and be deterministic.
    """
    if not h > 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    worst = 0.0
    for p, g in zip(params, analytic):
        numeric = np.zeros_like(p)
        flat = p.reshape(-1)
        nflat = numeric.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = loss()
            flat[k] = orig - h
            down = loss()
            flat[k] = orig
            nflat[k] = (up - down) / (2.0 * h)
        worst = max(worst, relative_error(g, numeric, floor))
    return worst


def finite_diff_check(
    net: MLP,
    loss: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Max relative error between ``backward`` and central differences.

    ``loss`` maps the network output to ``(value, d value / d output)``.
    """
    if not h > 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    out, tape = net.forward(x)
    _, dout = loss(out)
    grads, _ = net.backward(tape, dout)
    return check_gradients(net.params(), grads, lambda: loss(net.forward(x)[0])[0], h)

"""Minimal trainable encoders with hand-derived gradients.

The synthetic benchmark needs nothing more than a single linear layer;
a small ReLU MLP is supported for precomputed feature vectors.  Backward
passes are written out explicitly (no autodiff) and are checked against
central finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("none", "relu")


@dataclass(frozen=True)
class EncoderSpec:
    """Layer sizes (input dim first) plus the hidden-layer activation."""

    layer_sizes: tuple[int, ...]
    activation: str = "none"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("layer_sizes needs at least input and output dims")
        if any(s <= 0 for s in sizes):
            raise ValueError("layer sizes must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1


@dataclass
class EncoderParams:
    """Per-layer weight matrices (fan_out x fan_in) and bias vectors."""

    spec: EncoderSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def check_shapes(self):
        sizes = self.spec.layer_sizes
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise ValueError(f"layer {l} shapes inconsistent with spec")
        if not all(np.all(np.isfinite(w)) for w in self.weights):
            raise ValueError("non-finite weights")
        if not all(np.all(np.isfinite(b)) for b in self.biases):
            raise ValueError("non-finite biases")


@dataclass
class Gradients:
    """dL/dtheta, shape-congruent with the parameters it differentiates."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: EncoderParams) -> "Gradients":
        return cls(
            weights=[np.zeros_like(w) for w in params.weights],
            biases=[np.zeros_like(b) for b in params.biases],
        )

    def add_(self, other: "Gradients"):
        for w, ow in zip(self.weights, other.weights):
            w += ow
        for b, ob in zip(self.biases, other.biases):
            b += ob


@dataclass
class ActivationTrace:
    """Everything forward() saw, as needed by backward()."""

    x: np.ndarray                     # batch input, rows are items
    pre: list[np.ndarray]             # per-layer pre-activations
    post: list[np.ndarray]            # per-layer outputs after activation


def init_params(spec: EncoderSpec, rng: np.random.Generator) -> EncoderParams:
    """Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases."""
    weights, biases = [], []
    sizes = spec.layer_sizes
    for l in range(spec.n_layers):
        fan_in, fan_out = sizes[l], sizes[l + 1]
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return EncoderParams(spec=spec, weights=weights, biases=biases)


def forward_batch(
    params: EncoderParams, x: np.ndarray
) -> tuple[np.ndarray, ActivationTrace]:
    """Layered affine(+activation) map over a batch of row vectors.

    Hidden layers apply the spec's activation; the output layer is
    always affine.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.spec.input_dim:
        raise ValueError(
            f"input dim mismatch: expected (*, {params.spec.input_dim}), "
            f"got {x.shape}"
        )
    pre, post = [], []
    h = x
    last = params.spec.n_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        pre.append(z)
        if l < last and params.spec.activation == "relu":
            h = np.maximum(z, 0.0)
        else:
            h = z
        post.append(h)
    return h, ActivationTrace(x=x, pre=pre, post=post)


def forward(params: EncoderParams, x) -> tuple[np.ndarray, ActivationTrace]:
    """Single-vector convenience wrapper around forward_batch."""
    x = np.asarray(x, dtype=np.float64)
    y, trace = forward_batch(params, x[np.newaxis, :])
    return y[0], trace


def backward_batch(
    params: EncoderParams, trace: ActivationTrace, grad_out: np.ndarray
) -> Gradients:
    """Exact analytic gradient, summed over the batch.

    grad_out holds dL/d(embedding) per item; the return value is
    dL/dtheta for the scalar L.
    """
    grad_out = np.asarray(grad_out, dtype=np.float64)
    n_layers = params.spec.n_layers
    if len(trace.pre) != n_layers:
        raise ValueError("trace does not match the parameter stack")
    if grad_out.shape != trace.post[-1].shape:
        raise ValueError("grad_out shape does not match the traced output")
    d_weights = [None] * n_layers
    d_biases = [None] * n_layers
    gh = grad_out
    last = n_layers - 1
    for l in range(last, -1, -1):
        if l < last and params.spec.activation == "relu":
            gz = gh * (trace.pre[l] > 0.0)     # relu' = 1[z>0], 0 at the kink
        else:
            gz = gh
        inp = trace.x if l == 0 else trace.post[l - 1]
        d_weights[l] = gz.T @ inp
        d_biases[l] = gz.sum(axis=0)
        gh = gz @ params.weights[l]
    return Gradients(weights=d_weights, biases=d_biases)


def backward(
    params: EncoderParams, trace: ActivationTrace, grad_out
) -> Gradients:
    """Single-vector convenience wrapper around backward_batch."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    return backward_batch(params, trace, grad_out[np.newaxis, :])


def _check_congruent(params: EncoderParams, grads: Gradients):
    for w, gw in zip(params.weights, grads.weights):
        if w.shape != gw.shape:
            raise ValueError("gradient shapes do not match parameters")
        if not np.all(np.isfinite(gw)):
            raise ValueError("non-finite gradients")
    for b, gb in zip(params.biases, grads.biases):
        if b.shape != gb.shape:
            raise ValueError("gradient shapes do not match parameters")
        if not np.all(np.isfinite(gb)):
            raise ValueError("non-finite gradients")


def sgd_step(params: EncoderParams, grads: Gradients, lr: float) -> EncoderParams:
    """theta <- theta - lr * grad."""
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    _check_congruent(params, grads)
    return EncoderParams(
        spec=params.spec,
        weights=[w - lr * gw for w, gw in zip(params.weights, grads.weights)],
        biases=[b - lr * gb for b, gb in zip(params.biases, grads.biases)],
    )


@dataclass
class AdamState:
    m_weights: list[np.ndarray] = field(default_factory=list)
    v_weights: list[np.ndarray] = field(default_factory=list)
    m_biases: list[np.ndarray] = field(default_factory=list)
    v_biases: list[np.ndarray] = field(default_factory=list)
    t: int = 0


def adam_step(
    params: EncoderParams,
    grads: Gradients,
    state: AdamState | None = None,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[EncoderParams, AdamState]:
    """Standard Adam update with bias correction."""
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    _check_congruent(params, grads)
    if state is None or state.t == 0:
        state = AdamState(
            m_weights=[np.zeros_like(w) for w in params.weights],
            v_weights=[np.zeros_like(w) for w in params.weights],
            m_biases=[np.zeros_like(b) for b in params.biases],
            v_biases=[np.zeros_like(b) for b in params.biases],
            t=0,
        )
    t = state.t + 1
    new_weights, new_biases = [], []
    for l in range(params.spec.n_layers):
        state.m_weights[l] = beta1 * state.m_weights[l] + (1 - beta1) * grads.weights[l]
        state.v_weights[l] = beta2 * state.v_weights[l] + (1 - beta2) * grads.weights[l] ** 2
        m_hat = state.m_weights[l] / (1 - beta1**t)
        v_hat = state.v_weights[l] / (1 - beta2**t)
        new_weights.append(params.weights[l] - lr * m_hat / (np.sqrt(v_hat) + eps))

        state.m_biases[l] = beta1 * state.m_biases[l] + (1 - beta1) * grads.biases[l]
        state.v_biases[l] = beta2 * state.v_biases[l] + (1 - beta2) * grads.biases[l] ** 2
        m_hat = state.m_biases[l] / (1 - beta1**t)
        v_hat = state.v_biases[l] / (1 - beta2**t)
        new_biases.append(params.biases[l] - lr * m_hat / (np.sqrt(v_hat) + eps))
    state.t = t
    return EncoderParams(params.spec, new_weights, new_biases), state


def save_checkpoint(params: EncoderParams, path):
    """JSON checkpoint: layer sizes, activation, row-major weights.

    Python float repr is shortest-roundtrip, so the file reloads to
    bitwise-identical parameters.
    """
    payload = {
        "layer_sizes": list(params.spec.layer_sizes),
        "activation": params.spec.activation,
        "layers": [
            {"weight": w.tolist(), "bias": b.tolist()}
            for w, b in zip(params.weights, params.biases)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> EncoderParams:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    spec = EncoderSpec(
        layer_sizes=tuple(payload["layer_sizes"]),
        activation=payload["activation"],
    )
    params = EncoderParams(
        spec=spec,
        weights=[np.asarray(l["weight"], dtype=np.float64) for l in payload["layers"]],
        biases=[np.asarray(l["bias"], dtype=np.float64) for l in payload["layers"]],
    )
    params.check_shapes()
    return params

"""Small dense classifier: forward pass, accuracy, cross-entropy gradient, Adam.

Parameters are kept as a list of ``(weight, bias)`` pairs, one per dense
layer, with ``weight`` shaped ``(fan_in, fan_out)`` so a batch ``X`` of shape
``(n, d)`` maps through ``X @ W + b``.  Hidden layers use ReLU; the output
layer is a softmax over the class count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DivergenceError, NumericError, ShapeMismatchError
from .rng import stream

LayeredParams = List[Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class ModelSpec:
    layer_widths: Tuple[int, ...]
    hidden_activation: str = "relu"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ConfigError("layer_widths needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise ConfigError(f"layer widths must be positive, got {widths}")
        if self.hidden_activation != "relu":
            raise ConfigError(f"unsupported hidden activation {self.hidden_activation!r}")

    @property
    def n_inputs(self) -> int:
        return self.layer_widths[0]

    @property
    def n_classes(self) -> int:
        return self.layer_widths[-1]

    @property
    def layer_shapes(self) -> Tuple[Tuple[int, int], ...]:
        w = self.layer_widths
        return tuple((w[i], w[i + 1]) for i in range(len(w) - 1))

    def parameter_count(self) -> int:
        return sum(r * c + c for r, c in self.layer_shapes)

    @classmethod
    def from_layer_shapes(cls, shapes: Sequence[Tuple[int, int]]) -> "ModelSpec":
        """Rebuild the spec implied by a sequence of weight shapes."""
        shapes = [tuple(s) for s in shapes]
        if not shapes:
            raise ShapeMismatchError("no layers")
        for (_, c), (r, _) in zip(shapes, shapes[1:]):
            if c != r:
                raise ShapeMismatchError(f"layer shapes do not chain: {shapes}")
        return cls((shapes[0][0],) + tuple(c for _, c in shapes))


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    epochs: int = 50
    learning_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if not self.adam_epsilon > 0:
            raise ConfigError("adam_epsilon must be positive")


def check_params(params: LayeredParams, spec: ModelSpec) -> None:
    if len(params) != len(spec.layer_shapes):
        raise ShapeMismatchError(
            f"expected {len(spec.layer_shapes)} layers, got {len(params)}"
        )
    for i, ((w, b), shape) in enumerate(zip(params, spec.layer_shapes)):
        if w.shape != shape or b.shape != (shape[1],):
            raise ShapeMismatchError(
                f"layer {i}: expected weight {shape} and bias ({shape[1]},), "
                f"got {w.shape} and {b.shape}"
            )


def _as_batch(batch, spec: ModelSpec) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != spec.n_inputs:
        raise ShapeMismatchError(
            f"batch must be (n, {spec.n_inputs}), got shape {batch.shape}"
        )
    return batch


def _forward_cache(params, X):
    """Pre-activations of every layer, plus the last hidden activation chain."""
    acts = [X]
    pre = []
    h = X
    last = len(params) - 1
    for i, (w, b) in enumerate(params):
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = np.maximum(z, 0.0)
            acts.append(h)
    return acts, pre


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward(params: LayeredParams, spec: ModelSpec, batch) -> np.ndarray:
    """Class probabilities, one row per sample."""
    check_params(params, spec)
    X = _as_batch(batch, spec)
    _, pre = _forward_cache(params, X)
    return np.exp(_log_softmax(pre[-1]))


def predict(params: LayeredParams, spec: ModelSpec, X) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(forward(params, spec, X), axis=1)


def accuracy(params: LayeredParams, spec: ModelSpec, X, y) -> float:
    y = np.asarray(y)
    X = np.asarray(X)
    if y.shape[0] == 0 or X.shape[0] == 0:
        raise ValueError("accuracy needs at least one sample")
    if X.ndim != 2 or y.shape[0] != X.shape[0]:
        raise ShapeMismatchError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    correct = int(np.count_nonzero(predict(params, spec, X) == y))
    return correct / y.shape[0]


def loss_and_gradient(params: LayeredParams, spec: ModelSpec, batch_X, batch_y):
    """Mean cross-entropy over the batch and its gradient per layer."""
    check_params(params, spec)
    X = _as_batch(batch_X, spec)
    y = np.asarray(batch_y, dtype=np.int64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if y.shape != (n,):
        raise ShapeMismatchError(f"{n} rows but labels of shape {y.shape}")

    acts, pre = _forward_cache(params, X)
    for i, z in enumerate(pre):
        if not np.all(np.isfinite(z)):
            raise NumericError(f"non-finite pre-activation in layer {i}")
    logp = _log_softmax(pre[-1])
    rows = np.arange(n)
    loss = -float(np.mean(logp[rows, y]))

    delta = np.exp(logp)
    delta[rows, y] -= 1.0
    delta /= n
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        w, _ = params[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ w.T) * (pre[i - 1] > 0)
    for i, (gw, gb) in enumerate(grads):
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericError(f"non-finite gradient in layer {i}")
    return loss, grads


def init_params(spec: ModelSpec, rng: np.random.Generator) -> LayeredParams:
    """Glorot-uniform weights, zero biases."""
    params = []
    for fan_in, fan_out in spec.layer_shapes:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params.append((w, np.zeros(fan_out)))
    return params


@dataclass
class _Adam:
    lr: float
    beta1: float
    beta2: float
    eps: float
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def finite(self):
        return all(np.all(np.isfinite(a)) for a in self.m + self.v)

    def step(self, params, grads):
        if not self.m:
            self.m = [np.zeros_like(p) for layer in params for p in layer]
            self.v = [np.zeros_like(p) for layer in params for p in layer]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        flat_p = [p for layer in params for p in layer]
        flat_g = [g for layer in grads for g in layer]
        out = []
        for k, (p, g) in enumerate(zip(flat_p, flat_g)):
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / c1
            v_hat = self.v[k] / c2
            out.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return [(out[2 * i], out[2 * i + 1]) for i in range(len(params))]


def train(spec: ModelSpec, dataset, cfg: TrainConfig) -> LayeredParams:
    """Mini-batch Adam on cross-entropy over ``dataset``'s training partition.

    Returns the final-epoch parameters.  Initialization and per-epoch
    shuffling draw from separate streams of ``cfg.seed``, so the result is a
    pure function of the inputs.
    """
    X = _as_batch(dataset.X_train, spec)
    y = np.asarray(dataset.y_train, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("empty training partition")
    if y.shape != (X.shape[0],):
        raise ShapeMismatchError(f"{X.shape[0]} rows but labels of shape {y.shape}")
    if y.min() < 0 or y.max() >= spec.n_classes:
        raise ShapeMismatchError(
            f"labels must lie in [0, {spec.n_classes}), got range [{y.min()}, {y.max()}]"
        )

    params = init_params(spec, stream(cfg.seed, "weights"))
    order_rng = stream(cfg.seed, "data_order")
    opt = _Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        perm = order_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            try:
                loss, grads = loss_and_gradient(params, spec, X[idx], y[idx])
            except NumericError as exc:
                raise DivergenceError(epoch, f"training diverged at epoch {epoch}: {exc}") from exc
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            with np.errstate(over="ignore", invalid="ignore"):
                params = opt.step(params, grads)
            if not opt.finite() or not all(np.all(np.isfinite(p)) for layer in params for p in layer):
                raise DivergenceError(epoch, f"training diverged at epoch {epoch}: optimizer state overflowed")
    return params

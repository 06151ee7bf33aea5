"""Siamese chart network: dense layers, loss, gradients, Adam training.

The forward map g sends a CSI feature to a 2-D chart point.  Training
minimizes the squared mismatch between pairwise chart distances and the
target dissimilarities, with both branches of each pair sharing the same
parameters.  Everything here is plain numpy; gradients are hand-derived.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ._pairs import decode_pair_indices, sample_pair_indices

DEFAULT_WIDTHS = (256, 128, 64, 32, 16, 2)


class NanLossError(FloatingPointError):
    """Training loss left the finite range."""


@dataclass
class ChartModel:
    """Dense network parameters; weights[l] has shape (fan_in, fan_out).

    All hidden layers use ReLU; the 2-D output layer is linear.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty and parallel")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {l}: weight {w.shape} and bias {b.shape} mismatch")
            if l and self.weights[l - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {l}: fan-in does not match previous fan-out")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_widths(self) -> tuple[int, ...]:
        return (self.input_dim,) + tuple(w.shape[1] for w in self.weights)

    def copy(self) -> "ChartModel":
        return ChartModel(weights=[w.copy() for w in self.weights],
                          biases=[b.copy() for b in self.biases])


@dataclass(frozen=True)
class TrainConfig:
    """Adam hyperparameters and the pair-sampling schedule.

    Each step draws ``batch_pairs`` distinct sample pairs uniformly
    (without replacement within the step).  ``steps_per_epoch=None``
    covers all pairs once per epoch in expectation; profiles that need a
    lighter schedule set it explicitly.
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_pairs: int = 1024
    epochs: int = 200
    steps_per_epoch: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be > 0")
        if self.batch_pairs < 1 or self.epochs < 0:
            raise ValueError("batch_pairs must be >= 1 and epochs >= 0")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be >= 1 when set")


@dataclass
class TrainReport:
    """Per-epoch mean pair loss plus schedule facts and wall time."""

    epoch_losses: list[float] = field(default_factory=list)
    final_loss: float = float("nan")
    steps_per_epoch: int = 0
    total_pairs: int = 0
    wall_seconds: float = 0.0


def init_glorot(layer_widths=None, seed: int = 0) -> ChartModel:
    """Initialize weights Glorot-uniform in +-sqrt(6/(fan_in+fan_out)),
    biases zero.

    ``layer_widths`` lists all widths including the input dimension, e.g.
    ``(512, 256, 128, 64, 32, 16, 2)``.  When only the feature dimension
    is known, pass ``(input_dim, *DEFAULT_WIDTHS)``.
    """
    if layer_widths is None:
        raise ValueError("layer_widths is required, e.g. (input_dim, *DEFAULT_WIDTHS)")
    widths = tuple(int(w) for w in layer_widths)
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ValueError(f"need >= 2 positive layer widths, got {widths}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ChartModel(weights=weights, biases=biases)


def forward(model: ChartModel, features) -> np.ndarray:
    """Map features to chart points.

    Accepts one feature vector (D,) or a batch (n, D); returns (2,) or
    (n, 2) correspondingly.
    """
    x = np.asarray(getattr(features, "values", features), dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.input_dim:
        raise ValueError(f"feature dim {x.shape[1]} != model input dim {model.input_dim}")
    a = x
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ w + b
        if l != last:
            np.maximum(a, 0.0, out=a)
    return a[0] if single else a


def _forward_cached(model: ChartModel, x: np.ndarray):
    """Forward pass keeping pre-activations for backprop."""
    zs = []
    a = x
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        zs.append(z)
        a = np.maximum(z, 0.0) if l != last else z
    return a, zs


def _coerce_features(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        mat = features.astype(np.float64, copy=False)
    else:
        mat = np.asarray([np.asarray(getattr(f, "values", f), dtype=np.float64)
                          for f in features])
    if mat.ndim != 2:
        raise ValueError(f"expected a (n, D) feature matrix, got shape {mat.shape}")
    return mat


def _coerce_targets(dmat, n: int) -> np.ndarray:
    values = np.asarray(getattr(dmat, "values", dmat), dtype=np.float64)
    if values.shape != (n, n):
        raise ValueError(f"dissimilarity matrix shape {values.shape} != ({n}, {n})")
    return values


def _all_pairs(n: int) -> np.ndarray:
    iu = np.triu_indices(n, k=1)
    return np.stack(iu, axis=1).astype(np.int64)


def siamese_loss(model: ChartModel, features, dmat, pairs=None) -> float:
    """Sum over pairs of (d_ij - ||g(f_i) - g(f_j)||)^2.

    ``pairs`` is an integer array of shape (P, 2); None means all i < j.
    """
    feats = _coerce_features(features)
    targets = _coerce_targets(dmat, feats.shape[0])
    if pairs is None:
        pairs = _all_pairs(feats.shape[0])
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    y = forward(model, feats)
    diff = y[pairs[:, 0]] - y[pairs[:, 1]]
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    resid = targets[pairs[:, 0], pairs[:, 1]] - dist
    return float(np.sum(resid * resid))


def loss_and_gradients(model: ChartModel, features, dmat, pairs=None):
    """Loss plus gradients for every weight and bias, same pair convention
    as :func:`siamese_loss`.

    Pairs at exactly zero chart distance use a zero subgradient for the
    distance term.  Returns ``(loss, grad_weights, grad_biases)``.
    """
    feats = _coerce_features(features)
    targets = _coerce_targets(dmat, feats.shape[0])
    if pairs is None:
        pairs = _all_pairs(feats.shape[0])
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    uniq, inverse = np.unique(pairs.ravel(), return_inverse=True)
    inverse = inverse.reshape(pairs.shape)
    x = feats[uniq]
    y, zs = _forward_cached(model, x)
    ia, ib = inverse[:, 0], inverse[:, 1]
    diff = y[ia] - y[ib]
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    resid = targets[pairs[:, 0], pairs[:, 1]] - dist
    loss = float(np.sum(resid * resid))
    # d loss / d y_i = -2 r (y_i - y_j) / dist, zero where dist == 0
    scale = np.zeros_like(dist)
    nonzero = dist > 0.0
    scale[nonzero] = -2.0 * resid[nonzero] / dist[nonzero]
    pair_grad = scale[:, None] * diff
    dy = np.zeros_like(y)
    np.add.at(dy, ia, pair_grad)
    np.add.at(dy, ib, -pair_grad)
    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.weights)
    delta = dy
    last = len(model.weights) - 1
    for l in range(last, -1, -1):
        if l == 0:
            a_prev = x
        else:
            a_prev = np.maximum(zs[l - 1], 0.0)
        grad_w[l] = a_prev.T @ delta
        grad_b[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ model.weights[l].T) * (zs[l - 1] > 0.0)
    return loss, grad_w, grad_b


class _Adam:
    """Adam update state over a flat list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            p -= c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.epsilon)


def _sample_pair_batch(rng: np.random.Generator, total: int, batch: int,
                       n: int, triu: np.ndarray | None) -> np.ndarray:
    """Draw ``min(batch, total)`` distinct pairs uniformly."""
    flat = sample_pair_indices(rng, total, batch)
    if triu is not None:
        return triu[flat]
    return decode_pair_indices(flat, n)


def train(model: ChartModel, features, dmat, cfg: TrainConfig | None = None):
    """Train a copy of ``model`` with Adam on the pair loss.

    Returns ``(trained_model, TrainReport)``.  The input model is left
    untouched.  Raises :class:`NanLossError` the first time a batch loss
    is non-finite.
    """
    cfg = cfg or TrainConfig()
    feats = _coerce_features(features)
    n = feats.shape[0]
    if n < 2:
        raise ValueError("training needs at least 2 samples")
    targets = _coerce_targets(dmat, n)
    total = n * (n - 1) // 2
    steps = cfg.steps_per_epoch or max(1, math.ceil(total / cfg.batch_pairs))
    triu = _all_pairs(n) if n <= 1500 else None
    rng = np.random.default_rng(cfg.rng_seed)
    trained = model.copy()
    params = trained.weights + trained.biases
    opt = _Adam(params, cfg)
    report = TrainReport(steps_per_epoch=steps, total_pairs=total)
    started = time.perf_counter()
    for epoch in range(cfg.epochs):
        loss_sum = 0.0
        pair_count = 0
        for step in range(steps):
            pairs = _sample_pair_batch(rng, total, cfg.batch_pairs, n, triu)
            loss, gw, gb = loss_and_gradients(trained, feats, targets, pairs)
            if not math.isfinite(loss):
                raise NanLossError(
                    f"non-finite loss at epoch {epoch}, step {step}"
                )
            opt.step(params, gw + gb)
            loss_sum += loss
            pair_count += pairs.shape[0]
        report.epoch_losses.append(loss_sum / max(pair_count, 1))
    report.final_loss = report.epoch_losses[-1] if report.epoch_losses else float("nan")
    report.wall_seconds = time.perf_counter() - started
    return trained, report

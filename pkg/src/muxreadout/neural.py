"""Fully-connected feedforward network on raw interleaved I/Q records.

SELU hidden layers, softmax over the ``2**N`` configurations, categorical
cross-entropy, Adam, and a plateau-halving learning-rate schedule. Inputs
are standardised per feature with training statistics stored in the model.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classical import Discriminator, GridMismatchError, TrainingError
from .core import SampleGrid, ShotDataset, interleave, stratified_fraction_split
from .metrics import assignment_fidelity, confusion_matrix, geometric_mean_fidelity

logger = logging.getLogger(__name__)

SELU_LAMBDA = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717


class NumericalError(FloatingPointError):
    def __init__(self, message: str, layer: int):
        super().__init__(message)
        self.layer = layer


def selu(x: np.ndarray) -> np.ndarray:
    return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def selu_derivative(x: np.ndarray) -> np.ndarray:
    return SELU_LAMBDA * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class FNNArchitecture:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(d < 1 for d in dims):
            raise ValueError("all layer widths must be >= 1")

    @classmethod
    def scaled(cls, input_dim: int, output_dim: int, floor: int = 16) -> FNNArchitecture:
        """Hidden widths of 1x, 1/2x and 1/4x the input width, at least ``floor`` each."""
        hidden = tuple(max(floor, int(round(input_dim * f))) for f in (1.0, 0.5, 0.25))
        return cls(input_dim, hidden, output_dim)

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))


@dataclass(eq=False)
class FNNModel(Discriminator):
    """Network parameters plus the preprocessing needed to apply them to records."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    architecture: FNNArchitecture
    feature_mean: np.ndarray | None = None
    feature_scale: np.ndarray | None = None
    grid: SampleGrid | None = None
    training_record: dict = field(default_factory=dict)
    kind: str = "fnn"

    def __post_init__(self):
        for (fan_in, fan_out), w, b in zip(self.architecture.layer_dims, self.weights, self.biases):
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ValueError("parameter shapes do not match the architecture")
        if len(self.weights) != len(self.architecture.layer_dims):
            raise ValueError("wrong number of layers")

    @classmethod
    def initialize(
        cls, architecture: FNNArchitecture, rng: np.random.Generator, **kwargs
    ) -> FNNModel:
        """Normal weights with variance 1/fan_in, zero biases."""
        weights = [
            rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out))
            for fan_in, fan_out in architecture.layer_dims
        ]
        biases = [np.zeros(fan_out) for _, fan_out in architecture.layer_dims]
        return cls(weights, biases, architecture, **kwargs)

    @classmethod
    def zeros(cls, architecture: FNNArchitecture, **kwargs) -> FNNModel:
        weights = [np.zeros(s) for s in architecture.layer_dims]
        biases = [np.zeros(fan_out) for _, fan_out in architecture.layer_dims]
        return cls(weights, biases, architecture, **kwargs)

    @property
    def num_qubits(self) -> int:
        return int(round(math.log2(self.architecture.output_dim)))

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def standardize(self, x: np.ndarray) -> np.ndarray:
        if self.feature_mean is None:
            return x
        return (x - self.feature_mean) / self.feature_scale

    def predict_proba(self, inputs: np.ndarray) -> np.ndarray:
        return forward(self, inputs)

    def _check(self, samples: np.ndarray, grid: SampleGrid | None = None) -> np.ndarray:
        if self.grid is None:
            samples = np.atleast_2d(np.asarray(samples))
            if 2 * samples.shape[1] != self.architecture.input_dim:
                raise GridMismatchError("record length does not match the network input")
            return samples
        return super()._check(samples, grid)

    def predict_samples(self, samples: np.ndarray) -> np.ndarray:
        samples = self._check(samples)
        return np.argmax(forward(self, interleave(samples)), axis=-1).astype(np.int64)


def _alpha_dropout_coeffs(rate: float) -> tuple[float, float, float]:
    """Dropped value and affine correction keeping SELU activations at zero mean, unit variance."""
    keep = 1.0 - rate
    dropped = -SELU_LAMBDA * SELU_ALPHA
    a = (keep + dropped**2 * keep * rate) ** -0.5
    return dropped, a, -a * dropped * rate


def _forward(weights, biases, x: np.ndarray, keep: bool = False, dropout: float = 0.0, rng=None):
    """Logits for standardised inputs; optionally the per-layer cache for backprop.

    With ``dropout > 0`` and an ``rng``, hidden activations go through alpha
    dropout (training mode only).
    """
    cache = []
    h = x
    last = len(weights) - 1
    for layer, (w, b) in enumerate(zip(weights, biases)):
        a = h @ w + b
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"non-finite activations in layer {layer}", layer)
        mask = None
        if layer == last:
            out = a
        else:
            out = selu(a)
            if dropout > 0 and rng is not None:
                dropped, scale, shift = _alpha_dropout_coeffs(dropout)
                mask = rng.random(out.shape) >= dropout
                out = scale * np.where(mask, out, dropped) + shift
                mask = scale * mask
        if keep:
            cache.append((h, a, mask))
        h = out
    return h, cache


def forward(model: FNNModel, inputs: np.ndarray) -> np.ndarray:
    """Class probabilities for one input vector or an ``(n, input_dim)`` batch."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.shape[-1] != model.architecture.input_dim:
        raise ValueError(
            f"input length {x.shape[-1]} != network input {model.architecture.input_dim}"
        )
    logits, _ = _forward(model.weights, model.biases, model.standardize(np.atleast_2d(x)))
    probs = softmax(logits)
    return probs[0] if x.ndim == 1 else probs


def _loss_and_grads(weights, biases, x: np.ndarray, y: np.ndarray, dropout=0.0, rng=None):
    logits, cache = _forward(weights, biases, x, keep=True, dropout=dropout, rng=rng)
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = x.shape[0]
    loss = float(-(y * log_probs).sum() / n)
    delta = (np.exp(log_probs) - y) / n
    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        h_in, a, mask = cache[layer]
        if layer != len(weights) - 1:
            if mask is not None:
                delta = delta * mask
            delta = delta * selu_derivative(a)
        grads_w[layer] = h_in.T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer:
            delta = delta @ weights[layer].T
    return loss, grads_w, grads_b


def loss_and_gradients(model: FNNModel, inputs: np.ndarray, one_hot: np.ndarray):
    """Mean categorical cross-entropy and its gradients.

    Returns ``(loss, grads)`` with ``grads`` ordered like ``model.params``
    (w0, b0, w1, b1, ...).
    """
    x = model.standardize(np.atleast_2d(np.asarray(inputs, dtype=np.float64)))
    y = np.atleast_2d(np.asarray(one_hot, dtype=np.float64))
    if x.shape[0] != y.shape[0] or y.shape[1] != model.architecture.output_dim:
        raise ValueError("inputs and one-hot labels have inconsistent shapes")
    loss, gw, gb = _loss_and_grads(model.weights, model.biases, x, y)
    return loss, [g for pair in zip(gw, gb) for g in pair]


class Adam:
    def __init__(self, params: Sequence[np.ndarray], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class TrainSchedule:
    initial_lr: float = 1e-3
    batch_size: int = 1024
    max_epochs: int = 300
    validation_ratio: float = 0.35
    lr_decay: float = 0.5
    patience: int = 20
    min_lr: float = 1e-5
    stop_patience: int | None = 60
    dropout: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not 0 < self.validation_ratio < 1:
            raise ValueError("validation_ratio must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")


def _gm_fidelity(pred: np.ndarray, labels: np.ndarray, n: int) -> float:
    cm = confusion_matrix(pred, labels, n)
    return geometric_mean_fidelity([max(assignment_fidelity(cm, q), 1e-12) for q in range(n)])


def train_fnn(
    train: ShotDataset,
    schedule: TrainSchedule = TrainSchedule(),
    seed: int = 0,
    architecture: FNNArchitecture | None = None,
    hidden_dims: Sequence[int] | None = None,
) -> FNNModel:
    """Train on raw interleaved records; returns the best-validation snapshot.

    The validation split is stratified per configuration. After
    ``schedule.patience`` epochs without a new best validation geometric-mean
    fidelity the learning rate is multiplied by ``schedule.lr_decay`` (down
    to ``min_lr``); training stops at ``max_epochs`` or after
    ``stop_patience`` epochs without improvement. ``schedule.dropout``
    enables alpha dropout on the hidden activations during training.
    """
    n = train.num_qubits
    k = 2**n
    present = np.unique(train.labels)
    if present.size < 2:
        raise TrainingError("need at least two prepared configurations")
    rng = np.random.default_rng(seed)
    fit_idx, val_idx = stratified_fraction_split(train, schedule.validation_ratio, rng)
    x_all = train.interleaved()
    mean = x_all[fit_idx].mean(axis=0)
    scale = x_all[fit_idx].std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    x_all = (x_all - mean) / scale
    x_fit, x_val = x_all[fit_idx], x_all[val_idx]
    y_fit = np.eye(k)[train.labels[fit_idx]]
    labels_val = train.labels[val_idx]

    if architecture is None:
        d = x_all.shape[1]
        architecture = (
            FNNArchitecture(d, tuple(hidden_dims), k)
            if hidden_dims is not None
            else FNNArchitecture.scaled(d, k)
        )
    model = FNNModel.initialize(
        architecture, rng, feature_mean=mean, feature_scale=scale, grid=train.grid
    )
    params = model.params
    opt = Adam(params, schedule.initial_lr, schedule.beta1, schedule.beta2, schedule.eps)

    val_eval = labels_val.size > 0 and np.unique(labels_val).size == present.size
    best = (-np.inf, [p.copy() for p in params], 0)
    history, lr_history = [], []
    since_best = since_decay = 0
    for epoch in range(1, schedule.max_epochs + 1):
        order = rng.permutation(x_fit.shape[0])
        for start in range(0, order.size, schedule.batch_size):
            idx = order[start : start + schedule.batch_size]
            _, gw, gb = _loss_and_grads(
                model.weights, model.biases, x_fit[idx], y_fit[idx], schedule.dropout, rng
            )
            opt.step(params, [g for pair in zip(gw, gb) for g in pair])
        if val_eval:
            logits, _ = _forward(model.weights, model.biases, x_val)
            score = _gm_fidelity(np.argmax(logits, axis=1), labels_val, n)
        else:
            score = float(epoch)  # no usable validation set: keep the latest parameters
        history.append(score)
        lr_history.append(opt.lr)
        if score > best[0]:
            best = (score, [p.copy() for p in params], epoch)
            since_best = since_decay = 0
        else:
            since_best += 1
            since_decay += 1
        if since_decay >= schedule.patience and opt.lr > schedule.min_lr:
            opt.lr = max(schedule.min_lr, opt.lr * schedule.lr_decay)
            since_decay = 0
        if schedule.stop_patience is not None and since_best >= schedule.stop_patience:
            break
    logger.debug("fnn: best validation %.4f at epoch %d of %d", best[0], best[2], epoch)
    for p, b in zip(params, best[1]):
        p[...] = b
    model.training_record = {
        "epochs_run": epoch,
        "best_epoch": best[2],
        "final_learning_rate": opt.lr,
        "validation_fidelity": history,
        "learning_rate": lr_history,
        "seed": seed,
    }
    return model

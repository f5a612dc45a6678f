"""Matched-filter threshold discriminators and linear soft-margin SVMs.

Spectator policies: ``"ground"`` trains qubit ``i`` only on shots whose
other qubits were left in the ground state; ``"all"`` uses every prepared
configuration, relabelled by bit ``i``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    IQTrace,
    PreparedLabel,
    SampleGrid,
    ShotDataset,
    interleave,
    label_bits,
    stratified_fraction_split,
)
from .dsp import (
    FilterKernel,
    demodulate_samples,
    estimate_matched_filter,
    optimize_threshold,
    window_lattice,
)
from .metrics import assignment_fidelity, confusion_matrix, geometric_mean_fidelity

logger = logging.getLogger(__name__)

SPECTATOR_POLICIES = ("ground", "all")
DEFAULT_C_GRID = (0.01, 0.1, 1.0, 10.0)


class TrainingError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


class Discriminator:
    """Common prediction surface: records in, integer labels (bit i = qubit i) out."""

    kind = "base"
    grid: SampleGrid
    num_qubits: int

    def predict_samples(self, samples: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check(self, samples: np.ndarray, grid: SampleGrid | None = None) -> np.ndarray:
        samples = np.atleast_2d(np.asarray(samples))
        if (grid is not None and grid != self.grid) or samples.shape[1] != self.grid.num_samples:
            raise GridMismatchError(
                f"records have {samples.shape[1]} samples; model expects {self.grid.num_samples}"
            )
        return samples

    def predict(self, trace: IQTrace) -> PreparedLabel:
        self._check(trace.samples[None], trace.grid)
        return PreparedLabel(int(self.predict_samples(trace.samples[None])[0]), self.num_qubits)

    def predict_dataset(self, dataset: ShotDataset) -> np.ndarray:
        self._check(dataset.samples[:1], dataset.grid)
        return self.predict_samples(dataset.samples)


def _qubit_classes(train: ShotDataset, qubit: int, policy: str) -> tuple[np.ndarray, np.ndarray]:
    """Indices of ground / excited training shots for ``qubit`` under ``policy``."""
    if policy not in SPECTATOR_POLICIES:
        raise ValueError(f"spectator policy must be one of {SPECTATOR_POLICIES}")
    labels = train.labels
    if policy == "ground":
        others = labels & ~(1 << qubit)
        keep = others == 0
    else:
        keep = np.ones(labels.size, dtype=bool)
    bit = label_bits(labels, qubit)
    ground = np.flatnonzero(keep & (bit == 0))
    excited = np.flatnonzero(keep & (bit == 1))
    if ground.size == 0 or excited.size == 0:
        raise TrainingError(f"qubit {qubit}: training data lacks one of the two classes")
    return ground, excited


# ---------------------------------------------------------------------------
# Matched filter + threshold


@dataclass(eq=False)
class MFDiscriminator(Discriminator):
    kernels: list[FilterKernel]
    thresholds: list[float]
    if_frequencies: list[float]
    grid: SampleGrid
    ground_above: list[bool] = field(default_factory=list)
    kind: str = "mf"

    def __post_init__(self):
        if not self.ground_above:
            self.ground_above = [True] * len(self.kernels)
        if not (len(self.kernels) == len(self.thresholds) == len(self.if_frequencies)):
            raise ValueError("one kernel, threshold and frequency per qubit")
        if not all(math.isfinite(t) for t in self.thresholds):
            raise ValueError("thresholds must be finite")

    @property
    def num_qubits(self) -> int:
        return len(self.kernels)

    def project(self, samples: np.ndarray, qubit: int) -> np.ndarray:
        z = demodulate_samples(samples, self.grid, self.if_frequencies[qubit])
        k = self.kernels[qubit]
        s, e = k.window
        return (z[:, s:e] @ k.weights[s:e]).real

    def predict_samples(self, samples: np.ndarray) -> np.ndarray:
        samples = self._check(samples)
        out = np.zeros(samples.shape[0], dtype=np.int64)
        for i in range(self.num_qubits):
            s = self.project(samples, i)
            # ties at the threshold go to the ground state
            excited = s < self.thresholds[i] if self.ground_above[i] else s > self.thresholds[i]
            out |= excited.astype(np.int64) << i
        return out


def _fit_threshold_and_window(
    proj_terms: np.ndarray, is_excited: np.ndarray, windows: list[tuple[int, int]]
) -> tuple[tuple[int, int], float, float]:
    """Best (window, threshold) by training fidelity; ``proj_terms`` is (n, M) real."""
    cum = np.concatenate([np.zeros((proj_terms.shape[0], 1)), np.cumsum(proj_terms, axis=1)], 1)
    best = None
    for a, b in windows:
        s = cum[:, b] - cum[:, a]
        thr, fid = optimize_threshold(s[~is_excited], s[is_excited])
        if best is None or fid > best[2]:
            best = ((a, b), thr, fid)
    return best


def _train_filter_discriminator(
    train: ShotDataset,
    spectator_policy: str,
    kernel_fn,
    optimize_window: bool,
    window_step: int,
    kind: str,
) -> MFDiscriminator:
    freqs = train.if_frequencies
    m = train.grid.num_samples
    windows = window_lattice(m, window_step) if optimize_window else [(0, m)]
    # full window first so it wins fidelity ties
    windows.sort(key=lambda w: (w != (0, m)))
    kernels, thresholds = [], []
    for i in range(train.num_qubits):
        g_idx, e_idx = _qubit_classes(train, i, spectator_policy)
        idx = np.concatenate([g_idx, e_idx])
        is_excited = np.concatenate([np.zeros(g_idx.size, bool), np.ones(e_idx.size, bool)])
        z = demodulate_samples(train.samples[idx], train.grid, freqs[i])
        kernel = kernel_fn(z[~is_excited], z[is_excited])
        window, thr, fid = _fit_threshold_and_window(
            (z * kernel.weights).real, is_excited, windows
        )
        logger.debug("%s qubit %d: window %s threshold %.4g fidelity %.4f", kind, i, window, thr, fid)
        kernels.append(kernel.with_window(window))
        thresholds.append(thr)
    return MFDiscriminator(kernels, thresholds, freqs, train.grid, kind=kind)


def train_mf(
    train: ShotDataset,
    spectator_policy: str = "ground",
    optimize_window: bool = True,
    window_step: int = 25,
    variance_floor: float = 0.0,
) -> MFDiscriminator:
    """Matched filter per qubit, rectangular window search, then threshold sweep."""

    def kernel_fn(g, e):
        return estimate_matched_filter(g, e, variance_floor=variance_floor)

    return _train_filter_discriminator(
        train, spectator_policy, kernel_fn, optimize_window, window_step, "mf"
    )


def train_boxcar(
    train: ShotDataset,
    spectator_policy: str = "ground",
    optimize_window: bool = False,
    window_step: int = 25,
) -> MFDiscriminator:
    """Equal-weight integration projected on the mean class-difference axis."""

    def kernel_fn(g, e):
        diff = g.mean(axis=0).mean() - e.mean(axis=0).mean()
        if diff == 0:
            raise TrainingError("boxcar means coincide")
        weights = np.full(g.shape[1], np.conj(diff) / abs(diff))
        return FilterKernel(weights, (0, g.shape[1]))

    return _train_filter_discriminator(
        train, spectator_policy, kernel_fn, optimize_window, window_step, "boxcar"
    )


# ---------------------------------------------------------------------------
# Linear SVM


@dataclass(eq=False)
class LinearSVMModel:
    """Linear decision function on standardised features; positive score means class 1."""

    weight_vector: np.ndarray
    bias: float
    regularization: float
    feature_descriptor: str
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    loss_history: list[float] = field(default_factory=list, repr=False)

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        x = (np.atleast_2d(features) - self.feature_mean) / self.feature_scale
        return x @ self.weight_vector + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        return (self.decision_function(features) > 0).astype(np.int64)


def _standardize_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    # constant features stay at zero after centring
    scale = np.where(scale > 0, scale, 1.0)
    return mean, scale


def _hinge_objective(xb: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float) -> np.ndarray:
    margins = y * (xb @ w)
    return 0.5 * lam * np.sum(w * w, axis=0) + np.maximum(0.0, 1.0 - margins).mean(axis=0)


def _pegasos(
    xb: np.ndarray,
    y: np.ndarray,
    lam: float,
    epochs: int,
    rng: np.random.Generator,
    batch_size: int,
) -> tuple[np.ndarray, list[float]]:
    """Mini-batch primal subgradient descent with step ``1/(lam t)``.

    Solves ``lam/2 ||w||^2 + mean(hinge)`` for every column of ``y``
    (entries +-1) at once; returns the iterate average over the second
    half of training and the per-epoch objective of the first column.
    """
    n, d = xb.shape
    k = y.shape[1]
    w = np.zeros((d, k))
    avg = np.zeros((d, k))
    n_avg = 0
    radius = 1.0 / math.sqrt(lam)
    steps_per_epoch = math.ceil(n / batch_size)
    total = epochs * steps_per_epoch
    t = 0
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            t += 1
            idx = order[start : start + batch_size]
            xs, ys = xb[idx], y[idx]
            active = (ys * (xs @ w)) < 1.0
            grad = lam * w - xs.T @ (ys * active) / idx.size
            w -= grad / (lam * t)
            norms = np.linalg.norm(w, axis=0)
            over = norms > radius
            if np.any(over):
                w[:, over] *= radius / norms[over]
            if t > total // 2:
                n_avg += 1
                avg += (w - avg) / n_avg
        current = (avg if n_avg else w)[:, :1]
        history.append(float(_hinge_objective(xb, y[:, :1], current, lam)[0]))
    return (avg if n_avg else w), history


def _train_svm_columns(
    features: np.ndarray,
    targets: np.ndarray,
    C: float,
    epochs: int,
    seed: int,
    batch_size: int,
    descriptor: str,
) -> list[LinearSVMModel]:
    x = np.asarray(features, dtype=np.float64)
    mean, scale = _standardize_stats(x)
    xs = (x - mean) / scale
    xb = np.hstack([xs, np.ones((xs.shape[0], 1))])
    lam = 1.0 / (C * xs.shape[0])
    w, history = _pegasos(xb, targets, lam, epochs, np.random.default_rng(seed), batch_size)
    return [
        LinearSVMModel(
            weight_vector=w[:-1, c].copy(),
            bias=float(w[-1, c]),
            regularization=C,
            feature_descriptor=descriptor,
            feature_mean=mean,
            feature_scale=scale,
            loss_history=history if c == 0 else [],
        )
        for c in range(targets.shape[1])
    ]


def _pm1(binary_labels) -> np.ndarray:
    y = np.asarray(binary_labels)
    if y.dtype == bool:
        return np.where(y, 1.0, -1.0)
    return np.where(y > 0, 1.0, -1.0)


def train_linear_svm(
    features,
    binary_labels,
    C: float = 1.0,
    epochs: int = 200,
    seed: int = 0,
    batch_size: int = 128,
    feature_descriptor: str = "raw",
) -> LinearSVMModel:
    """Soft-margin linear SVM: minimises ``||w||^2/2 + C sum hinge``.

    Labels may be {0, 1}, {-1, +1} or boolean; class 1 / +1 scores positive.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = _pm1(binary_labels)
    if x.shape[0] != y.shape[0]:
        raise ValueError("features and labels differ in length")
    if np.all(y == y[0]):
        raise TrainingError("linear SVM needs both classes")
    if not C > 0:
        raise ValueError("C must be positive")
    return _train_svm_columns(x, y[:, None], C, epochs, seed, batch_size, feature_descriptor)[0]


def _bit_fidelity(pred_bits: np.ndarray, true_bits: np.ndarray) -> float:
    err0 = np.mean(pred_bits[true_bits == 0] == 1)
    err1 = np.mean(pred_bits[true_bits == 1] == 0)
    return 1.0 - 0.5 * (err0 + err1)


def demodulated_features(samples: np.ndarray, grid: SampleGrid, if_frequency: float) -> np.ndarray:
    """Interleaved I/Q of the record demodulated at one IF (length 2M)."""
    return interleave(demodulate_samples(samples, grid, if_frequency))


def stacked_features(samples: np.ndarray, grid: SampleGrid, if_frequencies: Sequence[float]):
    """Demodulated records for every resonator, concatenated (length N * 2M)."""
    return np.hstack([demodulated_features(samples, grid, f) for f in if_frequencies])


@dataclass(eq=False)
class SQLSVMDiscriminator(Discriminator):
    models: list[LinearSVMModel]
    if_frequencies: list[float]
    grid: SampleGrid
    kind: str = "sq-lsvm"

    @property
    def num_qubits(self) -> int:
        return len(self.models)

    def predict_samples(self, samples: np.ndarray) -> np.ndarray:
        samples = self._check(samples)
        out = np.zeros(samples.shape[0], dtype=np.int64)
        for i, model in enumerate(self.models):
            feats = demodulated_features(samples, self.grid, self.if_frequencies[i])
            out |= model.predict(feats) << i
        return out


def train_sq_lsvm(
    train: ShotDataset,
    spectator_policy: str = "all",
    C_grid: Sequence[float] = DEFAULT_C_GRID,
    epochs: int = 200,
    validation_ratio: float = 0.35,
    seed: int = 0,
    batch_size: int = 128,
) -> SQLSVMDiscriminator:
    """One linear SVM per qubit on its demodulated 2M-vector; C picked on a validation split."""
    freqs = train.if_frequencies
    models = []
    for i in range(train.num_qubits):
        g_idx, e_idx = _qubit_classes(train, i, spectator_policy)
        idx = np.sort(np.concatenate([g_idx, e_idx]))
        x = demodulated_features(train.samples[idx], train.grid, freqs[i])
        y = label_bits(train.labels[idx], i)
        best_c = C_grid[0]
        if len(C_grid) > 1:
            sub = train.subset(idx)
            fit_idx, val_idx = stratified_fraction_split(
                sub, validation_ratio, np.random.default_rng(seed + i)
            )
            scores = []
            for c in C_grid:
                m = train_linear_svm(x[fit_idx], y[fit_idx], c, epochs, seed + i, batch_size)
                scores.append(_bit_fidelity(m.predict(x[val_idx]), y[val_idx]))
            best_c = C_grid[int(np.argmax(scores))]
            logger.debug("sq-lsvm qubit %d validation %s -> C=%g", i, scores, best_c)
        models.append(
            train_linear_svm(x, y, best_c, epochs, seed + i, batch_size, f"demod_q{i}_2M")
        )
    return SQLSVMDiscriminator(models, freqs, train.grid)


@dataclass(eq=False)
class MQLSVMModel(Discriminator):
    """One-versus-all linear SVMs over all ``2**N`` configurations."""

    classifiers: list[LinearSVMModel]
    if_frequencies: list[float]
    grid: SampleGrid
    kind: str = "mq-lsvm"

    def __post_init__(self):
        n = len(self.if_frequencies)
        if len(self.classifiers) != 2**n:
            raise ValueError(f"need exactly {2**n} one-versus-all classifiers")

    @property
    def num_qubits(self) -> int:
        return len(self.if_frequencies)

    def decision_values(self, samples: np.ndarray) -> np.ndarray:
        feats = stacked_features(self._check(samples), self.grid, self.if_frequencies)
        return np.column_stack([c.decision_function(feats) for c in self.classifiers])

    def predict_samples(self, samples: np.ndarray) -> np.ndarray:
        # argmax is total; ties resolve to the smaller label
        return np.argmax(self.decision_values(samples), axis=1).astype(np.int64)


def _ovr_targets(labels: np.ndarray, k: int) -> np.ndarray:
    return np.where(labels[:, None] == np.arange(k)[None, :], 1.0, -1.0)


def train_mq_lsvm(
    train: ShotDataset,
    C_grid: Sequence[float] = DEFAULT_C_GRID,
    epochs: int = 200,
    validation_ratio: float = 0.35,
    seed: int = 0,
    batch_size: int = 128,
) -> MQLSVMModel:
    """Stacked demodulated records, ``2**N`` one-versus-all SVMs trained together."""
    n = train.num_qubits
    k = 2**n
    missing = np.flatnonzero(np.bincount(train.labels, minlength=k) == 0)
    if missing.size:
        raise TrainingError(f"configurations {missing.tolist()} absent from training data")
    freqs = train.if_frequencies
    x = stacked_features(train.samples, train.grid, freqs)
    targets = _ovr_targets(train.labels, k)
    best_c = C_grid[0]
    if len(C_grid) > 1:
        fit_idx, val_idx = stratified_fraction_split(
            train, validation_ratio, np.random.default_rng(seed)
        )
        scores = []
        for c in C_grid:
            clfs = _train_svm_columns(
                x[fit_idx], targets[fit_idx], c, epochs, seed, batch_size, "stacked_demod"
            )
            dv = np.column_stack([m.decision_function(x[val_idx]) for m in clfs])
            cm = confusion_matrix(np.argmax(dv, axis=1), train.labels[val_idx], n)
            scores.append(geometric_mean_fidelity([assignment_fidelity(cm, q) for q in range(n)]))
        best_c = C_grid[int(np.argmax(scores))]
        logger.debug("mq-lsvm validation %s -> C=%g", scores, best_c)
    clfs = _train_svm_columns(x, targets, best_c, epochs, seed, batch_size, "stacked_demod")
    return MQLSVMModel(clfs, freqs, train.grid)

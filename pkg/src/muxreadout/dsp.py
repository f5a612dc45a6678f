"""Digital demodulation, boxcar / matched filtering and two-class separability."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import IQTrace, SampleGrid


class DegenerateStatisticsError(ValueError):
    """Class statistics too poor to define a filter or a separation."""


@dataclass(frozen=True, eq=False)
class DemodulatedTrace:
    samples: np.ndarray
    source_if_frequency: float
    grid: SampleGrid | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.complex128)
        if s.ndim != 1 or not np.all(np.isfinite(s)):
            raise ValueError("demodulated trace must be a finite 1-D sequence")
        object.__setattr__(self, "samples", s)


def demodulate_samples(samples: np.ndarray, grid: SampleGrid, if_frequency: float) -> np.ndarray:
    """Multiply ``(..., M)`` records by ``exp(-j 2 pi f t_n)``; ``f`` in MHz, ``t`` in ns."""
    phase = np.exp(-2j * np.pi * if_frequency * 1e-3 * grid.times)
    return np.asarray(samples) * phase


def demodulate(trace: IQTrace, if_frequency: float) -> DemodulatedTrace:
    return DemodulatedTrace(
        demodulate_samples(trace.samples, trace.grid, if_frequency), if_frequency, trace.grid
    )


def _check_window(window: tuple[int, int], m: int) -> tuple[int, int]:
    start, end = int(window[0]), int(window[1])
    if not 0 <= start < end <= m:
        raise ValueError(f"window {window} invalid for {m} samples")
    return start, end


def boxcar(demod: DemodulatedTrace | np.ndarray, window: tuple[int, int] | None = None) -> complex:
    """Mean of the demodulated samples inside ``[start, end)``."""
    s = demod.samples if isinstance(demod, DemodulatedTrace) else np.asarray(demod)
    start, end = _check_window(window or (0, s.shape[-1]), s.shape[-1])
    return s[..., start:end].mean(axis=-1)


@dataclass(frozen=True, eq=False)
class FilterKernel:
    """Complex per-bin weights; the filtered value is ``Re(sum k_n z_n)`` over ``window``."""

    weights: np.ndarray
    window: tuple[int, int]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.complex128)
        start, end = _check_window(self.window, w.size)
        if not np.all(np.isfinite(w)):
            raise ValueError("kernel weights must be finite")
        if not np.any(w[start:end] != 0):
            raise DegenerateStatisticsError("kernel has no nonzero weight inside its window")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "window", (start, end))

    @property
    def effective(self) -> np.ndarray:
        out = np.zeros_like(self.weights)
        s, e = self.window
        out[s:e] = self.weights[s:e]
        return out

    def with_window(self, window: tuple[int, int]) -> FilterKernel:
        return FilterKernel(self.weights, window)


def _as_array(traces) -> np.ndarray:
    if isinstance(traces, np.ndarray):
        return np.atleast_2d(traces)
    return np.stack([t.samples if isinstance(t, DemodulatedTrace) else t for t in traces])


def estimate_matched_filter(
    ground: Sequence[DemodulatedTrace] | np.ndarray,
    excited: Sequence[DemodulatedTrace] | np.ndarray,
    variance_floor: float = 0.0,
) -> FilterKernel:
    """Per-quadrature mean difference over summed class variances.

    The weights are stored conjugated (``k_I - j k_Q``) so that
    ``Re(k_n z_n) = k_I I_n + k_Q Q_n``; ground-state records then project
    to larger values than excited ones. ``variance_floor`` is added to every
    bin's summed variance; leave it at zero to reject noiseless or
    single-shot statistics.
    """
    g = _as_array(ground)
    e = _as_array(excited)
    if g.shape[0] == 0 or e.shape[0] == 0:
        raise ValueError("both classes need at least one record")
    if g.shape[1] != e.shape[1]:
        raise ValueError("records differ in length")
    diff = g.mean(axis=0) - e.mean(axis=0)
    var_i = g.real.var(axis=0) + e.real.var(axis=0) + variance_floor
    var_q = g.imag.var(axis=0) + e.imag.var(axis=0) + variance_floor
    if np.any(var_i == 0) or np.any(var_q == 0):
        raise DegenerateStatisticsError("zero variance in at least one time bin")
    weights = diff.real / var_i - 1j * diff.imag / var_q
    return FilterKernel(weights, (0, g.shape[1]))


def apply_kernel(demod: DemodulatedTrace | np.ndarray, kernel: FilterKernel) -> float | np.ndarray:
    """Filtered value(s); accepts one trace or an ``(n, M)`` batch."""
    s = demod.samples if isinstance(demod, DemodulatedTrace) else np.asarray(demod)
    if s.shape[-1] != kernel.weights.size:
        raise ValueError(f"trace length {s.shape[-1]} != kernel length {kernel.weights.size}")
    start, end = kernel.window
    out = (s[..., start:end] @ kernel.weights[start:end]).real
    return float(out) if np.ndim(out) == 0 else out


def fisher_criterion(s0_values, s1_values) -> float:
    """Squared mean separation over the equal-weight pooled variance."""
    s0 = np.asarray(s0_values, dtype=np.float64)
    s1 = np.asarray(s1_values, dtype=np.float64)
    if s0.size == 0 or s1.size == 0:
        raise ValueError("both classes must be non-empty")
    pooled = 0.5 * (s0.var() + s1.var())
    if pooled == 0:
        raise DegenerateStatisticsError("zero pooled variance")
    return float((s0.mean() - s1.mean()) ** 2 / pooled)


def achievable_fidelity(R: float) -> float:
    """Assignment fidelity bound for two equal-variance Gaussians at separation ``R``."""
    if R < 0:
        raise ValueError("R must be non-negative")
    return 0.5 * (1.0 + math.erf(math.sqrt(R / 8.0)))


def class_stats(s0_values, s1_values) -> ClassStats:
    s0 = np.asarray(s0_values, dtype=np.float64)
    s1 = np.asarray(s1_values, dtype=np.float64)
    r = fisher_criterion(s0, s1)
    return ClassStats(
        mean_ground=float(s0.mean()),
        mean_excited=float(s1.mean()),
        variance=float(0.5 * (s0.var() + s1.var())),
        fisher_R=r,
        achievable_fidelity=achievable_fidelity(r),
    )


@dataclass(frozen=True)
class ClassStats:
    mean_ground: float
    mean_excited: float
    variance: float
    fisher_R: float
    achievable_fidelity: float


def optimize_threshold(s_ground, s_excited) -> tuple[float, float]:
    """Best threshold among midpoints of the sorted pooled values.

    Values ``>= threshold`` are assigned to the ground state. Returns
    ``(threshold, fidelity)`` where fidelity weights both classes equally.
    Ties in fidelity go to the lowest threshold.
    """
    s0 = np.asarray(s_ground, dtype=np.float64)
    s1 = np.asarray(s_excited, dtype=np.float64)
    if s0.size == 0 or s1.size == 0:
        raise ValueError("both classes must be non-empty")
    values = np.unique(np.concatenate([s0, s1]))
    candidates = np.concatenate(
        [[values[0] - 1.0], 0.5 * (values[:-1] + values[1:]), [values[-1] + 1.0]]
    )
    if values.size == 1:
        candidates = np.array([values[0]])
    s0 = np.sort(s0)
    s1 = np.sort(s1)
    # ground assigned excited: s0 < thr; excited assigned ground: s1 >= thr
    p1_given_0 = np.searchsorted(s0, candidates, side="left") / s0.size
    p0_given_1 = 1.0 - np.searchsorted(s1, candidates, side="left") / s1.size
    fidelity = 1.0 - 0.5 * (p1_given_0 + p0_given_1)
    best = int(np.argmax(fidelity))
    return float(candidates[best]), float(fidelity[best])


def window_lattice(m: int, step: int = 25) -> list[tuple[int, int]]:
    """Candidate rectangular windows on a ``step``-sample lattice (always including ``m``)."""
    edges = sorted(set(list(range(0, m, step)) + [m]))
    return [(a, b) for a in edges for b in edges if a < b]

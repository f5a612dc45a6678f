"""Synthetic frequency-multiplexed readout records.

Each resonator contributes a ringing-up tone at its intermediate frequency
whose phase is set by the instantaneous state of its qubit, pulled further
by excited neighbours (readout crosstalk). Preparation errors, pi-pulse
infidelity, optional leakage and a single T1 jump per qubit per shot are
realised per shot from a counter-derived random stream.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from .core import IQTrace, PreparedLabel, SampleGrid, ShotDataset, ValidationError

# Readout parameters of the five-qubit reference device.
DEVICE_IF_MHZ = (-65.0, -26.0, 24.0, 70.0, 127.0)
DEVICE_CHI_MHZ = (0.83, 0.51, 0.77, 0.49, 0.80)
DEVICE_KAPPA_MHZ = (4.29, 4.25, 4.41, 3.33, 6.90)
DEVICE_T1_US = (40.8, 6.4, 21.4, 11.8, 23.4)
DEVICE_P1_GIVEN_0 = (0.005, 0.003, 0.006, 0.009, 0.003)
DEVICE_PI_FIDELITY = (0.999, 0.977, 0.965, 0.970, 0.976)
DEVICE_FISHER_R = (26.817, 3.001, 28.927, 19.953, 33.614)
MEAN_KAPPA_MHZ = float(np.mean(DEVICE_KAPPA_MHZ))

MAX_TOTAL_SHOTS = 2**32


@dataclass(frozen=True)
class QubitSimParams:
    t1: float = math.inf  # microseconds
    thermal_excitation_prob: float = 0.0
    pi_pulse_fidelity: float = 1.0
    leakage_prob: float = 0.0

    def __post_init__(self):
        for name in ("thermal_excitation_prob", "pi_pulse_fidelity", "leakage_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"{name}={p} is not a probability")
        if not self.t1 > 0:
            raise ValidationError("t1 must be positive")


@dataclass(frozen=True)
class ResonatorSimParams:
    """One readout tone.

    ``ring_up_rate`` is in 1/us (roughly kappa_eff/2). The ground and excited
    phasors sit at -/+ ``dispersive_phase``/2; a leaked qubit sits at
    ``leakage_phase`` (defaults to 1.5x the excited phase).
    """

    if_frequency: float  # MHz, signed
    dispersive_phase: float
    ring_up_rate: float = 13.5
    amplitude: float = 1.0
    leakage_phase: float | None = None

    def __post_init__(self):
        if not self.ring_up_rate > 0:
            raise ValidationError("ring_up_rate must be positive")
        if not self.amplitude > 0:
            raise ValidationError("amplitude must be positive")
        if abs(self.dispersive_phase) > math.pi:
            raise ValidationError("|dispersive_phase| must not exceed pi")

    def state_phase(self, state: int) -> float:
        if state == 0:
            return -self.dispersive_phase / 2
        if state == 1:
            return self.dispersive_phase / 2
        if self.leakage_phase is not None:
            return self.leakage_phase
        return 0.75 * self.dispersive_phase


@dataclass(frozen=True, eq=False)
class CrosstalkModel:
    """``cross_phase[i][j]``: phase pull (rad) on resonator i while qubit j is excited."""

    cross_phase: np.ndarray

    def __post_init__(self):
        m = np.array(self.cross_phase, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError("cross_phase must be square")
        if not np.all(np.isfinite(m)):
            raise ValidationError("cross_phase must be finite")
        if np.any(np.diag(m) != 0):
            raise ValidationError("cross_phase diagonal must be zero")
        m.setflags(write=False)
        object.__setattr__(self, "cross_phase", m)

    def __eq__(self, other):
        return isinstance(other, CrosstalkModel) and np.array_equal(
            self.cross_phase, other.cross_phase
        )

    @classmethod
    def none(cls, n: int) -> CrosstalkModel:
        return cls(np.zeros((n, n)))

    @classmethod
    def lorentzian(
        cls, if_frequencies: Sequence[float], scale: float, half_width: float = MEAN_KAPPA_MHZ
    ) -> CrosstalkModel:
        """Pull decaying as a Lorentzian in IF separation, ``scale`` at zero detuning."""
        f = np.asarray(if_frequencies, dtype=np.float64)
        detuning = f[:, None] - f[None, :]
        m = scale / (1.0 + (detuning / half_width) ** 2)
        np.fill_diagonal(m, 0.0)
        return cls(m)


@dataclass(frozen=True, eq=False)
class SimConfig:
    qubits: tuple[QubitSimParams, ...]
    resonators: tuple[ResonatorSimParams, ...]
    crosstalk: CrosstalkModel
    noise_sigma: float
    grid: SampleGrid
    seed: int = 0
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        object.__setattr__(self, "resonators", tuple(self.resonators))
        n = len(self.qubits)
        if n < 1 or len(self.resonators) != n:
            raise ValidationError("need one resonator per qubit and at least one qubit")
        if self.crosstalk.cross_phase.shape != (n, n):
            raise ValidationError("crosstalk matrix does not match qubit count")
        if not self.noise_sigma >= 0:
            raise ValidationError("noise_sigma must be >= 0")

    @property
    def num_qubits(self) -> int:
        return len(self.qubits)

    @property
    def if_frequencies(self) -> list[float]:
        return [r.if_frequency for r in self.resonators]

    def __eq__(self, other):
        return isinstance(other, SimConfig) and self.to_dict() == other.to_dict()

    def to_dict(self) -> dict[str, Any]:
        return {
            "qubits": [asdict(q) for q in self.qubits],
            "resonators": [asdict(r) for r in self.resonators],
            "cross_phase": self.crosstalk.cross_phase.tolist(),
            "noise_sigma": self.noise_sigma,
            "sample_period": self.grid.sample_period,
            "num_samples": self.grid.num_samples,
            "seed": self.seed,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SimConfig:
        qubits = [QubitSimParams(**{k: float(v) for k, v in q.items()}) for q in d["qubits"]]
        resonators = [ResonatorSimParams(**r) for r in d["resonators"]]
        n = len(qubits)
        if "cross_phase" in d:
            crosstalk = CrosstalkModel(np.asarray(d["cross_phase"], dtype=float))
        elif "crosstalk_scale" in d:
            crosstalk = CrosstalkModel.lorentzian(
                [r.if_frequency for r in resonators],
                float(d["crosstalk_scale"]),
                float(d.get("crosstalk_half_width", MEAN_KAPPA_MHZ)),
            )
        else:
            crosstalk = CrosstalkModel.none(n)
        if "num_samples" in d:
            grid = SampleGrid(int(d["num_samples"]), float(d.get("sample_period", 2.0)))
        else:
            grid = SampleGrid.from_duration(
                float(d["measurement_time"]), float(d.get("sample_period", 2.0))
            )
        return cls(
            qubits=qubits,
            resonators=resonators,
            crosstalk=crosstalk,
            noise_sigma=float(d["noise_sigma"]),
            grid=grid,
            seed=int(d.get("seed", 0)),
            extra=dict(d.get("extra", {})),
        )

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=float)
        return hashlib.sha256(text.encode()).hexdigest()

    def with_(self, **changes) -> SimConfig:
        return replace(self, **changes)


def load_config(path: str | Path) -> SimConfig:
    """Read a YAML (or JSON) simulation config."""
    with open(path, encoding="utf-8") as f:
        return SimConfig.from_dict(yaml.safe_load(f))


def save_config(config: SimConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=False)


def dispersive_phase_from_chi(chi: float, kappa: float) -> float:
    """Phase separation of the two steady-state phasors for a probe at the mean frequency."""
    return 2.0 * math.atan(2.0 * chi / kappa)


def shot_rng(seed: int, shot_index: int) -> np.random.Generator:
    """Independent stream for one shot, derived from the master seed by counter."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(shot_index,)))


def _draw(rng: np.random.Generator, n_qubits: int, m: int):
    # Fixed draw order so every shot consumes its stream identically.
    u = rng.random((3, n_qubits))
    decay = rng.standard_exponential(n_qubits)
    noise = rng.standard_normal(2 * m)
    return u, decay, noise


def _state_paths(config: SimConfig, label: int, u: np.ndarray, decay: np.ndarray):
    """Per-qubit (initial state, decay time in ns)."""
    states = np.zeros(config.num_qubits, dtype=np.int64)
    jump = np.full(config.num_qubits, np.inf)
    for i, q in enumerate(config.qubits):
        state = int(u[0, i] < q.thermal_excitation_prob)
        if (label >> i) & 1:
            if u[1, i] < q.pi_pulse_fidelity:
                state = 1 - state
            if state == 1 and u[2, i] < q.leakage_prob:
                state = 2
        states[i] = state
        if state == 1 and math.isfinite(q.t1):
            jump[i] = decay[i] * q.t1 * 1e3
    return states, jump


def _envelopes(config: SimConfig) -> np.ndarray:
    t = config.grid.times
    return np.stack(
        [
            r.amplitude
            * (1.0 - np.exp(-r.ring_up_rate * 1e-3 * t))
            * np.exp(2j * np.pi * r.if_frequency * 1e-3 * t)
            for r in config.resonators
        ]
    )


def _noiseless(config: SimConfig, states: np.ndarray, jump: np.ndarray, env: np.ndarray):
    """Noise-free multiplexed signal for a batch of state paths.

    ``states``/``jump`` have shape (shots, N).
    """
    t = config.grid.times
    n = config.num_qubits
    # excited_or_leaked[s, j, t]: qubit j not in ground at sample t
    state_t = np.where(t[None, None, :] < jump[:, :, None], states[:, :, None], 0)
    phase_table = np.array(
        [[r.state_phase(s) for s in (0, 1, 2)] for r in config.resonators]
    )  # (N, 3)
    phase = phase_table[np.arange(n)[None, :, None], state_t]
    active = (state_t != 0).astype(np.float64)
    cross = config.crosstalk.cross_phase
    if np.any(cross):
        phase = phase + np.einsum("ij,sjt->sit", cross, active)
    return np.einsum("sit,it->st", np.exp(1j * phase), env)


def _finish(config: SimConfig, clean: np.ndarray, noise: np.ndarray) -> np.ndarray:
    m = config.grid.num_samples
    noisy = clean + config.noise_sigma * (noise[..., :m] + 1j * noise[..., m:])
    # quantise like the on-disk format so datasets round-trip exactly
    return (
        noisy.real.astype(np.float32).astype(np.float64)
        + 1j * noisy.imag.astype(np.float32).astype(np.float64)
    )


def generate_shot(
    config: SimConfig, label: PreparedLabel | int, rng: np.random.Generator
) -> IQTrace:
    """Simulate one record for prepared configuration ``label``."""
    bits = label.bits if isinstance(label, PreparedLabel) else int(label)
    if not 0 <= bits < 2**config.num_qubits:
        raise ValidationError("label out of range")
    u, decay, noise = _draw(rng, config.num_qubits, config.grid.num_samples)
    states, jump = _state_paths(config, bits, u, decay)
    clean = _noiseless(config, states[None], jump[None], _envelopes(config))[0]
    return IQTrace(config.grid, _finish(config, clean, noise))


def noiseless_trace(
    config: SimConfig, states: Sequence[int], jump_times_ns: Sequence[float] | None = None
) -> np.ndarray:
    """Deterministic signal for given per-qubit states (0, 1, 2) and optional decay times."""
    states = np.asarray(states, dtype=np.int64)
    jump = (
        np.full(config.num_qubits, np.inf)
        if jump_times_ns is None
        else np.asarray(jump_times_ns, dtype=float)
    )
    return _noiseless(config, states[None], jump[None], _envelopes(config))[0]


def generate_dataset(
    config: SimConfig, shots_per_label: int, chunk: int = 2048
) -> ShotDataset:
    """All ``2**N`` configurations, ``shots_per_label`` each, in label-major order.

    Shot ``k`` uses ``shot_rng(config.seed, k)``, so any single shot can be
    regenerated with :func:`generate_shot`.
    """
    n = config.num_qubits
    if shots_per_label < 1:
        raise ValueError("shots_per_label must be >= 1")
    total = shots_per_label * 2**n
    if total > MAX_TOTAL_SHOTS:
        raise ValueError(f"{total} shots exceed the dataset limit")
    m = config.grid.num_samples
    env = _envelopes(config)
    labels = np.repeat(np.arange(2**n, dtype=np.int64), shots_per_label)
    samples = np.empty((total, m), dtype=np.complex128)
    for start in range(0, total, chunk):
        stop = min(total, start + chunk)
        states = np.empty((stop - start, n), dtype=np.int64)
        jumps = np.empty((stop - start, n))
        noise = np.empty((stop - start, 2 * m))
        for k in range(start, stop):
            u, decay, noise[k - start] = _draw(shot_rng(config.seed, k), n, m)
            states[k - start], jumps[k - start] = _state_paths(config, int(labels[k]), u, decay)
        samples[start:stop] = _finish(config, _noiseless(config, states, jumps, env), noise)
    manifest = {
        "generator": "muxreadout.simulator",
        "config_digest": config.digest(),
        "seed": config.seed,
        "num_qubits": n,
        "if_frequencies": config.if_frequencies,
        "shots_per_label": shots_per_label,
        "noise_sigma": config.noise_sigma,
        "cross_phase": config.crosstalk.cross_phase.tolist(),
        "normalization": None,
    }
    manifest.update(config.extra)
    return ShotDataset(samples, labels, config.grid, n, manifest)


def _state_separation(config: SimConfig, qubit: int) -> np.ndarray:
    """Noise-free demodulated ground-minus-excited difference for one qubit."""
    from .dsp import demodulate_samples

    ground = np.zeros(config.num_qubits, dtype=np.int64)
    excited = ground.copy()
    excited[qubit] = 1
    diff = noiseless_trace(config, ground) - noiseless_trace(config, excited)
    return demodulate_samples(diff, config.grid, config.resonators[qubit].if_frequency)


def ideal_fisher(config: SimConfig, qubit: int, noise_sigma: float | None = None) -> float:
    """Fisher criterion of the matched-filtered signal without decay or preparation errors.

    With white noise of standard deviation sigma in each quadrature the
    matched filter reaches ``R = sum |ground - excited|^2 / sigma^2``.
    """
    sigma = config.noise_sigma if noise_sigma is None else noise_sigma
    energy = float(np.sum(np.abs(_state_separation(config, qubit)) ** 2))
    if sigma == 0:
        return math.inf if energy > 0 else 0.0
    return energy / sigma**2


def calibrate_noise_for_fisher(config: SimConfig, qubit_index: int, target_R: float) -> float:
    """Noise level at which qubit ``qubit_index`` reaches Fisher criterion ``target_R``."""
    if not target_R > 0:
        raise ValueError("target_R must be positive")
    energy = float(np.sum(np.abs(_state_separation(config, qubit_index)) ** 2))
    if energy <= 0 or config.resonators[qubit_index].dispersive_phase == 0:
        raise ValueError("qubit states are indistinguishable; no noise level reaches the target")
    return math.sqrt(energy / target_R)


def with_fisher_targets(config: SimConfig, targets: Sequence[float]) -> SimConfig:
    """Rescale resonator amplitudes so each qubit reaches its Fisher target at the config's noise."""
    if len(targets) != config.num_qubits:
        raise ValueError("one target per qubit required")
    resonators = []
    for i, (res, target) in enumerate(zip(config.resonators, targets)):
        current = ideal_fisher(config, i)
        if not 0 < current < math.inf:
            raise ValueError(f"qubit {i} separation is degenerate")
        resonators.append(replace(res, amplitude=res.amplitude * math.sqrt(target / current)))
    return replace(config, resonators=tuple(resonators))


def device_config(
    qubits: Sequence[int] = (0, 1, 2, 3, 4),
    measurement_time: float = 1000.0,
    fisher_targets: Sequence[float] | None = None,
    crosstalk_scale: float = 0.0,
    realistic_preparation: bool = True,
    seed: int = 0,
    sample_period: float = 2.0,
) -> SimConfig:
    """Config modelled on the five-qubit reference device, restricted to ``qubits``."""
    qubits = list(qubits)
    grid = SampleGrid.from_duration(measurement_time, sample_period)
    qs, rs = [], []
    for q in qubits:
        qs.append(
            QubitSimParams(
                t1=DEVICE_T1_US[q],
                thermal_excitation_prob=DEVICE_P1_GIVEN_0[q] if realistic_preparation else 0.0,
                pi_pulse_fidelity=DEVICE_PI_FIDELITY[q] if realistic_preparation else 1.0,
            )
        )
        rs.append(
            ResonatorSimParams(
                if_frequency=DEVICE_IF_MHZ[q],
                dispersive_phase=dispersive_phase_from_chi(DEVICE_CHI_MHZ[q], DEVICE_KAPPA_MHZ[q]),
                ring_up_rate=math.pi * DEVICE_KAPPA_MHZ[q],
            )
        )
    config = SimConfig(
        qubits=qs,
        resonators=rs,
        crosstalk=CrosstalkModel.lorentzian([r.if_frequency for r in rs], crosstalk_scale),
        noise_sigma=1.0,
        grid=grid,
        seed=seed,
        extra={"device_qubits": qubits, "crosstalk_scale": crosstalk_scale},
    )
    targets = fisher_targets if fisher_targets is not None else [DEVICE_FISHER_R[q] for q in qubits]
    return with_fisher_targets(config, targets)

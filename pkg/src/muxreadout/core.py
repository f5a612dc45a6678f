"""Domain types, the shot-dataset container and its binary file format."""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Iterator, Sequence

import numpy as np

MAGIC = b"QRDD"
FORMAT_VERSION = 1
# magic | version u32 | N u16 | M u32 | period f32 | shots u64 | manifest length u32
_HEADER = struct.Struct("<4sIHIfQI")


class DatasetError(Exception):
    """Base class for dataset problems."""


class ValidationError(DatasetError, ValueError):
    pass


class DatasetFormatError(DatasetError):
    pass


class UnsupportedVersionError(DatasetFormatError):
    pass


class DatasetCorruptionError(DatasetFormatError):
    def __init__(self, message: str, shot_index: int | None = None):
        super().__init__(message)
        self.shot_index = shot_index


@dataclass(frozen=True)
class SampleGrid:
    """Uniform sampling grid of one readout record.

    ``sample_period`` is in nanoseconds.
    """

    num_samples: int
    sample_period: float = 2.0

    def __post_init__(self):
        if self.sample_period <= 0:
            raise ValidationError("sample_period must be positive")
        if int(self.num_samples) != self.num_samples or self.num_samples < 1:
            raise ValidationError("num_samples must be a positive integer")

    @property
    def measurement_time(self) -> float:
        return self.num_samples * self.sample_period

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.num_samples) * self.sample_period

    @classmethod
    def from_duration(cls, measurement_time: float, sample_period: float = 2.0) -> SampleGrid:
        num = int(round(measurement_time / sample_period))
        return cls(num_samples=num, sample_period=sample_period)


def interleave(samples: np.ndarray) -> np.ndarray:
    """Complex ``(..., M)`` array to real ``(..., 2M)`` laid out I0, Q0, I1, Q1, ..."""
    samples = np.asarray(samples)
    out = np.empty(samples.shape[:-1] + (2 * samples.shape[-1],), dtype=np.float64)
    out[..., 0::2] = samples.real
    out[..., 1::2] = samples.imag
    return out


def deinterleave(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return values[..., 0::2] + 1j * values[..., 1::2]


@dataclass(frozen=True, eq=False)
class IQTrace:
    """A single-shot heterodyne record ``z[n] = I[n] + jQ[n]``."""

    grid: SampleGrid
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.shape != (self.grid.num_samples,):
            raise ValidationError(
                f"trace has {samples.shape} samples, grid expects {self.grid.num_samples}"
            )
        if not np.all(np.isfinite(samples)):
            raise ValidationError("trace contains non-finite samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def interleaved(self) -> np.ndarray:
        return interleave(self.samples)

    def __eq__(self, other):
        if not isinstance(other, IQTrace):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.samples, other.samples)


@dataclass(frozen=True)
class PreparedLabel:
    """Prepared configuration; bit ``i`` set means qubit ``i`` received a pi pulse."""

    bits: int
    num_qubits: int

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValidationError("num_qubits must be >= 1")
        if not 0 <= self.bits < 2**self.num_qubits:
            raise ValidationError(f"label {self.bits} out of range for {self.num_qubits} qubits")

    def bit(self, qubit: int) -> int:
        return (self.bits >> qubit) & 1

    def __str__(self):
        # qubit 0 printed rightmost, like an integer
        return format(self.bits, f"0{self.num_qubits}b")


def label_bits(labels: np.ndarray, qubit: int) -> np.ndarray:
    return (np.asarray(labels) >> qubit) & 1


def _canonical_manifest(manifest: dict[str, Any] | None) -> dict[str, Any]:
    return json.loads(json.dumps(manifest or {}, sort_keys=True))


@dataclass(frozen=True, eq=False)
class ShotDataset:
    """Labelled single-shot records sharing one sampling grid.

    Samples are held as an ``(shots, M)`` complex array; labels as integers
    in ``[0, 2**num_qubits)``. ``manifest["label_counts"]`` is always kept
    in sync with the labels.
    """

    samples: np.ndarray
    labels: np.ndarray
    grid: SampleGrid
    num_qubits: int
    manifest: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        labels = np.asarray(self.labels, dtype=np.int64)
        if samples.ndim == 1 and samples.size == 0:
            samples = samples.reshape(0, self.grid.num_samples)
        if samples.ndim != 2 or samples.shape[1] != self.grid.num_samples:
            raise ValidationError(
                f"samples shape {samples.shape} inconsistent with M={self.grid.num_samples}"
            )
        if labels.shape != (samples.shape[0],):
            raise ValidationError(
                f"{labels.shape[0] if labels.ndim else 0} labels for {samples.shape[0]} traces"
            )
        if self.num_qubits < 1:
            raise ValidationError("num_qubits must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= 2**self.num_qubits):
            raise ValidationError("label out of range")
        if not np.all(np.isfinite(samples)):
            raise ValidationError("dataset contains non-finite samples")
        samples.setflags(write=False)
        labels.setflags(write=False)
        manifest = _canonical_manifest(self.manifest)
        manifest["num_qubits"] = self.num_qubits
        manifest["label_counts"] = np.bincount(labels, minlength=2**self.num_qubits).tolist()
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "manifest", manifest)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ShotDataset):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.num_qubits == other.num_qubits
            and np.array_equal(self.samples, other.samples)
            and np.array_equal(self.labels, other.labels)
            and self.manifest == other.manifest
        )

    @property
    def traces(self) -> list[IQTrace]:
        return [IQTrace(self.grid, s) for s in self.samples]

    def trace(self, index: int) -> IQTrace:
        return IQTrace(self.grid, self.samples[index])

    def label(self, index: int) -> PreparedLabel:
        return PreparedLabel(int(self.labels[index]), self.num_qubits)

    def __iter__(self) -> Iterator[tuple[IQTrace, PreparedLabel]]:
        for i in range(len(self)):
            yield self.trace(i), self.label(i)

    @property
    def label_counts(self) -> np.ndarray:
        return np.asarray(self.manifest["label_counts"], dtype=np.int64)

    @property
    def if_frequencies(self) -> list[float]:
        freqs = self.manifest.get("if_frequencies")
        if freqs is None:
            raise ValidationError("dataset manifest has no if_frequencies")
        return [float(f) for f in freqs]

    def interleaved(self) -> np.ndarray:
        return interleave(self.samples)

    def with_manifest(self, **updates) -> ShotDataset:
        manifest = dict(self.manifest)
        manifest.update(updates)
        return ShotDataset(self.samples, self.labels, self.grid, self.num_qubits, manifest)

    def subset(self, indices: Sequence[int] | np.ndarray) -> ShotDataset:
        idx = np.asarray(indices, dtype=np.int64)
        return ShotDataset(
            self.samples[idx], self.labels[idx], self.grid, self.num_qubits, self.manifest
        )

    def truncate(self, num_samples: int) -> ShotDataset:
        """Keep only the first ``num_samples`` samples of every trace."""
        if not 1 <= num_samples <= self.grid.num_samples:
            raise ValidationError(
                f"cannot truncate {self.grid.num_samples}-sample traces to {num_samples}"
            )
        if num_samples == self.grid.num_samples:
            return self
        grid = SampleGrid(num_samples, self.grid.sample_period)
        return ShotDataset(
            self.samples[:, :num_samples], self.labels, grid, self.num_qubits, self.manifest
        )

    def select_qubits(self, qubits: Sequence[int]) -> ShotDataset:
        """Restrict to shots whose other qubits were left in the ground state.

        Labels are re-indexed so that bit ``k`` of the new label is qubit
        ``qubits[k]``; the manifest's per-qubit lists are sliced to match.
        """
        qubits = list(qubits)
        if not qubits or len(set(qubits)) != len(qubits):
            raise ValidationError("qubit subset must be non-empty and unique")
        if any(q < 0 or q >= self.num_qubits for q in qubits):
            raise ValidationError(f"qubit subset {qubits} outside [0, {self.num_qubits})")
        mask = 0
        for q in qubits:
            mask |= 1 << q
        keep = np.flatnonzero((self.labels & ~mask) == 0)
        new_labels = np.zeros(keep.size, dtype=np.int64)
        for k, q in enumerate(qubits):
            new_labels |= label_bits(self.labels[keep], q) << k
        manifest = dict(self.manifest)
        for key in ("if_frequencies",):
            if key in manifest:
                manifest[key] = [manifest[key][q] for q in qubits]
        manifest["qubit_subset"] = [
            manifest.get("qubit_subset", list(range(self.num_qubits)))[q] for q in qubits
        ]
        return ShotDataset(self.samples[keep], new_labels, self.grid, len(qubits), manifest)


def _open_sink(destination):
    if isinstance(destination, (str, os.PathLike)):
        return open(destination, "wb"), True
    return destination, False


def write_dataset(dataset: ShotDataset, destination: BinaryIO | str | os.PathLike) -> int:
    """Serialize ``dataset``; returns the number of bytes written.

    Samples are stored as little-endian float32, so values that are not
    exactly representable in single precision are rounded.
    """
    if len(dataset.labels) != len(dataset.samples):
        raise ValidationError("labels and samples differ in length")
    manifest = json.dumps(dataset.manifest, sort_keys=True).encode("utf-8")
    header = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        dataset.num_qubits,
        dataset.grid.num_samples,
        dataset.grid.sample_period,
        len(dataset),
        len(manifest),
    )
    m = dataset.grid.num_samples
    record = np.dtype([("label", "<u4"), ("iq", "<f4", (2 * m,))])
    payload = np.empty(len(dataset), dtype=record)
    payload["label"] = dataset.labels
    payload["iq"] = dataset.interleaved()
    sink, owned = _open_sink(destination)
    try:
        sink.write(header)
        sink.write(manifest)
        sink.write(payload.tobytes())
    finally:
        if owned:
            sink.close()
    return len(header) + len(manifest) + payload.nbytes


def read_dataset(source: BinaryIO | str | os.PathLike | bytes) -> ShotDataset:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif isinstance(source, (str, os.PathLike)):
        data = Path(source).read_bytes()
    else:
        data = source.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise DatasetFormatError("not a shot dataset file (bad magic)")
    if len(data) < _HEADER.size:
        raise DatasetCorruptionError("truncated header")
    _, version, n_qubits, m, period, shots, manifest_len = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"dataset format version {version} is not supported")
    offset = _HEADER.size
    if len(data) < offset + manifest_len:
        raise DatasetCorruptionError("truncated manifest")
    try:
        manifest = json.loads(data[offset : offset + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetCorruptionError(f"unreadable manifest: {exc}") from exc
    offset += manifest_len

    record = np.dtype([("label", "<u4"), ("iq", "<f4", (2 * m,))])
    available = len(data) - offset
    complete = available // record.itemsize
    if complete < shots:
        raise DatasetCorruptionError(
            f"file truncated in shot {complete} of {shots}", shot_index=complete
        )
    if available > shots * record.itemsize:
        raise DatasetCorruptionError("trailing bytes after last shot")
    payload = np.frombuffer(data, dtype=record, count=shots, offset=offset)
    labels = payload["label"].astype(np.int64)
    samples = payload["iq"].astype(np.float64)
    samples = samples[:, 0::2] + 1j * samples[:, 1::2] if shots else np.empty((0, m), complex)

    expected = manifest.get("label_counts")
    dataset = ShotDataset(samples, labels, SampleGrid(m, float(period)), n_qubits, manifest)
    if expected is not None and list(expected) != dataset.manifest["label_counts"]:
        raise DatasetCorruptionError("per-label counts disagree with the manifest")
    return dataset


def dataset_to_bytes(dataset: ShotDataset) -> bytes:
    buf = io.BytesIO()
    write_dataset(dataset, buf)
    return buf.getvalue()


def split_train_test(
    dataset: ShotDataset, train_per_label: int, seed: int
) -> tuple[ShotDataset, ShotDataset]:
    """Stratified split: ``train_per_label`` random shots of every label go to training."""
    if train_per_label < 0:
        raise ValueError("train_per_label must be >= 0")
    rng = np.random.default_rng(seed)
    train_idx = []
    for label in range(2**dataset.num_qubits):
        idx = np.flatnonzero(dataset.labels == label)
        if idx.size == 0:
            continue
        if idx.size < train_per_label:
            raise ValueError(
                f"label {label} has {idx.size} shots, fewer than {train_per_label}"
            )
        train_idx.append(rng.permutation(idx)[:train_per_label])
    train_idx = np.sort(np.concatenate(train_idx)) if train_idx else np.empty(0, np.int64)
    in_train = np.zeros(len(dataset), dtype=bool)
    in_train[train_idx] = True
    return dataset.subset(np.flatnonzero(in_train)), dataset.subset(np.flatnonzero(~in_train))


def stratified_fraction_split(
    dataset: ShotDataset, fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Index split holding out ``fraction`` of every label (used for validation)."""
    held = []
    for label in np.unique(dataset.labels):
        idx = rng.permutation(np.flatnonzero(dataset.labels == label))
        held.append(idx[: int(round(fraction * idx.size))])
    held = np.sort(np.concatenate(held)) if held else np.empty(0, np.int64)
    mask = np.zeros(len(dataset), dtype=bool)
    mask[held] = True
    return np.flatnonzero(~mask), np.flatnonzero(mask)

"""Versioned model files: JSON header followed by a little-endian f64 payload.

Layout: magic ``b"QRDM"`` | version u32 | header length u32 | UTF-8 JSON
header | payload. The header lists every array (name, shape, complex flag)
in payload order; complex arrays are stored as interleaved real/imag pairs.
"""

from __future__ import annotations

import io
import json
import os
import struct
from typing import BinaryIO

import numpy as np

from .classical import LinearSVMModel, MFDiscriminator, MQLSVMModel, SQLSVMDiscriminator
from .core import SampleGrid
from .dsp import FilterKernel
from .neural import FNNArchitecture, FNNModel

MODEL_MAGIC = b"QRDM"
MODEL_VERSION = 1
_PREFIX = struct.Struct("<4sII")


class ModelFormatError(ValueError):
    pass


class _Packer:
    def __init__(self):
        self.entries: list[dict] = []
        self.chunks: list[np.ndarray] = []

    def add(self, name: str, arr) -> None:
        a = np.asarray(arr)
        is_complex = np.iscomplexobj(a)
        flat = a.astype(np.complex128 if is_complex else np.float64).ravel()
        if is_complex:
            flat = np.column_stack([flat.real, flat.imag]).ravel()
        self.entries.append({"name": name, "shape": list(a.shape), "complex": bool(is_complex)})
        self.chunks.append(flat.astype("<f8"))


def _unpack(entries: list[dict], payload: bytes) -> dict[str, np.ndarray]:
    if len(payload) % 8:
        raise ModelFormatError("payload is not a whole number of float64 values")
    values = np.frombuffer(payload, dtype="<f8")
    out, pos = {}, 0
    for e in entries:
        count = int(np.prod(e["shape"], dtype=np.int64))
        width = 2 * count if e["complex"] else count
        chunk = values[pos : pos + width]
        if chunk.size != width:
            raise ModelFormatError(f"payload truncated in array {e['name']!r}")
        pos += width
        arr = chunk[0::2] + 1j * chunk[1::2] if e["complex"] else chunk.astype(np.float64)
        out[e["name"]] = arr.reshape(e["shape"])
    if pos != values.size:
        raise ModelFormatError("unexpected trailing payload")
    return out


def _grid_dict(grid: SampleGrid | None):
    return None if grid is None else {"num_samples": grid.num_samples, "sample_period": grid.sample_period}


def _grid(d) -> SampleGrid | None:
    return None if d is None else SampleGrid(d["num_samples"], d["sample_period"])


def _svm_meta(model: LinearSVMModel, prefix: str, packer: _Packer) -> dict:
    packer.add(prefix + "w", model.weight_vector)
    packer.add(prefix + "mean", model.feature_mean)
    packer.add(prefix + "scale", model.feature_scale)
    return {
        "bias": model.bias,
        "regularization": model.regularization,
        "feature_descriptor": model.feature_descriptor,
    }


def _svm_from(meta: dict, prefix: str, arrays: dict) -> LinearSVMModel:
    return LinearSVMModel(
        weight_vector=arrays[prefix + "w"],
        bias=float(meta["bias"]),
        regularization=float(meta["regularization"]),
        feature_descriptor=meta["feature_descriptor"],
        feature_mean=arrays[prefix + "mean"],
        feature_scale=arrays[prefix + "scale"],
    )


def model_to_bytes(model) -> bytes:
    if not isinstance(model, (MFDiscriminator, SQLSVMDiscriminator, MQLSVMModel, FNNModel)):
        raise TypeError(f"cannot serialise {type(model).__name__}")
    packer = _Packer()
    header: dict = {"kind": model.kind, "grid": _grid_dict(model.grid)}
    if isinstance(model, MFDiscriminator):
        for i, k in enumerate(model.kernels):
            packer.add(f"kernel{i}", k.weights)
        header.update(
            windows=[list(k.window) for k in model.kernels],
            thresholds=list(model.thresholds),
            ground_above=list(model.ground_above),
            if_frequencies=list(model.if_frequencies),
        )
    elif isinstance(model, SQLSVMDiscriminator):
        header["if_frequencies"] = list(model.if_frequencies)
        header["svms"] = [_svm_meta(m, f"svm{i}_", packer) for i, m in enumerate(model.models)]
    elif isinstance(model, MQLSVMModel):
        header["if_frequencies"] = list(model.if_frequencies)
        header["svms"] = [
            _svm_meta(m, f"svm{i}_", packer) for i, m in enumerate(model.classifiers)
        ]
    else:
        arch = model.architecture
        header["architecture"] = {
            "input_dim": arch.input_dim,
            "hidden_dims": list(arch.hidden_dims),
            "output_dim": arch.output_dim,
        }
        header["training_record"] = model.training_record
        header["standardized"] = model.feature_mean is not None
        for i, (w, b) in enumerate(zip(model.weights, model.biases)):
            packer.add(f"w{i}", w)
            packer.add(f"b{i}", b)
        if model.feature_mean is not None:
            packer.add("mean", model.feature_mean)
            packer.add("scale", model.feature_scale)
    header["arrays"] = packer.entries
    text = json.dumps(header, sort_keys=True, allow_nan=False).encode("utf-8")
    payload = b"".join(c.tobytes() for c in packer.chunks)
    return _PREFIX.pack(MODEL_MAGIC, MODEL_VERSION, len(text)) + text + payload


def model_from_bytes(data: bytes):
    if len(data) < _PREFIX.size:
        raise ModelFormatError("model file too short")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MODEL_MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    try:
        header = json.loads(data[_PREFIX.size : _PREFIX.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable model header: {exc}") from exc
    arrays = _unpack(header["arrays"], data[_PREFIX.size + hlen :])
    kind, grid = header["kind"], _grid(header["grid"])
    if kind in ("mf", "boxcar"):
        kernels = [
            FilterKernel(arrays[f"kernel{i}"], tuple(w)) for i, w in enumerate(header["windows"])
        ]
        return MFDiscriminator(
            kernels,
            [float(t) for t in header["thresholds"]],
            header["if_frequencies"],
            grid,
            header["ground_above"],
            kind=kind,
        )
    if kind in ("sq-lsvm", "mq-lsvm"):
        svms = [_svm_from(m, f"svm{i}_", arrays) for i, m in enumerate(header["svms"])]
        cls = SQLSVMDiscriminator if kind == "sq-lsvm" else MQLSVMModel
        return cls(svms, header["if_frequencies"], grid)
    if kind == "fnn":
        a = header["architecture"]
        arch = FNNArchitecture(a["input_dim"], tuple(a["hidden_dims"]), a["output_dim"])
        n_layers = len(arch.layer_dims)
        std = header["standardized"]
        return FNNModel(
            [arrays[f"w{i}"] for i in range(n_layers)],
            [arrays[f"b{i}"] for i in range(n_layers)],
            arch,
            arrays["mean"] if std else None,
            arrays["scale"] if std else None,
            grid,
            header.get("training_record", {}),
        )
    raise ModelFormatError(f"unknown model kind {kind!r}")


def save_model(model, destination: BinaryIO | str | os.PathLike) -> int:
    data = model_to_bytes(model)
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "wb") as fh:
            return fh.write(data)
    return destination.write(data)


def load_model(source: BinaryIO | str | os.PathLike | bytes):
    if isinstance(source, bytes):
        return model_from_bytes(source)
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return model_from_bytes(fh.read())
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        return model_from_bytes(source.read())
    raise TypeError("unsupported model source")

"""Experiment driver: training, evaluation, sweeps and report bundles."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from ..classical import (
    DEFAULT_C_GRID,
    MFDiscriminator,
    train_boxcar,
    train_mf,
    train_mq_lsvm,
    train_sq_lsvm,
)
from ..core import ShotDataset, read_dataset, split_train_test
from ..metrics import (
    FidelityReport,
    PrepStats,
    cross_fidelity_table,
    prep_stats_from_histograms,
    table_csv,
)
from ..neural import FNNArchitecture, TrainSchedule, train_fnn
from ..simulator import SimConfig, device_config, generate_dataset, load_config

logger = logging.getLogger(__name__)

DISCRIMINATORS = ("mf", "sq-lsvm", "mq-lsvm", "fnn")
KNOWN_KINDS = DISCRIMINATORS + ("boxcar",)

# desk-scale crosstalk benchmark: device qubits 2-4, 0.5 us records
DESK_QUBITS = (2, 3, 4)
DESK_MEASUREMENT_NS = 500.0
DESK_SEED = 7
DESK_TRAIN_PER_LABEL = 2000
DESK_TEST_PER_LABEL = 5000
# result of calibrate_crosstalk_scale(target=0.03) on the desk benchmark
DESK_CROSSTALK_SCALE = 4.0
DESK_CF_TARGET = 0.03
DESK_FNN_SCHEDULE = TrainSchedule(max_epochs=60, stop_patience=25, dropout=0.2)


class PlanError(ValueError):
    """Invalid experiment plan or sweep argument."""


class ReportError(RuntimeError):
    """Report requested with missing evaluation artifacts."""

    def __init__(self, missing: Sequence[str]):
        self.missing = list(missing)
        super().__init__("missing evaluation artifacts: " + ", ".join(self.missing))


@dataclass(frozen=True)
class TrainOptions:
    """Per-discriminator training settings shared by every sweep point."""

    mf_spectators: str = "ground"
    svm_spectators: str = "all"
    C_grid: tuple[float, ...] = DEFAULT_C_GRID
    svm_epochs: int = 200
    svm_batch_size: int = 128
    validation_ratio: float = 0.35
    fnn_schedule: TrainSchedule = DESK_FNN_SCHEDULE
    fnn_hidden: tuple[int, ...] | None = None
    seed: int = 0

    def with_spectators(self, policy: str | None) -> TrainOptions:
        if policy is None:
            return self
        return replace(self, mf_spectators=policy, svm_spectators=policy)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["C_grid"] = list(self.C_grid)
        d["fnn_hidden"] = None if self.fnn_hidden is None else list(self.fnn_hidden)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TrainOptions:
        d = dict(d)
        if "C_grid" in d:
            d["C_grid"] = tuple(float(c) for c in d["C_grid"])
        if d.get("fnn_hidden") is not None:
            d["fnn_hidden"] = tuple(int(h) for h in d["fnn_hidden"])
        if "fnn_schedule" in d:
            base = asdict(DESK_FNN_SCHEDULE)
            base.update(d["fnn_schedule"])
            d["fnn_schedule"] = TrainSchedule(**base)
        return cls(**d)


def _check_kind(kind: str) -> str:
    if kind not in KNOWN_KINDS:
        raise PlanError(f"unknown discriminator {kind!r}; choose from {', '.join(KNOWN_KINDS)}")
    return kind


def train_discriminator(kind: str, train: ShotDataset, options: TrainOptions = TrainOptions()):
    """Train one discriminator of ``kind`` on ``train``."""
    _check_kind(kind)
    o = options
    if kind == "mf":
        return train_mf(train, spectator_policy=o.mf_spectators)
    if kind == "boxcar":
        return train_boxcar(train, spectator_policy=o.mf_spectators)
    if kind == "sq-lsvm":
        return train_sq_lsvm(
            train,
            spectator_policy=o.svm_spectators,
            C_grid=o.C_grid,
            epochs=o.svm_epochs,
            validation_ratio=o.validation_ratio,
            seed=o.seed,
            batch_size=o.svm_batch_size,
        )
    if kind == "mq-lsvm":
        return train_mq_lsvm(
            train,
            C_grid=o.C_grid,
            epochs=o.svm_epochs,
            validation_ratio=o.validation_ratio,
            seed=o.seed,
            batch_size=o.svm_batch_size,
        )
    arch = None
    if o.fnn_hidden is not None:
        arch = FNNArchitecture(2 * train.grid.num_samples, o.fnn_hidden, 2**train.num_qubits)
    return train_fnn(train, o.fnn_schedule, seed=o.seed, architecture=arch)


@dataclass
class Evaluation:
    """A trained discriminator together with its test-set report."""

    kind: str
    report: FidelityReport
    predictions: np.ndarray = field(repr=False)
    train_seconds: float = 0.0
    model: Any = field(default=None, repr=False)


def evaluate(model, test: ShotDataset, name: str | None = None) -> tuple[FidelityReport, np.ndarray]:
    """Predict every test shot and summarise the result."""
    predictions = model.predict_dataset(test)
    report = FidelityReport.from_predictions(
        name or model.kind, predictions, test.labels, test.num_qubits
    )
    return report, predictions


def compare(
    train: ShotDataset,
    test: ShotDataset,
    kinds: Sequence[str] = DISCRIMINATORS,
    options: TrainOptions = TrainOptions(),
) -> dict[str, Evaluation]:
    """Train and evaluate each discriminator kind on the same split."""
    out = {}
    for kind in kinds:
        start = time.perf_counter()
        model = train_discriminator(kind, train, options)
        seconds = time.perf_counter() - start
        report, pred = evaluate(model, test, kind)
        logger.info("%s: GM %.4f in %.1f s", kind, report.geometric_mean, seconds)
        out[kind] = Evaluation(kind, report, pred, seconds, model)
    return out


# ---------------------------------------------------------------------------
# Desk benchmark


def benchmark_config(
    crosstalk_scale: float = DESK_CROSSTALK_SCALE,
    seed: int = DESK_SEED,
    qubits: Sequence[int] = DESK_QUBITS,
    measurement_time: float = DESK_MEASUREMENT_NS,
) -> SimConfig:
    """Three-qubit crosstalk benchmark with realistic preparation errors."""
    return device_config(qubits, measurement_time, crosstalk_scale=crosstalk_scale, seed=seed)


def benchmark_data(
    config: SimConfig | None = None,
    train_per_label: int = DESK_TRAIN_PER_LABEL,
    test_per_label: int = DESK_TEST_PER_LABEL,
    split_seed: int = 1,
) -> tuple[ShotDataset, ShotDataset]:
    config = config or benchmark_config()
    dataset = generate_dataset(config, train_per_label + test_per_label)
    return split_train_test(dataset, train_per_label, split_seed)


def nearest_neighbour_cf(report: FidelityReport) -> float:
    return report.mean_abs_cf_by_offset[0] if report.mean_abs_cf_by_offset else 0.0


def calibrate_crosstalk_scale(
    target: float = DESK_CF_TARGET,
    lo: float = 0.0,
    hi: float = 10.0,
    iterations: int = 8,
    train_per_label: int = 1000,
    test_per_label: int = 2000,
    seed: int = DESK_SEED,
    qubits: Sequence[int] = DESK_QUBITS,
    measurement_time: float = DESK_MEASUREMENT_NS,
) -> tuple[float, float]:
    """Bisect the crosstalk scale so the MF nearest-neighbour mean |F^CF| hits ``target``.

    Returns
    -------
    scale, measured
        The calibrated scale and the MF cross-fidelity measured at it.
    """

    def measure(scale: float) -> float:
        cfg = benchmark_config(scale, seed, qubits, measurement_time)
        train, test = benchmark_data(cfg, train_per_label, test_per_label)
        report, _ = evaluate(train_mf(train), test)
        return nearest_neighbour_cf(report)

    f_hi = measure(hi)
    if f_hi < target:
        raise PlanError(f"crosstalk at scale {hi} gives only {f_hi:.4f} < {target}")
    best = (hi, f_hi)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        f_mid = measure(mid)
        if abs(f_mid - target) < abs(best[1] - target):
            best = (mid, f_mid)
        if f_mid < target:
            lo = mid
        else:
            hi = mid
    return best


# ---------------------------------------------------------------------------
# Plans and sweeps


def _parse_subset(s) -> tuple[int, ...]:
    if isinstance(s, str):
        return tuple(int(v) for v in s.replace(";", ",").split(",") if v.strip())
    return tuple(int(v) for v in s)


@dataclass(frozen=True)
class ExperimentPlan:
    """Data source, discriminators and sweep points for one experiment.

    Exactly one of ``dataset`` (path to a dataset file) or ``config`` (a
    :class:`SimConfig` or a path to a YAML config) must be given. A
    simulated source is generated with ``shots_per_label`` shots of every
    configuration; ``train_per_label`` of them go to training.
    """

    dataset: str | None = None
    config: SimConfig | str | None = None
    shots_per_label: int = DESK_TRAIN_PER_LABEL + DESK_TEST_PER_LABEL
    train_per_label: int = DESK_TRAIN_PER_LABEL
    discriminators: tuple[str, ...] = DISCRIMINATORS
    truncation_ns: tuple[float, ...] = ()
    train_sizes: tuple[int, ...] = ()
    subsets: tuple[tuple[int, ...], ...] = ()
    spectators: str | None = None
    out_dir: str = "."
    seed: int = 0
    options: TrainOptions = TrainOptions()

    def __post_init__(self):
        if (self.dataset is None) == (self.config is None):
            raise PlanError("give exactly one of a dataset file or a simulation config")
        for k in self.discriminators:
            _check_kind(k)
        if self.spectators not in (None, "ground", "all"):
            raise PlanError("spectators must be 'ground' or 'all'")
        if any(not t > 0 for t in self.truncation_ns):
            raise PlanError("truncation times must be positive")
        if any(s < 1 for s in self.train_sizes):
            raise PlanError("training sizes must be >= 1")
        if any(len(s) == 0 or len(set(s)) != len(s) for s in self.subsets):
            raise PlanError("subsets must be non-empty without repeats")
        if self.train_per_label < 1:
            raise PlanError("train_per_label must be >= 1")

    @property
    def train_options(self) -> TrainOptions:
        return replace(self.options.with_spectators(self.spectators), seed=self.seed)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ExperimentPlan:
        d = dict(d)
        if isinstance(d.get("config"), Mapping):
            d["config"] = SimConfig.from_dict(d["config"])
        for key, conv in (
            ("discriminators", str),
            ("truncation_ns", float),
            ("train_sizes", int),
        ):
            if key in d:
                d[key] = tuple(conv(v) for v in d[key])
        if "subsets" in d:
            d["subsets"] = tuple(_parse_subset(s) for s in d["subsets"])
        if "options" in d:
            d["options"] = TrainOptions.from_dict(d["options"])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentPlan:
        """Read a YAML plan; relative data paths resolve against the plan's directory."""
        with open(path, encoding="utf-8") as f:
            d = yaml.safe_load(f) or {}
        for key in ("dataset", "config"):
            if isinstance(d.get(key), str) and not Path(d[key]).is_absolute():
                d[key] = str(Path(path).parent / d[key])
        return cls.from_dict(d)

    def load_data(self) -> tuple[ShotDataset, ShotDataset]:
        """Read or simulate the data source and split it into train and test sets."""
        if self.dataset is not None:
            dataset = read_dataset(self.dataset)
        else:
            config = self.config if isinstance(self.config, SimConfig) else load_config(self.config)
            dataset = generate_dataset(config, self.shots_per_label)
        self.validate(dataset)
        try:
            return split_train_test(dataset, self.train_per_label, self.seed)
        except ValueError as exc:
            raise PlanError(str(exc)) from exc

    def validate(self, dataset: ShotDataset) -> None:
        for t in self.truncation_ns:
            truncation_samples(dataset, t)
        for s in self.subsets:
            bad = [q for q in s if not 0 <= q < dataset.num_qubits]
            if bad:
                raise PlanError(f"subset {list(s)} has qubits outside [0, {dataset.num_qubits})")


def truncation_samples(dataset: ShotDataset, time_ns: float) -> int:
    """Number of samples in a ``time_ns`` prefix; rejects prefixes beyond the record."""
    m = dataset.grid.num_samples
    k = int(round(time_ns / dataset.grid.sample_period))
    if time_ns > dataset.grid.measurement_time + 1e-9 * max(1.0, time_ns) or k > m:
        raise PlanError(
            f"truncation {time_ns} ns exceeds the {dataset.grid.measurement_time} ns record"
        )
    if k < 1:
        raise PlanError(f"truncation {time_ns} ns is shorter than one sample")
    return k


@dataclass
class SweepPoint:
    """One (sweep value, discriminator) evaluation."""

    value: Any
    kind: str
    report: FidelityReport
    train_seconds: float = 0.0


def _points(value, evaluations: Mapping[str, Evaluation]) -> list[SweepPoint]:
    return [SweepPoint(value, k, e.report, e.train_seconds) for k, e in evaluations.items()]


def sweep_csv(points: Sequence[SweepPoint], parameter: str) -> str:
    """Wide table: sweep value, discriminator, geometric mean, per-qubit fidelities."""
    n = max((p.report.num_qubits for p in points), default=0)
    header = [parameter, "discriminator", "geometric_mean"]
    header += [f"F_q{i}" for i in range(n)] + ["frobenius_fidelity", "mean_abs_cf_offset_1"]
    rows = []
    for p in points:
        r = p.report
        per = [float(f) for f in r.per_qubit] + [""] * (n - r.num_qubits)
        cf1 = float(r.mean_abs_cf_by_offset[0]) if r.mean_abs_cf_by_offset else ""
        value = float(p.value) if isinstance(p.value, (int, float)) else p.value
        rows.append(
            [value, p.kind, float(r.geometric_mean), *per, float(r.frobenius_fidelity), cf1]
        )
    return table_csv(header, rows)


def _write(out_dir: str | Path | None, name: str, text: str) -> Path | None:
    if out_dir is None:
        return None
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    path = path / name
    path.write_text(text, encoding="utf-8")
    return path


def run_time_sweep(
    plan: ExperimentPlan, train: ShotDataset, test: ShotDataset, out_dir: str | Path | None = None
) -> list[SweepPoint]:
    """Retrain and evaluate every discriminator on prefix-truncated records."""
    if not plan.truncation_ns:
        raise PlanError("plan has no truncation times")
    steps = [truncation_samples(train, t) for t in plan.truncation_ns]
    points = []
    for t, k in zip(plan.truncation_ns, steps):
        evals = compare(train.truncate(k), test.truncate(k), plan.discriminators, plan.train_options)
        points += _points(k * train.grid.sample_period, evals)
    _write(out_dir, "time_sweep.csv", sweep_csv(points, "time_ns"))
    return points


def run_training_size_sweep(
    plan: ExperimentPlan, train: ShotDataset, test: ShotDataset, out_dir: str | Path | None = None
) -> list[SweepPoint]:
    """Retrain on stratified subsamples of ``plan.train_sizes`` shots per label."""
    if not plan.train_sizes:
        raise PlanError("plan has no training sizes")
    available = int(train.label_counts[train.label_counts > 0].min()) if len(train) else 0
    too_big = [s for s in plan.train_sizes if s > available]
    if too_big:
        raise PlanError(f"training sizes {too_big} exceed the {available} shots per label available")
    points = []
    for size in plan.train_sizes:
        sub = train if size == available else split_train_test(train, size, plan.seed)[0]
        points += _points(size, compare(sub, test, plan.discriminators, plan.train_options))
    _write(out_dir, "training_size_sweep.csv", sweep_csv(points, "train_per_label"))
    return points


def subset_name(subset: Sequence[int]) -> str:
    return "-".join(str(q) for q in subset)


def run_subset_sweep(
    plan: ExperimentPlan, train: ShotDataset, test: ShotDataset, out_dir: str | Path | None = None
) -> dict[tuple[int, ...], dict[str, FidelityReport]]:
    """Discriminate qubit subsets with every other qubit held in its ground state."""
    if not plan.subsets:
        raise PlanError("plan has no qubit subsets")
    plan.validate(train)
    results: dict[tuple[int, ...], dict[str, FidelityReport]] = {}
    for subset in plan.subsets:
        evals = compare(
            train.select_qubits(subset),
            test.select_qubits(subset),
            plan.discriminators,
            plan.train_options,
        )
        results[tuple(subset)] = {k: e.report for k, e in evals.items()}
    _write(out_dir, "subset_sweep.csv", subset_csv(results))
    return results


def subset_csv(results: Mapping[tuple[int, ...], Mapping[str, FidelityReport]]) -> str:
    """Long table: one row per (subset, discriminator, qubit)."""
    rows = []
    for subset, reports in results.items():
        for kind, r in reports.items():
            for pos, q in enumerate(subset):
                rows.append([subset_name(subset), len(subset), q, kind, float(r.per_qubit[pos])])
    return table_csv(["subset", "N", "qubit", "discriminator", "fidelity"], rows)


# ---------------------------------------------------------------------------
# Reports


def prep_stats_for(mf: MFDiscriminator, test: ShotDataset, seed: int = 0) -> list[PrepStats]:
    """Preparation statistics of each qubit from its MF output, spectators in ground."""
    stats = []
    for i in range(test.num_qubits):
        ground = mf.project(test.samples[test.labels == 0], i)
        excited = mf.project(test.samples[test.labels == (1 << i)], i)
        if not (ground.size and excited.size):
            raise ReportError([f"ground/excited test shots for qubit {i}"])
        stats.append(prep_stats_from_histograms(ground, excited, seed=seed))
    return stats


def prep_stats_csv(stats: Sequence[PrepStats]) -> str:
    if not stats:
        return table_csv(["qubit"], [])
    names = list(asdict(stats[0]).keys())
    rows = []
    for i, s in enumerate(stats):
        values = asdict(s)
        rows.append([i] + ["" if values[k] is None else float(values[k]) for k in names])
    return table_csv(["qubit"] + names, rows)


def confusion_csv(report: FidelityReport) -> str:
    cm = report.confusion.entries
    n = report.num_qubits
    names = [format(k, f"0{n}b")[::-1] for k in range(2**n)]
    rows = [[names[r]] + [float(v) for v in cm[r]] for r in range(cm.shape[0])]
    return table_csv(["prepared\\assigned"] + names, rows)


def difference_matrix(a: FidelityReport, b: FidelityReport) -> np.ndarray:
    """Confusion matrix of ``a`` minus that of ``b``."""
    if a.num_qubits != b.num_qubits:
        raise ValueError("reports cover different qubit counts")
    return a.confusion.entries - b.confusion.entries


def fidelity_table_csv(
    reports: Mapping[str, FidelityReport],
    subset_results: Mapping[tuple[int, ...], Mapping[str, FidelityReport]] | None = None,
) -> str:
    """Per-qubit 1Q and NQ fidelity columns followed by mean kQ fidelities.

    ``F_q{i}_1Q`` comes from the single-qubit subset ``(i,)`` when present.
    ``mean_F_{k}Q`` is the mean over the evaluated k-qubit subsets of their
    geometric-mean fidelity; the full run supplies the N-qubit value.
    """
    n = max(r.num_qubits for r in reports.values())
    sizes = sorted({len(s) for s in (subset_results or {})} | {n})
    header = ["discriminator"]
    for i in range(n):
        header += [f"F_q{i}_1Q", f"F_q{i}_{n}Q"]
    header += [f"mean_F_{k}Q" for k in sizes]
    rows = []
    for kind, r in reports.items():
        row: list = [kind]
        for i in range(n):
            single = (subset_results or {}).get((i,), {}).get(kind)
            row += ["" if single is None else float(single.per_qubit[0]), float(r.per_qubit[i])]
        for k in sizes:
            gms = [
                rep[kind].geometric_mean
                for s, rep in (subset_results or {}).items()
                if len(s) == k and kind in rep
            ]
            if k == n and not gms:
                gms = [r.geometric_mean]
            row.append(float(np.mean(gms)) if gms else "")
        rows.append(row)
    return table_csv(header, rows)


def hamming_csv(reports: Mapping[str, FidelityReport]) -> str:
    n = max(r.num_qubits for r in reports.values())
    rows = []
    for kind, r in reports.items():
        dist = r.hamming_distribution or {}
        rows.append([kind] + [float(dist.get(w, 0.0)) if dist else "" for w in range(1, n + 1)])
    return table_csv(["discriminator"] + [f"weight_{w}" for w in range(1, n + 1)], rows)


def run_report(
    evaluations: Mapping[str, FidelityReport | Evaluation | None],
    out_dir: str | Path,
    required: Sequence[str] = (),
    prep_stats: Sequence[PrepStats] | None = None,
    subset_results: Mapping[tuple[int, ...], Mapping[str, FidelityReport]] | None = None,
    extra: Mapping[str, Any] | None = None,
) -> dict[str, Path]:
    """Write confusion matrices, the FNN - MF difference, tables and a JSON summary.

    Raises
    ------
    ReportError
        If ``evaluations`` is empty, holds ``None`` entries or lacks any
        kind listed in ``required``.
    """
    missing = [k for k in required if evaluations.get(k) is None]
    missing += [k for k, v in evaluations.items() if v is None and k not in missing]
    if not evaluations or missing:
        raise ReportError(missing or ["evaluations"])
    reports = {
        k: (v.report if isinstance(v, Evaluation) else v) for k, v in evaluations.items()
    }
    out = Path(out_dir)
    paths: dict[str, Path] = {}
    for kind, r in reports.items():
        paths[f"confusion_{kind}"] = _write(out, f"confusion_{kind}.csv", confusion_csv(r))
    summary: dict[str, Any] = {
        "discriminators": {
            k: {
                "geometric_mean": r.geometric_mean,
                "per_qubit": r.per_qubit,
                "frobenius_fidelity": r.frobenius_fidelity,
                "mean_abs_cf_by_offset": r.mean_abs_cf_by_offset,
                "hamming_distribution": r.hamming_distribution,
            }
            for k, r in reports.items()
        }
    }
    if "fnn" in reports and "mf" in reports:
        diff = difference_matrix(reports["fnn"], reports["mf"])
        n = reports["fnn"].num_qubits
        names = [format(k, f"0{n}b")[::-1] for k in range(2**n)]
        rows = [[names[i]] + [float(v) for v in diff[i]] for i in range(diff.shape[0])]
        paths["difference_fnn_mf"] = _write(
            out, "difference_fnn_mf.csv", table_csv(["prepared\\assigned"] + names, rows)
        )
        summary["fnn_minus_mf_diagonal_mass"] = float(np.trace(diff))
    paths["fidelity_table"] = _write(out, "fidelity_table.csv", fidelity_table_csv(reports, subset_results))
    paths["crosstalk_table"] = _write(out, "crosstalk_table.csv", cross_fidelity_table(list(reports.values())))
    paths["hamming"] = _write(out, "hamming.csv", hamming_csv(reports))
    if prep_stats is not None:
        paths["prep_stats"] = _write(out, "prep_stats.csv", prep_stats_csv(prep_stats))
        summary["prep_stats"] = [asdict(s) for s in prep_stats]
    if extra:
        summary.update(extra)
    text = json.dumps(summary, indent=2, sort_keys=True, default=_json_default)
    paths["summary"] = _write(out, "summary.json", text)
    return paths


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    raise TypeError(f"not serialisable: {type(obj).__name__}")


def run_plan(plan: ExperimentPlan) -> dict[str, Any]:
    """Baseline comparison, every requested sweep and the report bundle."""
    train, test = plan.load_data()
    out = Path(plan.out_dir)
    evals = compare(train, test, plan.discriminators, plan.train_options)
    for kind, e in evals.items():
        _write(out, f"{kind}.metrics.json", e.report.to_json())
    result: dict[str, Any] = {"baseline": evals}
    if plan.truncation_ns:
        result["time_sweep"] = run_time_sweep(plan, train, test, out)
    if plan.train_sizes:
        result["training_size_sweep"] = run_training_size_sweep(plan, train, test, out)
    subsets = None
    if plan.subsets:
        subsets = result["subset_sweep"] = run_subset_sweep(plan, train, test, out)
    prep = prep_stats_for(evals["mf"].model, test, plan.seed) if "mf" in evals else None
    extra = {
        "train_seconds": {k: e.train_seconds for k, e in evals.items()},
        "train_shots": len(train),
        "test_shots": len(test),
        "manifest": train.manifest,
    }
    result["report"] = run_report(evals, out, prep_stats=prep, subset_results=subsets, extra=extra)
    return result


__all__ = [
    "DISCRIMINATORS",
    "DESK_CROSSTALK_SCALE",
    "DESK_FNN_SCHEDULE",
    "Evaluation",
    "ExperimentPlan",
    "PlanError",
    "ReportError",
    "SweepPoint",
    "TrainOptions",
    "benchmark_config",
    "benchmark_data",
    "calibrate_crosstalk_scale",
    "compare",
    "evaluate",
    "nearest_neighbour_cf",
    "run_plan",
    "run_report",
    "run_subset_sweep",
    "run_time_sweep",
    "run_training_size_sweep",
    "train_discriminator",
]

"""Command-line entry point: simulate, train, evaluate, report, sweep, calibrate."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import asdict, replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from ..core import DatasetError, read_dataset, split_train_test, write_dataset
from ..metrics import FidelityReport, PrepStats
from ..models_io import ModelFormatError, load_model, save_model
from ..simulator import generate_dataset, load_config
from .experiments import (
    DISCRIMINATORS,
    ExperimentPlan,
    PlanError,
    ReportError,
    TrainOptions,
    calibrate_crosstalk_scale,
    evaluate,
    prep_stats_for,
    run_plan,
    run_report,
    train_discriminator,
    truncation_samples,
)

OUT_ENV = "MUXREADOUT_OUT"
logger = logging.getLogger("muxreadout")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from exc


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _u32(text: str) -> int:
    v = int(text)
    if not 1 <= v < 2**32:
        raise argparse.ArgumentTypeError("thread count must be a positive 32-bit integer")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--out",
        default=os.environ.get(OUT_ENV, "."),
        help=f"output directory (default: ${OUT_ENV} or the current directory)",
    )
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--threads", type=_u32, default=None, help="BLAS thread limit")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="muxreadout", description="Multiplexed qubit readout discrimination toolkit."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulation config -> dataset file(s)")
    p.add_argument("--config", required=True, help="YAML simulation config")
    p.add_argument("--shots-per-label", type=int, required=True)
    p.add_argument(
        "--train-per-label",
        type=int,
        default=None,
        help="also write train.qrdd/test.qrdd with this many training shots per label",
    )
    p.add_argument("--name", default="dataset.qrdd")
    _common(p)

    p = sub.add_parser("train", help="dataset + discriminator -> model file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--discriminator", choices=DISCRIMINATORS + ("boxcar",), required=True)
    p.add_argument("--spectators", choices=("ground", "all"), default=None)
    p.add_argument("--truncate-ns", type=float, default=None)
    p.add_argument("--model", default=None, help="model path (default: OUT/<kind>.qrdm)")
    p.add_argument("--plan", default=None, help="YAML plan whose training options are used")
    _common(p)

    p = sub.add_parser("evaluate", help="model + dataset -> metrics file")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--truncate-ns", type=float, default=None)
    p.add_argument("--name", default=None, help="discriminator name in the report")
    _common(p)

    p = sub.add_parser("report", help="metrics files -> tables and summary")
    p.add_argument("metrics", nargs="+", help="*.metrics.json files or directories holding them")
    p.add_argument(
        "--discriminator",
        action="append",
        choices=DISCRIMINATORS + ("boxcar",),
        help="require this discriminator (repeatable)",
    )
    _common(p)

    p = sub.add_parser("sweep", help="plan -> baseline, sweeps and report")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="YAML simulation config")
    src.add_argument("--dataset", help="dataset file")
    p.add_argument("--plan", help="YAML experiment plan; flags override its fields")
    p.add_argument("--discriminator", action="append", choices=DISCRIMINATORS + ("boxcar",))
    p.add_argument("--spectators", choices=("ground", "all"), default=None)
    p.add_argument("--truncate-ns", type=_float_list, default=None)
    p.add_argument("--train-sizes", type=_int_list, default=None)
    p.add_argument(
        "--subset", type=_int_list, action="append", help="comma-separated qubits (repeatable)"
    )
    p.add_argument("--shots-per-label", type=int, default=None)
    p.add_argument("--train-per-label", type=int, default=None)
    _common(p)

    p = sub.add_parser("calibrate", help="fit the benchmark crosstalk scale to a target MF |F^CF|")
    p.add_argument("--target", type=float, default=0.03)
    p.add_argument("--iterations", type=int, default=8)
    _common(p)
    return parser


def _out(args) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _maybe_truncate(dataset, truncate_ns):
    if truncate_ns is None:
        return dataset
    return dataset.truncate(truncation_samples(dataset, truncate_ns))


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    if args.seed:
        config = replace(config, seed=args.seed)
    dataset = generate_dataset(config, args.shots_per_label)
    out = _out(args)
    write_dataset(dataset, out / args.name)
    if args.train_per_label is not None:
        train, test = split_train_test(dataset, args.train_per_label, args.seed)
        write_dataset(train, out / "train.qrdd")
        write_dataset(test, out / "test.qrdd")
    print(out / args.name)
    return 0


def cmd_train(args) -> int:
    dataset = _maybe_truncate(read_dataset(args.dataset), args.truncate_ns)
    options = ExperimentPlan.load(args.plan).options if args.plan else TrainOptions()
    options = replace(options.with_spectators(args.spectators), seed=args.seed)
    model = train_discriminator(args.discriminator, dataset, options)
    path = Path(args.model) if args.model else _out(args) / f"{args.discriminator}.qrdm"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, path)
    print(path)
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    dataset = _maybe_truncate(read_dataset(args.dataset), args.truncate_ns)
    name = args.name or model.kind
    report, _ = evaluate(model, dataset, name)
    out = _out(args)
    path = out / f"{name}.metrics.json"
    path.write_text(report.to_json(), encoding="utf-8")
    if model.kind == "mf":
        stats = prep_stats_for(model, dataset, args.seed)
        (out / f"{name}.prep.json").write_text(
            json.dumps([asdict(s) for s in stats], indent=2), encoding="utf-8"
        )
    print(path)
    return 0


def _collect(paths) -> tuple[dict, list, list[str]]:
    reports, prep, missing = {}, None, []
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(p.glob("*.metrics.json")) + sorted(p.glob("*.prep.json"))
        elif p.exists():
            files.append(p)
        else:
            missing.append(str(p))
    for f in files:
        if f.name.endswith(".prep.json"):
            prep = [PrepStats(**d) for d in json.loads(f.read_text(encoding="utf-8"))]
        else:
            r = FidelityReport.from_json(f.read_text(encoding="utf-8"))
            reports[r.discriminator] = r
    return reports, prep, missing


def cmd_report(args) -> int:
    reports, prep, missing = _collect(args.metrics)
    if missing:
        raise ReportError(missing)
    paths = run_report(reports, _out(args), required=args.discriminator or (), prep_stats=prep)
    print(paths["summary"])
    return 0


def cmd_sweep(args) -> int:
    plan = ExperimentPlan.load(args.plan) if args.plan else None
    fields = {}
    if args.config:
        fields.update(config=args.config, dataset=None)
    if args.dataset:
        fields.update(dataset=args.dataset, config=None)
    for key, value in (
        ("discriminators", args.discriminator),
        ("spectators", args.spectators),
        ("truncation_ns", args.truncate_ns),
        ("train_sizes", args.train_sizes),
        ("subsets", args.subset),
        ("shots_per_label", args.shots_per_label),
        ("train_per_label", args.train_per_label),
    ):
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        if value is not None:
            fields[key] = value
    fields.update(out_dir=str(_out(args)), seed=args.seed)
    plan = replace(plan, **fields) if plan else ExperimentPlan(**fields)
    result = run_plan(plan)
    for kind, e in result["baseline"].items():
        print(f"{kind}\tGM={e.report.geometric_mean:.6f}")
    return 0


def cmd_calibrate(args) -> int:
    scale, measured = calibrate_crosstalk_scale(args.target, iterations=args.iterations)
    path = _out(args) / "crosstalk_calibration.json"
    path.write_text(
        json.dumps({"target": args.target, "crosstalk_scale": scale, "mf_cf_offset_1": measured}),
        encoding="utf-8",
    )
    print(f"crosstalk_scale={scale:.6g} mf_cf_offset_1={measured:.6g}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "sweep": cmd_sweep,
    "calibrate": cmd_calibrate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    limit = threadpool_limits(args.threads) if args.threads else nullcontext()
    try:
        with limit:
            return COMMANDS[args.command](args)
    except (PlanError, ReportError, DatasetError, ModelFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

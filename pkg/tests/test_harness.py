import csv
import io
import json
import math
from dataclasses import replace

import numpy as np
import pytest
from conftest import gaussian_config, simulate_split

from muxreadout.core import SampleGrid
from muxreadout.harness.cli import main
from muxreadout.harness.experiments import (
    DESK_FNN_SCHEDULE,
    ExperimentPlan,
    PlanError,
    ReportError,
    TrainOptions,
    compare,
    difference_matrix,
    run_report,
    run_subset_sweep,
    run_time_sweep,
    run_training_size_sweep,
    truncation_samples,
)
from muxreadout.metrics import FidelityReport, fmt
from muxreadout.simulator import (
    CrosstalkModel,
    QubitSimParams,
    ResonatorSimParams,
    SimConfig,
    save_config,
    with_fisher_targets,
)

FAST = TrainOptions(C_grid=(1.0,), svm_epochs=10)


@pytest.fixture(scope="module")
def small():
    cfg = gaussian_config([9.0, 6.0], measurement_time=100.0, seed=3)
    train, test = simulate_split(cfg, 120, 300)
    return cfg, train, test


def plan_for(cfg, **kw):
    kw.setdefault("discriminators", ("mf", "sq-lsvm"))
    kw.setdefault("options", FAST)
    return ExperimentPlan(config=cfg, **kw)


def reports(evals):
    return {k: e.report for k, e in evals.items()}


# ---------------------------------------------------------------------------
# run_report


def perfect_report(kind, n=2):
    labels = np.repeat(np.arange(2**n), 5)
    return FidelityReport.from_predictions(kind, labels, labels, n)


def test_report_on_perfect_discriminator(tmp_path):
    r = perfect_report("mf")
    paths = run_report({"mf": r, "fnn": perfect_report("fnn")}, tmp_path)
    np.testing.assert_array_equal(r.confusion.entries, np.eye(4))
    assert r.frobenius_fidelity == 1.0
    rows = list(csv.reader(io.StringIO(paths["confusion_mf"].read_text())))
    assert [float(v) for v in rows[1][1:]] == [1.0, 0.0, 0.0, 0.0]
    summary = json.loads(paths["summary"].read_text())
    assert summary["discriminators"]["mf"]["frobenius_fidelity"] == 1.0


def test_identical_predictions_give_zero_difference(tmp_path):
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(8), 20)
    pred = np.where(rng.random(labels.size) < 0.2, rng.integers(0, 8, labels.size), labels)
    a = FidelityReport.from_predictions("mf", pred, labels, 3)
    b = FidelityReport.from_predictions("fnn", pred, labels, 3)
    assert np.all(difference_matrix(b, a) == 0)
    paths = run_report({"mf": a, "fnn": b}, tmp_path)
    assert json.loads(paths["summary"].read_text())["fnn_minus_mf_diagonal_mass"] == 0.0
    text = paths["difference_fnn_mf"].read_text().splitlines()
    assert all(float(v) == 0 for line in text[1:] for v in line.split(",")[1:])


def test_report_lists_missing_artifacts(tmp_path):
    with pytest.raises(ReportError) as err:
        run_report({"mf": perfect_report("mf"), "sq-lsvm": None}, tmp_path, required=("mf", "fnn"))
    assert set(err.value.missing) == {"fnn", "sq-lsvm"}
    with pytest.raises(ReportError):
        run_report({}, tmp_path)


# ---------------------------------------------------------------------------
# sweeps


def test_truncation_errors(small):
    cfg, train, _ = small
    assert truncation_samples(train, 100.0) == 50
    with pytest.raises(PlanError):
        truncation_samples(train, 102.0)
    with pytest.raises(PlanError):
        truncation_samples(train, 0.5)
    with pytest.raises(PlanError):
        plan_for(cfg, truncation_ns=(-1.0,))
    with pytest.raises(PlanError):
        plan_for(cfg, truncation_ns=(200.0,)).validate(train)


def test_single_time_point_equals_plain_run(small):
    cfg, train, test = small
    plan = plan_for(cfg, truncation_ns=(60.0,))
    (p_mf, p_sq) = run_time_sweep(plan, train, test)
    plain = compare(train.truncate(30), test.truncate(30), plan.discriminators, plan.train_options)
    assert p_mf.report == plain["mf"].report and p_sq.report == plain["sq-lsvm"].report
    assert p_mf.value == 60.0


def test_full_length_truncation_is_noop(small):
    cfg, train, test = small
    plan = plan_for(cfg, truncation_ns=(100.0,))
    points = run_time_sweep(plan, train, test)
    base = reports(compare(train, test, plan.discriminators, plan.train_options))
    assert {p.kind: p.report for p in points} == base


def test_training_size_sweep(small, tmp_path):
    cfg, train, test = small
    with pytest.raises(PlanError):
        run_training_size_sweep(plan_for(cfg, train_sizes=(121,)), train, test)
    plan = plan_for(cfg, train_sizes=(50, 120))
    points = run_training_size_sweep(plan, train, test, tmp_path)
    base = reports(compare(train, test, plan.discriminators, plan.train_options))
    full = {p.kind: p.report for p in points if p.value == 120}
    assert full == base
    assert (tmp_path / "training_size_sweep.csv").exists()


def test_subset_sweep_errors_and_full_subset(small):
    cfg, train, test = small
    with pytest.raises(PlanError):
        run_subset_sweep(plan_for(cfg, subsets=((0, 2),)), train, test)
    with pytest.raises(PlanError):
        plan_for(cfg, subsets=((0, 0),))
    plan = plan_for(cfg, subsets=((0, 1), (1,)))
    res = run_subset_sweep(plan, train, test)
    base = reports(compare(train, test, plan.discriminators, plan.train_options))
    assert res[(0, 1)] == base
    assert res[(1,)]["mf"].num_qubits == 1


def test_sweeps_are_deterministic_and_csv_round_trips(small, tmp_path):
    cfg, train, test = small
    plan = plan_for(cfg, truncation_ns=(40.0, 100.0))
    a = run_time_sweep(plan, train, test, tmp_path / "a")
    run_time_sweep(plan, train, test, tmp_path / "b")
    text = (tmp_path / "a" / "time_sweep.csv").read_text()
    assert text == (tmp_path / "b" / "time_sweep.csv").read_text()
    rows = list(csv.DictReader(io.StringIO(text)))
    for p, row in zip(a, rows):
        assert float(row["geometric_mean"]) == float(fmt(p.report.geometric_mean))
        assert float(row["F_q1"]) == float(fmt(p.report.per_qubit[1]))
        assert float(row["time_ns"]) == p.value


def test_plan_yaml_resolves_relative_paths(tmp_path, small):
    cfg, _, _ = small
    save_config(cfg, tmp_path / "c.yaml")
    (tmp_path / "plan.yaml").write_text(
        "config: c.yaml\nshots_per_label: 30\ntrain_per_label: 10\n"
        "discriminators: [mf]\nsubsets: ['0', '0,1']\ntruncation_ns: [50]\n"
    )
    plan = ExperimentPlan.load(tmp_path / "plan.yaml")
    assert plan.subsets == ((0,), (0, 1))
    train, test = plan.load_data()
    assert len(train) == 40 and len(test) == 80


@pytest.mark.slow
def test_boxcar_time_sweep_has_interior_maximum():
    cfg = gaussian_config([6.0], measurement_time=2000.0, seed=9, ring_up_rate=20.0)
    cfg = cfg.with_(qubits=(QubitSimParams(t1=0.5),))
    train, test = simulate_split(cfg, 1000, 5000)
    times = (100.0, 250.0, 500.0, 1000.0, 2000.0)
    points = run_time_sweep(
        plan_for(cfg, truncation_ns=times, discriminators=("boxcar",)), train, test
    )
    gm = [p.report.geometric_mean for p in points]
    best = int(np.argmax(gm))
    assert 0 < best < len(gm) - 1


@pytest.mark.slow
def test_mf_and_sq_saturate_by_1000_shots():
    cfg = gaussian_config([10.0], measurement_time=500.0, seed=41)
    train, test = simulate_split(cfg, 2000, 10_000)
    plan = plan_for(cfg, train_sizes=(1000, 2000), options=TrainOptions())
    points = run_training_size_sweep(plan, train, test)
    for kind in ("mf", "sq-lsvm"):
        f = {p.value: p.report.geometric_mean for p in points if p.kind == kind}
        assert abs(f[2000] - f[1000]) < 0.005


@pytest.mark.slow
def test_single_qubit_subsets_agree():
    cfg = gaussian_config([10.0, 10.0], measurement_time=500.0, seed=43)
    train, test = simulate_split(cfg, 2000, 5000)
    plan = ExperimentPlan(
        config=cfg,
        subsets=((0,), (1,)),
        discriminators=("mf", "sq-lsvm", "mq-lsvm", "fnn"),
        options=TrainOptions(fnn_schedule=DESK_FNN_SCHEDULE),
    )
    for subset, res in run_subset_sweep(plan, train, test).items():
        f = [r.per_qubit[0] for r in res.values()]
        assert max(f) - min(f) < 0.005, (subset, f)


def coupled_pair_config():
    # qubit 1 rotates qubit 0's phasor by 0.35 rad when excited
    cross = np.array([[0.0, 0.35], [0.0, 0.0]])
    cfg = SimConfig(
        qubits=[QubitSimParams(), QubitSimParams()],
        resonators=[ResonatorSimParams(-40.0, 0.6), ResonatorSimParams(40.0, 0.6)],
        crosstalk=CrosstalkModel(cross),
        noise_sigma=1.0,
        grid=SampleGrid.from_duration(300.0),
        seed=19,
    )
    return with_fisher_targets(cfg, [12.0, 12.0])


@pytest.mark.slow
def test_coupled_neighbour_hurts_mf_more_than_fnn():
    cfg = coupled_pair_config()
    train, test = simulate_split(cfg, 2000, 5000)
    plan = ExperimentPlan(
        config=cfg,
        subsets=((0,), (0, 1)),
        discriminators=("mf", "fnn"),
        options=TrainOptions(fnn_schedule=DESK_FNN_SCHEDULE),
    )
    res = run_subset_sweep(plan, train, test)
    drop = {k: res[(0,)][k].per_qubit[0] - res[(0, 1)][k].per_qubit[0] for k in ("mf", "fnn")}
    assert drop["mf"] > drop["fnn"]


@pytest.mark.slow
def test_desk_difference_matrix_has_positive_diagonal_mass(desk_benchmark):
    _, _, evals = desk_benchmark
    diff = difference_matrix(evals["fnn"].report, evals["mf"].report)
    assert np.trace(diff) > 0
    assert math.isclose(diff.sum(), 0.0, abs_tol=1e-9)


# ---------------------------------------------------------------------------
# CLI


@pytest.fixture
def cli_config(tmp_path):
    cfg = gaussian_config([9.0, 6.0], measurement_time=60.0, seed=4)
    save_config(cfg, tmp_path / "cfg.yaml")
    return tmp_path / "cfg.yaml"


def test_cli_pipeline(tmp_path, cli_config, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cli_config), "--shots-per-label", "80",
                 "--train-per-label", "40", "--out", str(out)]) == 0
    for kind in ("mf", "sq-lsvm"):
        assert main(["train", "--dataset", str(out / "train.qrdd"), "--discriminator", kind,
                     "--out", str(out)]) == 0
        assert main(["evaluate", "--model", str(out / f"{kind}.qrdm"),
                     "--dataset", str(out / "test.qrdd"), "--out", str(out / "metrics")]) == 0
    assert (out / "metrics" / "mf.prep.json").exists()
    assert main(["report", str(out / "metrics"), "--out", str(out / "report")]) == 0
    summary = json.loads((out / "report" / "summary.json").read_text())
    assert set(summary["discriminators"]) == {"mf", "sq-lsvm"}
    assert (out / "report" / "prep_stats.csv").exists()
    # the report names its missing inputs
    assert main(["report", str(out / "metrics"), "--discriminator", "fnn",
                 "--out", str(out / "r2")]) == 2
    assert "fnn" in capsys.readouterr().err


def test_cli_out_dir_from_environment(tmp_path, cli_config, monkeypatch):
    monkeypatch.setenv("MUXREADOUT_OUT", str(tmp_path / "env"))
    assert main(["simulate", "--config", str(cli_config), "--shots-per-label", "2"]) == 0
    assert (tmp_path / "env" / "dataset.qrdd").exists()


def test_cli_sweep_and_errors(tmp_path, cli_config, capsys):
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", str(cli_config), "--shots-per-label", "60",
                 "--train-per-label", "30", "--discriminator", "mf", "--truncate-ns", "30,60",
                 "--subset", "0", "--subset", "0,1", "--out", str(out), "--threads", "1"])
    assert code == 0
    for name in ("time_sweep.csv", "subset_sweep.csv", "fidelity_table.csv", "summary.json", "mf.metrics.json"):
        assert (out / name).exists(), name
    assert main(["sweep", "--config", str(cli_config), "--shots-per-label", "60",
                 "--train-per-label", "30", "--discriminator", "mf", "--truncate-ns", "90",
                 "--out", str(out)]) == 2
    assert "exceeds" in capsys.readouterr().err
    assert main(["evaluate", "--model", str(tmp_path / "none.qrdm"),
                 "--dataset", str(tmp_path / "none.qrdd")]) == 2


def test_train_options_round_trip():
    opts = replace(TrainOptions(), svm_epochs=7, fnn_hidden=(8, 4))
    assert TrainOptions.from_dict(json.loads(json.dumps(opts.to_dict()))) == opts

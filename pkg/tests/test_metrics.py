import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from muxreadout.metrics import (
    ConfusionMatrix,
    FidelityReport,
    FitError,
    MetricsError,
    assignment_fidelity,
    assignment_fidelity_from_shots,
    confusion_matrix,
    cross_fidelity,
    cross_fidelity_table,
    fit_shared_mixture,
    fmt,
    frobenius_fidelity,
    geometric_mean_fidelity,
    hamming_error_distribution,
    label_fidelity,
    mean_abs_cf_by_offset,
    per_qubit_fidelities,
    prep_stats,
    prep_stats_from_histograms,
    preparation_fidelity,
    table_csv,
)


def test_perfect_prediction_identity():
    labels = np.repeat(np.arange(8), 3)
    cm = confusion_matrix(labels, labels, 3)
    np.testing.assert_array_equal(cm.entries, np.eye(8))
    assert frobenius_fidelity(cm) == 1.0
    np.testing.assert_array_equal(per_qubit_fidelities(cm), 1.0)


def test_uniform_random_predictions(rng):
    labels = np.repeat(np.arange(32), 4000)
    pred = rng.integers(0, 32, labels.size)
    entries = confusion_matrix(pred, labels, 5).entries
    sigma = math.sqrt((1 / 32) * (31 / 32) / 4000)
    assert np.all(np.abs(entries - 1 / 32) < 5 * sigma)
    np.testing.assert_allclose(entries.sum(axis=1), 1.0, atol=1e-9)


def test_two_shot_toy_exact_fractions():
    cm = confusion_matrix([0, 1, 0], [0, 1, 1], 1)
    assert cm.entries.tolist() == [[1.0, 0.0], [0.5, 0.5]]


def test_unobserved_configuration_is_an_error():
    with pytest.raises(MetricsError):
        confusion_matrix([0, 1], [0, 1], 2)
    with pytest.raises(MetricsError):
        confusion_matrix([0], [0, 1], 1)


def test_assignment_fidelity_table_row():
    # P(1|0)=0.005, P(0|pi)=0.038
    cm = np.array([[0.995, 0.005], [0.038, 0.962]])
    assert assignment_fidelity(cm, 0) == pytest.approx(0.9785)
    assert round(assignment_fidelity(cm, 0), 3) == 0.979


def test_assignment_fidelity_trivial_cases():
    labels = np.repeat(np.arange(4), 5)
    assert assignment_fidelity(confusion_matrix(labels, labels, 2), 1) == 1.0
    ground = confusion_matrix(np.zeros_like(labels), labels, 2)
    assert assignment_fidelity(ground, 0) == 0.5
    with pytest.raises(MetricsError):
        assignment_fidelity(ground, 2)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 3), seed=st.integers(0, 10_000))
def test_two_path_equivalence(n, seed):
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.arange(2**n), rng.integers(0, 2**n, 40)])
    pred = rng.integers(0, 2**n, labels.size)
    cm = confusion_matrix(pred, labels, n)
    for q in range(n):
        assert assignment_fidelity(cm, q) == pytest.approx(
            assignment_fidelity_from_shots(pred, labels, q, n), abs=1e-12
        )
    np.testing.assert_allclose(cm.entries.sum(axis=1), 1.0, atol=1e-9)


def test_geometric_mean_examples():
    assert geometric_mean_fidelity([1.0, 1.0, 1.0]) == 1.0
    assert geometric_mean_fidelity([0.93]) == pytest.approx(0.93)
    table_mf_5q = [0.968, 0.719, 0.914, 0.934, 0.967]
    assert geometric_mean_fidelity(table_mf_5q) == pytest.approx(0.8951, abs=5e-5)
    with pytest.raises(MetricsError):
        geometric_mean_fidelity([0.9, 0.0])


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6))
def test_geometric_mean_below_arithmetic(values):
    gm = geometric_mean_fidelity(values)
    assert gm <= np.mean(values) + 1e-12
    if np.ptp(values) == 0:
        assert gm == pytest.approx(values[0])


def test_cross_fidelity_perfect_and_independent():
    labels = np.repeat(np.arange(4), 10)
    cf = cross_fidelity(confusion_matrix(labels, labels, 2))
    np.testing.assert_allclose(cf, np.eye(2))
    # qubit 0 always read as its own preparation, qubit 1 assignment ignores everything
    pred = (labels & 1) | (np.tile([0, 2], 20))
    cf = cross_fidelity(confusion_matrix(pred, labels, 2))
    assert cf[1, 0] == pytest.approx(0.0)
    assert cf[0, 1] == pytest.approx(0.0)


def test_cross_fidelity_diagonal_conventions():
    cm = np.array([[0.9, 0.1], [0.2, 0.8]])
    f = assignment_fidelity(cm, 0)
    assert cross_fidelity(cm)[0, 0] == pytest.approx(2 * f - 1)
    assert cross_fidelity(cm, diagonal="fidelity")[0, 0] == pytest.approx(f)
    with pytest.raises(ValueError):
        cross_fidelity(cm, diagonal="other")


def test_cross_fidelity_independence_monte_carlo(rng):
    shots = 100_000
    labels = rng.integers(0, 4, shots)
    # each qubit misread with its own probability, independently of the other
    flips = (rng.random((shots, 2)) < [0.05, 0.12]).astype(int)
    pred = labels ^ (flips[:, 0] | (flips[:, 1] << 1))
    cf = cross_fidelity(confusion_matrix(pred, labels, 2))
    for i, j, p in ((0, 1, 0.05), (1, 0, 0.12)):
        # difference of two conditional rates over ~shots/2 each
        sigma = math.sqrt(2 * p * (1 - p) / (shots / 2))
        assert abs(cf[i, j]) < 3 * sigma


def test_mean_abs_cf_by_offset_examples():
    assert mean_abs_cf_by_offset(np.zeros((3, 3))) == [0.0, 0.0]
    assert mean_abs_cf_by_offset(np.array([[1, 0.02], [-0.04, 1]])) == [pytest.approx(0.03)]
    assert mean_abs_cf_by_offset(np.eye(4)) == [0.0, 0.0, 0.0]
    with pytest.raises(MetricsError):
        mean_abs_cf_by_offset(np.zeros((2, 3)))


def test_frobenius_examples():
    assert frobenius_fidelity(np.eye(32)) == 1.0
    assert frobenius_fidelity(np.full((32, 32), 1 / 32)) == pytest.approx(
        1 - math.sqrt(31) / 8, abs=1e-12
    )
    assert 1 - math.sqrt(31) / 8 == pytest.approx(0.3040, abs=1e-4)
    with pytest.raises(MetricsError):
        frobenius_fidelity(np.ones((2, 3)))


def test_frobenius_decreases_towards_uniform():
    path = [frobenius_fidelity((1 - t) * np.eye(8) + t / 8) for t in np.linspace(0, 1, 21)]
    assert all(a > b for a, b in zip(path, path[1:]))


def test_hamming_examples():
    labels = np.zeros(10, dtype=int)
    pred = labels.copy()
    pred[:3] = [1, 2, 4]
    assert hamming_error_distribution(pred, labels, 3) == {1: 1.0, 2: 0.0, 3: 0.0}
    pred = labels.copy()
    pred[:3] = [1, 4, 3]
    dist = hamming_error_distribution(pred, labels, 3)
    assert dist[1] == pytest.approx(2 / 3) and dist[2] == pytest.approx(1 / 3)
    assert hamming_error_distribution(labels, labels, 3) is None


def test_label_and_preparation_fidelity_table_row():
    assert label_fidelity(0.005, 0.038) == pytest.approx(0.9785)
    assert preparation_fidelity(0.005, 0.999) == pytest.approx(0.995, abs=5e-4)
    s = prep_stats(0.005, 0.038, 0.999, f_ach=0.995)
    assert round(s.f_label, 3) == 0.979
    assert round(s.f_prep, 3) == 0.995
    assert round(s.f_mf_bound, 3) == 0.974


def test_mixture_recovers_known_weights(rng):
    n = 20_000
    ground = np.where(rng.random(n) < 0.95, rng.normal(1.0, 0.2, n), rng.normal(-1.0, 0.2, n))
    excited = np.where(rng.random(n) < 0.1, rng.normal(1.0, 0.2, n), rng.normal(-1.0, 0.2, n))
    fit = fit_shared_mixture([ground, excited], 2, seed=1)
    hi = int(np.argmax(fit.means))
    assert fit.weights[0][hi] == pytest.approx(0.95, abs=0.01)
    assert fit.weights[1][hi] == pytest.approx(0.10, abs=0.01)
    assert fit.variance == pytest.approx(0.04, rel=0.05)


def test_prep_stats_from_histograms(rng):
    n = 20_000
    ground = np.where(rng.random(n) < 0.99, rng.normal(1.0, 0.2, n), rng.normal(-1.0, 0.2, n))
    excited = np.where(rng.random(n) < 0.05, rng.normal(1.0, 0.2, n), rng.normal(-1.0, 0.2, n))
    s = prep_stats_from_histograms(ground, excited, seed=2)
    assert s.p1_given_0 == pytest.approx(0.01, abs=0.005)
    assert s.p0_given_pi == pytest.approx(0.05, abs=0.01)
    assert s.fisher_R == pytest.approx(100.0, rel=0.05)
    assert s.f_ach == pytest.approx(1.0, abs=1e-3)


def test_single_component_weight_vanishes(rng):
    values = rng.normal(0.0, 1.0, 5000)
    fit = fit_shared_mixture([values, values], 2, seed=0)
    assert min(fit.weights[0]) == 0.0
    assert max(fit.weights[0]) == pytest.approx(1.0)
    assert fit.variance == pytest.approx(1.0, rel=0.05)


def test_fit_rejects_hopeless_budget(rng):
    values = np.concatenate([rng.normal(-1, 0.3, 500), rng.normal(1, 0.3, 500)])
    with pytest.raises(FitError):
        fit_shared_mixture([values], 2, restarts=2, max_iter=1, tol=0.0)


def test_report_json_round_trip():
    labels = np.repeat(np.arange(4), 3)
    pred = labels.copy()
    pred[0] = 3
    r = FidelityReport.from_predictions("mf", pred, labels, 2)
    back = FidelityReport.from_json(r.to_json())
    assert back == r
    assert back.hamming_distribution == {1: 0.0, 2: 1.0}
    assert isinstance(back.confusion, ConfusionMatrix)


def test_csv_precision_round_trips():
    values = [0.123456789, 1.0, 2.5e-7, 0.999999951]
    text = table_csv(["a", "b", "c", "d"], [values])
    row = next(csv.reader(io.StringIO(text.splitlines()[1])))
    assert [float(v) for v in row] == [float(fmt(v)) for v in values]
    assert row[0] == "0.123457"


def test_cross_fidelity_table_layout():
    labels = np.repeat(np.arange(8), 2)
    r = FidelityReport.from_predictions("fnn", labels, labels, 3)
    lines = cross_fidelity_table([r]).splitlines()
    assert lines[0] == "discriminator,mean_abs_cf_offset_1,mean_abs_cf_offset_2"
    assert lines[1] == "fnn,0,0"


def test_prep_stats_trimodal_leakage(rng):
    n = 20_000
    ground = np.where(rng.random(n) < 0.98, rng.normal(1.0, 0.2, n), rng.normal(-1.0, 0.2, n))
    u = rng.random(n)
    excited = np.select(
        [u < 0.05, u < 0.25], [rng.normal(1.0, 0.2, n), rng.normal(-2.5, 0.2, n)],
        rng.normal(-1.0, 0.2, n),
    )
    s = prep_stats_from_histograms(ground, excited, seed=0)
    assert s.p2_given_pi == pytest.approx(0.20, abs=0.01)
    assert s.p0_given_pi == pytest.approx(0.05, abs=0.01)
    assert s.p1_given_0 == pytest.approx(0.02, abs=0.005)

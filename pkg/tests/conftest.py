import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from muxreadout.core import SampleGrid, split_train_test
from muxreadout.simulator import (
    CrosstalkModel,
    QubitSimParams,
    ResonatorSimParams,
    SimConfig,
    generate_dataset,
    with_fisher_targets,
)


@pytest.fixture(autouse=True, scope="session")
def single_thread():
    # reproducibility contracts hold in single-threaded mode
    with threadpool_limits(1):
        yield


def gaussian_config(
    fisher_targets,
    measurement_time=500.0,
    if_frequencies=None,
    seed=0,
    t1=float("inf"),
    ring_up_rate=13.5,
):
    """Crosstalk-free, decay-free, perfectly prepared qubits at given Fisher criteria."""
    n = len(fisher_targets)
    freqs = if_frequencies or [-60.0 + 50.0 * i for i in range(n)]
    config = SimConfig(
        qubits=[QubitSimParams(t1=t1) for _ in range(n)],
        resonators=[
            ResonatorSimParams(if_frequency=f, dispersive_phase=0.6, ring_up_rate=ring_up_rate)
            for f in freqs
        ],
        crosstalk=CrosstalkModel.none(n),
        noise_sigma=1.0,
        grid=SampleGrid.from_duration(measurement_time),
        seed=seed,
    )
    return with_fisher_targets(config, fisher_targets)


def simulate_split(config, train_per_label, test_per_label, split_seed=1):
    ds = generate_dataset(config, train_per_label + test_per_label)
    return split_train_test(ds, train_per_label, split_seed)


@pytest.fixture(scope="session")
def desk_benchmark():
    """The three-qubit crosstalk benchmark, trained once per session."""
    from muxreadout.harness.experiments import benchmark_data, compare

    train, test = benchmark_data()
    evaluations = compare(train, test)
    return train, test, evaluations


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    """Record one PASS/FAIL line per criterion and fail the test on FAIL."""

    def log(number: int, ok: bool, detail: str) -> None:
        line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return log


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

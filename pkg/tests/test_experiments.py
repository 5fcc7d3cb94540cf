"""Tests for the Monte-Carlo sweep, aggregation and runtime benchmark."""
import math
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from bianm.domain.entities import (
    BenchRecord,
    EstimateResult,
    ExperimentConfig,
    Method,
    SolverReport,
    SolverSettings,
    TrialRecord,
)
from bianm.infrastructure.admm_solver import AdmmConicSolver
from bianm.use_cases.experiments import (
    aggregate_trials,
    derive_seed,
    fit_slopes,
    method_labels,
    records_frame,
    run_bench,
    run_sweep,
)
from bianm.use_cases.interfaces import (
    ResultRepository,
    RuntimeBenchUseCase,
    SnrSweepUseCase,
)

from .fakes import FakeConicSolver


class InMemoryResultRepository(ResultRepository):
    """Keeps everything the use cases persist."""

    def __init__(self) -> None:
        self.trials: List[TrialRecord] = []
        self.aggregate = pd.DataFrame()
        self.metadata: Dict[str, Any] = {}
        self.bench: List[BenchRecord] = []
        self.slopes = pd.DataFrame()

    def save_trials(self, records: Sequence[TrialRecord]) -> Path:
        self.trials = list(records)
        return Path("trials.csv")

    def save_aggregate(self, table: pd.DataFrame) -> Path:
        self.aggregate = table
        return Path("aggregate.csv")

    def save_metadata(self, metadata: Dict[str, Any]) -> Path:
        self.metadata = metadata
        return Path("run_metadata.json")

    def save_bench(self, records: Sequence[BenchRecord], slopes: pd.DataFrame) -> List[Path]:
        self.bench = list(records)
        self.slopes = slopes
        return [Path("bench.csv"), Path("bench_slopes.csv")]

    def save_estimate(self, result: EstimateResult, name: str) -> Path:
        return Path(f"{name}.json")

    def save_trace(self, report: SolverReport, name: str) -> Path:
        return Path(f"{name}_trace.csv")


def small_config(**overrides: Any) -> ExperimentConfig:
    values: Dict[str, Any] = {
        "M": 3,
        "N": 3,
        "L": 1,
        "snr_db": [0.0, math.inf],
        "trials": 3,
        "methods": [Method.BIANM, Method.DEBIANM],
        "solver": SolverSettings(max_iterations=50),
    }
    values.update(overrides)
    return ExperimentConfig(**values)


def test_derive_seed_depends_only_on_indices() -> None:
    assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)
    assert derive_seed(7, 1, 2) != derive_seed(7, 2, 1)
    assert derive_seed(7, 1) != derive_seed(8, 1)
    assert 0 <= derive_seed(0, 0) < 2**32


def test_sweep_smoke_with_real_solver() -> None:
    config = small_config(
        M=8, N=8, snr_db=[math.inf], trials=1, methods=[Method.BIANM],
        solver=SolverSettings(max_iterations=200),
    )
    records = run_sweep(config, AdmmConicSolver())
    assert len(records) == 1
    record = records[0]
    assert record.method == "BiANM"
    assert math.isfinite(record.nmse) and 0.0 <= record.nmse <= 4.0
    assert record.status in {"converged", "max-iter", "infeasible-suspected"}
    assert record.joint_separated and record.decoupled_separated


def test_coupled_sweep_at_side_65_has_no_error_rows() -> None:
    config = small_config(
        M=8, N=8, L=2, snr_db=[0.0, math.inf], trials=3, methods=[Method.BIANM],
        solver=SolverSettings(max_iterations=200),
    )
    records = run_sweep(config, AdmmConicSolver())
    assert len(records) == 6
    assert [r.status for r in records if r.status == "error"] == []
    assert all(math.isfinite(r.nmse) for r in records)


def test_sweep_record_order_and_counts(fake_solver: FakeConicSolver) -> None:
    config = small_config()
    records = run_sweep(config, fake_solver)
    assert len(records) == 2 * 2 * 3
    keys = [(r.method, r.snr_db, r.trial) for r in records]
    expected = [
        (m.value, snr, t) for m in config.methods for snr in config.snr_db for t in range(3)
    ]
    assert keys == expected
    assert all(r.status == "converged" for r in records)


def test_sweep_is_reproducible(fake_solver: FakeConicSolver) -> None:
    config = small_config()
    first = records_frame(run_sweep(config, fake_solver)).drop(columns=["time_s"])
    second = records_frame(run_sweep(config, FakeConicSolver())).drop(columns=["time_s"])
    pd.testing.assert_frame_equal(first, second)


def test_trial_seed_ignores_execution_order(fake_solver: FakeConicSolver) -> None:
    full = run_sweep(small_config(trials=3), fake_solver)
    single = run_sweep(small_config(trials=1), fake_solver)
    assert full[0].seed == single[0].seed
    assert full[0].nmse == single[0].nmse


def test_worker_pool_matches_sequential_run() -> None:
    config = small_config(M=2, N=2, trials=2, solver=SolverSettings(max_iterations=20))
    sequential = records_frame(run_sweep(config, AdmmConicSolver())).drop(columns=["time_s"])
    pooled = records_frame(
        run_sweep(config.model_copy(update={"workers": 2}), AdmmConicSolver())
    ).drop(columns=["time_s"])
    pd.testing.assert_frame_equal(sequential, pooled)


def test_oversampling_baseline_labels(fake_solver: FakeConicSolver) -> None:
    config = small_config(oversampling=5, oversampling_baseline=True, methods=[Method.BIANM])
    assert method_labels(config) == ["BiANM", "BiANM+OS5"]
    records = run_sweep(config, fake_solver)
    assert {r.method for r in records} == {"BiANM", "BiANM+OS5"}
    assert {r.k_os for r in records} == {1, 5}


def test_aggregate_matches_raw_means(fake_solver: FakeConicSolver) -> None:
    config = small_config()
    records = run_sweep(config, fake_solver)
    table = aggregate_trials(records)
    assert len(table) == len(config.methods) * len(config.snr_db)
    assert list(table.columns) == [
        "method", "snr_db", "trials", "mean_nmse", "stderr_nmse", "mean_time_s",
    ]
    raw = records_frame(records)
    for row in table.itertuples(index=False):
        subset = raw[(raw.method == row.method) & (raw.snr_db == row.snr_db)]
        assert abs(subset.nmse.mean() - row.mean_nmse) <= 1e-12
        assert row.trials == len(subset)
        expected_se = subset.nmse.std() / np.sqrt(len(subset))
        assert row.stderr_nmse == pytest.approx(expected_se, abs=1e-12)


def test_failed_trials_are_recorded_not_raised() -> None:
    class ExplodingSolver(FakeConicSolver):
        def solve_coupled(self, problem, settings=None):  # type: ignore[no-untyped-def]
            from bianm.domain.errors import SolverError

            raise SolverError("boom")

    records = run_sweep(small_config(), ExplodingSolver())
    failed = [r for r in records if r.method == "BiANM"]
    assert failed and all(r.status == "error" and math.isnan(r.nmse) for r in failed)
    assert all(r.status == "converged" for r in records if r.method == "DeBiANM")


def test_sweep_use_case_persists_everything(fake_solver: FakeConicSolver) -> None:
    repository = InMemoryResultRepository()
    calls: List[int] = []
    outcome = SnrSweepUseCase(fake_solver, repository).execute(
        small_config(), lambda done, total: calls.append(done)
    )
    assert calls == list(range(1, 2 * 3 + 1))
    assert len(repository.trials) == 12
    assert repository.aggregate.equals(outcome.aggregate)
    assert repository.metadata["seed"] == 0
    assert "numpy" in repository.metadata["versions"]
    assert repository.metadata["config"]["M"] == 3


def test_bench_reports_psd_sides(fake_solver: FakeConicSolver) -> None:
    config = small_config(sizes=[2, 3], repeats=2)
    records = run_bench(config, fake_solver)
    assert [(r.method, r.size) for r in records] == [
        ("BiANM", 2), ("DeBiANM", 2), ("BiANM", 3), ("DeBiANM", 3),
    ]
    sides = {(r.method, r.size): r.psd_side for r in records}
    assert sides[("BiANM", 3)] == 10
    assert sides[("DeBiANM", 3)] == 6
    # one warm-up plus two timed estimates per point
    assert len(fake_solver.problems) == 4 * 3


def test_bench_use_case_fits_slopes(fake_solver: FakeConicSolver) -> None:
    repository = InMemoryResultRepository()
    outcome = RuntimeBenchUseCase(fake_solver, repository).execute(small_config(sizes=[2, 3, 4]))
    assert len(repository.bench) == 6
    assert list(outcome.slopes.columns) == ["method", "dimension", "slope", "ratio"]
    assert list(outcome.slopes.dimension) == ["MN", "M+N"]


def test_fit_slopes_recovers_power_laws() -> None:
    records = [
        BenchRecord("BiANM", size, 1e-3 * (size * size) ** 1.5, 5, size * size + 1)
        for size in (8, 16, 24)
    ] + [
        BenchRecord("DeBiANM", size, 1e-3 * (2 * size) ** 1.0, 5, 2 * size)
        for size in (8, 16, 24)
    ]
    slopes = fit_slopes(records).set_index("method")
    assert slopes.loc["BiANM", "slope"] == pytest.approx(1.5)
    assert slopes.loc["DeBiANM", "slope"] == pytest.approx(1.0)
    assert slopes.loc["BiANM", "ratio"] == pytest.approx(1.5)



@pytest.mark.slow
def test_bench_orders_decoupled_before_coupled() -> None:
    config = small_config(M=8, N=8, sizes=[8, 16, 24], repeats=5, methods=list(Method))
    records = {(r.method, r.size): r for r in run_bench(config, AdmmConicSolver())}
    for size in (8, 16, 24):
        for coupled, decoupled in (("BiANM", "DeBiANM"), ("ReBiANM", "ReDeBiANM")):
            assert records[(decoupled, size)].median_time_s < records[(coupled, size)].median_time_s
            assert records[(coupled, size)].psd_side == size * size + 1
            assert records[(decoupled, size)].psd_side == 2 * size


@pytest.mark.slow
def test_oversampling_helps_at_low_snr() -> None:
    config = ExperimentConfig(
        M=16, N=16, L=2, snr_db=[0.0], trials=100, methods=[Method.BIANM],
        oversampling=5, oversampling_baseline=True,
    )
    frame = records_frame(run_sweep(config, AdmmConicSolver()))
    plain = frame[frame.method == "BiANM"].set_index("trial").nmse.sort_index()
    voted = frame[frame.method == "BiANM+OS5"].set_index("trial").nmse.sort_index()
    # paired one-sided test: voting must not be significantly worse
    assert stats.ttest_rel(voted, plain, alternative="greater").pvalue >= 0.05
    assert voted.mean() <= plain.mean()


@pytest.mark.slow
def test_nmse_trends_across_snr() -> None:
    config = ExperimentConfig(
        M=16, N=16, L=3, trials=100, oversampling=5, oversampling_baseline=True,
    )
    table = aggregate_trials(run_sweep(config, AdmmConicSolver())).set_index(["method", "snr_db"])
    snrs = config.snr_db

    def curve(label: str, column: str = "mean_nmse") -> np.ndarray:
        return np.array([table.loc[(label, snr), column] for snr in snrs])

    for label in method_labels(config):
        mean, se = curve(label), curve(label, "stderr_nmse")
        assert np.all(np.diff(mean) <= np.maximum(se[1:], se[:-1]))

    bianm, debianm = curve("BiANM"), curve("DeBiANM")
    assert np.all(bianm <= debianm + curve("DeBiANM", "stderr_nmse"))

    low = [i for i, snr in enumerate(snrs) if snr <= 0]
    for method in Method:
        plain, voted = curve(method.value), curve(f"{method.value}+OS5")
        se = curve(method.value, "stderr_nmse")
        assert np.all(voted[low] <= plain[low] + se[low])

    gap = np.mean(np.abs(debianm - bianm))
    assert np.mean(np.abs(curve("ReBiANM") - bianm)) <= gap

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Sequence

import pandas as pd

from ..domain.channel import observe, separation_of
from ..domain.entities import (
    BenchRecord,
    ChannelInstance,
    CoupledSolution,
    DecoupledSolution,
    EstimateResult,
    EstimatorConfig,
    ExperimentConfig,
    SeparationReport,
    SolverReport,
    SolverSettings,
    StructuredSdp,
    TrialRecord,
    snr_db_to_sigma2,
)
from .estimators import ChannelEstimator, nmse
from .experiments import (
    ProgressCallback,
    aggregate_trials,
    fit_slopes,
    run_bench,
    run_metadata,
    run_sweep,
    utc_now,
)


class ConicSolver(Protocol):
    """Interface for a backend solving the structured atomic-norm SDPs."""

    def solve_coupled(
        self, problem: StructuredSdp, settings: Optional[SolverSettings] = None
    ) -> CoupledSolution:
        """Solve the program with an (MN+1)-sided PSD block."""
        ...

    def solve_decoupled(
        self, problem: StructuredSdp, settings: Optional[SolverSettings] = None
    ) -> DecoupledSolution:
        """Solve the program with an (M+N)-sided PSD block."""
        ...


class ResultRepository(Protocol):
    """Interface for persisting experiment outputs."""

    def save_trials(self, records: Sequence[TrialRecord]) -> Path:
        ...

    def save_aggregate(self, table: pd.DataFrame) -> Path:
        ...

    def save_metadata(self, metadata: Dict[str, Any]) -> Path:
        ...

    def save_bench(self, records: Sequence[BenchRecord], slopes: pd.DataFrame) -> List[Path]:
        ...

    def save_estimate(self, result: EstimateResult, name: str) -> Path:
        ...

    def save_trace(self, report: SolverReport, name: str) -> Path:
        ...


class ChannelRepository(Protocol):
    """Interface for reading and writing channel instances."""

    def load(self, path: Path) -> ChannelInstance:
        ...

    def save(self, channel: ChannelInstance, path: Path) -> Path:
        ...


@dataclass(frozen=True)
class EstimateOutcome:
    result: EstimateResult
    nmse: float
    separation: SeparationReport
    snr_db: float
    k_os: int


@dataclass(frozen=True)
class SweepOutcome:
    records: List[TrialRecord]
    aggregate: pd.DataFrame
    paths: List[Path]


@dataclass(frozen=True)
class BenchOutcome:
    records: List[BenchRecord]
    slopes: pd.DataFrame
    paths: List[Path]


class EstimateChannelUseCase:
    """Use case for a single-shot estimate of a known channel."""

    def __init__(self, solver: ConicSolver) -> None:
        self._estimator = ChannelEstimator(solver)

    def execute(
        self,
        channel: ChannelInstance,
        config: EstimatorConfig,
        snr_db: float = math.inf,
        seed: int = 0,
        k_os: int = 1,
    ) -> EstimateOutcome:
        """Observe the channel once, estimate it and score the estimate."""
        obs = observe(channel, snr_db_to_sigma2(snr_db), seed, k_os)
        result = self._estimator.estimate(obs, config)
        return EstimateOutcome(
            result=result,
            nmse=nmse(result.h_hat, channel.h),
            separation=separation_of(channel),
            snr_db=snr_db,
            k_os=k_os,
        )


class SnrSweepUseCase:
    """Use case for the NMSE-versus-SNR Monte-Carlo study."""

    def __init__(self, solver: ConicSolver, repository: ResultRepository) -> None:
        self._solver = solver
        self._repository = repository

    def execute(
        self, config: ExperimentConfig, progress: Optional[ProgressCallback] = None
    ) -> SweepOutcome:
        """Run every (method, SNR, trial) and persist raw and aggregate tables."""
        started = utc_now()
        records = run_sweep(config, self._solver, progress)
        aggregate = aggregate_trials(records)
        paths = [
            self._repository.save_trials(records),
            self._repository.save_aggregate(aggregate),
            self._repository.save_metadata(run_metadata(config, started, utc_now())),
        ]
        return SweepOutcome(records, aggregate, paths)


class RuntimeBenchUseCase:
    """Use case for the runtime-versus-array-size study."""

    def __init__(self, solver: ConicSolver, repository: ResultRepository) -> None:
        self._solver = solver
        self._repository = repository

    def execute(
        self, config: ExperimentConfig, progress: Optional[ProgressCallback] = None
    ) -> BenchOutcome:
        """Time every method at every size and fit the scaling slopes."""
        records = run_bench(config, self._solver, progress)
        slopes = fit_slopes(records)
        paths = self._repository.save_bench(records, slopes)
        return BenchOutcome(records, slopes, paths)

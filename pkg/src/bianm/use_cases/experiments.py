"""Monte-Carlo NMSE sweeps and runtime benchmarks."""
import logging
import math
import platform
import statistics
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import TYPE_CHECKING, Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import scipy

from .. import __version__
from ..domain.channel import generate_channel, observe, separation_of
from ..domain.entities import (
    BenchRecord,
    ExperimentConfig,
    Method,
    TrialRecord,
    snr_db_to_sigma2,
)
from ..domain.errors import BianmError
from .estimators import ChannelEstimator, nmse

if TYPE_CHECKING:
    from .interfaces import ConicSolver

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, int], None]


def derive_seed(master: int, *indices: int) -> int:
    """Seed fixed by (master, indices) alone, never by execution order."""
    seq = np.random.SeedSequence(master, spawn_key=tuple(indices))
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def method_label(method: Method, k_os: int) -> str:
    return method.value if k_os == 1 else f"{method.value}+OS{k_os}"


def method_labels(config: ExperimentConfig) -> List[str]:
    return [method_label(m, k) for m in config.methods for k in config.oversampling_levels()]


@dataclass(frozen=True)
class TrialTask:
    trial: int
    snr_index: int
    snr_db: float
    config: ExperimentConfig
    solver: "ConicSolver"


def run_trial(task: TrialTask) -> List[TrialRecord]:
    """Draw one channel, observe it at one SNR and run every configured method."""
    config = task.config
    channel_seed = derive_seed(config.seed, task.trial)
    channel = generate_channel(config.M, config.N, config.L, channel_seed, config.separation)
    separation = separation_of(channel)
    noise_seed = derive_seed(config.seed, task.trial, task.snr_index)
    sigma2 = snr_db_to_sigma2(task.snr_db)
    estimator = ChannelEstimator(task.solver)

    records: List[TrialRecord] = []
    for k_os in config.oversampling_levels():
        # Same noise seed at every oversampling level: the first vote sample
        # equals the plain observation.
        obs = observe(channel, sigma2, noise_seed, k_os)
        for method in config.methods:
            label = method_label(method, k_os)
            try:
                result = estimator.estimate(obs, config.estimator_config(method))
            except (BianmError, np.linalg.LinAlgError) as exc:
                logger.error("trial %d (seed %d) %s at %s dB failed: %s",
                             task.trial, channel_seed, label, task.snr_db, exc)
                records.append(TrialRecord(
                    method=label, snr_db=task.snr_db, trial=task.trial, seed=channel_seed,
                    nmse=math.nan, time_s=math.nan, status="error", k_os=k_os,
                    primal_residual=math.nan, dual_residual=math.nan,
                    joint_separated=separation.joint_ok,
                    decoupled_separated=separation.decoupled_ok,
                ))
                continue
            report = result.final_report
            records.append(TrialRecord(
                method=label,
                snr_db=task.snr_db,
                trial=task.trial,
                seed=channel_seed,
                nmse=nmse(result.h_hat, channel.h, scale_fit=config.scale_fit_metric),
                time_s=result.wall_time_s,
                status=result.status.value,
                k_os=k_os,
                primal_residual=report.primal_residual,
                dual_residual=report.dual_residual,
                joint_separated=separation.joint_ok,
                decoupled_separated=separation.decoupled_ok,
            ))
    return records


def order_records(records: Sequence[TrialRecord], config: ExperimentConfig) -> List[TrialRecord]:
    labels = {label: i for i, label in enumerate(method_labels(config))}
    snrs = {snr: i for i, snr in enumerate(config.snr_db)}
    return sorted(records, key=lambda r: (labels[r.method], snrs[r.snr_db], r.trial))


def run_sweep(
    config: ExperimentConfig,
    solver: "ConicSolver",
    progress: Optional[ProgressCallback] = None,
) -> List[TrialRecord]:
    tasks = [
        TrialTask(trial, index, snr, config, solver)
        for index, snr in enumerate(config.snr_db)
        for trial in range(config.trials)
    ]
    records: List[TrialRecord] = []
    done = 0
    if config.workers == 1:
        for task in tasks:
            records.extend(run_trial(task))
            done += 1
            if progress:
                progress(done, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(run_trial, task) for task in tasks]
            for future in as_completed(futures):
                records.extend(future.result())
                done += 1
                if progress:
                    progress(done, len(tasks))
    return order_records(records, config)


def records_frame(records: Sequence[TrialRecord]) -> pd.DataFrame:
    return pd.DataFrame([record.to_row() for record in records])


def aggregate_trials(records: Sequence[TrialRecord]) -> pd.DataFrame:
    """Mean NMSE, its standard error and mean time per (method, SNR)."""
    frame = records_frame(records)
    grouped = frame.groupby(["method", "snr_db"], sort=False)
    table = grouped.agg(
        trials=("nmse", "count"),
        mean_nmse=("nmse", "mean"),
        std_nmse=("nmse", "std"),
        mean_time_s=("time_s", "mean"),
    ).reset_index()
    table["stderr_nmse"] = (table["std_nmse"] / np.sqrt(table["trials"])).fillna(0.0)
    return table[["method", "snr_db", "trials", "mean_nmse", "stderr_nmse", "mean_time_s"]]


def run_bench(
    config: ExperimentConfig,
    solver: "ConicSolver",
    progress: Optional[ProgressCallback] = None,
) -> List[BenchRecord]:
    """Median wall time per (method, M=N) after one discarded warm-up solve."""
    estimator = ChannelEstimator(solver)
    records: List[BenchRecord] = []
    total = len(config.sizes) * len(config.methods)
    done = 0
    for size in config.sizes:
        L = min(config.L, size)
        channel = generate_channel(size, size, L, derive_seed(config.seed, size))
        obs = observe(channel, 0.0, derive_seed(config.seed, size, 0))
        for method in config.methods:
            est_config = config.estimator_config(method)
            warmup = estimator.estimate(obs, est_config)
            times = [estimator.estimate(obs, est_config).wall_time_s for _ in range(config.repeats)]
            records.append(BenchRecord(
                method=method.value,
                size=size,
                median_time_s=statistics.median(times),
                repeats=config.repeats,
                psd_side=warmup.final_report.psd_side,
            ))
            logger.info("bench %s M=N=%d: median %.3fs", method.value, size, records[-1].median_time_s)
            done += 1
            if progress:
                progress(done, total)
    return records


def fit_slopes(records: Sequence[BenchRecord]) -> pd.DataFrame:
    """Log-log slope of time against MN (coupled) or M+N (decoupled)."""
    rows = []
    for name in dict.fromkeys(record.method for record in records):
        method = Method.parse(name)
        subset = [record for record in records if record.method == name]
        dims = np.array([
            2.0 * r.size if method.is_decoupled else float(r.size) ** 2 for r in subset
        ])
        times = np.array([r.median_time_s for r in subset])
        slope = math.nan
        if len(subset) >= 2 and np.all(times > 0):
            slope = float(np.polyfit(np.log(dims), np.log(times), 1)[0])
        rows.append({
            "method": name,
            "dimension": "M+N" if method.is_decoupled else "MN",
            "slope": slope,
        })
    frame = pd.DataFrame(rows, columns=["method", "dimension", "slope"])
    smallest = frame["slope"].min()
    frame["ratio"] = frame["slope"] / smallest if smallest and not math.isnan(smallest) else math.nan
    return frame


def _finite_json(value: Any) -> Any:
    """Spell non-finite floats as "inf", "-inf" or "nan" so the output is strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {key: _finite_json(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_json(item) for item in value]
    return value


def run_metadata(config: ExperimentConfig, started: datetime, finished: datetime) -> Dict[str, Any]:
    return {
        "config": _finite_json(config.model_dump(mode="json")),
        "seed": config.seed,
        "versions": {
            "bianm": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
        "started": started.isoformat(),
        "finished": finished.isoformat(),
    }


def utc_now() -> datetime:
    return datetime.now(timezone.utc)

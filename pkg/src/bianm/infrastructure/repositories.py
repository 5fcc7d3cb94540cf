import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence

import pandas as pd

from ..domain.channel import channel_from_record
from ..domain.entities import (
    BenchRecord,
    ChannelInstance,
    EstimateResult,
    SolverReport,
    TrialRecord,
)
from ..domain.errors import OutputPathError, ShapeMismatchError
from ..use_cases.experiments import records_frame
from ..use_cases.interfaces import ChannelRepository, ResultRepository

logger = logging.getLogger(__name__)

TRIALS_FILE = "trials.csv"
AGGREGATE_FILE = "aggregate.csv"
METADATA_FILE = "run_metadata.json"
BENCH_FILE = "bench.csv"
SLOPES_FILE = "bench_slopes.csv"


def _write_json(path: Path, payload: Dict[str, Any]) -> Path:
    try:
        path.write_text(json.dumps(payload, indent=2, allow_nan=True), encoding="utf-8")
    except OSError as exc:
        raise OutputPathError(f"cannot write {path}: {exc}") from exc
    return path


class CsvResultRepository(ResultRepository):
    """Writes experiment tables as CSV and metadata as JSON under one directory."""

    def __init__(self, out_dir: Path) -> None:
        self._out_dir = Path(out_dir)
        try:
            self._out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OutputPathError(f"cannot create output directory {self._out_dir}: {exc}") from exc

    @property
    def out_dir(self) -> Path:
        return self._out_dir

    def _write_csv(self, frame: pd.DataFrame, name: str) -> Path:
        path = self._out_dir / name
        try:
            frame.to_csv(path, index=False)
        except OSError as exc:
            raise OutputPathError(f"cannot write {path}: {exc}") from exc
        logger.info("wrote %d rows to %s", len(frame), path)
        return path

    def save_trials(self, records: Sequence[TrialRecord]) -> Path:
        return self._write_csv(records_frame(records), TRIALS_FILE)

    def save_aggregate(self, table: pd.DataFrame) -> Path:
        return self._write_csv(table, AGGREGATE_FILE)

    def save_metadata(self, metadata: Dict[str, Any]) -> Path:
        return _write_json(self._out_dir / METADATA_FILE, metadata)

    def save_bench(self, records: Sequence[BenchRecord], slopes: pd.DataFrame) -> List[Path]:
        frame = pd.DataFrame([record.to_row() for record in records])
        return [self._write_csv(frame, BENCH_FILE), self._write_csv(slopes, SLOPES_FILE)]

    def save_estimate(self, result: EstimateResult, name: str) -> Path:
        return _write_json(self._out_dir / f"{name}.json", result.to_record())

    def save_trace(self, report: SolverReport, name: str) -> Path:
        """Per-iteration residuals of one solve; empty unless tracing was on."""
        frame = pd.DataFrame(
            [
                {
                    "iteration": step.iteration,
                    "primal_residual": step.primal_residual,
                    "dual_residual": step.dual_residual,
                    "rho": step.rho,
                }
                for step in report.trace
            ],
            columns=["iteration", "primal_residual", "dual_residual", "rho"],
        )
        return self._write_csv(frame, f"{name}_trace.csv")


class JsonChannelRepository(ChannelRepository):
    """Channel instances stored as their JSON records."""

    def load(self, path: Path) -> ChannelInstance:
        path = Path(path)
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise OutputPathError(f"cannot read channel file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ShapeMismatchError(f"{path} is not valid JSON: {exc}") from exc
        try:
            return channel_from_record(record)
        except (KeyError, TypeError) as exc:
            raise ShapeMismatchError(f"{path} is not a channel record: {exc}") from exc

    def save(self, channel: ChannelInstance, path: Path) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OutputPathError(f"cannot create {path.parent}: {exc}") from exc
        return _write_json(path, channel.to_record())

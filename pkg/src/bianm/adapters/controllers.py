import math
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Sequence

import pandas as pd
from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table

from ..domain.channel import DECOUPLED_CONSTANT, generate_channel, separation_of
from ..domain.entities import (
    ChannelInstance,
    EstimatorConfig,
    ExperimentConfig,
    SeparationPolicy,
    SeparationReport,
)
from ..use_cases.experiments import ProgressCallback
from ..use_cases.interfaces import (
    BenchOutcome,
    ChannelRepository,
    EstimateChannelUseCase,
    EstimateOutcome,
    ResultRepository,
    RuntimeBenchUseCase,
    SnrSweepUseCase,
    SweepOutcome,
)


class BianmController:
    """Routes CLI requests to the use cases and their results to the presenter."""

    def __init__(
        self,
        sweep_use_case: SnrSweepUseCase,
        bench_use_case: RuntimeBenchUseCase,
        estimate_use_case: EstimateChannelUseCase,
        channels: ChannelRepository,
        results: ResultRepository,
        presenter: "BianmPresenter",
    ) -> None:
        self._sweep_use_case = sweep_use_case
        self._bench_use_case = bench_use_case
        self._estimate_use_case = estimate_use_case
        self._channels = channels
        self._results = results
        self._presenter = presenter

    @property
    def presenter(self) -> "BianmPresenter":
        return self._presenter

    def run_sweep(self, config: ExperimentConfig) -> SweepOutcome:
        total = len(config.snr_db) * config.trials
        with self._presenter.progress("Monte-Carlo trials", total) as advance:
            outcome = self._sweep_use_case.execute(config, advance)
        self._presenter.display_aggregate(outcome.aggregate)
        self._presenter.display_paths(outcome.paths)
        return outcome

    def run_bench(self, config: ExperimentConfig) -> BenchOutcome:
        total = len(config.sizes) * len(config.methods)
        with self._presenter.progress("Benchmark solves", total) as advance:
            outcome = self._bench_use_case.execute(config, advance)
        self._presenter.display_bench(outcome)
        self._presenter.display_paths(outcome.paths)
        return outcome

    def estimate(
        self,
        channel_path: Path,
        config: EstimatorConfig,
        snr_db: float,
        seed: int,
        k_os: int,
        diagnostics: bool = False,
    ) -> EstimateOutcome:
        channel = self._channels.load(channel_path)
        outcome = self._estimate_use_case.execute(channel, config, snr_db, seed, k_os)
        name = f"estimate_{config.method.value}"
        paths = [self._results.save_estimate(outcome.result, name)]
        if diagnostics:
            for index, report in enumerate(outcome.result.reports):
                paths.append(self._results.save_trace(report, f"{name}_solve{index}"))
        self._presenter.display_estimate(outcome)
        self._presenter.display_paths(paths)
        return outcome

    def draw_channel(
        self,
        M: int,
        N: int,
        L: int,
        seed: int,
        separation: SeparationPolicy,
        out: Path,
    ) -> ChannelInstance:
        channel = generate_channel(M, N, L, seed, separation)
        path = self._channels.save(channel, out)
        self._presenter.display_separation(separation_of(channel))
        self._presenter.display_paths([path])
        return channel

    def show_separation(self, channel_path: Path) -> SeparationReport:
        report = separation_of(self._channels.load(channel_path))
        self._presenter.display_separation(report)
        return report


def _fmt(value: float, spec: str = ".4g") -> str:
    return "nan" if math.isnan(value) else format(value, spec)


class BianmPresenter:
    """Formats tables, progress and messages for the terminal."""

    def __init__(self, console: Optional[Console] = None) -> None:
        self.console = console or Console()

    @contextmanager
    def progress(self, description: str, total: int) -> Iterator[ProgressCallback]:
        columns = (
            TextColumn("[bold blue]{task.description}"),
            BarColumn(),
            MofNCompleteColumn(),
            TimeElapsedColumn(),
        )
        with Progress(*columns, console=self.console, transient=True) as bar:
            task = bar.add_task(description, total=total)

            def advance(done: int, _total: int) -> None:
                bar.update(task, completed=done)

            yield advance

    def display_aggregate(self, table: pd.DataFrame) -> None:
        """Mean NMSE per (method, SNR) with its standard error."""
        view = Table(title="NMSE vs SNR", show_header=True, header_style="bold blue")
        view.add_column("Method", style="bold")
        view.add_column("SNR (dB)", justify="right")
        view.add_column("Trials", justify="right")
        view.add_column("Mean NMSE", justify="right")
        view.add_column("Std. error", justify="right", style="dim")
        view.add_column("Mean time (s)", justify="right")
        for row in table.itertuples(index=False):
            view.add_row(
                row.method,
                _fmt(row.snr_db, "g"),
                str(row.trials),
                _fmt(row.mean_nmse),
                _fmt(row.stderr_nmse, ".2g"),
                _fmt(row.mean_time_s, ".3f"),
            )
        self.console.print(view)

    def display_bench(self, outcome: BenchOutcome) -> None:
        view = Table(title="Runtime vs array size", show_header=True, header_style="bold blue")
        view.add_column("Method", style="bold")
        view.add_column("M = N", justify="right")
        view.add_column("PSD side", justify="right")
        view.add_column("Median time (s)", justify="right")
        for record in outcome.records:
            view.add_row(record.method, str(record.size), str(record.psd_side),
                         _fmt(record.median_time_s, ".3f"))
        self.console.print(view)

        slopes = Table(title="Log-log scaling", show_header=True, header_style="bold blue")
        slopes.add_column("Method", style="bold")
        slopes.add_column("Against")
        slopes.add_column("Slope", justify="right")
        slopes.add_column("Ratio", justify="right")
        for row in outcome.slopes.itertuples(index=False):
            slopes.add_row(row.method, row.dimension, _fmt(row.slope, ".3f"), _fmt(row.ratio, ".2f"))
        self.console.print(slopes)

    def display_estimate(self, outcome: EstimateOutcome) -> None:
        result = outcome.result
        report = result.final_report
        color = "green" if result.converged else "yellow"
        lines = [
            f"[bold]Method:[/bold] {result.method.value}",
            f"[bold]SNR:[/bold] {_fmt(outcome.snr_db, 'g')} dB, K_os = {outcome.k_os}",
            f"[bold]NMSE:[/bold] {_fmt(outcome.nmse)}",
            f"[bold]Status:[/bold] [{color}]{result.status.value}[/{color}]"
            f" after {sum(r.iterations for r in result.reports)} iterations"
            f" in {len(result.reports)} solve(s)",
            f"[bold]Objective:[/bold] {_fmt(report.objective)}"
            f"  [dim]PSD side {report.psd_side}, restoration shift"
            f" {_fmt(report.restoration_shift, '.2e')}[/dim]",
            f"[bold]Wall time:[/bold] {result.wall_time_s:.3f} s",
        ]
        if result.theta_hat is not None and result.tau_hat is not None:
            lines.append(f"[bold]Angles:[/bold] {', '.join(_fmt(t) for t in result.theta_hat)}")
            lines.append(f"[bold]Delays:[/bold] {', '.join(_fmt(t) for t in result.tau_hat)}")
        self.console.print(Panel("\n".join(lines), title="Estimate", border_style=color))

    def display_separation(self, report: SeparationReport) -> None:
        view = Table(title="Separation", show_header=True, header_style="bold blue")
        view.add_column("Quantity")
        view.add_column("Value", justify="right")
        view.add_row("min angle gap", _fmt(report.delta_theta))
        view.add_row("min delay gap", _fmt(report.delta_tau))
        view.add_row("joint bound 1/min(M,N)", _fmt(report.joint_bound))
        view.add_row("decoupled bound (angle)", _fmt(report.d1))
        view.add_row("decoupled bound (delay)", _fmt(report.d2))
        view.add_row("joint separated", self._flag(report.joint_ok))
        view.add_row("decoupled separated", self._flag(report.decoupled_ok))
        self.console.print(view)
        if report.extrapolated:
            self.display_info(
                f"M != N: the decoupled bounds d1, d2 use the constant {DECOUPLED_CONSTANT}, "
                "which is only established for M = N."
            )

    @staticmethod
    def _flag(value: bool) -> str:
        return "[green]yes[/green]" if value else "[red]no[/red]"

    def display_paths(self, paths: Sequence[Path]) -> None:
        for path in paths:
            self.console.print(f"[dim]wrote {path}[/dim]")

    def display_error(self, message: str) -> None:
        self.console.print(f"[red]Error: {message}[/red]")

    def display_info(self, message: str) -> None:
        self.console.print(f"[blue]ℹ {message}[/blue]")

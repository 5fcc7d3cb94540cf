import logging
import os
from pathlib import Path
from typing import Optional

import typer
from dotenv import load_dotenv
from rich.logging import RichHandler

from .adapters.controllers import BianmController, BianmPresenter
from .domain.entities import EstimatorConfig, ExperimentConfig, Method, SeparationPolicy, SolverSettings
from .domain.errors import BianmError
from .infrastructure.admm_solver import AdmmConicSolver
from .infrastructure.config import build_config, parse_config, preset_values
from .infrastructure.repositories import CsvResultRepository, JsonChannelRepository
from .use_cases.interfaces import EstimateChannelUseCase, RuntimeBenchUseCase, SnrSweepUseCase

# Load environment variables
load_dotenv()

app = typer.Typer(help="Gridless 1-bit MIMO-OFDM channel estimation experiments")

logger = logging.getLogger("bianm")


def configure_logging() -> None:
    level = os.getenv("BIANM_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
        force=True,
    )


def create_app(out_dir: Path, presenter: Optional[BianmPresenter] = None) -> BianmController:
    """Create and configure the application with dependency injection."""
    # Infrastructure layer
    solver = AdmmConicSolver()
    results = CsvResultRepository(out_dir)
    channels = JsonChannelRepository()

    # Use cases layer
    sweep_use_case = SnrSweepUseCase(solver, results)
    bench_use_case = RuntimeBenchUseCase(solver, results)
    estimate_use_case = EstimateChannelUseCase(solver)

    # Interface adapters layer
    return BianmController(
        sweep_use_case,
        bench_use_case,
        estimate_use_case,
        channels,
        results,
        presenter or BianmPresenter(),
    )


def _workers_override(config: ExperimentConfig) -> ExperimentConfig:
    workers = os.getenv("BIANM_WORKERS")
    if not workers:
        return config
    try:
        count = int(workers)
    except ValueError:
        raise BianmError(f"BIANM_WORKERS must be an integer, got {workers!r}") from None
    if count < 1:
        raise BianmError(f"BIANM_WORKERS must be at least 1, got {count}")
    return config.model_copy(update={"workers": count})


def _fail(presenter: BianmPresenter, exc: Exception) -> None:
    presenter.display_error(str(exc))
    logger.debug("command failed", exc_info=exc)
    raise typer.Exit(1)


@app.callback()
def main() -> None:
    configure_logging()


@app.command()
def sweep(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="key=value experiment file"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="output directory"),
    preset: Optional[str] = typer.Option(None, "--preset", help="named base configuration"),
) -> None:
    """Run the NMSE-versus-SNR Monte-Carlo sweep."""
    presenter = BianmPresenter()
    try:
        if config is not None:
            experiment = parse_config(config, preset)
        elif preset is not None:
            experiment = build_config({}, base=preset_values(preset))
        else:
            raise BianmError("either --config or --preset is required")
        if out is not None:
            experiment = experiment.model_copy(update={"out": str(out)})
        experiment = _workers_override(experiment)
        create_app(Path(experiment.out), presenter).run_sweep(experiment)
    except (BianmError, ValueError) as exc:
        _fail(presenter, exc)


@app.command()
def bench(
    sizes: str = typer.Option("8,16,24", "--sizes", help="ascending M=N values"),
    methods: str = typer.Option(
        ",".join(m.value for m in Method), "--methods", help="comma-separated method names"
    ),
    repeats: int = typer.Option(5, "--repeats", min=1, help="timed solves per point"),
    seed: int = typer.Option(0, "--seed"),
    out: Path = typer.Option(Path("results"), "--out", "-o", help="output directory"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="solver and estimator settings"),
) -> None:
    """Time every method against the array size M = N."""
    presenter = BianmPresenter()
    try:
        values = {"sizes": sizes, "methods": methods, "repeats": str(repeats), "seed": str(seed)}
        if config is not None:
            experiment = parse_config(config)
            experiment = build_config(values, base=experiment.model_dump())
        else:
            smallest = min(int(s) for s in sizes.split(",") if s.strip())
            base = {"M": smallest, "N": smallest, "L": min(3, smallest)}
            experiment = build_config(values, base=base)
        create_app(out, presenter).run_bench(experiment)
    except (BianmError, ValueError) as exc:
        _fail(presenter, exc)


@app.command()
def estimate(
    channel: Path = typer.Option(..., "--channel", help="channel JSON record"),
    method: str = typer.Option("BiANM", "--method", help="BiANM, ReBiANM, DeBiANM or ReDeBiANM"),
    snr_db: float = typer.Option(float("inf"), "--snr-db", help="SNR in dB; inf is noiseless"),
    seed: int = typer.Option(0, "--seed", help="noise seed"),
    oversampling: int = typer.Option(1, "--oversampling", help="odd number of voted samples"),
    J: int = typer.Option(5, "--J", min=0, help="reweighted solves"),
    zeta0: float = typer.Option(1.0, "--zeta0", help="first regularisation value"),
    retrieve_paths: bool = typer.Option(False, "--retrieve-paths", help="also estimate angles and delays"),
    out: Path = typer.Option(Path("results"), "--out", "-o", help="output directory"),
    diagnostics: bool = typer.Option(False, "--diagnostics", help="write per-iteration residual CSVs"),
) -> None:
    """Estimate one stored channel from a single 1-bit observation."""
    presenter = BianmPresenter()
    try:
        controller = create_app(out, presenter)
        channels = JsonChannelRepository()
        L = channels.load(channel).L if retrieve_paths else None
        config = EstimatorConfig(
            method=Method.parse(method),
            J=J,
            zeta0=zeta0,
            solver=SolverSettings(record_trace=diagnostics),
            retrieve_paths=retrieve_paths,
            L=L,
        )
        controller.estimate(channel, config, snr_db, seed, oversampling, diagnostics)
    except (BianmError, ValueError) as exc:
        _fail(presenter, exc)


@app.command("channel")
def draw_channel(
    M: int = typer.Option(16, "--M", min=1, help="antennas"),
    N: int = typer.Option(16, "--N", min=1, help="subcarriers"),
    L: int = typer.Option(3, "--L", min=1, help="paths"),
    seed: int = typer.Option(0, "--seed"),
    separation: SeparationPolicy = typer.Option(SeparationPolicy.NONE, "--separation"),
    out: Path = typer.Option(Path("channel.json"), "--out", "-o", help="JSON file to write"),
) -> None:
    """Draw a random channel and store it as JSON."""
    presenter = BianmPresenter()
    try:
        controller = create_app(out.parent, presenter)
        controller.draw_channel(M, N, L, seed, separation, out)
    except (BianmError, ValueError) as exc:
        _fail(presenter, exc)


@app.command()
def separation(
    channel: Path = typer.Argument(..., help="channel JSON record"),
) -> None:
    """Report the minimum gaps of a stored channel against both separation bounds."""
    presenter = BianmPresenter()
    try:
        controller = create_app(Path("."), presenter)
        controller.show_separation(channel)
    except (BianmError, ValueError) as exc:
        _fail(presenter, exc)


if __name__ == "__main__":
    app()

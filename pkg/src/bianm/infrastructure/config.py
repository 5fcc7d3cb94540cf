"""Flat key=value experiment configuration files."""
import io
import logging
import math
import re
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from dotenv import dotenv_values
from pydantic import ValidationError

from ..domain.entities import ExperimentConfig, Method, SolverSettings
from ..domain.errors import ConfigError

logger = logging.getLogger(__name__)

SOLVER_KEYS = frozenset(SolverSettings.model_fields)

PRESETS: Dict[str, Dict[str, Any]] = {
    "full-scale": {
        "M": 64,
        "N": 64,
        "L": 3,
        "trials": 100,
        "methods": [Method.DEBIANM, Method.REDEBIANM],
        "oversampling": 5,
        "oversampling_baseline": True,
    },
}


def _split(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _snr(item: str) -> float:
    if item.lower() in ("inf", "+inf", "infinity", "noiseless"):
        return math.inf
    return float(item)


def _convert(key: str, value: str) -> Any:
    if key == "snr_db":
        return [_snr(item) for item in _split(value)]
    if key == "methods":
        return [Method.parse(item) for item in _split(value)]
    if key == "sizes":
        return [int(item) for item in _split(value)]
    if key == "oversampling" and value.strip().lower() == "off":
        return 1
    return value.strip()


def _line_numbers(text: str) -> Dict[str, int]:
    """1-based line on which each key is (last) assigned."""
    pattern = re.compile(r"^\s*(?:export\s+)?([A-Za-z_][A-Za-z0-9_]*)\s*=")
    lines: Dict[str, int] = {}
    for number, line in enumerate(text.splitlines(), 1):
        match = pattern.match(line)
        if match:
            lines[match.group(1)] = number
    return lines


def build_config(
    values: Mapping[str, Optional[str]],
    lines: Optional[Mapping[str, int]] = None,
    base: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """Validate raw string values on top of optional preset values."""
    lines = lines or {}
    data: Dict[str, Any] = dict(base or {})
    solver: Dict[str, Any] = {}
    known = set(ExperimentConfig.model_fields) - {"solver"}
    for key, raw in values.items():
        if key not in known and key not in SOLVER_KEYS:
            raise ConfigError("unknown key", key=key, line=lines.get(key))
        if raw is None or not raw.strip():
            raise ConfigError("empty value", key=key, line=lines.get(key))
        try:
            value = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(str(exc), key=key, line=lines.get(key)) from exc
        if key in SOLVER_KEYS:
            solver[key] = value
        else:
            data[key] = value
    if solver:
        data["solver"] = solver

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        loc = [str(part) for part in error["loc"]]
        key = loc[1] if loc and loc[0] == "solver" and len(loc) > 1 else (loc[0] if loc else None)
        if error["type"] == "missing":
            raise ConfigError(f"{key} missing", key=key) from exc
        raise ConfigError(error["msg"], key=key, line=lines.get(key) if key else None) from exc


def parse_config(path: Path, preset: Optional[str] = None) -> ExperimentConfig:
    """Read and validate a flat key=value configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    values = dotenv_values(stream=io.StringIO(text))
    config = build_config(values, _line_numbers(text), preset_values(preset))
    logger.info("loaded config %s: M=%d N=%d L=%d, %d SNR points, %d trials",
                path, config.M, config.N, config.L, len(config.snr_db), config.trials)
    return config


def preset_values(preset: Optional[str]) -> Dict[str, Any]:
    if preset is None:
        return {}
    try:
        return dict(PRESETS[preset])
    except KeyError:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}") from None
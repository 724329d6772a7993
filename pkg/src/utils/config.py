"""
Configuration for nnpost.

Settings are merged from, lowest to highest precedence: the AppConfig
defaults, a key=value config file, NNPOST_* environment variables and
explicit command-line flags.
"""

import os
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from inference.sampler import SamplerConfig
from model.types import Hyperparams
from utils.error_handler import ConfigError
from utils.logger import get_logger

logger = get_logger("config")

ENV_PREFIX = "NNPOST_"


class AppConfig(BaseModel):
    """Every option the CLI can take from a file, the environment or a flag."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    gamma: float = Field(default=8.0, gt=0)
    nodes: int = Field(default=200, ge=2)
    tail_drop: float = Field(default=46.0, gt=0)
    sigma_floor: float = Field(default=1e-8, gt=0)
    cov_mode: Literal["exact", "paper", "diag"] = "exact"
    spacing: Literal["linear", "log"] = "log"
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    draws: int = Field(default=10000, ge=1)
    warmup: int = Field(default=1000, ge=0)
    step_scale: float = Field(default=0.3, gt=0)
    seed: int = 0
    adapt: bool = True
    log_dir: Optional[str] = None
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    memory_limit_gb: float = Field(default=8.0, gt=0)

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(gamma=self.gamma, grid_nodes=self.nodes,
                           tail_drop=self.tail_drop, sigma_floor=self.sigma_floor)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(draws=self.draws, warmup=self.warmup, step_scale=self.step_scale,
                             seed=self.seed, adapt=self.adapt)


def _normalize_key(key: str) -> str:
    key = key.strip()
    if key.upper().startswith(ENV_PREFIX):
        key = key[len(ENV_PREFIX):]
    return key.lower().replace('-', '_')


def _read_config_file(config_file: Union[str, Path]) -> Dict[str, Any]:
    path = Path(config_file)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")

    values = {}
    for key, value in dotenv_values(path).items():
        name = _normalize_key(key)
        if name not in AppConfig.model_fields:
            raise ConfigError(f"{path}: unknown setting {key!r}")
        if value is not None:
            values[name] = value
    logger.debug(f"Read {len(values)} setting(s) from {path}")
    return values


def _read_environment(environ: Mapping[str, str]) -> Dict[str, Any]:
    values = {}
    for key, value in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = _normalize_key(key)
        if name in AppConfig.model_fields:
            values[name] = value
        else:
            logger.warning(f"Ignoring unknown environment setting {key}")
    return values


def load_config(
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None
) -> AppConfig:
    """
    Build the effective configuration.

    Args:
        config_file: Optional key=value file; keys are field names, with or
            without the NNPOST_ prefix
        overrides: Values from command-line flags; None entries are ignored
        environ: Environment to read NNPOST_* variables from (default: os.environ)

    Returns:
        Validated AppConfig

    Raises:
        ConfigError: unreadable file, unknown key or invalid value
    """
    merged: Dict[str, Any] = {}
    if config_file is not None:
        merged.update(_read_config_file(config_file))
    merged.update(_read_environment(os.environ if environ is None else environ))
    if overrides:
        merged.update({key: value for key, value in overrides.items() if value is not None})

    if isinstance(merged.get('log_level'), str):
        merged['log_level'] = merged['log_level'].upper()

    try:
        return AppConfig(**merged)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid configuration: {problems}") from e

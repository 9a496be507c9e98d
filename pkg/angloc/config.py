"""Pipeline configuration.

Settings resolve with the precedence command-line flag > ``--config`` JSON
file > environment (``ANGLOC_*``, also read from ``.env``) > defaults.
Nested sections use ``__`` in environment names, for example
``ANGLOC_ENTROPY__N_PACKETS=100``.
"""

import json
import logging
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .classes.radio import RadioConfig
from .classes.radio_map import MatchParams
from .errors import InvalidConfigError
from .utils import config_hash

logger = logging.getLogger(__name__)


class TapFilterConfig(BaseModel):
    threshold: float = Field(default=0.9, gt=0.0, le=1.0, description="Cumulative power fraction C")


class CalibrationConfig(BaseModel):
    """Phase calibration and tap filtering switches."""

    tap_filter: TapFilterConfig = Field(default_factory=TapFilterConfig)
    cfo_window: int = Field(default=10, ge=1, description="Packets per CFO smoothing window N_p")
    remove_sto: bool = True
    remove_sfo: bool = True
    smooth_cfo: bool = True
    apply_tap_filter: bool = True
    strict: bool = Field(
        default=False, description="Raise on zero-magnitude entries instead of excluding them"
    )


class EntropyConfig(BaseModel):
    n_packets: int = Field(default=50, ge=2)
    p_max: int = Field(default=20, ge=1)
    samples_per_order: int = Field(
        default=10, ge=1, description="Samples required per AR coefficient in the order search"
    )
    grid_size: int = Field(default=1024, ge=8)
    order_criterion: Literal["eef", "aic"] = "eef"
    rescale: Literal["stream", "global"] = Field(
        default="stream", description="Per-stream min/max or one min/max over the whole link"
    )


class SmoothingConfig(BaseModel):
    """Subarray layout for forward-backward smoothing.

    Attributes:
        k_sub: Subcarriers per subarray (K').
        nr_sub: Antennas per subarray (N'_r, fixed at 2).
        use_backward: Average in the conjugate-reversed covariance.
        n_packets: Packets averaged by multi-packet smoothing (N_mp).
        expected_paths: Path count the subarray dimension must exceed; indoor
            channels carry up to ten dominant clusters.
    """

    k_sub: int = Field(default=8, ge=2)
    nr_sub: int = Field(default=2, ge=2, le=2)
    use_backward: bool = True
    n_packets: int = Field(default=15, ge=1)
    expected_paths: int = Field(default=10, ge=1)

    @model_validator(mode="after")
    def _check_dimension(self) -> "SmoothingConfig":
        if self.dimension <= self.expected_paths:
            raise ValueError(
                f"Subarray dimension {self.dimension} must exceed the expected path count {self.expected_paths}"
            )
        return self

    @property
    def dimension(self) -> int:
        return self.k_sub * self.nr_sub

    def check(self, radio: RadioConfig) -> tuple[int, int]:
        """Validate against a radio and return the subarray counts (T_K, T_N)."""
        if self.k_sub > radio.n_sub:
            raise InvalidConfigError(
                f"Subarray length K'={self.k_sub} exceeds the subcarrier count {radio.n_sub}"
            )
        if self.nr_sub > radio.n_rx:
            raise InvalidConfigError(
                f"Subarray needs {self.nr_sub} antennas, radio has {radio.n_rx}"
            )
        return radio.n_sub - self.k_sub + 1, radio.n_rx - self.nr_sub + 1


class AoaConfig(BaseModel):
    smoothing: SmoothingConfig = Field(default_factory=SmoothingConfig)
    theta_min: float = -90.0
    theta_max: float = 90.0
    theta_step: float = Field(default=1.0, gt=0)
    tau_min: float = -50e-9
    tau_max: float = 450e-9
    tau_step: float = Field(default=2e-9, gt=0)
    n_sources: int | None = Field(default=None, ge=1, description="Fixed source count L")
    max_sources: int = Field(default=10, ge=1)

    @model_validator(mode="after")
    def _check_grid(self) -> "AoaConfig":
        if not -90.0 <= self.theta_min < self.theta_max <= 90.0:
            raise ValueError("Angle grid must satisfy -90 <= theta_min < theta_max <= 90")
        if self.tau_min >= self.tau_max:
            raise ValueError("Delay grid must satisfy tau_min < tau_max")
        return self

    def theta_axis(self) -> np.ndarray:
        n = int(round((self.theta_max - self.theta_min) / self.theta_step)) + 1
        return self.theta_min + self.theta_step * np.arange(n)

    def tau_axis(self) -> np.ndarray:
        n = int(round((self.tau_max - self.tau_min) / self.tau_step)) + 1
        return self.tau_min + self.tau_step * np.arange(n)


class TuningConfig(BaseModel):
    """Leave-one-out grid for the matching parameters."""

    w_a_step: float = Field(default=0.1, gt=0, le=1)
    rho_base: float = Field(default=0.01, gt=0)
    rho_exponents: int = Field(default=9, ge=1, description="rho = rho_base * 2**i, i < rho_exponents")
    m_c_max: int = Field(default=20, ge=1)
    split: float = Field(default=0.5, gt=0, lt=1, description="Share of each survey used as map window")

    def w_a_grid(self) -> np.ndarray:
        n = int(round(1.0 / self.w_a_step))
        return np.round(np.linspace(0.0, 1.0, n + 1), 10)

    def rho_grid(self) -> np.ndarray:
        return self.rho_base * 2.0 ** np.arange(self.rho_exponents)


class AnglocSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="ANGLOC_",
        env_file=".env",
        env_nested_delimiter="__",
        extra="ignore",
    )

    calibration: CalibrationConfig = Field(default_factory=CalibrationConfig)
    entropy: EntropyConfig = Field(default_factory=EntropyConfig)
    aoa: AoaConfig = Field(default_factory=AoaConfig)
    match: MatchParams = Field(default_factory=MatchParams)
    tuning: TuningConfig = Field(default_factory=TuningConfig)
    radio_map_path: Path | None = None
    log_level: str = "INFO"

    def fingerprint(self) -> str:
        """Hash of the effective settings, recorded in emitted documents."""
        return config_hash(self.model_dump(mode="json"))


def _deep_merge(base: dict[str, Any], update: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_settings(path: str | Path | None = None, **overrides) -> AnglocSettings:
    """Resolve settings from an optional JSON file plus explicit overrides.

    Args:
        path: JSON document with any subset of the settings sections.
        **overrides: Values taking precedence over the file, nested as dicts.
            ``None`` values are ignored so unset flags can be passed through.

    Raises:
        InvalidConfigError: If the file is unreadable or a value is invalid.
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise InvalidConfigError(f"Cannot read config file {path}: {e}") from e
        if not isinstance(data, dict):
            raise InvalidConfigError(f"Config file {path} must hold a JSON object")
        logger.debug(f"Loaded config file {path}")
    overrides = {k: v for k, v in overrides.items() if v is not None}
    try:
        return AnglocSettings(**_deep_merge(data, overrides))
    except ValidationError as e:
        raise InvalidConfigError(f"Invalid configuration: {e}") from e

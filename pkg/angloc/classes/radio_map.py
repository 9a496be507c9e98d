import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..utils import atomic_write_text
from .fingerprints import AoaTofFingerprint, EntropyFingerprint
from .radio import CsiTrace, RadioConfig

logger = logging.getLogger(__name__)

RADIO_MAP_FORMAT_VERSION = 1


class MatchParams(BaseModel):
    """Online matching parameters.

    Attributes:
        m_c: Number of candidate RPs kept after entropy ranking.
        w_e: Weight of the entropy kernel.
        w_a: Weight of the AoA-ToF kernel.
        rho_e: Entropy kernel coefficient.
        rho_a: AoA-ToF kernel coefficient.
        tau_scale: Matching units per second of delay (1e9: one unit per ns).
    """

    m_c: int = Field(default=12, ge=1)
    w_e: float = Field(default=0.43, ge=0.0, le=1.0)
    w_a: float = Field(default=0.57, ge=0.0, le=1.0)
    rho_e: float = Field(default=0.23, gt=0.0)
    rho_a: float = Field(default=0.14, gt=0.0)
    tau_scale: float = Field(default=1e9, ge=0.0)

    @model_validator(mode="after")
    def _check_weights(self) -> "MatchParams":
        if abs(self.w_e + self.w_a - 1.0) > 1e-9:
            raise ValueError(f"Kernel weights must sum to 1, got w_e={self.w_e}, w_a={self.w_a}")
        return self

    def with_weight(self, w_a: float) -> "MatchParams":
        """Copy with the AoA weight set and the entropy weight completing it to 1."""
        return MatchParams(**{**self.model_dump(), "w_a": w_a, "w_e": round(1.0 - w_a, 12)})

    def entropy_only(self) -> "MatchParams":
        return self.with_weight(0.0)

    def override(
        self,
        m_c: int | None = None,
        w_a: float | None = None,
        rho_e: float | None = None,
        rho_a: float | None = None,
    ) -> "MatchParams":
        """Copy with every given value replaced; a new ``w_a`` also resets ``w_e``."""
        base = self.with_weight(w_a) if w_a is not None else self
        updates = {"m_c": m_c, "rho_e": rho_e, "rho_a": rho_a}
        return MatchParams(**{**base.model_dump(), **{k: v for k, v in updates.items() if v is not None}})


@dataclass(frozen=True)
class SurveyPoint:
    """Raw traces recorded at one location, keyed by AP id."""

    rp_id: str
    location: tuple[float, float]
    traces: Mapping[str, CsiTrace]


class RpEntry(BaseModel):
    """One reference point of the radio map, fingerprints keyed by AP id."""

    id: str
    location: tuple[float, float]
    entropy: dict[str, EntropyFingerprint]
    aoa: dict[str, AoaTofFingerprint]

    @model_validator(mode="after")
    def _check_entry(self) -> "RpEntry":
        if not all(math.isfinite(v) for v in self.location):
            raise ValueError(f"Reference point {self.id!r} has a non-finite location")
        if set(self.entropy) != set(self.aoa):
            raise ValueError(
                f"Reference point {self.id!r} has entropy fingerprints for {sorted(self.entropy)} "
                f"but AoA fingerprints for {sorted(self.aoa)}"
            )
        return self


class RadioMap(BaseModel):
    """Offline fingerprint database."""

    format_version: int = RADIO_MAP_FORMAT_VERSION
    radio: RadioConfig
    ap_ids: list[str] = Field(..., min_length=1)
    entries: list[RpEntry] = Field(..., min_length=1)
    params: MatchParams = Field(default_factory=MatchParams)
    provenance: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_map(self) -> "RadioMap":
        if self.format_version != RADIO_MAP_FORMAT_VERSION:
            raise ValueError(f"Unsupported radio map format version {self.format_version}")
        ids = [entry.id for entry in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("Reference point ids must be unique")
        aps = set(self.ap_ids)
        for entry in self.entries:
            if set(entry.entropy) != aps:
                raise ValueError(
                    f"Reference point {entry.id!r} covers {sorted(entry.entropy)}, map lists {sorted(aps)}"
                )
        for ap in self.ap_ids:
            lengths = {len(entry.entropy[ap]) for entry in self.entries}
            if len(lengths) > 1:
                raise ValueError(f"Inconsistent entropy fingerprint lengths for AP {ap!r}: {lengths}")
        return self

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, rp_id: str) -> RpEntry:
        for entry in self.entries:
            if entry.id == rp_id:
                return entry
        raise KeyError(f"No reference point {rp_id!r} in the radio map")

    def locations(self) -> np.ndarray:
        return np.array([entry.location for entry in self.entries], dtype=float)

    def entropy_matrix(self, ap_id: str) -> np.ndarray:
        """(M, R') entropy vectors of one AP."""
        return np.stack([entry.entropy[ap_id].as_array() for entry in self.entries])

    def aoa_matrix(self, ap_id: str) -> np.ndarray:
        """(M, 2) first-arrival (theta, tau) pairs of one AP."""
        return np.array([entry.aoa[ap_id].as_pair() for entry in self.entries], dtype=float)

    def with_params(self, params: MatchParams) -> "RadioMap":
        return self.model_copy(update={"params": params})

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, self.model_dump_json(indent=2))
        logger.info(f"Saved radio map with {len(self.entries)} reference points to {path}")

    @classmethod
    def load(cls, path: str | Path) -> "RadioMap":
        radio_map = cls.model_validate_json(Path(path).read_text())
        logger.info(f"Loaded radio map with {len(radio_map.entries)} reference points from {path}")
        return radio_map


class CandidateScore(BaseModel):
    """Distances and kernel value of one candidate RP."""

    rp_id: str
    location: tuple[float, float]
    entropy_distance: float
    aoa_distance: float
    kernel: float


class LocationEstimate(BaseModel):
    """Kernel-weighted location estimate with its candidates."""

    x: float
    y: float
    candidates: list[CandidateScore]

    @property
    def location(self) -> tuple[float, float]:
        return (self.x, self.y)

    def to_output(self) -> dict[str, Any]:
        return {
            "estimate": {"x": self.x, "y": self.y},
            "candidates": [c.rp_id for c in self.candidates],
            "distances": [
                {"entropy": c.entropy_distance, "aoa": c.aoa_distance} for c in self.candidates
            ],
            "kernels": [c.kernel for c in self.candidates],
        }

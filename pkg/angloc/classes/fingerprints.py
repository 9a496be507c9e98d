from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..errors import InvalidBoundsError, InvalidInputError

# Slack on the Gibbs bound (maximum entropy on unit support is 0 nats).
GIBBS_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class ArModel:
    """Autoregressive model ``1 + sum a_i exp(-j 2 pi i beta)``.

    Attributes:
        order: Model order p.
        coeffs: Complex coefficients a_1..a_p (real for symmetric densities).
        sigma2: Prediction error variance from the recursion.
        r0: Zero-lag autocorrelation the recursion started from.
        errors: Prediction error sequence sigma2(0..p), non-increasing.
        autocorr: Autocorrelation lags R(0..p) the model was fitted on.
    """

    order: int
    coeffs: np.ndarray
    sigma2: float
    r0: float = 1.0
    errors: np.ndarray | None = None
    autocorr: np.ndarray | None = None

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=complex).reshape(-1)
        if self.order < 1 or coeffs.size != self.order:
            raise InvalidInputError(
                f"AR order {self.order} does not match {coeffs.size} coefficients"
            )
        if not self.sigma2 > 0:
            raise InvalidInputError(f"Prediction error variance must be positive, got {self.sigma2}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    def polynomial(self) -> np.ndarray:
        """Coefficients [1, a_1, ..., a_p] in descending powers of z."""
        return np.concatenate(([1.0 + 0j], self.coeffs))

    def poles(self) -> np.ndarray:
        return np.roots(self.polynomial())

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))


@dataclass(frozen=True)
class RescaleBounds:
    """Amplitude interval mapped onto [-0.5, 0.5]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise InvalidBoundsError(f"Rescale bounds must satisfy hi > lo, got [{self.lo}, {self.hi}]")

    @classmethod
    def from_samples(cls, samples) -> "RescaleBounds":
        samples = np.asarray(samples, dtype=float)
        if samples.size == 0:
            raise InvalidBoundsError("Cannot derive rescale bounds from an empty sample set")
        return cls(float(samples.min()), float(samples.max()))


class EntropyFingerprint(BaseModel):
    """Per-stream AR entropies of one AP link, in nats.

    ``stream_index[i]`` is the (tx, rx, subcarrier) triple of ``values[i]``.
    ``flagged`` lists positions whose stream was constant or had no stable AR fit and got the bound 0.
    """

    values: list[float]
    stream_index: list[tuple[int, int, int]]
    flagged: list[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_values(self) -> "EntropyFingerprint":
        if len(self.values) != len(self.stream_index):
            raise ValueError(
                f"{len(self.values)} entropy values for {len(self.stream_index)} streams"
            )
        worst = max(self.values, default=0.0)
        if worst > GIBBS_TOLERANCE:
            raise ValueError(f"Entropy {worst} exceeds the unit-support maximum of 0 nats")
        return self

    def __len__(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


class AoaTofFingerprint(BaseModel):
    """First-arrival angle (degrees) and relative delay (seconds) of one AP link."""

    theta: float = Field(..., ge=-90.0, le=90.0)
    tau: float
    peak_power: float = 1.0
    n_sources: int = Field(default=1, ge=1)

    def as_pair(self) -> tuple[float, float]:
        return (self.theta, self.tau)


@dataclass(frozen=True, eq=False)
class SpectrumGrid:
    """MUSIC pseudo-spectrum sampled on a (theta, tau) grid.

    ``values[i, j]`` is P(theta_axis[i], tau_axis[j]).
    """

    theta_axis: np.ndarray
    tau_axis: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta_axis, dtype=float)
        tau = np.asarray(self.tau_axis, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.shape != (theta.size, tau.size):
            raise InvalidInputError(
                f"Spectrum shape {values.shape} does not match axes ({theta.size}, {tau.size})"
            )
        if np.any(np.diff(theta) <= 0) or np.any(np.diff(tau) <= 0):
            raise InvalidInputError("Spectrum axes must be strictly increasing")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise InvalidInputError("Spectrum values must be finite and positive")
        for name, arr in (("theta_axis", theta), ("tau_axis", tau), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def argmax(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.theta_axis[i]), float(self.tau_axis[j])

    def to_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.values)

    def rows(self):
        """(theta, tau, power_db) triples, theta-major."""
        db = self.to_db()
        for i, theta in enumerate(self.theta_axis):
            for j, tau in enumerate(self.tau_axis):
                yield float(theta), float(tau), float(db[i, j])

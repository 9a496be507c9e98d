import math
from dataclasses import dataclass, field

from pydantic import BaseModel, Field, model_validator
from shapely.geometry import Point, box

from ..errors import InvalidInputError
from .radio import RadioConfig


@dataclass(frozen=True)
class PathComponent:
    """One propagation path of a multipath channel.

    Attributes:
        alpha: Real amplitude.
        phi: Phase in radians.
        tau: Delay in seconds.
        theta: Arrival angle in degrees, broadside is 0.
    """

    alpha: float
    phi: float = 0.0
    tau: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise InvalidInputError(f"Path amplitude must be finite and non-negative, got {self.alpha}")
        if not math.isfinite(self.tau) or self.tau < 0:
            raise InvalidInputError(f"Path delay must be non-negative, got {self.tau}")
        if not -90.0 <= self.theta <= 90.0:
            raise InvalidInputError(f"Arrival angle {self.theta} outside [-90, 90] degrees")

    def check_span(self, config: RadioConfig) -> None:
        """Reject delays beyond the resolvable span K / (2 f_delta)."""
        span = config.n_sub / (2.0 * config.f_delta)
        if self.tau >= span:
            raise InvalidInputError(
                f"Path delay {self.tau:.3e} s exceeds the resolvable span {span:.3e} s"
            )


@dataclass(frozen=True)
class ChannelSpec:
    """Ground-truth multipath channel of one AP-to-point link."""

    paths: tuple[PathComponent, ...]

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if not self.paths:
            raise InvalidInputError("A channel needs at least one path")

    def __len__(self) -> int:
        return len(self.paths)

    def first_arrival(self) -> PathComponent:
        """Path with the smallest delay, ties going to the larger amplitude."""
        return min(self.paths, key=lambda p: (p.tau, -p.alpha))


@dataclass(frozen=True)
class ImpairmentSpec:
    """Phase errors and noise injected on top of a clean channel.

    Attributes:
        sfo: SFO slope in seconds; subcarrier k is rotated by 2*pi*f_delta*k*sfo.
        sto_taps: Circular CIR shift in taps.
        cfo_step: Per-packet common phase increment in radians.
        cpo: Initial common phase in radians.
        cfo_jitter: Standard deviation (radians) of an i.i.d. per-packet phase
            added on top of the linear CFO drift.
        snr_db: Additive noise level relative to mean clean power; no noise
            when None.
    """

    sfo: float = 0.0
    sto_taps: int = 0
    cfo_step: float = 0.0
    cpo: float = 0.0
    cfo_jitter: float = 0.0
    snr_db: float | None = None

    def __post_init__(self):
        if self.sto_taps < 0:
            raise InvalidInputError(f"STO shift must be non-negative, got {self.sto_taps}")
        if self.cfo_jitter < 0:
            raise InvalidInputError("CFO jitter must be non-negative")

    def check(self, config: RadioConfig) -> None:
        if self.sto_taps >= config.n_sub:
            raise InvalidInputError(
                f"STO shift {self.sto_taps} must be below the subcarrier count {config.n_sub}"
            )


NO_IMPAIRMENTS = ImpairmentSpec()


class RoomSpec(BaseModel):
    """Rectangular room with access points on the floor plan.

    Coordinates are meters with the origin at the lower-left corner.
    """

    width: float = Field(..., description="Room extent along x in meters")
    height: float = Field(..., description="Room extent along y in meters")
    tx_positions: list[tuple[float, float]] = Field(
        ..., min_length=1, description="Access point positions as (x, y)"
    )
    wall_reflection_loss: float = Field(default=6.0, ge=0, description="Loss per reflection in dB")
    array_orientation: float = Field(
        default=0.0, description="Array broadside direction in degrees from the x axis"
    )
    array_orientations: list[float] | None = Field(
        default=None, description="Per access point broadside, overrides array_orientation"
    )

    @model_validator(mode="after")
    def _check_geometry(self) -> "RoomSpec":
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"Room dimensions must be positive, got {self.width}x{self.height}")
        footprint = self.footprint()
        for x, y in self.tx_positions:
            if not footprint.contains(Point(x, y)):
                raise ValueError(f"Access point ({x}, {y}) is not inside the room")
        if self.array_orientations is not None and len(self.array_orientations) != len(
            self.tx_positions
        ):
            raise ValueError("One array orientation per access point is required")
        return self

    def footprint(self):
        return box(0.0, 0.0, self.width, self.height)

    def orientation(self, ap_index: int) -> float:
        if self.array_orientations is not None:
            return self.array_orientations[ap_index]
        return self.array_orientation


@dataclass(frozen=True)
class ScenePoint:
    """A surveyed or test location with its per-AP ground-truth channels."""

    location: tuple[float, float]
    channels: tuple[ChannelSpec, ...] = field(default_factory=tuple)

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidConfigError, InvalidInputError, PreconditionError
from ..utils import unitary_fft, unitary_ifft

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299792458.0

# 30 grouped subcarriers reported by the Intel 5300 in 20 MHz mode,
# in units of the 312.5 kHz OFDM tone spacing.
INTEL5300_SUBCARRIERS_20MHZ = (
    tuple(range(-28, -1, 2)) + (-1,) + tuple(range(1, 28, 2)) + (28,)
)


@dataclass(frozen=True)
class RadioConfig:
    """Radio geometry shared by every packet of a trace.

    Attributes:
        n_rx: Number of receive antennas (N_r).
        n_tx: Number of transmit antennas (N_t).
        n_sub: Number of reported subcarriers (K).
        f_c: Carrier frequency in Hz.
        f_delta: Subcarrier spacing in Hz. When ``subcarrier_indices`` is set it is
            the spacing of one index step.
        d: Receive antenna spacing in meters; half a wavelength when omitted.
        c: Propagation speed in m/s.
        subcarrier_indices: Optional physical index map of the reported
            subcarriers (non-uniform captures such as the Intel 5300 map).
    """

    n_rx: int = 3
    n_tx: int = 1
    n_sub: int = 30
    f_c: float = 5.32e9
    f_delta: float = 625e3
    d: float | None = None
    c: float = SPEED_OF_LIGHT
    subcarrier_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n_rx < 1 or self.n_tx < 1:
            raise InvalidConfigError("Antenna counts must be at least 1")
        if self.n_sub < 2:
            raise InvalidConfigError("At least two subcarriers are required")
        if self.f_c <= 0 or self.f_delta <= 0 or self.c <= 0:
            raise InvalidConfigError("Frequencies and propagation speed must be positive")
        if self.d is None:
            object.__setattr__(self, "d", 0.5 * self.wavelength)
        if self.d <= 0:
            raise InvalidConfigError("Antenna spacing must be positive")
        if self.d > self.wavelength * (1 + 1e-12):
            raise InvalidConfigError(
                f"Antenna spacing {self.d} m exceeds one wavelength ({self.wavelength} m)"
            )
        if self.d > 0.5 * self.wavelength * (1 + 1e-12):
            logger.warning(
                f"Antenna spacing {self.d:.4f} m is above half a wavelength; AoA may be ambiguous"
            )
        if self.subcarrier_indices is not None:
            if len(self.subcarrier_indices) != self.n_sub:
                raise InvalidConfigError(
                    f"Subcarrier index map has {len(self.subcarrier_indices)} entries, expected {self.n_sub}"
                )
            if any(b <= a for a, b in zip(self.subcarrier_indices, self.subcarrier_indices[1:])):
                raise InvalidConfigError("Subcarrier index map must be strictly increasing")

    @property
    def wavelength(self) -> float:
        return self.c / self.f_c

    @property
    def n_streams(self) -> int:
        return self.n_rx * self.n_tx

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_rx, self.n_tx, self.n_sub)

    @property
    def dimension(self) -> int:
        """R = N_t * N_r * K."""
        return self.n_streams * self.n_sub

    def tone_index(self) -> np.ndarray:
        """Subcarrier positions in units of ``f_delta``."""
        if self.subcarrier_indices is None:
            return np.arange(self.n_sub, dtype=float)
        return np.asarray(self.subcarrier_indices, dtype=float)


@dataclass(frozen=True, eq=False)
class CsiPacket:
    """One CFR snapshot, ``h`` indexed ``[rx][tx][subcarrier]``."""

    timestamp: float
    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=complex)
        if h.ndim != 3:
            raise InvalidInputError(f"CFR tensor must be 3-D [rx][tx][sub], got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise InvalidInputError("CFR tensor contains non-finite entries")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    def __eq__(self, other):
        if not isinstance(other, CsiPacket):
            return NotImplemented
        return self.timestamp == other.timestamp and np.array_equal(self.h, other.h)

    __hash__ = None

    def check(self, config: RadioConfig) -> None:
        if self.h.shape != config.shape:
            raise InvalidInputError(
                f"Packet shape {self.h.shape} does not match radio config {config.shape}"
            )

    def replace(self, h: np.ndarray) -> "CsiPacket":
        return CsiPacket(self.timestamp, h)


@dataclass(frozen=True, eq=False)
class CsiTrace:
    """Consecutive CSI packets from one access point.

    Attributes:
        config: Radio configuration shared by all packets.
        packets: Ordered packets (N of them).
        source_id: Access point label.
        location_tag: Optional (x, y) receiver position in meters.
    """

    config: RadioConfig
    packets: tuple[CsiPacket, ...]
    source_id: str = ""
    location_tag: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "packets", tuple(self.packets))
        if not self.packets:
            raise InvalidInputError("A trace needs at least one packet")
        for packet in self.packets:
            packet.check(self.config)
        if self.location_tag is not None:
            x, y = (float(v) for v in self.location_tag)
            if not (np.isfinite(x) and np.isfinite(y)):
                raise InvalidInputError("Location tag must be finite")
            object.__setattr__(self, "location_tag", (x, y))

    def __eq__(self, other):
        if not isinstance(other, CsiTrace):
            return NotImplemented
        return (
            self.config == other.config
            and self.source_id == other.source_id
            and self.location_tag == other.location_tag
            and self.packets == other.packets
        )

    __hash__ = None

    def __len__(self) -> int:
        return len(self.packets)

    @classmethod
    def from_tensor(
        cls,
        config: RadioConfig,
        tensor: np.ndarray,
        timestamps=None,
        source_id: str = "",
        location_tag: tuple[float, float] | None = None,
    ) -> "CsiTrace":
        """Build a trace from an ``(N, rx, tx, sub)`` tensor."""
        tensor = np.asarray(tensor)
        if timestamps is None:
            timestamps = np.arange(tensor.shape[0], dtype=float)
        packets = tuple(CsiPacket(float(t), h) for t, h in zip(timestamps, tensor, strict=True))
        return cls(config, packets, source_id, location_tag)

    def tensor(self) -> np.ndarray:
        """All packets stacked as an ``(N, rx, tx, sub)`` array."""
        return np.stack([p.h for p in self.packets])

    def timestamps(self) -> np.ndarray:
        return np.array([p.timestamp for p in self.packets], dtype=float)

    def with_tensor(self, tensor: np.ndarray, timestamps=None) -> "CsiTrace":
        if timestamps is None:
            timestamps = self.timestamps()
        return CsiTrace.from_tensor(
            self.config, tensor, timestamps, self.source_id, self.location_tag
        )

    def head(self, n: int) -> "CsiTrace":
        return CsiTrace(self.config, self.packets[:n], self.source_id, self.location_tag)

    def tail(self, n: int) -> "CsiTrace":
        return CsiTrace(self.config, self.packets[n:], self.source_id, self.location_tag)

    def require_packets(self, n: int) -> None:
        if len(self.packets) < n:
            raise PreconditionError(
                f"Trace {self.source_id!r} has {len(self.packets)} packets, {n} required"
            )


@dataclass(frozen=True, eq=False)
class CirVector:
    """Time-domain channel impulse response of one stream."""

    taps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __post_init__(self):
        taps = np.array(self.taps, dtype=complex).reshape(-1)
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    def __len__(self) -> int:
        return len(self.taps)

    def power_delay_profile(self) -> np.ndarray:
        return np.abs(self.taps) ** 2


def cfr_to_cir(cfr) -> CirVector:
    """CIR of one stream by unitary inverse DFT of its CFR."""
    cfr = np.asarray(cfr, dtype=complex).reshape(-1)
    if cfr.size < 2:
        raise InvalidInputError(f"At least two subcarriers are required, got {cfr.size}")
    return CirVector(unitary_ifft(cfr))


def cir_to_cfr(cir: CirVector) -> np.ndarray:
    """Inverse of :func:`cfr_to_cir`."""
    taps = cir.taps if isinstance(cir, CirVector) else np.asarray(cir, dtype=complex)
    return unitary_fft(taps)

"""Synthetic multipath CSI generator.

Clean CFR entries follow the multipath sum

    H[r, t, k] = sum_l alpha_l e^{-j phi_l} e^{-j 2 pi r f_c d sin(theta_l) / c}
                 e^{-j 2 pi k f_delta tau_l}

with every transmit antenna seeing the same channel. Impairments are then
applied in the order STO, SFO, CFO/CPO, additive noise.
"""

import logging
import math
from collections.abc import Sequence

import numpy as np
from shapely.geometry import LineString, Point

from .classes.channel import (
    NO_IMPAIRMENTS,
    ChannelSpec,
    ImpairmentSpec,
    PathComponent,
    RoomSpec,
    ScenePoint,
)
from .classes.radio import CsiPacket, CsiTrace, RadioConfig
from .errors import InvalidConfigError, InvalidInputError

logger = logging.getLogger(__name__)

MIN_PATH_LENGTH = 0.1  # meters


def _as_paths(paths) -> tuple[PathComponent, ...]:
    if isinstance(paths, ChannelSpec):
        return paths.paths
    paths = tuple(paths)
    if not paths:
        raise InvalidInputError("At least one path is required")
    return paths


def clean_cfr(paths, cfg: RadioConfig) -> np.ndarray:
    """Noise-free CFR tensor ``(n_rx, n_tx, n_sub)`` of a multipath channel."""
    paths = _as_paths(paths)
    for path in paths:
        path.check_span(cfg)
    alpha = np.array([p.alpha for p in paths])
    phi = np.array([p.phi for p in paths])
    tau = np.array([p.tau for p in paths])
    sin_theta = np.sin(np.radians([p.theta for p in paths]))

    r = np.arange(cfg.n_rx)[:, None]
    k = cfg.tone_index()[:, None]
    antenna = np.exp(-2j * np.pi * r * cfg.f_c * cfg.d * sin_theta[None, :] / cfg.c)
    subcarrier = np.exp(-2j * np.pi * k * cfg.f_delta * tau[None, :])
    gain = alpha * np.exp(-1j * phi)
    per_rx = np.einsum("l,rl,kl->rk", gain, antenna, subcarrier)
    return np.repeat(per_rx[:, None, :], cfg.n_tx, axis=1)


def sfo_rotation(cfg: RadioConfig, slope: float) -> np.ndarray:
    """Per-subcarrier factor e^{-j 2 pi f_delta k slope}."""
    return np.exp(-2j * np.pi * cfg.f_delta * cfg.tone_index() * slope)


def sto_rotation(cfg: RadioConfig, taps: int) -> np.ndarray:
    """Per-subcarrier factor e^{-j 2 pi k taps / K} (circular CIR delay)."""
    k = np.arange(cfg.n_sub)
    return np.exp(-2j * np.pi * k * taps / cfg.n_sub)


def inject_sfo(packet: CsiPacket, cfg: RadioConfig, slope: float) -> CsiPacket:
    return packet.replace(packet.h * sfo_rotation(cfg, slope))


def inject_sto(packet: CsiPacket, cfg: RadioConfig, taps: int) -> CsiPacket:
    return packet.replace(packet.h * sto_rotation(cfg, taps))


def add_noise(h: np.ndarray, snr_db: float, rng: np.random.Generator, power: float | None = None):
    """Add circular complex Gaussian noise at ``snr_db`` below ``power`` (mean |h|^2 by default)."""
    if power is None:
        power = float(np.mean(np.abs(h) ** 2))
    noise_power = power / 10.0 ** (snr_db / 10.0)
    noise = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
    return h + math.sqrt(noise_power / 2.0) * noise


def synth_trace(
    paths,
    cfg: RadioConfig,
    imp: ImpairmentSpec = NO_IMPAIRMENTS,
    n_packets: int = 1,
    seed: int | Sequence[int] = 0,
    source_id: str = "",
    location_tag: tuple[float, float] | None = None,
    packet_interval: float = 1e-3,
) -> CsiTrace:
    """Generate a trace of ``n_packets`` impaired snapshots of a static channel.

    Args:
        paths: Path components or a ChannelSpec.
        cfg: Radio configuration.
        imp: Impairments to inject.
        n_packets: Number of packets.
        seed: Seed (or seed sequence) of the noise and jitter generator.
        source_id: AP label stored in the trace.
        location_tag: Optional receiver location stored in the trace.
        packet_interval: Timestamp spacing in seconds.

    Raises:
        InvalidInputError: If no path is given, a delay exceeds the resolvable
            span or the impairments do not fit the radio.
    """
    if n_packets < 1:
        raise InvalidInputError(f"n_packets must be at least 1, got {n_packets}")
    imp.check(cfg)
    rng = np.random.default_rng(seed)
    clean = clean_cfr(paths, cfg)
    power = float(np.mean(np.abs(clean) ** 2))

    distorted = clean * sto_rotation(cfg, imp.sto_taps) * sfo_rotation(cfg, imp.sfo)
    n = np.arange(n_packets)
    common = imp.cpo + n * imp.cfo_step
    if imp.cfo_jitter > 0:
        common = common + imp.cfo_jitter * rng.standard_normal(n_packets)
    tensor = distorted[None, ...] * np.exp(1j * common)[:, None, None, None]
    if imp.snr_db is not None:
        tensor = add_noise(tensor, imp.snr_db, rng, power)
    return CsiTrace.from_tensor(cfg, tensor, n * packet_interval, source_id, location_tag)


def ground_truth(paths) -> tuple[float, float]:
    """(theta, tau) of the earliest path, ties going to the stronger one."""
    first = ChannelSpec(_as_paths(paths)).first_arrival()
    return first.theta, first.tau


def fold_angle(angle_deg: float) -> float:
    """Map an azimuth onto the [-90, 90] field of view of a linear array."""
    a = (angle_deg + 180.0) % 360.0 - 180.0
    if a > 90.0:
        a = 180.0 - a
    elif a < -90.0:
        a = -180.0 - a
    return a


def _walls(room: RoomSpec):
    w, h = room.width, room.height
    return (
        ("left", LineString([(0, 0), (0, h)]), lambda x, y: (-x, y)),
        ("right", LineString([(w, 0), (w, h)]), lambda x, y: (2 * w - x, y)),
        ("bottom", LineString([(0, 0), (w, 0)]), lambda x, y: (x, -y)),
        ("top", LineString([(0, h), (w, h)]), lambda x, y: (x, 2 * h - y)),
    )


def wall_phases(seed: int) -> dict[str, float]:
    """Reflection phase of each wall material, fixed for a scene."""
    rng = np.random.default_rng(seed)
    return {name: float(p) for name, p in zip(("left", "right", "bottom", "top"), rng.uniform(0, 2 * np.pi, 4))}


def _path(source, ap, orientation: float, cfg: RadioConfig, extra_loss_db=0.0, extra_phase=0.0):
    dx, dy = source[0] - ap[0], source[1] - ap[1]
    length = max(math.hypot(dx, dy), MIN_PATH_LENGTH)
    tau = length / cfg.c
    alpha = cfg.wavelength / (4 * math.pi * length) * 10.0 ** (-extra_loss_db / 20.0)
    phi = (2 * math.pi * cfg.f_c * tau + extra_phase) % (2 * math.pi)
    theta = fold_angle(math.degrees(math.atan2(dy, dx)) - orientation)
    return PathComponent(alpha=alpha, phi=phi, tau=tau, theta=theta)


def link_channel(
    room: RoomSpec,
    ap_index: int,
    location: tuple[float, float],
    cfg: RadioConfig,
    phases: dict[str, float] | None = None,
) -> ChannelSpec:
    """Direct path plus first-order wall reflections between a point and one AP."""
    ap = room.tx_positions[ap_index]
    orientation = room.orientation(ap_index)
    phases = phases or {}
    paths = [_path(location, ap, orientation, cfg)]
    for name, wall, mirror in _walls(room):
        image = mirror(*location)
        if not LineString([image, ap]).intersects(wall):
            continue
        paths.append(
            _path(image, ap, orientation, cfg, room.wall_reflection_loss, math.pi + phases.get(name, 0.0))
        )
    return ChannelSpec(tuple(paths))


def rp_grid(room: RoomSpec, spacing: float) -> list[tuple[float, float]]:
    """Grid locations at half-spacing offsets from the walls, row by row."""
    if not spacing > 0 or spacing >= min(room.width, room.height):
        raise InvalidConfigError(
            f"Grid spacing {spacing} m must be positive and smaller than the room"
        )
    xs = np.arange(spacing / 2.0, room.width, spacing)
    ys = np.arange(spacing / 2.0, room.height, spacing)
    return [(float(x), float(y)) for y in ys for x in xs]


def scene_points(
    room: RoomSpec, locations, cfg: RadioConfig, seed: int = 0
) -> list[ScenePoint]:
    phases = wall_phases(seed)
    footprint = room.footprint()
    points = []
    for location in locations:
        location = (float(location[0]), float(location[1]))
        if not footprint.covers(Point(location)):
            raise InvalidInputError(f"Location {location} is outside the room")
        channels = tuple(
            link_channel(room, ap, location, cfg, phases) for ap in range(len(room.tx_positions))
        )
        points.append(ScenePoint(location, channels))
    return points


def make_radio_scene(
    room: RoomSpec, rp_grid_spacing: float, cfg: RadioConfig, seed: int = 0
) -> list[ScenePoint]:
    """Reference points on a regular grid with their per-AP ground-truth channels.

    ``seed`` fixes the wall reflection phases of the scene.
    """
    points = scene_points(room, rp_grid(room, rp_grid_spacing), cfg, seed)
    logger.info(
        f"Built scene with {len(points)} reference points and {len(room.tx_positions)} access points"
    )
    return points


def sample_locations(room: RoomSpec, n: int, seed: int, margin: float = 0.25) -> list[tuple[float, float]]:
    """Uniform random locations at least ``margin`` meters from the walls."""
    rng = np.random.default_rng(seed)
    xs = rng.uniform(margin, room.width - margin, n)
    ys = rng.uniform(margin, room.height - margin, n)
    return [(float(x), float(y)) for x, y in zip(xs, ys, strict=True)]


def point_seed(seed: int, index: int) -> int:
    return seed ^ index


def survey_traces(
    points: list[ScenePoint],
    cfg: RadioConfig,
    imp: ImpairmentSpec,
    n_packets: int,
    seed: int,
    ap_ids: Sequence[str] | None = None,
    stream: int = 0,
) -> list[dict[str, CsiTrace]]:
    """Simulate one trace per AP at every point.

    Point ``i`` and AP ``s`` draw from ``default_rng([seed ^ i, s, stream])`` so
    results do not depend on generation order; ``stream`` separates survey sets
    generated from the same seed.
    """
    surveys = []
    for i, point in enumerate(points):
        ids = ap_ids or [f"ap{s + 1}" for s in range(len(point.channels))]
        surveys.append(
            {
                ap_id: synth_trace(
                    channel,
                    cfg,
                    imp,
                    n_packets,
                    seed=[point_seed(seed, i), s, stream],
                    source_id=ap_id,
                    location_tag=point.location,
                )
                for s, (ap_id, channel) in enumerate(zip(ids, point.channels, strict=True))
            }
        )
    return surveys

"""CSI noise removal and phase calibration.

``calibrate`` runs STO removal, per-packet SFO removal, CFO smoothing over
non-overlapping windows and tap filtering, in that order.
"""

import logging

import numpy as np
from pydantic import BaseModel

from .classes.radio import CsiPacket, CsiTrace, RadioConfig
from .config import CalibrationConfig, TapFilterConfig
from .errors import DegenerateInputError, InvalidInputError, PreconditionError
from .utils import check_finite, smallest_mode, unitary_fft, unitary_ifft, unwrap_phase

logger = logging.getLogger(__name__)

# Absorbs rounding in the cumulative power ratio.
CUMULATIVE_SLACK = 1e-12


class CalibrationReport(BaseModel):
    """Estimates and applied stages of one calibration run.

    Attributes:
        sfo_estimate: Mean per-packet SFO slope in seconds.
        sfo_phase_slope: The same slope in radians per subcarrier index step.
        sto_taps: Detected circular CIR shift.
        cfo_window: Packets merged per CFO smoothing window (N_p).
        tap_threshold: Cumulative power fraction C of the tap filter.
        mean_taps_kept: Average tap count T kept by the filter.
        degenerate_entries: Zero-magnitude entries excluded from CFO smoothing.
    """

    sfo_estimate: float = 0.0
    sfo_phase_slope: float = 0.0
    sto_taps: int = 0
    cfo_window: int = 1
    tap_threshold: float = 1.0
    mean_taps_kept: float | None = None
    degenerate_entries: int = 0
    sto_removed: bool = False
    sfo_removed: bool = False
    cfo_smoothed: bool = False
    tap_filtered: bool = False


def _threshold(cfg: TapFilterConfig | float) -> float:
    threshold = cfg.threshold if isinstance(cfg, TapFilterConfig) else float(cfg)
    if not 0 < threshold <= 1:
        raise InvalidInputError(f"Tap filter threshold must be in (0, 1], got {threshold}")
    return threshold


def tap_count(cir: np.ndarray, threshold: float) -> int:
    """Smallest T whose first T taps hold at least ``threshold`` of the power."""
    power = np.abs(cir) ** 2
    total = power.sum()
    if total <= 0:
        raise InvalidInputError("Cannot tap-filter a CFR with zero power")
    cumulative = np.cumsum(power) / total
    return int(np.argmax(cumulative >= threshold - CUMULATIVE_SLACK)) + 1


def tap_filter(cfr, cfg: TapFilterConfig | float | None = None) -> np.ndarray:
    """Keep the first T CIR taps holding a fraction C of the power.

    Args:
        cfr: Complex CFR vector of one stream.
        cfg: Tap filter config or the threshold C itself, default C = 0.9.

    Returns:
        The CFR of the truncated CIR.
    """
    cfr = np.asarray(cfr, dtype=complex).reshape(-1)
    check_finite(cfr, "CFR")
    cir = unitary_ifft(cfr)
    keep = tap_count(cir, _threshold(cfg if cfg is not None else TapFilterConfig()))
    cir[keep:] = 0
    return unitary_fft(cir)


def _tap_filter_tensor(h: np.ndarray, threshold: float) -> tuple[np.ndarray, list[int]]:
    out = np.empty_like(h)
    kept = []
    for index in np.ndindex(h.shape[:-1]):
        cfr = h[index]
        if not np.any(cfr):
            out[index] = cfr
            continue
        cir = unitary_ifft(cfr)
        keep = tap_count(cir, threshold)
        cir[keep:] = 0
        out[index] = unitary_fft(cir)
        kept.append(keep)
    return out, kept


def estimate_sfo(packet: CsiPacket, cfg: RadioConfig) -> float:
    """Common SFO slope of all streams by least squares on unwrapped phase.

    Fits phase(k) = -(2 pi f_delta k rho + omega_stream) with one rho shared by
    every (rx, tx) stream and a free intercept per stream.
    """
    packet.check(cfg)
    if cfg.n_sub < 3:
        raise InvalidInputError("SFO regression needs at least three subcarriers")
    phase = unwrap_phase(packet.h, axis=-1).reshape(-1, cfg.n_sub)
    x = 2 * np.pi * cfg.f_delta * cfg.tone_index()
    xc = x - x.mean()
    pc = phase - phase.mean(axis=1, keepdims=True)
    return float(-(pc @ xc).sum() / (phase.shape[0] * (xc @ xc)))


def remove_sfo(packet: CsiPacket, slope: float, cfg: RadioConfig) -> CsiPacket:
    """Rotate subcarrier k by e^{+j 2 pi f_delta k slope}."""
    return packet.replace(packet.h * np.exp(2j * np.pi * cfg.f_delta * cfg.tone_index() * slope))


def power_delay_profile(h: np.ndarray) -> np.ndarray:
    """PDP over taps summed across the (rx, tx) streams of one packet."""
    cir = unitary_ifft(h, axis=-1)
    return (np.abs(cir) ** 2).reshape(-1, h.shape[-1]).sum(axis=0)


def estimate_sto(trace: CsiTrace) -> int:
    """Most frequent per-packet PDP peak tap (tap 0 included), ties to the smaller shift."""
    trace.require_packets(1)
    peaks = [int(np.argmax(power_delay_profile(p.h))) for p in trace.packets]
    return smallest_mode(peaks)


def remove_sto(trace: CsiTrace, n_sto: int) -> CsiTrace:
    """Undo a circular CIR shift of ``n_sto`` taps."""
    k = np.arange(trace.config.n_sub)
    rotation = np.exp(2j * np.pi * k * n_sto / trace.config.n_sub)
    return trace.with_tensor(trace.tensor() * rotation)


def _smooth_window(h: np.ndarray, strict: bool) -> tuple[np.ndarray, int]:
    magnitude = np.abs(h)
    zero = magnitude == 0
    n_zero = int(zero.any(axis=0).sum())
    if n_zero:
        if strict:
            raise DegenerateInputError(f"{n_zero} CFR entries have zero magnitude in a CFO window")
        logger.warning(f"Excluding zero-magnitude samples from {n_zero} entries in CFO smoothing")
    valid = ~zero
    count = valid.sum(axis=0)
    phase = np.unwrap(np.angle(h), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_mag = np.where(valid, np.log(np.where(valid, magnitude, 1.0)), 0.0).sum(axis=0) / count
        mean_phase = np.where(valid, phase, 0.0).sum(axis=0) / count
        out = np.where(count > 0, np.exp(log_mag + 1j * mean_phase), 0.0)
    return out, n_zero


def smooth_cfo(packets, strict: bool = False) -> CsiPacket:
    """Merge a window of packets into one.

    Per entry the magnitude is the geometric mean and the phase the mean of
    the phases unwrapped across packets.

    Raises:
        DegenerateInputError: If ``strict`` and an entry has zero magnitude.
            Otherwise such samples are left out of their entry's means.
    """
    packets = list(packets)
    if not packets:
        raise InvalidInputError("CFO smoothing needs at least one packet")
    shapes = {p.h.shape for p in packets}
    if len(shapes) != 1:
        raise InvalidInputError(f"CFO window packets differ in shape: {shapes}")
    h = np.stack([p.h for p in packets])
    out, _ = _smooth_window(h, strict)
    stamp = float(np.mean([p.timestamp for p in packets]))
    return CsiPacket(stamp, out)


def calibrate(
    trace: CsiTrace, config: CalibrationConfig | None = None
) -> tuple[CsiTrace, CalibrationReport]:
    """Run the calibration stages enabled in ``config``.

    The output holds ``len(trace) // cfo_window`` packets when CFO smoothing
    is on; trailing packets that do not fill a window are dropped.

    Raises:
        PreconditionError: If the trace is shorter than one CFO window.
    """
    config = config or CalibrationConfig()
    trace.require_packets(1)
    cfg = trace.config
    report = CalibrationReport(
        cfo_window=config.cfo_window, tap_threshold=config.tap_filter.threshold
    )

    if config.remove_sto:
        report.sto_taps = estimate_sto(trace)
        if report.sto_taps:
            trace = remove_sto(trace, report.sto_taps)
        report.sto_removed = True

    if config.remove_sfo:
        slopes = [estimate_sfo(p, cfg) for p in trace.packets]
        trace = CsiTrace(
            cfg,
            tuple(remove_sfo(p, s, cfg) for p, s in zip(trace.packets, slopes, strict=True)),
            trace.source_id,
            trace.location_tag,
        )
        report.sfo_estimate = float(np.mean(slopes))
        report.sfo_phase_slope = 2 * np.pi * cfg.f_delta * report.sfo_estimate
        report.sfo_removed = True

    if config.smooth_cfo and config.cfo_window > 1:
        n_p = config.cfo_window
        if len(trace) < n_p:
            raise PreconditionError(
                f"Trace {trace.source_id!r} has {len(trace)} packets, one CFO window needs {n_p}"
            )
        tensor = trace.tensor()
        stamps = trace.timestamps()
        n_windows = len(trace) // n_p
        merged = []
        for w in range(n_windows):
            out, n_zero = _smooth_window(tensor[w * n_p : (w + 1) * n_p], config.strict)
            report.degenerate_entries += n_zero
            merged.append(out)
        window_stamps = stamps[: n_windows * n_p].reshape(n_windows, n_p).mean(axis=1)
        trace = trace.with_tensor(np.stack(merged), window_stamps)
        report.cfo_smoothed = True

    if config.apply_tap_filter:
        threshold = config.tap_filter.threshold
        filtered = []
        kept = []
        for packet in trace.packets:
            h, k = _tap_filter_tensor(packet.h, threshold)
            filtered.append(h)
            kept.extend(k)
        trace = trace.with_tensor(np.stack(filtered))
        report.mean_taps_kept = float(np.mean(kept)) if kept else None
        report.tap_filtered = True

    logger.debug(
        f"Calibrated {trace.source_id!r}: sto={report.sto_taps} sfo={report.sfo_estimate:.3e} "
        f"packets={len(trace)}"
    )
    return trace, report


def calibrate_amplitude(
    trace: CsiTrace, config: CalibrationConfig | None = None
) -> tuple[CsiTrace, CalibrationReport]:
    """Calibration for amplitude fingerprints: every stage but CFO smoothing, packet count kept."""
    config = config or CalibrationConfig()
    return calibrate(trace, config.model_copy(update={"smooth_cfo": False}))

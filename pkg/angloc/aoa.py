"""Joint AoA-ToF estimation with MUSIC over a subcarrier x antenna virtual array.

Snapshots are subarrays of N'_r antennas by K' subcarriers, flattened
antenna-major so that they match the steering vector kron(Psi(theta), Omega(tau)).
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter, minimum_filter

from .classes.fingerprints import AoaTofFingerprint, SpectrumGrid
from .classes.radio import CsiPacket, CsiTrace, RadioConfig
from .config import AoaConfig, SmoothingConfig
from .errors import InvalidConfigError, InvalidInputError, NoPeakError
from .utils import hermitian_eig

logger = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-9
# Lower bound of a^H E_N E_N^H a relative to a^H a; keeps on-grid noiseless
# sources finite.
PROJECTION_FLOOR = 1e-12


@dataclass(frozen=True)
class SubarrayLayout:
    """Subcarrier windows of one smoothing configuration.

    Attributes:
        windows: (T_K, K') positions into the reported subcarriers.
        tone_spacing: Frequency step between adjacent subcarriers of a window (Hz).
        rx_offsets: First antenna of each antenna subarray.
    """

    windows: np.ndarray
    tone_spacing: float
    rx_offsets: tuple[int, ...]

    @property
    def n_subarrays(self) -> int:
        return len(self.windows) * len(self.rx_offsets)


def subarray_layout(radio: RadioConfig, cfg: SmoothingConfig) -> SubarrayLayout:
    """Overlapping subcarrier windows of length K' and antenna offsets.

    With a physical index map only windows of uniformly spaced indices that
    stay on one side of the null subcarrier are used.
    """
    t_k, t_n = cfg.check(radio)
    rx_offsets = tuple(range(t_n))
    if radio.subcarrier_indices is None:
        windows = np.arange(t_k)[:, None] + np.arange(cfg.k_sub)[None, :]
        return SubarrayLayout(windows, radio.f_delta, rx_offsets)

    indices = np.asarray(radio.subcarrier_indices)
    candidates = {}
    for start in range(t_k):
        window = indices[start : start + cfg.k_sub]
        steps = np.diff(window)
        if np.all(steps == steps[0]) and (window[0] > 0 or window[-1] < 0):
            candidates.setdefault(int(steps[0]), []).append(start)
    if not candidates:
        raise InvalidConfigError(
            f"No window of {cfg.k_sub} uniformly spaced subcarriers avoids the null subcarrier"
        )
    step = max(candidates, key=lambda s: (len(candidates[s]), -s))
    starts = np.array(candidates[step])
    windows = starts[:, None] + np.arange(cfg.k_sub)[None, :]
    return SubarrayLayout(windows, step * radio.f_delta, rx_offsets)


def steering(
    theta: float,
    tau: float,
    cfg: RadioConfig,
    sub_dims: tuple[int, int],
    tone_spacing: float | None = None,
) -> np.ndarray:
    """a(theta, tau) = kron(Psi(theta), Omega(tau)) of length K' * N'_r.

    Args:
        theta: Angle in degrees.
        tau: Delay in seconds.
        cfg: Radio configuration.
        sub_dims: (K', N'_r).
        tone_spacing: Subcarrier step in Hz, ``cfg.f_delta`` by default.
    """
    k_sub, nr_sub = sub_dims
    spacing = cfg.f_delta if tone_spacing is None else tone_spacing
    return np.kron(
        _antenna_response(np.atleast_1d(theta), nr_sub, cfg)[0],
        _delay_response(np.atleast_1d(tau), k_sub, spacing)[0],
    )


def _antenna_response(theta_deg: np.ndarray, nr_sub: int, cfg: RadioConfig) -> np.ndarray:
    m = np.arange(nr_sub)
    phase = cfg.f_c * cfg.d * np.sin(np.radians(theta_deg)) / cfg.c
    return np.exp(-2j * np.pi * np.outer(phase, m))


def _delay_response(tau: np.ndarray, k_sub: int, spacing: float) -> np.ndarray:
    k = np.arange(k_sub)
    return np.exp(-2j * np.pi * np.outer(tau, k) * spacing)


def snapshots(packet: CsiPacket, layout: SubarrayLayout, nr_sub: int) -> np.ndarray:
    """(n_snapshots, N'_r * K') subarray vectors of one packet, every tx antenna included."""
    h = packet.h
    n_tx = h.shape[1]
    out = []
    for r0 in layout.rx_offsets:
        block = h[r0 : r0 + nr_sub]  # (N'_r, tx, sub)
        for tx in range(n_tx):
            sub = block[:, tx, :][:, layout.windows]  # (N'_r, T_K, K')
            out.append(sub.transpose(1, 0, 2).reshape(len(layout.windows), -1))
    return np.concatenate(out, axis=0)


def _hermitian(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def smooth_fb(
    packet: CsiPacket,
    cfg: SmoothingConfig | None = None,
    radio: RadioConfig | None = None,
    layout: SubarrayLayout | None = None,
) -> np.ndarray:
    """Forward(-backward) smoothed covariance of one packet.

    R_f averages x x^H over all subarray snapshots; with ``use_backward`` the
    result is (R_f + J conj(R_f) J) / 2.
    """
    cfg = cfg or SmoothingConfig()
    if layout is None:
        if radio is None:
            raise InvalidInputError("A radio config or a subarray layout is required")
        packet.check(radio)
        layout = subarray_layout(radio, cfg)
    x = snapshots(packet, layout, cfg.nr_sub)
    r_f = x.T @ x.conj() / x.shape[0]
    if cfg.use_backward:
        r_f = 0.5 * (r_f + np.flip(r_f).conj())
    return _hermitian(r_f)


def smooth_multipacket(
    packets,
    cfg: SmoothingConfig | None = None,
    radio: RadioConfig | None = None,
    layout: SubarrayLayout | None = None,
) -> np.ndarray:
    """Mean of the per-packet smoothed covariances."""
    cfg = cfg or SmoothingConfig()
    packets = list(packets)
    if not packets:
        raise InvalidInputError("Multi-packet smoothing needs at least one packet")
    if layout is None:
        if radio is None:
            raise InvalidInputError("A radio config or a subarray layout is required")
        layout = subarray_layout(radio, cfg)
    total = sum(smooth_fb(p, cfg, layout=layout) for p in packets)
    return _hermitian(total / len(packets))


def estimate_num_sources(eigenvalues, cap: int = 10) -> int:
    """Source count L at the largest ratio between consecutive eigenvalues."""
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size < 2:
        raise InvalidInputError("Need at least two eigenvalues")
    floor = EIGEN_FLOOR * max(lam[0], 0.0)
    if floor <= 0:
        return 1
    limit = min(lam.size - 1, cap)
    num = np.maximum(lam[:limit], floor)
    den = np.maximum(lam[1 : limit + 1], floor)
    return int(np.argmax(num / den)) + 1


def music_spectrum(
    cov,
    n_sources: int,
    radio: RadioConfig,
    grid: AoaConfig | None = None,
    layout: SubarrayLayout | None = None,
) -> SpectrumGrid:
    """P(theta, tau) = a^H a / (a^H E_N E_N^H a) over the configured grid.

    Raises:
        InvalidInputError: If L is not in [1, dim).
    """
    grid = grid or AoaConfig()
    smoothing = grid.smoothing
    cov = np.asarray(cov, dtype=complex)
    dim = cov.shape[0]
    if dim != smoothing.dimension:
        raise InvalidInputError(
            f"Covariance dimension {dim} does not match the subarray size {smoothing.dimension}"
        )
    if not 1 <= n_sources < dim:
        raise InvalidInputError(f"Source count must be in [1, {dim}), got {n_sources}")
    if layout is None:
        layout = subarray_layout(radio, smoothing)
    _, vectors = hermitian_eig(cov)
    noise = vectors[:, n_sources:].reshape(smoothing.nr_sub, smoothing.k_sub, dim - n_sources)

    theta = grid.theta_axis()
    tau = grid.tau_axis()
    psi = _antenna_response(theta, smoothing.nr_sub, radio)
    omega = _delay_response(tau, smoothing.k_sub, layout.tone_spacing)
    proj = np.einsum("tm,sk,mke->tse", psi.conj(), omega.conj(), noise, optimize=True)
    denom = np.sum(np.abs(proj) ** 2, axis=-1)
    values = dim / np.maximum(denom, PROJECTION_FLOOR * dim)
    return SpectrumGrid(theta, tau, values)


def find_peaks(grid: SpectrumGrid, n_peaks: int) -> list[tuple[float, float, float]]:
    """Strict local maxima over the 8-neighbourhood, strongest first, at most ``n_peaks``.

    Raises:
        NoPeakError: If the spectrum has no local maximum.
    """
    values = grid.values
    local_max = (values == maximum_filter(values, size=3, mode="nearest")) & (
        values > minimum_filter(values, size=3, mode="nearest")
    )
    rows, cols = np.nonzero(local_max)
    if rows.size == 0:
        raise NoPeakError("Pseudo-spectrum has no local maximum")
    order = np.argsort(-values[rows, cols], kind="stable")[:n_peaks]
    return [
        (float(grid.theta_axis[rows[i]]), float(grid.tau_axis[cols[i]]), float(values[rows[i], cols[i]]))
        for i in order
    ]


def first_arrival(peaks: list[tuple[float, float, float]]) -> tuple[float, float, float]:
    """Peak with the smallest delay, ties going to the higher power."""
    if not peaks:
        raise NoPeakError("No peaks to choose from")
    return min(peaks, key=lambda p: (p[1], -p[2]))


@dataclass(frozen=True)
class AoaAnalysis:
    fingerprint: AoaTofFingerprint
    spectrum: SpectrumGrid
    peaks: list[tuple[float, float, float]]
    eigenvalues: np.ndarray


def analyze(trace: CsiTrace, config: AoaConfig | None = None) -> AoaAnalysis:
    """Full AoA-ToF chain on the first N_mp packets of a calibrated trace."""
    config = config or AoaConfig()
    smoothing = config.smoothing
    trace.require_packets(1)
    packets = trace.packets[: smoothing.n_packets]
    if len(packets) < smoothing.n_packets:
        logger.debug(
            f"Trace {trace.source_id!r} has {len(packets)} packets for multi-packet smoothing "
            f"of {smoothing.n_packets}"
        )
    layout = subarray_layout(trace.config, smoothing)
    cov = smooth_multipacket(packets, smoothing, layout=layout)
    eigenvalues, _ = hermitian_eig(cov)
    dim = smoothing.dimension
    if config.n_sources is not None:
        n_sources = config.n_sources
    else:
        n_sources = estimate_num_sources(eigenvalues, config.max_sources)
    n_sources = min(n_sources, dim - 1)
    spectrum = music_spectrum(cov, n_sources, trace.config, config, layout)
    peaks = find_peaks(spectrum, n_sources)
    theta, tau, power = first_arrival(peaks)
    fp = AoaTofFingerprint(theta=theta, tau=tau, peak_power=power, n_sources=n_sources)
    return AoaAnalysis(fp, spectrum, peaks, eigenvalues)


def aoa_fingerprint(trace: CsiTrace, config: AoaConfig | None = None) -> AoaTofFingerprint:
    return analyze(trace, config).fingerprint


def peak_sharpness_db(grid: SpectrumGrid, peak: tuple[float, float, float]) -> float:
    """Peak power over the spectrum median, in dB."""
    return float(10.0 * np.log10(peak[2] / np.median(grid.values)))

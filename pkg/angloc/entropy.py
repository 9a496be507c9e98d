"""AR-model entropy fingerprints of CSI amplitudes.

Amplitude samples of one stream are rescaled onto [-0.5, 0.5] and their
density is modelled as the power spectrum of an autoregressive process. The
autocorrelation of that process is the sample characteristic function

    R(i) = mean_n exp(j 2 pi i x_n)

which is a positive semidefinite Toeplitz sequence, so in exact arithmetic the
Levinson-Durbin recursion produces a stable model. Rounding can still push a
pole of a high-order fit onto the unit circle; such fits fall back to lower
orders. The normalized AR spectrum is a density on the unit interval and its
Shannon entropy (nats) is at most 0.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .classes.fingerprints import ArModel, EntropyFingerprint, RescaleBounds
from .classes.radio import CsiTrace
from .config import EntropyConfig
from .errors import DegenerateInputError, InstabilityError, InvalidInputError

logger = logging.getLogger(__name__)

# Reflection coefficients this close to the unit circle mean a perfectly
# predictable sequence (constant samples).
REFLECTION_LIMIT = 1.0 - 1e-12


def rescale(samples, bounds: RescaleBounds) -> np.ndarray:
    """Affine map of [lo, hi] onto [-0.5, 0.5]; out-of-range samples are clamped."""
    samples = np.asarray(samples, dtype=float)
    outside = (samples < bounds.lo) | (samples > bounds.hi)
    if np.any(outside):
        logger.warning(
            f"Clamping {int(outside.sum())} samples outside [{bounds.lo:.4g}, {bounds.hi:.4g}]"
        )
        samples = np.clip(samples, bounds.lo, bounds.hi)
    return (samples - bounds.lo) / (bounds.hi - bounds.lo) - 0.5


def characteristic_autocorrelation(x, max_lag: int) -> np.ndarray:
    """R(0..max_lag) of rescaled samples, R(i) = mean(exp(j 2 pi i x))."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size == 0:
        raise DegenerateInputError("No samples to correlate")
    lags = np.arange(max_lag + 1)
    return np.exp(2j * np.pi * np.outer(lags, x)).mean(axis=1)


def levinson_durbin(r, order: int) -> ArModel:
    """Solve the Yule-Walker equations for ``1 + sum a_i z^-i``.

    Args:
        r: Autocorrelation lags R(0..order), complex allowed.
        order: Model order p.

    Returns:
        The order-p model; ``errors`` holds the prediction error of every
        intermediate order.

    Raises:
        DegenerateInputError: If R(0) is zero or the sequence is perfectly
            predictable before reaching ``order``.
    """
    r = np.asarray(r, dtype=complex)
    if order < 1 or r.size < order + 1:
        raise InvalidInputError(f"Need {order + 1} autocorrelation lags for order {order}")
    r0 = r[0].real
    if not r0 > 0:
        raise DegenerateInputError("Zero-lag autocorrelation is zero")
    a = np.zeros(0, dtype=complex)
    errors = np.empty(order + 1)
    errors[0] = r0
    e = r0
    for m in range(1, order + 1):
        acc = r[m] + np.dot(a, r[m - 1 : 0 : -1])
        k = -acc / e
        if abs(k) >= REFLECTION_LIMIT:
            raise DegenerateInputError(f"Samples are perfectly predictable at order {m}")
        a = np.concatenate((a + k * np.conj(a[::-1]), [k]))
        e = e * (1.0 - abs(k) ** 2)
        errors[m] = e
    return ArModel(order, a, float(e), float(r0), errors, r[: order + 1].copy())


def _check_samples(x: np.ndarray, order: int) -> None:
    if x.size <= order:
        raise InvalidInputError(f"Need more than {order} samples, got {x.size}")
    if np.ptp(x) == 0:
        raise DegenerateInputError("Samples are constant")


def fit_ar(samples, order: int) -> ArModel:
    """AR model of order ``order`` for rescaled samples."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    _check_samples(x, order)
    return levinson_durbin(characteristic_autocorrelation(x, order), order)


def eef_scores(errors, n_samples: int) -> np.ndarray:
    """EEF(k) for k = 1..p from the prediction error sequence sigma2(0..p)."""
    errors = np.asarray(errors, dtype=float)
    k = np.arange(1, errors.size)
    xi = n_samples * np.log(errors[0] / errors[1:])
    scores = np.zeros_like(xi)
    above = xi > k
    scores[above] = xi[above] - k[above] * (np.log(xi[above] / k[above]) + 1.0)
    return scores


def aic_scores(errors, n_samples: int) -> np.ndarray:
    """AIC(k) for k = 1..p (smaller is better)."""
    errors = np.asarray(errors, dtype=float)
    k = np.arange(1, errors.size)
    return n_samples * np.log(errors[1:]) + 2.0 * k


def select_order_eef(samples, p_max: int, criterion: str = "eef") -> int:
    """Model order maximizing the EEF (or minimizing AIC), ties to the smaller order."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    _check_samples(x, p_max)
    if p_max == 1:
        return 1
    model = _fit_reaching(x, p_max)
    if model.order < p_max:
        logger.debug(f"Order search stopped at {model.order}, sequence became predictable")
    if criterion == "aic":
        return int(np.argmin(aic_scores(model.errors, x.size))) + 1
    if criterion != "eef":
        raise InvalidInputError(f"Unknown order criterion {criterion!r}")
    return int(np.argmax(eef_scores(model.errors, x.size))) + 1


def _fit_reaching(x: np.ndarray, p_max: int) -> ArModel:
    """Fit up to ``p_max``, stopping early at the last order that stays stable."""
    r = characteristic_autocorrelation(x, p_max)
    order = p_max
    while True:
        try:
            return levinson_durbin(r, order)
        except DegenerateInputError:
            if order == 1:
                raise
            order -= 1


def beta_grid(grid_size: int) -> np.ndarray:
    """Uniform grid -0.5 + j / N_g on [-0.5, 0.5)."""
    return -0.5 + np.arange(grid_size) / grid_size


def _inverse_gain(model: ArModel, grid_size: int) -> np.ndarray:
    beta = beta_grid(grid_size)
    i = np.arange(1, model.order + 1)
    denom = 1.0 + np.exp(-2j * np.pi * np.outer(beta, i)) @ model.coeffs
    return 1.0 / np.abs(denom) ** 2


def normalized_variance(model: ArModel, grid_size: int = 1024) -> float:
    """sigma2 scaled so that the PSD has unit Riemann sum on the grid."""
    return float(1.0 / np.mean(_inverse_gain(model, grid_size)))


def ar_psd(model: ArModel, grid_size: int = 1024) -> np.ndarray:
    """Unit-integral AR spectrum on ``beta_grid(grid_size)``.

    Raises:
        InstabilityError: If a pole lies on or outside the unit circle.
    """
    if not model.is_stable():
        raise InstabilityError(f"AR model of order {model.order} is not stable")
    g = _inverse_gain(model, grid_size)
    return g / g.mean()


@dataclass(frozen=True)
class EntropyEstimate:
    """Entropy by grid integration and by the cepstral identity, in nats."""

    value: float
    cepstral: float


def cepstrum(psd: np.ndarray) -> np.ndarray:
    """Cepstral coefficients c(i) = integral of log S(beta) exp(j 2 pi i beta) on the grid.

    Index ``i`` of the result is lag ``i`` for i < N_g / 2 and lag ``i - N_g`` above.
    """
    n = psd.size
    lags = np.fft.fftfreq(n, 1.0 / n)
    return np.where(lags % 2 == 0, 1.0, -1.0) * np.fft.ifft(np.log(psd))


def cepstral_entropy(psd: np.ndarray, autocorr) -> float:
    """-sum_{|i| < N_g/2} R(i) conj(c(i)) from non-negative lags R(0..)."""
    c = cepstrum(psd)
    half = psd.size // 2
    r = np.asarray(autocorr, dtype=complex)[:half]
    lags = np.arange(r.size)
    total = r[0] * np.conj(c[0])
    total += np.sum(r[1:] * np.conj(c[lags[1:]]))
    total += np.sum(np.conj(r[1:]) * np.conj(c[-lags[1:]]))
    return float(-total.real)


def model_autocorrelation(model: ArModel, n_lags: int) -> np.ndarray:
    """Autocorrelation implied by the model, R(0..n_lags-1), scaled to R(0) = 1."""
    if model.autocorr is None:
        raise InvalidInputError("Model carries no autocorrelation to extend")
    r = np.zeros(max(n_lags, model.order + 1), dtype=complex)
    r[: model.order + 1] = model.autocorr
    for m in range(model.order + 1, r.size):
        r[m] = -np.dot(model.coeffs, r[m - model.order : m][::-1])
    return r[:n_lags] / model.r0


def entropy(model: ArModel, samples=None, grid_size: int = 1024) -> EntropyEstimate:
    """Shannon entropy of the normalized AR spectrum.

    Args:
        model: Stable AR model.
        samples: Rescaled samples the model was fitted on; their characteristic
            function feeds the cepstral cross-check. Without samples the
            model's own autocorrelation is used.
        grid_size: Grid size N_g.
    """
    psd = ar_psd(model, grid_size)
    value = float(-np.mean(psd * np.log(psd)))
    half = grid_size // 2
    if samples is not None:
        x = np.asarray(samples, dtype=float).reshape(-1)
        if x.size == 0 or np.ptp(x) == 0:
            raise DegenerateInputError("Samples are constant")
        autocorr = characteristic_autocorrelation(x, half - 1)
    else:
        autocorr = model_autocorrelation(model, half)
    return EntropyEstimate(value, cepstral_entropy(psd, autocorr))


@dataclass(frozen=True)
class StreamDiagnostics:
    index: int
    tx: int
    rx: int
    subcarrier: int
    order: int
    sigma2: float
    entropy: float
    cepstral: float
    flagged: bool


def order_limit(n_samples: int, config: EntropyConfig) -> int:
    """Largest order the search may try on ``n_samples`` samples.

    An N-sample characteristic function is the spectrum of N atoms; high
    orders resolve the atoms instead of the density and the prediction
    error collapses toward zero.
    """
    return max(1, min(config.p_max, n_samples // config.samples_per_order, n_samples - 1))


def fit_stable(samples, order: int) -> ArModel:
    """Fit at ``order``, stepping down until the model's poles are inside the unit circle.

    Raises:
        InstabilityError: If no order down to 1 gives a stable model.
    """
    x = np.asarray(samples, dtype=float).reshape(-1)
    for p in range(order, 0, -1):
        model = fit_ar(x, p)
        if model.is_stable():
            if p < order:
                logger.debug(f"AR order {order} unstable, using order {p}")
            return model
    raise InstabilityError(f"No stable AR model up to order {order}")


def stream_entropy(
    samples, config: EntropyConfig | None = None, bounds: RescaleBounds | None = None
) -> tuple[ArModel, EntropyEstimate]:
    """Fit and evaluate the AR entropy of one amplitude stream.

    Args:
        samples: Raw amplitudes.
        config: Order search and grid settings.
        bounds: Rescale interval, the samples' own range by default.

    Raises:
        InvalidBoundsError: If the samples are constant and no bounds are given.
        DegenerateInputError: If the rescaled samples are perfectly predictable.
        InstabilityError: If no order gives a stable model.
    """
    config = config or EntropyConfig()
    samples = np.asarray(samples, dtype=float).reshape(-1)
    x = rescale(samples, bounds or RescaleBounds.from_samples(samples))
    order = select_order_eef(x, order_limit(x.size, config), config.order_criterion)
    model = fit_stable(x, order)
    return model, entropy(model, x, config.grid_size)


def _link_bounds(amplitudes: np.ndarray) -> RescaleBounds | None:
    lo, hi = float(amplitudes.min()), float(amplitudes.max())
    return RescaleBounds(lo, hi) if hi > lo else None


def fingerprint_with_diagnostics(
    trace: CsiTrace, config: EntropyConfig | None = None
) -> tuple[EntropyFingerprint, list[StreamDiagnostics]]:
    """Entropy fingerprint plus one diagnostics row per stream."""
    config = config or EntropyConfig()
    trace.require_packets(config.n_packets)
    amplitude = np.abs(trace.tensor()[: config.n_packets])  # (N, rx, tx, sub)
    n_rx, n_tx, n_sub = trace.config.shape
    link_bounds = _link_bounds(amplitude) if config.rescale == "global" else None

    values, index, flagged, rows = [], [], [], []
    for tx in range(n_tx):
        for rx in range(n_rx):
            for sub in range(1, n_sub - 1):
                samples = amplitude[:, rx, tx, sub]
                position = len(values)
                bounds = link_bounds if config.rescale == "global" else _link_bounds(samples)
                order, sigma2, value, cepstral = 0, 0.0, 0.0, 0.0
                if bounds is None or np.ptp(samples) == 0:
                    flagged.append(position)
                else:
                    try:
                        model, estimate = stream_entropy(samples, config, bounds)
                    except (DegenerateInputError, InstabilityError):
                        flagged.append(position)
                    else:
                        order, sigma2, value = model.order, model.sigma2, estimate.value
                        cepstral = estimate.cepstral
                values.append(value)
                index.append((tx, rx, sub))
                rows.append(
                    StreamDiagnostics(
                        position, tx, rx, sub, order, sigma2, value, cepstral, position in flagged
                    )
                )
    if flagged:
        logger.warning(
            f"{len(flagged)} constant or unstable amplitude streams in {trace.source_id!r} set to the bound 0"
        )
    return EntropyFingerprint(values=values, stream_index=index, flagged=flagged), rows


def fingerprint(
    trace: CsiTrace, n_packets: int | None = None, config: EntropyConfig | None = None
) -> EntropyFingerprint:
    """Entropy fingerprint of the first ``n_packets`` packets, endpoint subcarriers dropped.

    The vector has n_tx * n_rx * (n_sub - 2) entries ordered by (tx, rx, subcarrier).

    Raises:
        PreconditionError: If the trace has fewer than ``n_packets`` packets.
    """
    config = config or EntropyConfig()
    if n_packets is not None:
        config = config.model_copy(update={"n_packets": n_packets})
    fp, _ = fingerprint_with_diagnostics(trace, config)
    return fp

"""Localization and AoA accuracy reports, plus the micro-benchmark studies.

Studies return lists of flat row dicts with a fixed column order so the
command line can write them straight to CSV.
"""

import logging
from collections.abc import Iterable, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .aoa import analyze, peak_sharpness_db
from .calibration import calibrate
from .classes.channel import ImpairmentSpec, PathComponent
from .classes.radio import RadioConfig
from .classes.radio_map import MatchParams, RadioMap, SurveyPoint
from .config import AnglocSettings, AoaConfig, EntropyConfig, SmoothingConfig
from .data.scene import SimulatedSurvey
from .entropy import stream_entropy
from .errors import (
    DegenerateInputError,
    InstabilityError,
    InvalidBoundsError,
    InvalidConfigError,
    InvalidInputError,
)
from .locator import LinkFingerprints, fingerprint_traces, locate_fingerprints
from .simulator import ground_truth, synth_trace

logger = logging.getLogger(__name__)

ENTROPY_PACKET_COUNTS = (10, 20, 50, 100, 200, 500, 1000, 2000, 5000)
AOA_PACKET_COUNTS = (5, 10, 15, 40)
SMOOTHING_SUBARRAYS = (15, 8, 4)  # smoothing lengths 30, 16, 8

# Static line-of-sight benchmark: direct path plus two weaker reflections.
LOS_BENCHMARK = (
    PathComponent(alpha=1.0, phi=0.0, tau=20e-9, theta=20.0),
    PathComponent(alpha=0.5, phi=1.1, tau=80e-9, theta=-35.0),
    PathComponent(alpha=0.35, phi=2.3, tau=150e-9, theta=55.0),
)
# A peak within these offsets of the direct path counts as the true peak.
TRUE_PEAK_THETA = 5.0
TRUE_PEAK_TAU = 20e-9


def _cdf(errors: np.ndarray) -> list[tuple[float, float]]:
    ordered = np.sort(errors)
    fractions = np.arange(1, ordered.size + 1) / ordered.size
    return [(float(e), float(f)) for e, f in zip(ordered, fractions, strict=True)]


class EvalReport(BaseModel):
    """Localization error statistics of one run, errors in meters."""

    label: str = "angloc"
    errors: list[float] = Field(..., min_length=1)
    mean_error: float
    min_error: float
    p50: float
    p90: float
    max_error: float
    cdf: list[tuple[float, float]]
    seed: int | None = None
    config_hash: str | None = None

    @model_validator(mode="after")
    def _check_report(self) -> "EvalReport":
        if abs(self.mean_error - float(np.mean(self.errors))) > 1e-9:
            raise ValueError("Mean error must be the mean of the errors")
        if self.cdf and self.cdf[-1][1] != 1.0:
            raise ValueError("CDF must end at 1")
        return self

    @classmethod
    def from_errors(
        cls,
        errors: Iterable[float],
        label: str = "angloc",
        seed: int | None = None,
        config_hash: str | None = None,
    ) -> "EvalReport":
        e = np.asarray(list(errors), dtype=float)
        if e.size == 0:
            raise InvalidInputError("No errors to summarize")
        return cls(
            label=label,
            errors=e.tolist(),
            mean_error=float(e.mean()),
            min_error=float(e.min()),
            p50=float(np.percentile(e, 50)),
            p90=float(np.percentile(e, 90)),
            max_error=float(e.max()),
            cdf=_cdf(e),
            seed=seed,
            config_hash=config_hash,
        )

    def summary(self) -> dict[str, float | str]:
        return {
            "label": self.label,
            "n_points": len(self.errors),
            "mean_error": self.mean_error,
            "min_error": self.min_error,
            "p50": self.p50,
            "p90": self.p90,
            "max_error": self.max_error,
        }


def localization_errors(estimates, truths) -> np.ndarray:
    est = np.asarray(estimates, dtype=float).reshape(-1, 2)
    tru = np.asarray(truths, dtype=float).reshape(-1, 2)
    if est.shape != tru.shape:
        raise InvalidInputError(f"{len(est)} estimates for {len(tru)} true locations")
    return np.linalg.norm(est - tru, axis=1)


def fingerprint_tests(
    tests: Sequence[SurveyPoint], radio_map: RadioMap, settings: AnglocSettings
) -> list[LinkFingerprints]:
    return [fingerprint_traces(t.traces, settings, radio_map.ap_ids) for t in tests]


def evaluate_fingerprints(
    online: Sequence[LinkFingerprints],
    truths: Sequence[tuple[float, float]],
    radio_map: RadioMap,
    params: MatchParams | None = None,
    label: str = "angloc",
    seed: int | None = None,
    config_hash: str | None = None,
) -> EvalReport:
    estimates = [locate_fingerprints(fps, radio_map, params).location for fps in online]
    return EvalReport.from_errors(
        localization_errors(estimates, truths), label, seed, config_hash
    )


def evaluate(
    radio_map: RadioMap,
    tests: Sequence[SurveyPoint],
    settings: AnglocSettings | None = None,
    params: MatchParams | None = None,
    baseline: bool = False,
    seed: int | None = None,
) -> list[EvalReport]:
    """Locate every test survey and summarize the errors.

    With ``baseline`` a second, entropy-only report (``w_a = 0``) is computed
    from the same fingerprints.
    """
    settings = settings or AnglocSettings()
    params = params or radio_map.params
    online = fingerprint_tests(tests, radio_map, settings)
    truths = [t.location for t in tests]
    config_hash = settings.fingerprint()
    reports = [evaluate_fingerprints(online, truths, radio_map, params, "angloc", seed, config_hash)]
    if baseline:
        reports.append(
            evaluate_fingerprints(
                online, truths, radio_map, params.entropy_only(), "entropy-only", seed, config_hash
            )
        )
    for report in reports:
        logger.info(
            f"{report.label}: mean error {report.mean_error:.2f} m, 90th {report.p90:.2f} m "
            f"over {len(report.errors)} points"
        )
    return reports


class AoaAccuracy(BaseModel):
    """Absolute AoA errors in degrees."""

    errors: list[float] = Field(..., min_length=1)
    mean_error: float
    median_error: float
    p90: float
    max_error: float
    cdf: list[tuple[float, float]]


def aoa_accuracy(estimates, truths) -> AoaAccuracy:
    est = np.asarray(estimates, dtype=float).reshape(-1)
    tru = np.asarray(truths, dtype=float).reshape(-1)
    if est.shape != tru.shape or est.size == 0:
        raise InvalidInputError(f"{est.size} AoA estimates for {tru.size} true angles")
    e = np.abs(est - tru)
    return AoaAccuracy(
        errors=e.tolist(),
        mean_error=float(e.mean()),
        median_error=float(np.median(e)),
        p90=float(np.percentile(e, 90)),
        max_error=float(e.max()),
        cdf=_cdf(e),
    )


def aoa_accuracy_study(survey: SimulatedSurvey, settings: AnglocSettings | None = None) -> AoaAccuracy:
    """First-arrival AoA error at every reference point and AP of a simulated scene."""
    settings = settings or AnglocSettings()
    ap_ids = survey.scene.access_points()
    estimates, truths = [], []
    for rp, point in zip(survey.rps, survey.rp_points, strict=True):
        for ap_id, channel in zip(ap_ids, point.channels, strict=True):
            calibrated, _ = calibrate(rp.traces[ap_id], settings.calibration)
            estimates.append(analyze(calibrated, settings.aoa).fingerprint.theta)
            truths.append(ground_truth(channel)[0])
    result = aoa_accuracy(estimates, truths)
    logger.info(f"AoA error over {len(truths)} links: mean {result.mean_error:.2f} deg")
    return result


def entropy_packets_study(
    packet_counts: Sequence[int] = ENTROPY_PACKET_COUNTS,
    seeds: Iterable[int] = range(20),
    snr_db: float = 15.0,
    radio: RadioConfig | None = None,
    config: EntropyConfig | None = None,
) -> list[dict]:
    """Spread of one stream's entropy estimate across seeds versus packet count.

    Every seed draws one long trace of the static benchmark channel; each
    packet count uses its first ``n`` packets.
    """
    radio = radio or RadioConfig()
    config = config or EntropyConfig()
    counts = sorted(packet_counts)
    sub = radio.n_sub // 2
    values = {n: [] for n in counts}
    for seed in seeds:
        trace = synth_trace(LOS_BENCHMARK, radio, ImpairmentSpec(snr_db=snr_db), counts[-1], seed)
        amplitude = np.abs(trace.tensor()[:, 0, 0, sub])
        for n in counts:
            try:
                _, estimate = stream_entropy(amplitude[:n], config)
            except (DegenerateInputError, InstabilityError, InvalidBoundsError):
                continue
            values[n].append(estimate.value)
    rows = []
    for n in counts:
        v = np.asarray(values[n])
        rows.append(
            {
                "n_packets": n,
                "n_seeds": int(v.size),
                "mean_entropy": float(v.mean()) if v.size else float("nan"),
                "variance": float(v.var()) if v.size else float("nan"),
                "std": float(v.std()) if v.size else float("nan"),
            }
        )
    return rows


def aoa_packets_study(
    packet_counts: Sequence[int] = AOA_PACKET_COUNTS,
    seeds: Iterable[int] = range(20),
    snr_db: float = 15.0,
    radio: RadioConfig | None = None,
    aoa_config: AoaConfig | None = None,
) -> list[dict]:
    """Single-path AoA error versus packets used for multi-packet smoothing."""
    radio = radio or RadioConfig()
    aoa_config = aoa_config or AoaConfig()
    counts = sorted(packet_counts)
    errors = {n: [] for n in counts}
    impairments = ImpairmentSpec(snr_db=snr_db, cfo_jitter=0.5)
    for seed in seeds:
        rng = np.random.default_rng(seed)
        path = PathComponent(
            alpha=1.0,
            phi=float(rng.uniform(0, 2 * np.pi)),
            tau=float(rng.uniform(0, 100e-9)),
            theta=float(rng.uniform(-60, 60)),
        )
        trace = synth_trace([path], radio, impairments, counts[-1], [seed, 1])
        for n in counts:
            smoothing = aoa_config.smoothing.model_copy(update={"n_packets": n})
            config = aoa_config.model_copy(update={"smoothing": smoothing, "n_sources": 1})
            theta = analyze(trace.head(n), config).fingerprint.theta
            errors[n].append(abs(theta - path.theta))
    return [
        {
            "n_packets": n,
            "n_seeds": len(errors[n]),
            "mean_error_deg": float(np.mean(errors[n])),
            "median_error_deg": float(np.median(errors[n])),
        }
        for n in counts
    ]


def _nearest_true_peak(peaks, theta: float, tau: float):
    close = [
        p for p in peaks if abs(p[0] - theta) <= TRUE_PEAK_THETA and abs(p[1] - tau) <= TRUE_PEAK_TAU
    ]
    return max(close, key=lambda p: p[2]) if close else None


def smoothing_sweep(
    k_subs: Sequence[int] = SMOOTHING_SUBARRAYS,
    seeds: Iterable[int] = range(20),
    snr_db: float = 15.0,
    radio: RadioConfig | None = None,
    aoa_config: AoaConfig | None = None,
) -> list[dict]:
    """Peak sharpness of the direct path versus smoothing length on the LoS benchmark.

    Smoothing length is the subarray dimension 2 K'. Sharpness is the
    direct-path peak over the spectrum median in dB; ``true_peak_rate`` is
    the share of seeds where that peak is among the L strongest, with L the
    benchmark's true path count. ``meets_path_budget`` tells whether the
    length exceeds the configured expected path count; lengths that do not
    are still analyzed so their spectra can be compared.
    """
    radio = radio or RadioConfig()
    aoa_config = aoa_config or AoaConfig()
    theta0, tau0 = ground_truth(LOS_BENCHMARK)
    n_paths = len(LOS_BENCHMARK)
    budget = aoa_config.smoothing.expected_paths
    seeds = list(seeds)
    traces = [
        synth_trace(LOS_BENCHMARK, radio, ImpairmentSpec(snr_db=snr_db), aoa_config.smoothing.n_packets, seed)
        for seed in seeds
    ]
    rows = []
    for k_sub in k_subs:
        if k_sub * aoa_config.smoothing.nr_sub <= n_paths:
            raise InvalidConfigError(
                f"Smoothing length {k_sub * aoa_config.smoothing.nr_sub} cannot hold {n_paths} paths"
            )
        smoothing = SmoothingConfig(
            k_sub=k_sub,
            use_backward=aoa_config.smoothing.use_backward,
            n_packets=aoa_config.smoothing.n_packets,
            expected_paths=n_paths,
        )
        config = aoa_config.model_copy(update={"smoothing": smoothing, "n_sources": n_paths})
        sharpness, found = [], 0
        for trace in traces:
            result = analyze(trace, config)
            peak = _nearest_true_peak(result.peaks, theta0, tau0)
            if peak is not None:
                found += 1
                sharpness.append(peak_sharpness_db(result.spectrum, peak))
        rows.append(
            {
                "smoothing_length": smoothing.dimension,
                "k_sub": k_sub,
                "n_seeds": len(traces),
                "meets_path_budget": smoothing.dimension > budget,
                "true_peak_rate": found / len(traces),
                "mean_sharpness_db": float(np.mean(sharpness)) if sharpness else float("nan"),
            }
        )
        if smoothing.dimension <= budget:
            logger.info(
                f"Smoothing length {smoothing.dimension} does not exceed the expected path count {budget}"
            )
        logger.debug(f"Smoothing length {smoothing.dimension}: true peak in {found}/{len(traces)} seeds")
    return rows


def mc_sweep(
    radio_map: RadioMap,
    online: Sequence[LinkFingerprints],
    truths: Sequence[tuple[float, float]],
    params: MatchParams | None = None,
    m_c_max: int = 20,
) -> list[dict]:
    """Mean localization error versus candidate count, other parameters fixed."""
    params = params or radio_map.params
    rows = []
    for m_c in range(1, min(m_c_max, len(radio_map)) + 1):
        report = evaluate_fingerprints(
            online, truths, radio_map, params.model_copy(update={"m_c": m_c})
        )
        rows.append({"m_c": m_c, "mean_error": report.mean_error, "p90": report.p90})
    return rows


"""Radio map construction and online location estimation.

Offline, every reference point (RP) survey is calibrated and turned into an
entropy fingerprint and a first-arrival AoA-ToF fingerprint per access point.
Online, the ``m_c`` RPs closest in entropy are kept as candidates and their
locations are averaged with the bivariate kernel

    K_m = w_e exp(-rho_e D_m) + w_a exp(-rho_a A_m)

where D_m is the Manhattan entropy distance and A_m the Euclidean AoA-ToF
distance.
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import __version__
from .aoa import aoa_fingerprint
from .calibration import calibrate, calibrate_amplitude
from .classes.fingerprints import AoaTofFingerprint, EntropyFingerprint
from .classes.radio import CsiTrace, RadioConfig
from .classes.radio_map import (
    CandidateScore,
    LocationEstimate,
    MatchParams,
    RadioMap,
    RpEntry,
    SurveyPoint,
)
from .config import AnglocSettings, TuningConfig
from .entropy import fingerprint as entropy_fingerprint
from .errors import IncompleteSurveyError, InvalidInputError, PreconditionError

logger = logging.getLogger(__name__)

# Grid objectives closer than this are treated as equal when tuning.
OBJECTIVE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class LinkFingerprints:
    """Both fingerprints of one set of per-AP traces."""

    entropy: dict[str, EntropyFingerprint] = field(default_factory=dict)
    aoa: dict[str, AoaTofFingerprint] = field(default_factory=dict)


def fingerprint_link(trace: CsiTrace, settings: AnglocSettings) -> tuple[EntropyFingerprint, AoaTofFingerprint]:
    """Calibrate one AP trace and extract its entropy and AoA-ToF fingerprints.

    The entropy branch keeps every packet (no CFO merging); the AoA branch
    runs the full calibration.
    """
    amplitude, _ = calibrate_amplitude(trace, settings.calibration)
    entropy_fp = entropy_fingerprint(amplitude, config=settings.entropy)
    calibrated, _ = calibrate(trace, settings.calibration)
    aoa_fp = aoa_fingerprint(calibrated, settings.aoa)
    return entropy_fp, aoa_fp


def fingerprint_traces(
    traces: Mapping[str, CsiTrace], settings: AnglocSettings, ap_ids: Sequence[str] | None = None
) -> LinkFingerprints:
    fps = LinkFingerprints()
    for ap_id in ap_ids or sorted(traces):
        if ap_id not in traces:
            raise InvalidInputError(f"No online trace for access point {ap_id!r}")
        fps.entropy[ap_id], fps.aoa[ap_id] = fingerprint_link(traces[ap_id], settings)
    return fps


def _survey_ap_ids(surveys: Sequence[SurveyPoint]) -> list[str]:
    if not surveys:
        raise InvalidInputError("A radio map needs at least one reference point")
    ap_ids = sorted({ap for survey in surveys for ap in survey.traces})
    if not ap_ids:
        raise InvalidInputError("Surveys hold no traces")
    for survey in surveys:
        for ap_id in ap_ids:
            if ap_id not in survey.traces:
                raise IncompleteSurveyError(survey.rp_id, ap_id)
    return ap_ids


def _survey_radio(surveys: Sequence[SurveyPoint]) -> RadioConfig:
    radios = {trace.config for survey in surveys for trace in survey.traces.values()}
    if len(radios) != 1:
        raise InvalidInputError(f"Surveys mix {len(radios)} radio configurations")
    return radios.pop()


def build_radio_map(
    surveys: Sequence[SurveyPoint],
    settings: AnglocSettings | None = None,
    provenance: dict[str, Any] | None = None,
) -> RadioMap:
    """Fingerprint every RP survey into a radio map.

    Raises:
        IncompleteSurveyError: If an RP lacks a trace for one of the APs.
        PreconditionError: If a trace is too short for calibration or fingerprinting.
    """
    settings = settings or AnglocSettings()
    ap_ids = _survey_ap_ids(surveys)
    radio = _survey_radio(surveys)
    entries = []
    for survey in surveys:
        fps = fingerprint_traces(survey.traces, settings, ap_ids)
        entries.append(
            RpEntry(id=survey.rp_id, location=survey.location, entropy=fps.entropy, aoa=fps.aoa)
        )
        logger.debug(f"Fingerprinted reference point {survey.rp_id!r}")
    logger.info(f"Built radio map with {len(entries)} reference points and APs {ap_ids}")
    return RadioMap(
        radio=radio,
        ap_ids=ap_ids,
        entries=entries,
        params=settings.match,
        provenance={"version": __version__, "config_hash": settings.fingerprint(), **(provenance or {})},
    )


def _check_online(entry: RpEntry, online: Mapping[str, Any]) -> None:
    missing = set(entry.entropy) - set(online)
    if missing:
        raise InvalidInputError(f"Online fingerprints lack access points {sorted(missing)}")


def entropy_distance(entry: RpEntry, online: Mapping[str, EntropyFingerprint]) -> float:
    """Manhattan distance summed over every AP and stream."""
    _check_online(entry, online)
    total = 0.0
    for ap_id, offline in entry.entropy.items():
        a, b = offline.as_array(), online[ap_id].as_array()
        if a.shape != b.shape:
            raise InvalidInputError(
                f"Entropy fingerprints for {ap_id!r} differ in length: {a.size} vs {b.size}"
            )
        total += float(np.abs(a - b).sum())
    return total


def aoa_distance(
    entry: RpEntry, online: Mapping[str, AoaTofFingerprint], tau_scale: float = 1e9
) -> float:
    """Euclidean distance over (theta in degrees, tau_scale * tau) of every AP."""
    _check_online(entry, online)
    total = 0.0
    for ap_id, offline in entry.aoa.items():
        d_theta = offline.theta - online[ap_id].theta
        d_tau = tau_scale * (offline.tau - online[ap_id].tau)
        total += d_theta**2 + d_tau**2
    return float(np.sqrt(total))


def _clamp_candidates(m_c: int, m: int) -> int:
    if m_c > m:
        logger.warning(f"Candidate count {m_c} exceeds the {m} reference points, using {m}")
        return m
    return m_c


def select_candidates(
    radio_map: RadioMap, online: LinkFingerprints, m_c: int | None = None
) -> list[tuple[RpEntry, float]]:
    """The ``m_c`` entries with the smallest entropy distance, ties broken by RP id."""
    m_c = _clamp_candidates(m_c or radio_map.params.m_c, len(radio_map))
    scored = [(entropy_distance(entry, online.entropy), entry.id, entry) for entry in radio_map.entries]
    scored.sort(key=lambda s: (s[0], s[1]))
    return [(entry, distance) for distance, _, entry in scored[:m_c]]


def _log_kernel(d_e, d_a, params: MatchParams):
    with np.errstate(divide="ignore"):
        return np.logaddexp(
            np.log(params.w_e) - params.rho_e * np.asarray(d_e, dtype=float),
            np.log(params.w_a) - params.rho_a * np.asarray(d_a, dtype=float),
        )


def kernel(entropy_dist: float, aoa_dist: float, params: MatchParams) -> float:
    """Bivariate kernel value in (0, 1]; exactly 1 when both distances are 0."""
    return float(
        params.w_e * np.exp(-params.rho_e * entropy_dist)
        + params.w_a * np.exp(-params.rho_a * aoa_dist)
    )


def kernel_regress(
    candidates: Sequence[tuple[RpEntry, float]], online: LinkFingerprints, params: MatchParams
) -> LocationEstimate:
    """Kernel-weighted centroid of the candidate locations.

    Weights are normalized in the log domain so that very distant candidates
    cannot underflow every kernel to zero.

    Raises:
        InvalidInputError: If there are no candidates.
    """
    if not candidates:
        raise InvalidInputError("Kernel regression needs at least one candidate")
    d_e = np.array([d for _, d in candidates])
    d_a = np.array([aoa_distance(entry, online.aoa, params.tau_scale) for entry, _ in candidates])
    log_k = _log_kernel(d_e, d_a, params)
    weights = np.exp(log_k - log_k.max())
    locations = np.array([entry.location for entry, _ in candidates], dtype=float)
    x, y = weights @ locations / weights.sum()
    scores = [
        CandidateScore(
            rp_id=entry.id,
            location=entry.location,
            entropy_distance=float(de),
            aoa_distance=float(da),
            kernel=kernel(float(de), float(da), params),
        )
        for (entry, _), de, da in zip(candidates, d_e, d_a, strict=True)
    ]
    return LocationEstimate(x=float(x), y=float(y), candidates=scores)


def locate_fingerprints(
    online: LinkFingerprints, radio_map: RadioMap, params: MatchParams | None = None
) -> LocationEstimate:
    params = params or radio_map.params
    return kernel_regress(select_candidates(radio_map, online, params.m_c), online, params)


def locate(
    online_traces: Mapping[str, CsiTrace],
    radio_map: RadioMap,
    settings: AnglocSettings | None = None,
    params: MatchParams | None = None,
) -> LocationEstimate:
    """Estimate the location of one set of per-AP online traces.

    Args:
        online_traces: Raw traces keyed by AP id; every AP of the map is required.
        radio_map: Offline radio map.
        settings: Calibration and fingerprint settings, defaults otherwise.
        params: Matching parameters, the map's tuned parameters by default.
    """
    settings = settings or AnglocSettings()
    for ap_id, trace in online_traces.items():
        if trace.config.shape != radio_map.radio.shape:
            raise InvalidInputError(
                f"Online trace for {ap_id!r} has shape {trace.config.shape}, "
                f"radio map expects {radio_map.radio.shape}"
            )
    online = fingerprint_traces(online_traces, settings, radio_map.ap_ids)
    estimate = locate_fingerprints(online, radio_map, params)
    logger.debug(f"Located at ({estimate.x:.2f}, {estimate.y:.2f}) from {len(estimate.candidates)} candidates")
    return estimate


@dataclass(frozen=True)
class TuningResult:
    params: MatchParams
    mean_error: float
    evaluated: int


def split_survey(survey: SurveyPoint, share: float) -> tuple[SurveyPoint, SurveyPoint]:
    """Split each trace into a map window and a held-out window."""
    first, second = {}, {}
    for ap_id, trace in survey.traces.items():
        n = int(round(len(trace) * share))
        if n < 1 or n >= len(trace):
            raise PreconditionError(
                f"Trace {ap_id!r} at {survey.rp_id!r} has {len(trace)} packets, too few to split"
            )
        first[ap_id], second[ap_id] = trace.head(n), trace.tail(n)
    return (
        SurveyPoint(survey.rp_id, survey.location, first),
        SurveyPoint(survey.rp_id, survey.location, second),
    )


def _distance_matrices(
    held_out: Sequence[LinkFingerprints], radio_map: RadioMap, tau_scale: float
) -> tuple[np.ndarray, np.ndarray]:
    m = len(radio_map)
    d_e = np.zeros((len(held_out), m))
    d_a = np.zeros((len(held_out), m))
    for i, online in enumerate(held_out):
        for j, entry in enumerate(radio_map.entries):
            d_e[i, j] = entropy_distance(entry, online.entropy)
            d_a[i, j] = aoa_distance(entry, online.aoa, tau_scale)
    return d_e, d_a


def _candidate_order(d_e: np.ndarray, ids: Sequence[str]) -> np.ndarray:
    """Per held-out RP, the other RPs by entropy distance then id."""
    m = d_e.shape[0]
    id_rank = np.argsort(np.argsort(np.array(ids), kind="stable"), kind="stable")
    order = np.empty((m, m - 1), dtype=int)
    for i in range(m):
        others = np.delete(np.arange(m), i)
        order[i] = others[np.lexsort((id_rank[others], d_e[i, others]))]
    return order


def loocv_tune(
    surveys: Sequence[SurveyPoint],
    settings: AnglocSettings | None = None,
    tuning: TuningConfig | None = None,
) -> TuningResult:
    """Grid-search the matching parameters by leave-one-out cross-validation.

    Each RP survey is split into a map window and a pseudo-online window.
    Every RP is held out in turn and located from the other RPs' map
    fingerprints using its own pseudo-online fingerprints; the objective is
    the mean error. Ties go to the smaller ``m_c``, then the larger ``w_e``,
    then the smaller ``rho_e`` and ``rho_a``.

    Raises:
        PreconditionError: With fewer than two RPs or traces too short to split.
    """
    settings = settings or AnglocSettings()
    tuning = tuning or settings.tuning
    if len(surveys) < 2:
        raise PreconditionError("Leave-one-out tuning needs at least two reference points")
    halves = [split_survey(s, tuning.split) for s in surveys]
    radio_map = build_radio_map([h[0] for h in halves], settings)
    held_out = [fingerprint_traces(h[1].traces, settings, radio_map.ap_ids) for h in halves]

    tau_scale = settings.match.tau_scale
    d_e, d_a = _distance_matrices(held_out, radio_map, tau_scale)
    locations = radio_map.locations()
    order = _candidate_order(d_e, [e.id for e in radio_map.entries])
    rows = np.arange(len(locations))[:, None]

    rho = tuning.rho_grid()
    m_c_max = min(tuning.m_c_max, len(locations) - 1)
    best: tuple[float, MatchParams] | None = None
    evaluated = 0
    for m_c in range(1, m_c_max + 1):
        idx = order[:, :m_c]
        de, da = d_e[rows, idx], d_a[rows, idx]
        cand = locations[idx]  # (M, m_c, 2)
        exp_e = -rho[:, None, None] * de[None]  # (R, M, m_c)
        exp_a = -rho[:, None, None] * da[None]
        for w_a in tuning.w_a_grid():
            w_e = round(1.0 - w_a, 10)
            with np.errstate(divide="ignore"):
                log_k = np.logaddexp(
                    np.log(w_e) + exp_e[:, None], np.log(w_a) + exp_a[None, :]
                )  # (R_e, R_a, M, m_c)
            weights = np.exp(log_k - log_k.max(axis=-1, keepdims=True))
            estimate = np.einsum("abmc,mcx->abmx", weights, cand) / weights.sum(axis=-1)[..., None]
            errors = np.linalg.norm(estimate - locations[None, None], axis=-1).mean(axis=-1)
            evaluated += errors.size
            for i_e, i_a in np.ndindex(errors.shape):
                score = float(errors[i_e, i_a])
                if best is None or score < best[0] - OBJECTIVE_TOLERANCE:
                    params = settings.match.model_copy(
                        update={
                            "m_c": m_c,
                            "w_a": float(w_a),
                            "w_e": float(w_e),
                            "rho_e": float(rho[i_e]),
                            "rho_a": float(rho[i_a]),
                        }
                    )
                    best = (score, params)
    mean_error, params = best
    logger.info(
        f"Tuned over {evaluated} grid points: m_c={params.m_c} w_a={params.w_a:.2f} "
        f"rho_e={params.rho_e:.2f} rho_a={params.rho_a:.2f} mean error {mean_error:.3f} m"
    )
    return TuningResult(MatchParams(**params.model_dump()), mean_error, evaluated)

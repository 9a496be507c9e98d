import logging

import numpy as np
import pytest

from angloc.classes.fingerprints import AoaTofFingerprint, EntropyFingerprint
from angloc.classes.radio import RadioConfig
from angloc.classes.radio_map import MatchParams, RadioMap, RpEntry, SurveyPoint
from angloc.config import AnglocSettings, TuningConfig
from angloc.data.scene import simulate_scene
from angloc.errors import IncompleteSurveyError, InvalidInputError, PreconditionError
from angloc.locator import (
    LinkFingerprints,
    aoa_distance,
    build_radio_map,
    entropy_distance,
    kernel,
    kernel_regress,
    locate,
    locate_fingerprints,
    loocv_tune,
    select_candidates,
    split_survey,
)

from .test_utils import single_path_trace, small_scene

STREAMS = [(0, 0, k) for k in range(1, 85)]


def _entropy(values) -> EntropyFingerprint:
    values = list(values)
    return EntropyFingerprint(values=values, stream_index=STREAMS[: len(values)])


def _entry(rp_id, location, entropy=None, aoa=(0.0, 0.0), ap_ids=("ap1",)) -> RpEntry:
    entropy = np.full(84, -0.5) if entropy is None else entropy
    return RpEntry(
        id=rp_id,
        location=location,
        entropy={ap: _entropy(entropy) for ap in ap_ids},
        aoa={ap: AoaTofFingerprint(theta=aoa[0], tau=aoa[1]) for ap in ap_ids},
    )


def _online(entropy=None, aoa=(0.0, 0.0), ap_ids=("ap1",)) -> LinkFingerprints:
    entropy = np.full(84, -0.5) if entropy is None else entropy
    return LinkFingerprints(
        entropy={ap: _entropy(entropy) for ap in ap_ids},
        aoa={ap: AoaTofFingerprint(theta=aoa[0], tau=aoa[1]) for ap in ap_ids},
    )


def _map(entries, params=None) -> RadioMap:
    return RadioMap(
        radio=RadioConfig(),
        ap_ids=sorted(entries[0].entropy),
        entries=entries,
        params=params or MatchParams(),
    )


# ============================================================================
# DISTANCES
# ============================================================================


def test_entropy_distance_is_manhattan():
    entry = _entry("rp0", (0.0, 0.0))
    assert entropy_distance(entry, _online().entropy) == 0.0
    online = _online(entropy=np.full(84, -0.6))
    assert entropy_distance(entry, online.entropy) == pytest.approx(8.4)


def test_entropy_distance_adds_over_access_points():
    entry = _entry("rp0", (0.0, 0.0), ap_ids=("ap1", "ap2"))
    online = _online(entropy=np.full(84, -0.6), ap_ids=("ap1", "ap2"))
    assert entropy_distance(entry, online.entropy) == pytest.approx(16.8)


def test_entropy_distance_rejects_missing_ap_and_length_mismatch():
    entry = _entry("rp0", (0.0, 0.0), ap_ids=("ap1", "ap2"))
    with pytest.raises(InvalidInputError):
        entropy_distance(entry, _online().entropy)
    with pytest.raises(InvalidInputError):
        entropy_distance(_entry("rp0", (0.0, 0.0)), _online(entropy=np.full(10, -0.5)).entropy)


def test_aoa_distance_three_four_five():
    entry = _entry("rp0", (0.0, 0.0), aoa=(10.0, 20e-9))
    online = _online(aoa=(13.0, 24e-9))
    assert aoa_distance(entry, online.aoa) == pytest.approx(5.0)
    assert aoa_distance(entry, online.aoa, tau_scale=0.0) == pytest.approx(3.0)
    assert aoa_distance(entry, _online(aoa=(10.0, 20e-9)).aoa) == 0.0


def test_distances_are_metrics():
    rng = np.random.default_rng(0)
    for _ in range(50):
        e = [rng.uniform(-1.0, 0.0, 84) for _ in range(3)]
        a = [(rng.uniform(-90, 90), rng.uniform(0, 100e-9)) for _ in range(3)]
        entries = [_entry(f"rp{i}", (0.0, 0.0), e[i], a[i]) for i in range(3)]
        onlines = [_online(e[i], a[i]) for i in range(3)]

        def d_e(i, j):
            return entropy_distance(entries[i], onlines[j].entropy)

        def d_a(i, j):
            return aoa_distance(entries[i], onlines[j].aoa)

        for d in (d_e, d_a):
            assert d(0, 1) == pytest.approx(d(1, 0))
            assert d(0, 1) > 0
            assert d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9


# ============================================================================
# CANDIDATES AND KERNEL
# ============================================================================


def test_select_all_or_nearest_candidate():
    entries = [
        _entry("rp1", (1.0, 0.0), np.full(84, -0.4)),
        _entry("rp0", (0.0, 0.0), np.full(84, -0.5)),
        _entry("rp2", (2.0, 0.0), np.full(84, -0.9)),
    ]
    radio_map = _map(entries)
    online = _online()
    assert [e.id for e, _ in select_candidates(radio_map, online, 3)] == ["rp0", "rp1", "rp2"]
    [(nearest, distance)] = select_candidates(radio_map, online, 1)
    assert nearest.id == "rp0"
    assert distance == 0.0


def test_candidate_ties_broken_by_id():
    entries = [_entry(f"rp{i}", (float(i), 0.0)) for i in (3, 1, 2)]
    chosen = select_candidates(_map(entries), _online(), 2)
    assert [e.id for e, _ in chosen] == ["rp1", "rp2"]


def test_candidate_count_is_clamped(caplog):
    radio_map = _map([_entry("rp0", (0.0, 0.0)), _entry("rp1", (1.0, 0.0))])
    with caplog.at_level(logging.WARNING):
        chosen = select_candidates(radio_map, _online(), 12)
    assert len(chosen) == 2
    assert "exceeds" in caplog.text


def test_kernel_is_one_at_zero_distance():
    assert kernel(0.0, 0.0, MatchParams(w_a=0.25, w_e=0.75)) == 1.0
    assert kernel(0.0, 0.0, MatchParams()) == pytest.approx(1.0, abs=1e-15)


def test_kernel_range():
    rng = np.random.default_rng(1)
    params = MatchParams()
    for d_e, d_a in rng.uniform(0.0, 50.0, (100, 2)):
        assert 0.0 < kernel(d_e, d_a, params) < 1.0


def test_single_candidate_returns_its_location():
    entry = _entry("rp0", (3.0, 4.0), aoa=(30.0, 0.0))
    estimate = kernel_regress([(entry, 7.0)], _online(), MatchParams())
    assert estimate.location == (3.0, 4.0)
    assert estimate.candidates[0].entropy_distance == 7.0
    assert estimate.candidates[0].aoa_distance == pytest.approx(30.0)


def test_equal_kernels_give_midpoint():
    candidates = [(_entry("a", (0.0, 0.0)), 1.0), (_entry("b", (2.0, 0.0)), 1.0)]
    estimate = kernel_regress(candidates, _online(), MatchParams())
    assert estimate.location == pytest.approx((1.0, 0.0))


def test_no_candidates():
    with pytest.raises(InvalidInputError):
        kernel_regress([], _online(), MatchParams())


def test_farther_entropy_never_pulls_estimate_closer():
    entries = [_entry("a", (0.0, 0.0)), _entry("b", (4.0, 0.0)), _entry("c", (0.0, 4.0))]
    params = MatchParams()
    base = kernel_regress(list(zip(entries, (1.0, 2.0, 3.0), strict=True)), _online(), params)
    moved = kernel_regress(list(zip(entries, (1.0, 6.0, 3.0), strict=True)), _online(), params)
    target = np.array([4.0, 0.0])
    assert np.linalg.norm(np.array(moved.location) - target) > np.linalg.norm(
        np.array(base.location) - target
    )
    assert moved.candidates[1].kernel < base.candidates[1].kernel


def test_estimate_stays_inside_candidate_hull():
    rng = np.random.default_rng(2)
    entries = [
        _entry(f"rp{i}", tuple(rng.uniform(0, 10, 2)), rng.uniform(-1, 0, 84), (rng.uniform(-60, 60), 0.0))
        for i in range(6)
    ]
    estimate = locate_fingerprints(_online(), _map(entries, MatchParams(m_c=6)))
    xs = [e.location[0] for e in entries]
    ys = [e.location[1] for e in entries]
    assert min(xs) <= estimate.x <= max(xs)
    assert min(ys) <= estimate.y <= max(ys)


def test_zero_aoa_weight_is_entropy_only():
    entries = [
        _entry("a", (0.0, 0.0), np.full(84, -0.5), (0.0, 0.0)),
        _entry("b", (2.0, 0.0), np.full(84, -0.51), (80.0, 0.0)),
    ]
    params = MatchParams().entropy_only()
    estimate = locate_fingerprints(_online(), _map(entries), params)
    w_b = np.exp(-params.rho_e * 0.84)
    assert estimate.x == pytest.approx(2.0 * w_b / (1.0 + w_b))


# ============================================================================
# RADIO MAP CONSTRUCTION
# ============================================================================


def test_one_rp_one_ap_map():
    trace = single_path_trace(theta=15.0, tau=20e-9, n_packets=50, snr_db=20.0)
    radio_map = build_radio_map([SurveyPoint("rp0", (1.0, 2.0), {"ap1": trace})])
    assert len(radio_map) == 1
    entry = radio_map.entry("rp0")
    assert len(entry.entropy["ap1"]) == 84
    assert abs(entry.aoa["ap1"].theta - 15.0) <= 2.0
    assert radio_map.provenance["config_hash"] == AnglocSettings().fingerprint()


def test_missing_ap_trace_names_rp_and_ap():
    trace = single_path_trace(theta=0.0, n_packets=50)
    surveys = [
        SurveyPoint("rp0", (0.0, 0.0), {"ap1": trace, "ap2": trace}),
        SurveyPoint("rp1", (1.0, 0.0), {"ap1": trace}),
    ]
    with pytest.raises(IncompleteSurveyError) as excinfo:
        build_radio_map(surveys)
    assert (excinfo.value.rp_id, excinfo.value.ap_id) == ("rp1", "ap2")


def test_split_needs_packets_on_both_sides():
    trace = single_path_trace(theta=0.0, n_packets=1)
    with pytest.raises(PreconditionError):
        split_survey(SurveyPoint("rp0", (0.0, 0.0), {"ap1": trace}), 0.5)
    head, tail = split_survey(SurveyPoint("rp0", (0.0, 0.0), {"ap1": single_path_trace(0.0, n_packets=10)}), 0.5)
    assert len(head.traces["ap1"]) == len(tail.traces["ap1"]) == 5


@pytest.fixture(scope="module")
def survey():
    return simulate_scene(small_scene())


@pytest.fixture(scope="module")
def radio_map(survey):
    return build_radio_map(survey.rps)


def test_scene_map_has_every_rp(radio_map, tmp_path):
    assert len(radio_map) == 12
    assert radio_map.ap_ids == ["ap1", "ap2"]
    for entry in radio_map.entries:
        assert len(entry.entropy["ap1"]) == len(entry.entropy["ap2"]) == 84
        assert set(entry.aoa) == {"ap1", "ap2"}
    path = tmp_path / "map.json"
    radio_map.save(path)
    assert RadioMap.load(path) == radio_map


def test_online_trace_at_reference_point(survey, radio_map):
    params = radio_map.params.override(w_a=1.0, rho_a=1.0)
    estimate = locate(survey.tests[0].traces, radio_map, params=params)
    assert np.hypot(estimate.x - 1.5, estimate.y - 1.5) < 0.5
    assert len(estimate.candidates) == 12


def test_online_trace_between_reference_points(survey, radio_map):
    params = radio_map.params.override(w_a=1.0, rho_a=1.0)
    estimate = locate(survey.tests[1].traces, radio_map, params=params)
    assert np.hypot(estimate.x - 2.0, estimate.y - 1.0) < 1.0


def test_locate_rejects_foreign_radio(radio_map):
    trace = single_path_trace(theta=0.0, n_packets=50, config=RadioConfig(n_rx=2))
    with pytest.raises(InvalidInputError):
        locate({"ap1": trace, "ap2": trace}, radio_map)


# ============================================================================
# LEAVE-ONE-OUT TUNING
# ============================================================================


def test_tuned_params_lie_on_the_grid(survey):
    tuning = TuningConfig(w_a_step=0.25, rho_exponents=4, m_c_max=5)
    result = loocv_tune(survey.rps, tuning=tuning)
    params = result.params
    assert params.w_e + params.w_a == pytest.approx(1.0)
    assert params.w_a in tuning.w_a_grid()
    assert params.rho_e in tuning.rho_grid()
    assert params.rho_a in tuning.rho_grid()
    assert 1 <= params.m_c <= 5
    assert result.evaluated == 5 * 5 * 4 * 4
    assert result.mean_error >= 0.0


def test_tuning_needs_two_reference_points(survey):
    with pytest.raises(PreconditionError):
        loocv_tune(survey.rps[:1])

import json
import math

import numpy as np
import pytest
from pydantic import ValidationError

from angloc.config import AnglocSettings
from angloc.data.scene import simulate_scene
from angloc.errors import InvalidConfigError, InvalidInputError
from angloc.evaluation import (
    EvalReport,
    aoa_accuracy,
    aoa_accuracy_study,
    aoa_packets_study,
    entropy_packets_study,
    evaluate,
    fingerprint_tests,
    localization_errors,
    mc_sweep,
    smoothing_sweep,
)
from angloc.locator import build_radio_map

from .test_utils import small_scene

# Lab-scale summary: mean 1.18 m, 90th percentile 2.27 m, max 2.67 m.
LAB_ERRORS = [0.5, 0.6, 0.7, 0.8, 0.9, 0.94, 1.0, 1.2, 1.4, 2.27, 2.67]


# =============================================================================
# Reports
# =============================================================================


def test_report_statistics():
    report = EvalReport.from_errors([1.0, 2.0], seed=7, config_hash="abc")

    assert report.mean_error == pytest.approx(1.5)
    assert report.min_error == 1.0
    assert report.max_error == 2.0
    assert report.seed == 7
    assert report.config_hash == "abc"


def test_report_all_zero_errors():
    report = EvalReport.from_errors([0.0, 0.0, 0.0])

    assert report.mean_error == 0.0
    assert report.p90 == 0.0
    assert report.cdf[-1] == (0.0, 1.0)


def test_report_requires_errors():
    with pytest.raises(InvalidInputError):
        EvalReport.from_errors([])


def test_report_cdf_is_monotone_and_ends_at_one():
    report = EvalReport.from_errors([3.0, 1.0, 2.0, 2.0])

    errors = [e for e, _ in report.cdf]
    fractions = [f for _, f in report.cdf]
    assert errors == sorted(errors)
    assert fractions == sorted(fractions)
    assert fractions[-1] == 1.0
    assert fractions[0] == pytest.approx(0.25)


def test_report_rejects_inconsistent_mean():
    with pytest.raises(ValidationError):
        EvalReport(
            errors=[1.0, 2.0],
            mean_error=3.0,
            min_error=1.0,
            p50=1.5,
            p90=1.9,
            max_error=2.0,
            cdf=[(1.0, 0.5), (2.0, 1.0)],
        )


def test_report_renders_lab_summary():
    report = EvalReport.from_errors(LAB_ERRORS, label="lab")
    summary = json.loads(json.dumps(report.summary()))

    assert summary["label"] == "lab"
    assert summary["n_points"] == 11
    assert f"{summary['mean_error']:.2f}" == "1.18"
    assert f"{summary['p90']:.2f}" == "2.27"
    assert f"{summary['max_error']:.2f}" == "2.67"
    assert summary["min_error"] == 0.5


def test_report_json_round_trip():
    report = EvalReport.from_errors(LAB_ERRORS)

    assert EvalReport.model_validate_json(report.model_dump_json()) == report


def test_localization_errors():
    errors = localization_errors([(3.0, 4.0), (1.0, 1.0)], [(0.0, 0.0), (1.0, 1.0)])

    np.testing.assert_allclose(errors, [5.0, 0.0])


def test_localization_errors_length_mismatch():
    with pytest.raises(InvalidInputError):
        localization_errors([(0.0, 0.0)], [(0.0, 0.0), (1.0, 1.0)])


def test_aoa_accuracy():
    result = aoa_accuracy([10.0, -5.0, 3.0], [8.0, -5.0, 0.0])

    assert result.errors == [2.0, 0.0, 3.0]
    assert result.mean_error == pytest.approx(5.0 / 3.0)
    assert result.median_error == 2.0
    assert result.max_error == 3.0


@pytest.mark.parametrize("estimates,truths", [([1.0], [1.0, 2.0]), ([], [])])
def test_aoa_accuracy_rejects_bad_input(estimates, truths):
    with pytest.raises(InvalidInputError):
        aoa_accuracy(estimates, truths)


# =============================================================================
# Studies
# =============================================================================


def test_entropy_packets_study_rows():
    rows = entropy_packets_study(packet_counts=(200, 50), seeds=range(3))

    assert [row["n_packets"] for row in rows] == [50, 200]
    for row in rows:
        assert list(row) == ["n_packets", "n_seeds", "mean_entropy", "variance", "std"]
        assert 0 < row["n_seeds"] <= 3
        assert row["variance"] >= 0
        assert row["std"] == pytest.approx(math.sqrt(row["variance"]))


def test_aoa_packets_study_rows():
    rows = aoa_packets_study(packet_counts=(15, 5), seeds=range(3), snr_db=25.0)

    assert [row["n_packets"] for row in rows] == [5, 15]
    for row in rows:
        assert row["n_seeds"] == 3
        assert 0 <= row["median_error_deg"] <= 180
        assert math.isfinite(row["mean_error_deg"])


def test_smoothing_sweep_rows():
    rows = smoothing_sweep(seeds=range(2), snr_db=25.0)

    assert [row["smoothing_length"] for row in rows] == [30, 16, 8]
    assert [row["k_sub"] for row in rows] == [15, 8, 4]
    for row in rows:
        assert row["n_seeds"] == 2
        assert 0.0 <= row["true_peak_rate"] <= 1.0
        assert list(row) == [
            "smoothing_length",
            "k_sub",
            "n_seeds",
            "meets_path_budget",
            "true_peak_rate",
            "mean_sharpness_db",
        ]
    assert [row["meets_path_budget"] for row in rows] == [True, True, False]


def test_smoothing_sweep_rejects_length_below_path_count():
    with pytest.raises(InvalidConfigError, match="cannot hold 3 paths"):
        smoothing_sweep(k_subs=(1,), seeds=range(1))


@pytest.mark.slow
def test_smoothing_length_sixteen_is_sharpest_within_budget():
    row30, row16, row8 = smoothing_sweep()
    best = max(row["mean_sharpness_db"] for row in (row30, row16, row8))

    assert row16["true_peak_rate"] == 1.0
    assert row16["mean_sharpness_db"] >= best - 1.0
    assert row30["mean_sharpness_db"] <= best - 3.0
    assert row8["true_peak_rate"] < 1.0 or not row8["meets_path_budget"]


@pytest.mark.slow
def test_aoa_error_settles_by_fifteen_packets():
    e15, e40 = (row["mean_error_deg"] for row in aoa_packets_study(packet_counts=(15, 40)))

    assert abs(e15 - e40) <= 1.0


@pytest.mark.slow
def test_entropy_spread_at_fifty_packets_near_long_trace_spread():
    short, long = entropy_packets_study(packet_counts=(50, 5000))

    assert min(short["n_seeds"], long["n_seeds"]) >= 18
    assert short["std"] <= 2.0 * long["std"]


# =============================================================================
# Simulated scene
# =============================================================================


@pytest.fixture(scope="module")
def survey():
    return simulate_scene(small_scene())


@pytest.fixture(scope="module")
def radio_map(survey):
    return build_radio_map(survey.rps)


def test_evaluate_with_baseline(survey, radio_map):
    settings = AnglocSettings()
    reports = evaluate(radio_map, survey.tests, settings, baseline=True, seed=3)

    assert [r.label for r in reports] == ["angloc", "entropy-only"]
    diagonal = math.hypot(4.0, 3.0)
    for report in reports:
        assert len(report.errors) == 2
        assert 0 <= report.mean_error <= diagonal
        assert report.seed == 3
        assert report.config_hash == settings.fingerprint()


def test_evaluate_without_baseline(survey, radio_map):
    reports = evaluate(radio_map, survey.tests)

    assert len(reports) == 1


def test_mc_sweep(survey, radio_map):
    online = fingerprint_tests(survey.tests, radio_map, AnglocSettings())
    truths = [t.location for t in survey.tests]

    rows = mc_sweep(radio_map, online, truths, m_c_max=5)

    assert [row["m_c"] for row in rows] == [1, 2, 3, 4, 5]
    for row in rows:
        assert row["p90"] <= math.hypot(4.0, 3.0)


def test_mc_sweep_stops_at_map_size(survey, radio_map):
    online = fingerprint_tests(survey.tests, radio_map, AnglocSettings())
    truths = [t.location for t in survey.tests]

    rows = mc_sweep(radio_map, online, truths, m_c_max=50)

    assert len(rows) == len(radio_map)


@pytest.mark.slow
def test_aoa_accuracy_study(survey):
    result = aoa_accuracy_study(survey)

    assert len(result.errors) == 2 * len(survey.rps)
    assert all(0 <= e <= 180 for e in result.errors)

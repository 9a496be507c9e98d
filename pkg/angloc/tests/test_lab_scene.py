import math
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest

from angloc.data.scene import load_scene, simulate_scene
from angloc.evaluation import evaluate
from angloc.locator import aoa_distance, build_radio_map, loocv_tune

EXAMPLES = Path(__file__).resolve().parents[2] / "docs" / "examples"

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def survey():
    return simulate_scene(load_scene(EXAMPLES / "lab_scene.json"))


@pytest.fixture(scope="module")
def radio_map(survey):
    return build_radio_map(survey.rps)


@pytest.fixture(scope="module")
def tuned_map(survey, radio_map):
    return radio_map.with_params(loocv_tune(survey.rps).params)


# =============================================================================
# Radio map
# =============================================================================


def test_every_reference_point_is_fingerprinted(radio_map):
    assert len(radio_map) == 64
    assert radio_map.ap_ids == ["ap1", "ap2"]
    for entry in radio_map.entries:
        for fingerprint in entry.entropy.values():
            values = np.asarray(fingerprint.values)
            assert values.size == 3 * 28
            assert np.all(np.isfinite(values))
            assert np.all(values <= 1e-6)


def test_neighbouring_points_have_closer_first_paths(radio_map):
    near, far = [], []
    for a, b in combinations(radio_map.entries, 2):
        spacing = math.dist(a.location, b.location)
        if spacing == pytest.approx(1.0):
            near.append(aoa_distance(a, b.aoa))
        elif spacing >= 5.0:
            far.append(aoa_distance(a, b.aoa))

    assert np.median(near) < np.median(far)


# =============================================================================
# Localization
# =============================================================================


def test_tuned_map_locates_within_a_metre_and_a_half(survey, tuned_map):
    angloc, entropy_only = evaluate(tuned_map, survey.tests, baseline=True)

    assert angloc.label == "angloc"
    assert entropy_only.label == "entropy-only"
    assert angloc.mean_error <= 1.5
    assert angloc.mean_error <= entropy_only.mean_error

import json
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from angloc.classes.radio import RadioConfig
from angloc.classes.radio_map import MatchParams
from angloc.config import AnglocSettings, AoaConfig, SmoothingConfig, TuningConfig, load_settings
from angloc.errors import InvalidConfigError


# =============================================================================
# Settings resolution
# =============================================================================


def test_defaults():
    settings = load_settings()

    assert settings.entropy.n_packets == 50
    assert settings.entropy.p_max == 20
    assert settings.calibration.cfo_window == 10
    assert settings.calibration.tap_filter.threshold == 0.9
    assert settings.aoa.smoothing.k_sub == 8
    assert settings.aoa.smoothing.n_packets == 15
    assert settings.match.m_c == 12


def test_file_values(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"entropy": {"n_packets": 30}, "match": {"m_c": 4}}))

    settings = load_settings(path)

    assert settings.entropy.n_packets == 30
    assert settings.entropy.p_max == 20
    assert settings.match.m_c == 4


def test_overrides_beat_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"entropy": {"n_packets": 30, "p_max": 8}}))

    settings = load_settings(path, entropy={"n_packets": 40}, log_level=None)

    assert settings.entropy.n_packets == 40
    assert settings.entropy.p_max == 8
    assert settings.log_level == "INFO"


def test_environment(monkeypatch):
    monkeypatch.setenv("ANGLOC_ENTROPY__N_PACKETS", "100")
    monkeypatch.setenv("ANGLOC_LOG_LEVEL", "DEBUG")

    settings = load_settings()

    assert settings.entropy.n_packets == 100
    assert settings.log_level == "DEBUG"


@pytest.mark.parametrize("content", ["{not json", "[1, 2]"])
def test_bad_file(tmp_path, content):
    path = tmp_path / "config.json"
    path.write_text(content)

    with pytest.raises(InvalidConfigError):
        load_settings(path)


def test_missing_file(tmp_path):
    with pytest.raises(InvalidConfigError, match="Cannot read config file"):
        load_settings(tmp_path / "absent.json")


def test_invalid_value():
    with pytest.raises(InvalidConfigError, match="Invalid configuration"):
        load_settings(entropy={"n_packets": 1})


def test_fingerprint_is_stable():
    assert AnglocSettings().fingerprint() == AnglocSettings().fingerprint()
    assert load_settings(match={"m_c": 3}).fingerprint() != AnglocSettings().fingerprint()


# =============================================================================
# Sections
# =============================================================================


def test_match_params_defaults_sum_to_one():
    params = MatchParams()

    assert params.w_e + params.w_a == pytest.approx(1.0)
    assert params.tau_scale == 1e9


def test_match_params_rejects_unbalanced_weights():
    with pytest.raises(ValidationError, match="sum to 1"):
        MatchParams(w_e=0.5, w_a=0.6)


def test_match_params_override():
    params = MatchParams().override(m_c=5, w_a=0.3, rho_a=0.5)

    assert params.m_c == 5
    assert params.w_a == 0.3
    assert params.w_e == pytest.approx(0.7)
    assert params.rho_a == 0.5
    assert params.rho_e == MatchParams().rho_e


def test_match_params_override_without_values_is_identity():
    assert MatchParams().override() == MatchParams()


def test_entropy_only():
    params = MatchParams().entropy_only()

    assert params.w_a == 0.0
    assert params.w_e == 1.0


def test_tuning_grids():
    tuning = TuningConfig()

    np.testing.assert_allclose(tuning.w_a_grid(), np.linspace(0, 1, 11))
    rho = tuning.rho_grid()
    assert len(rho) == 9
    assert rho[0] == pytest.approx(0.01)
    assert rho[-1] == pytest.approx(2.56)


def test_tuning_quarter_steps():
    np.testing.assert_allclose(TuningConfig(w_a_step=0.25).w_a_grid(), [0, 0.25, 0.5, 0.75, 1])


def test_smoothing_dimension_must_exceed_path_count():
    with pytest.raises(ValidationError, match="must exceed"):
        SmoothingConfig(k_sub=2)


def test_path_budget_defaults():
    settings = AnglocSettings()

    assert settings.entropy.samples_per_order == 10
    assert settings.aoa.smoothing.expected_paths == 10
    with pytest.raises(ValidationError, match="must exceed the expected path count 10"):
        SmoothingConfig(k_sub=5)
    assert SmoothingConfig(k_sub=6).dimension == 12


def test_smoothing_check_against_radio():
    assert SmoothingConfig().check(RadioConfig()) == (23, 2)
    with pytest.raises(InvalidConfigError, match="exceeds the subcarrier count"):
        SmoothingConfig(k_sub=31).check(RadioConfig())
    with pytest.raises(InvalidConfigError, match="antennas"):
        SmoothingConfig().check(RadioConfig(n_rx=1))


def test_aoa_axes():
    config = AoaConfig()

    assert len(config.theta_axis()) == 181
    assert len(config.tau_axis()) == 251
    assert config.theta_axis()[0] == -90.0
    assert config.tau_axis()[-1] == pytest.approx(450e-9)


@pytest.mark.parametrize(
    "values",
    [{"theta_min": 10.0, "theta_max": 0.0}, {"theta_max": 120.0}, {"tau_min": 1e-7, "tau_max": 0.0}],
)
def test_aoa_grid_validation(values):
    with pytest.raises(ValidationError):
        AoaConfig(**values)


def test_example_config_matches_defaults():
    path = Path(__file__).resolve().parents[2] / "docs" / "examples" / "config.json"

    assert load_settings(path).fingerprint() == AnglocSettings().fingerprint()

import numpy as np
import pytest

from angloc.classes.channel import ChannelSpec, ImpairmentSpec, PathComponent, RoomSpec
from angloc.classes.radio import SPEED_OF_LIGHT, RadioConfig
from angloc.errors import InvalidConfigError, InvalidInputError
from angloc.simulator import (
    clean_cfr,
    fold_angle,
    ground_truth,
    link_channel,
    make_radio_scene,
    rp_grid,
    sample_locations,
    survey_traces,
    synth_trace,
)

CFG = RadioConfig()


@pytest.fixture
def room():
    return RoomSpec(width=8.0, height=8.0, tx_positions=[(1.0, 4.0), (7.0, 1.0)])


# ============================================================================
# CLEAN CHANNEL
# ============================================================================


def test_single_unit_path_is_all_ones():
    h = clean_cfr([PathComponent(alpha=1.0)], CFG)
    np.testing.assert_allclose(h, np.ones((3, 1, 30)), atol=1e-15)


def test_thirty_degrees_gives_quarter_turn_per_antenna():
    h = clean_cfr([PathComponent(alpha=1.0, theta=30.0)], CFG)
    expected = np.exp(-1j * np.pi / 2 * np.arange(3))
    np.testing.assert_allclose(h[:, 0, 0], expected, atol=1e-12)


def test_two_paths_match_direct_sum():
    paths = [
        PathComponent(alpha=1.0, phi=0.2, tau=30e-9, theta=-10.0),
        PathComponent(alpha=0.4, phi=1.1, tau=75e-9, theta=40.0),
    ]
    h = clean_cfr(paths, CFG)
    for r in range(3):
        for k in range(30):
            value = sum(
                p.alpha
                * np.exp(-1j * p.phi)
                * np.exp(-2j * np.pi * r * CFG.f_c * CFG.d * np.sin(np.radians(p.theta)) / CFG.c)
                * np.exp(-2j * np.pi * k * CFG.f_delta * p.tau)
                for p in paths
            )
            assert abs(h[r, 0, k] - value) < 1e-12


def test_every_tx_sees_the_same_channel():
    cfg = RadioConfig(n_tx=2)
    h = clean_cfr([PathComponent(alpha=1.0, tau=20e-9, theta=12.0)], cfg)
    np.testing.assert_array_equal(h[:, 0, :], h[:, 1, :])


def test_delay_beyond_span_rejected():
    with pytest.raises(InvalidInputError):
        clean_cfr([PathComponent(alpha=1.0, tau=30 / (2 * 625e3))], CFG)


def test_path_component_validation():
    with pytest.raises(InvalidInputError):
        PathComponent(alpha=-1.0)
    with pytest.raises(InvalidInputError):
        PathComponent(alpha=1.0, theta=95.0)


# ============================================================================
# IMPAIRED TRACES
# ============================================================================


def test_same_seed_is_bit_identical():
    paths = [PathComponent(alpha=1.0, tau=10e-9, theta=5.0)]
    imp = ImpairmentSpec(sfo=20e-9, sto_taps=2, cfo_step=0.1, cfo_jitter=0.2, snr_db=10.0)
    a = synth_trace(paths, CFG, imp, 5, seed=11)
    b = synth_trace(paths, CFG, imp, 5, seed=11)
    c = synth_trace(paths, CFG, imp, 5, seed=12)
    assert a == b
    assert a != c


def test_realized_snr_matches_request():
    paths = [PathComponent(alpha=1.0, tau=15e-9, theta=-20.0)]
    trace = synth_trace(paths, CFG, ImpairmentSpec(snr_db=10.0), 120, seed=3)
    clean = clean_cfr(paths, CFG)
    noise = trace.tensor() - clean[None]
    realized = 10 * np.log10(np.mean(np.abs(clean) ** 2) / np.mean(np.abs(noise) ** 2))
    assert abs(realized - 10.0) < 0.5


def test_cfo_rotates_whole_packet():
    trace = synth_trace([PathComponent(alpha=1.0)], CFG, ImpairmentSpec(cfo_step=0.25, cpo=0.1), 4)
    phases = np.angle(trace.tensor()[:, 0, 0, 0])
    np.testing.assert_allclose(phases, 0.1 + 0.25 * np.arange(4), atol=1e-12)
    assert np.allclose(np.abs(trace.tensor()), 1.0)


def test_sto_shift_must_fit_the_subcarriers():
    with pytest.raises(InvalidInputError):
        synth_trace([PathComponent(alpha=1.0)], CFG, ImpairmentSpec(sto_taps=30), 1)


# ============================================================================
# GROUND TRUTH
# ============================================================================


def test_ground_truth_takes_earliest_path():
    assert ground_truth([PathComponent(alpha=1.0, tau=5e-9, theta=3.0)]) == (3.0, 5e-9)
    paths = [PathComponent(alpha=1.0, tau=50e-9, theta=10.0), PathComponent(alpha=0.2, tau=10e-9, theta=-5.0)]
    assert ground_truth(paths) == (-5.0, 10e-9)


def test_ground_truth_tie_goes_to_stronger_path():
    paths = [PathComponent(alpha=0.5, tau=10e-9, theta=1.0), PathComponent(alpha=1.0, tau=10e-9, theta=2.0)]
    assert ground_truth(ChannelSpec(tuple(paths))) == (2.0, 10e-9)


def test_fold_angle():
    assert fold_angle(150.0) == pytest.approx(30.0)
    assert fold_angle(-120.0) == pytest.approx(-60.0)
    assert fold_angle(45.0) == pytest.approx(45.0)


# ============================================================================
# SCENES
# ============================================================================


def test_boresight_point_three_meters_away(room):
    channel = link_channel(room, 0, (4.0, 4.0), CFG)
    direct = channel.paths[0]
    assert direct.theta == pytest.approx(0.0)
    assert direct.tau == pytest.approx(3.0 / SPEED_OF_LIGHT)
    assert direct.tau == pytest.approx(10.0e-9, abs=0.01e-9)


def test_eight_by_eight_room_has_64_reference_points(room):
    points = make_radio_scene(room, 1.0, CFG, seed=0)
    assert len(points) == 64
    for point in points:
        assert len(point.channels) == 2
        for channel in point.channels:
            assert 1 <= len(channel) <= 5
            direct = channel.paths[0]
            assert all(direct.tau < p.tau for p in channel.paths[1:])
            assert channel.first_arrival() is direct


def test_grid_spacing_must_fit(room):
    with pytest.raises(InvalidConfigError):
        rp_grid(room, 8.0)
    with pytest.raises(InvalidConfigError):
        rp_grid(room, 0.0)


def test_zero_area_room_rejected():
    with pytest.raises(ValueError):
        RoomSpec(width=0.0, height=4.0, tx_positions=[(0.0, 0.0)])


def test_access_point_outside_room_rejected():
    with pytest.raises(ValueError):
        RoomSpec(width=4.0, height=4.0, tx_positions=[(5.0, 1.0)])


def test_sampled_locations_respect_margin(room):
    locations = sample_locations(room, 50, seed=1, margin=0.5)
    assert len(locations) == 50
    assert all(0.5 <= x <= 7.5 and 0.5 <= y <= 7.5 for x, y in locations)


def test_survey_streams_differ_only_in_noise(room):
    points = make_radio_scene(room, 2.0, CFG, seed=0)[:2]
    imp = ImpairmentSpec(snr_db=20.0)
    first = survey_traces(points, CFG, imp, 3, seed=5, stream=0)
    again = survey_traces(points, CFG, imp, 3, seed=5, stream=0)
    other = survey_traces(points, CFG, imp, 3, seed=5, stream=1)
    assert set(first[0]) == {"ap1", "ap2"}
    assert first[1]["ap2"] == again[1]["ap2"]
    assert first[1]["ap2"] != other[1]["ap2"]
    assert first[0]["ap1"].location_tag == points[0].location

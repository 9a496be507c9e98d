"""Scene documents for the simulator.

A scene is a JSON document describing the room, the reference point grid,
the test points and the radio/impairment settings. Simulating it yields the
per-AP survey traces of every RP and test point plus a GeoJSON manifest of
true locations and first-arrival angles.
"""

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from geojson import Feature, FeatureCollection, Point
from pydantic import BaseModel, Field, ValidationError, model_validator

from ..classes.channel import ImpairmentSpec, RoomSpec, ScenePoint
from ..classes.radio import RadioConfig
from ..classes.radio_map import SurveyPoint
from ..errors import InvalidConfigError
from ..simulator import make_radio_scene, sample_locations, scene_points, survey_traces

logger = logging.getLogger(__name__)

RP_STREAM = 0
TEST_STREAM = 1


class SceneSpec(BaseModel):
    """Simulated survey campaign.

    Attributes:
        room: Floor plan with AP positions.
        rp_grid_spacing: Reference point grid spacing in meters.
        test_points: Explicit test locations; ``n_test_points`` random ones when omitted.
        n_test_points: Number of random test locations.
        radio: Radio configuration shared by every AP.
        impairments: Phase errors and noise of every trace.
        n_packets: Packets per trace.
        seed: Default seed, overridable per run.
    """

    room: RoomSpec
    rp_grid_spacing: float = Field(default=1.0, gt=0)
    test_points: list[tuple[float, float]] | None = None
    n_test_points: int = Field(default=20, ge=0)
    radio: RadioConfig = Field(default_factory=RadioConfig)
    impairments: ImpairmentSpec = Field(default_factory=lambda: ImpairmentSpec(snr_db=15.0))
    n_packets: int = Field(default=200, ge=1)
    seed: int = 0
    ap_ids: list[str] | None = None

    @model_validator(mode="after")
    def _check_scene(self) -> "SceneSpec":
        if self.rp_grid_spacing >= min(self.room.width, self.room.height):
            raise ValueError(
                f"Grid spacing {self.rp_grid_spacing} m must be smaller than the room"
            )
        if self.ap_ids is not None and len(self.ap_ids) != len(self.room.tx_positions):
            raise ValueError("One AP id per access point position is required")
        return self

    def access_points(self) -> list[str]:
        return self.ap_ids or [f"ap{s + 1}" for s in range(len(self.room.tx_positions))]


def load_scene(path: str | Path) -> SceneSpec:
    """Read a scene document.

    Raises:
        InvalidConfigError: If the file is unreadable or describes an invalid scene.
    """
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidConfigError(f"Cannot read scene file {path}: {e}") from e
    try:
        return SceneSpec.model_validate(data)
    except ValidationError as e:
        raise InvalidConfigError(f"Invalid scene {path}: {e}") from e


@dataclass(frozen=True)
class SimulatedSurvey:
    """Traces and ground truth of one simulated campaign."""

    scene: SceneSpec
    seed: int
    rp_points: list[ScenePoint]
    test_points: list[ScenePoint]
    rps: list[SurveyPoint]
    tests: list[SurveyPoint]


def simulate_scene(
    scene: SceneSpec,
    seed: int | None = None,
    snr_db: float | None = None,
    n_packets: int | None = None,
) -> SimulatedSurvey:
    """Simulate every RP and test point of a scene.

    ``seed``, ``snr_db`` and ``n_packets`` override the scene's own values.
    """
    seed = scene.seed if seed is None else seed
    n_packets = n_packets or scene.n_packets
    impairments = scene.impairments
    if snr_db is not None:
        impairments = replace(impairments, snr_db=snr_db)
    ap_ids = scene.access_points()

    rp_points = make_radio_scene(scene.room, scene.rp_grid_spacing, scene.radio, seed)
    locations = scene.test_points
    if locations is None:
        locations = sample_locations(scene.room, scene.n_test_points, seed)
    test_points = scene_points(scene.room, locations, scene.radio, seed)

    rp_traces = survey_traces(rp_points, scene.radio, impairments, n_packets, seed, ap_ids, RP_STREAM)
    test_traces = survey_traces(
        test_points, scene.radio, impairments, n_packets, seed, ap_ids, TEST_STREAM
    )
    rps = [
        SurveyPoint(f"rp{i:03d}", p.location, traces)
        for i, (p, traces) in enumerate(zip(rp_points, rp_traces, strict=True))
    ]
    tests = [
        SurveyPoint(f"test{i:03d}", p.location, traces)
        for i, (p, traces) in enumerate(zip(test_points, test_traces, strict=True))
    ]
    logger.info(
        f"Simulated {len(rps)} reference points and {len(tests)} test points "
        f"with {n_packets} packets per trace (seed {seed})"
    )
    return SimulatedSurvey(scene, seed, rp_points, test_points, rps, tests)


def _point_feature(survey: SurveyPoint, point: ScenePoint, role: str, ap_ids: list[str]) -> Feature:
    first = {}
    for ap_id, channel in zip(ap_ids, point.channels, strict=True):
        path = channel.first_arrival()
        first[ap_id] = {"theta": path.theta, "tau": path.tau, "n_paths": len(channel)}
    return Feature(
        id=survey.rp_id,
        geometry=Point(survey.location),
        properties={"role": role, "first_path": first, "traces": {}},
    )


def manifest(survey: SimulatedSurvey) -> FeatureCollection:
    """GeoJSON collection of every simulated location with its ground truth.

    Each feature's ``traces`` property is left empty for the caller to fill
    with trace file names.
    """
    ap_ids = survey.scene.access_points()
    features = [
        _point_feature(s, p, "rp", ap_ids) for s, p in zip(survey.rps, survey.rp_points, strict=True)
    ] + [
        _point_feature(s, p, "test", ap_ids)
        for s, p in zip(survey.tests, survey.test_points, strict=True)
    ]
    return FeatureCollection(
        features,
        properties={"seed": survey.seed, "ap_ids": ap_ids, "room": survey.scene.room.model_dump()},
    )


def read_manifest(path: str | Path) -> dict:
    """Load a manifest written next to simulated traces."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidConfigError(f"Cannot read manifest {path}: {e}") from e
    if data.get("type") != "FeatureCollection":
        raise InvalidConfigError(f"Manifest {path} is not a GeoJSON FeatureCollection")
    return data

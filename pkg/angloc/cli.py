"""Command line for the localization pipeline.

Every command writes JSON or CSV to ``--out`` (atomically) or to stdout and
logs to stderr. Pipeline errors are reported on stderr as
``{"error": <class>, "detail": <message>}`` with exit code 1 (usage or
configuration), 2 (data or format) or 3 (numeric failure).
"""

import csv
import functools
import io
import json
import logging
import sys
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Annotated, Any

import click
import geojson
import typer
from pydantic import ValidationError

from . import __version__
from .aoa import analyze
from .calibration import calibrate, calibrate_amplitude
from .classes.radio_map import MatchParams, RadioMap, SurveyPoint
from .config import AnglocSettings, load_settings
from .data.intel5300 import intel5300_to_trace, read_intel5300
from .data.scene import SceneSpec, load_scene, manifest, read_manifest, simulate_scene
from .data.trace_format import load_trace, save_trace
from .entropy import fingerprint_with_diagnostics
from .errors import AnglocError, InvalidConfigError, InvalidInputError
from .evaluation import (
    EvalReport,
    aoa_accuracy_study,
    aoa_packets_study,
    entropy_packets_study,
    evaluate,
    fingerprint_tests,
    mc_sweep,
    smoothing_sweep,
)
from .locator import build_radio_map, locate, loocv_tune
from .utils import atomic_write_text, file_hash

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="angloc",
    help="CSI fingerprint indoor localization: simulate, build maps, locate and evaluate.",
    no_args_is_help=True,
    add_completion=False,
)

TRACE_SUFFIX = ".csit"
MANIFEST_NAME = "manifest.geojson"


@dataclass
class CliState:
    settings: AnglocSettings
    seed: int | None
    out: Path | None


class StudyKind(str, Enum):
    entropy_packets = "entropy-packets"
    aoa_packets = "aoa-packets"
    smoothing_sweep = "smoothing-sweep"
    mc_sweep = "mc-sweep"
    aoa_accuracy = "aoa-accuracy"


class SchemaKind(str, Enum):
    radio_map = "radio-map"
    eval_report = "eval-report"
    match_params = "match-params"
    scene = "scene"


def _fail(error: Exception, exit_code: int) -> None:
    typer.echo(json.dumps({"error": type(error).__name__, "detail": str(error)}), err=True)
    raise typer.Exit(code=exit_code)


def reports_errors(fn):
    """Turn pipeline errors into a structured stderr message and exit code."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as e:
            _fail(InvalidConfigError(str(e)), InvalidConfigError.exit_code)
        except AnglocError as e:
            _fail(e, e.exit_code)
        except OSError as e:
            _fail(e, AnglocError.exit_code)

    return wrapper


def _state(ctx: typer.Context) -> CliState:
    return ctx.obj


def _provenance(state: CliState, **inputs: Path) -> dict[str, Any]:
    return {
        "version": __version__,
        "config_hash": state.settings.fingerprint(),
        "seed": state.seed,
        "inputs": {name: file_hash(path) for name, path in inputs.items()},
    }


def _emit_text(text: str, out: Path | None) -> None:
    if out is None:
        typer.echo(text)
    else:
        atomic_write_text(out, text if text.endswith("\n") else text + "\n")
        logger.info(f"Wrote {out}")


def _emit_json(doc: Any, out: Path | None) -> None:
    _emit_text(json.dumps(doc, indent=2), out)


def _emit_csv(rows: list[dict], columns: list[str], out: Path | None) -> None:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    _emit_text(buffer.getvalue(), out)


def _load_map(path: Path) -> RadioMap:
    try:
        return RadioMap.load(path)
    except ValidationError as e:
        raise InvalidInputError(f"Invalid radio map {path}: {e}") from e


def _load_surveys(path: Path, role: str) -> list[SurveyPoint]:
    doc = read_manifest(path)
    surveys = []
    for feature in doc["features"]:
        props = feature["properties"]
        if props.get("role") != role:
            continue
        x, y = feature["geometry"]["coordinates"][:2]
        traces = {ap: load_trace(path.parent / name) for ap, name in props["traces"].items()}
        surveys.append(SurveyPoint(str(feature["id"]), (float(x), float(y)), traces))
    if not surveys:
        raise InvalidInputError(f"Manifest {path} lists no {role} points")
    logger.info(f"Loaded {len(surveys)} {role} surveys from {path}")
    return surveys


def _parse_traces(specs: list[str]) -> dict[str, Path]:
    traces = {}
    for spec in specs:
        ap_id, sep, name = spec.partition("=")
        if not sep or not ap_id or not name:
            raise InvalidConfigError(f"Trace must be given as AP_ID=PATH, got {spec!r}")
        traces[ap_id] = Path(name)
    return traces


@app.callback()
@reports_errors
def cli(
    ctx: typer.Context,
    config: Annotated[Path | None, typer.Option(help="JSON settings file")] = None,
    seed: Annotated[int | None, typer.Option(help="Seed for simulation and studies")] = None,
    out: Annotated[Path | None, typer.Option(help="Output file or directory")] = None,
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Debug logging")] = False,
):
    settings = load_settings(config)
    logging.basicConfig(
        level=logging.DEBUG if verbose else settings.log_level.upper(),
        format="%(asctime)s - %(levelname)s - %(message)s",
    )
    ctx.obj = CliState(settings=settings, seed=seed, out=out)


@app.command()
@reports_errors
def simulate(
    ctx: typer.Context,
    scene_path: Annotated[Path, typer.Argument(metavar="SCENE", help="Scene JSON document")],
    snr_db: Annotated[float | None, typer.Option(help="Override the scene SNR")] = None,
    packets: Annotated[int | None, typer.Option(help="Packets per trace")] = None,
):
    """Simulate RP and test traces of a scene plus a ground-truth manifest."""
    state = _state(ctx)
    out_dir = state.out or Path("simulated")
    scene = load_scene(scene_path)
    survey = simulate_scene(scene, state.seed, snr_db, packets)
    collection = manifest(survey)
    points = {s.rp_id: s for s in survey.rps + survey.tests}
    for feature in collection["features"]:
        for ap_id, trace in points[feature["id"]].traces.items():
            name = f"traces/{feature['id']}_{ap_id}{TRACE_SUFFIX}"
            save_trace(trace, out_dir / name)
            feature["properties"]["traces"][ap_id] = name
    collection["properties"]["provenance"] = {
        **_provenance(state, scene=scene_path),
        "seed": survey.seed,
    }
    atomic_write_text(out_dir / MANIFEST_NAME, geojson.dumps(collection, indent=2, sort_keys=True))
    typer.echo(
        json.dumps(
            {
                "manifest": str(out_dir / MANIFEST_NAME),
                "reference_points": len(survey.rps),
                "test_points": len(survey.tests),
            }
        )
    )


@app.command()
@reports_errors
def ingest(
    ctx: typer.Context,
    capture: Annotated[Path, typer.Argument(help="Intel 5300 CSI Tool capture")],
    source_id: Annotated[str, typer.Option(help="AP label stored in the trace")] = "",
    x: Annotated[float | None, typer.Option(help="Receiver x in meters")] = None,
    y: Annotated[float | None, typer.Option(help="Receiver y in meters")] = None,
    f_c: Annotated[float, typer.Option(help="Carrier frequency in Hz")] = 5.32e9,
):
    """Convert an Intel 5300 capture to a portable trace file."""
    state = _state(ctx)
    if state.out is None:
        raise InvalidConfigError("ingest needs --out for the trace file")
    if (x is None) != (y is None):
        raise InvalidConfigError("Give both --x and --y or neither")
    location = (x, y) if x is not None else None
    trace = intel5300_to_trace(read_intel5300(capture), source_id, location, f_c)
    save_trace(trace, state.out)
    typer.echo(json.dumps({"trace": str(state.out), "packets": len(trace), "shape": trace.config.shape}))


@app.command("build-map")
@reports_errors
def build_map(
    ctx: typer.Context,
    manifest_path: Annotated[Path, typer.Argument(metavar="MANIFEST", help="Survey manifest")],
):
    """Fingerprint the RP surveys of a manifest into a radio map."""
    state = _state(ctx)
    surveys = _load_surveys(manifest_path, "rp")
    radio_map = build_radio_map(
        surveys, state.settings, {"seed": state.seed, "inputs": {"manifest": file_hash(manifest_path)}}
    )
    if state.out is None:
        typer.echo(radio_map.model_dump_json(indent=2))
    else:
        radio_map.save(state.out)


@app.command()
@reports_errors
def tune(
    ctx: typer.Context,
    manifest_path: Annotated[Path, typer.Argument(metavar="MANIFEST", help="Survey manifest")],
    map_path: Annotated[
        Path | None, typer.Option("--map", help="Radio map to store the tuned parameters in")
    ] = None,
):
    """Leave-one-out tuning of the matching parameters."""
    state = _state(ctx)
    result = loocv_tune(_load_surveys(manifest_path, "rp"), state.settings)
    if map_path is not None:
        _load_map(map_path).with_params(result.params).save(map_path)
    _emit_json(
        {
            "params": result.params.model_dump(),
            "mean_error": result.mean_error,
            "grid_points": result.evaluated,
            "provenance": _provenance(state, manifest=manifest_path),
        },
        state.out,
    )


@app.command("locate")
@reports_errors
def locate_cmd(
    ctx: typer.Context,
    map_path: Annotated[Path, typer.Argument(metavar="MAP", help="Radio map JSON")],
    trace: Annotated[list[str], typer.Option(help="Online trace as AP_ID=PATH, once per AP")],
    m_c: Annotated[int | None, typer.Option(help="Candidate count")] = None,
    w_a: Annotated[float | None, typer.Option(help="AoA kernel weight; 0 is entropy-only")] = None,
    rho_e: Annotated[float | None, typer.Option(help="Entropy kernel coefficient")] = None,
    rho_a: Annotated[float | None, typer.Option(help="AoA kernel coefficient")] = None,
):
    """Estimate a location from one set of per-AP traces."""
    state = _state(ctx)
    radio_map = _load_map(map_path)
    params = radio_map.params.override(m_c, w_a, rho_e, rho_a)
    paths = _parse_traces(trace)
    online = {ap_id: load_trace(path) for ap_id, path in paths.items()}
    estimate = locate(online, radio_map, state.settings, params)
    doc = estimate.to_output()
    doc["params"] = params.model_dump()
    doc["provenance"] = _provenance(
        state, map=map_path, **{f"trace_{ap}": path for ap, path in paths.items()}
    )
    _emit_json(doc, state.out)


@app.command("evaluate")
@reports_errors
def evaluate_cmd(
    ctx: typer.Context,
    map_path: Annotated[Path, typer.Argument(metavar="MAP", help="Radio map JSON")],
    manifest_path: Annotated[Path, typer.Argument(metavar="MANIFEST", help="Manifest with test points")],
    baseline: Annotated[bool, typer.Option(help="Also report the entropy-only baseline")] = False,
    cdf: Annotated[Path | None, typer.Option(help="CSV file for the error CDF")] = None,
    w_a: Annotated[float | None, typer.Option(help="AoA kernel weight override")] = None,
):
    """Locate every test point of a manifest and report the errors."""
    state = _state(ctx)
    radio_map = _load_map(map_path)
    params = radio_map.params.override(w_a=w_a)
    tests = _load_surveys(manifest_path, "test")
    reports = evaluate(radio_map, tests, state.settings, params, baseline, state.seed)
    if cdf is not None:
        rows = [
            {"label": r.label, "error_m": e, "fraction": f} for r in reports for e, f in r.cdf
        ]
        _emit_csv(rows, ["label", "error_m", "fraction"], cdf)
    _emit_json(
        {
            "reports": [r.model_dump() for r in reports],
            "provenance": _provenance(state, map=map_path, manifest=manifest_path),
        },
        state.out,
    )


@app.command()
@reports_errors
def study(
    ctx: typer.Context,
    kind: Annotated[StudyKind, typer.Option(help="Study to run")],
    seeds: Annotated[int, typer.Option(help="Number of Monte Carlo seeds")] = 20,
    snr_db: Annotated[float, typer.Option(help="SNR of simulated traces")] = 15.0,
    scene_path: Annotated[Path | None, typer.Option("--scene", help="Scene for aoa-accuracy")] = None,
    map_path: Annotated[Path | None, typer.Option("--map", help="Radio map for mc-sweep")] = None,
    manifest_path: Annotated[
        Path | None, typer.Option("--manifest", help="Manifest with test points for mc-sweep")
    ] = None,
):
    """Run a micro-benchmark study and write its CSV."""
    state = _state(ctx)
    settings = state.settings
    base = state.seed or 0
    seed_range = range(base, base + seeds)
    if kind is StudyKind.entropy_packets:
        rows = entropy_packets_study(seeds=seed_range, snr_db=snr_db, config=settings.entropy)
    elif kind is StudyKind.aoa_packets:
        rows = aoa_packets_study(seeds=seed_range, snr_db=snr_db, aoa_config=settings.aoa)
    elif kind is StudyKind.smoothing_sweep:
        rows = smoothing_sweep(seeds=seed_range, snr_db=snr_db, aoa_config=settings.aoa)
    elif kind is StudyKind.mc_sweep:
        if map_path is None or manifest_path is None:
            raise InvalidConfigError("mc-sweep needs --map and --manifest")
        radio_map = _load_map(map_path)
        tests = _load_surveys(manifest_path, "test")
        online = fingerprint_tests(tests, radio_map, settings)
        rows = mc_sweep(radio_map, online, [t.location for t in tests], m_c_max=settings.tuning.m_c_max)
    else:
        if scene_path is None:
            raise InvalidConfigError("aoa-accuracy needs --scene")
        scene = load_scene(scene_path).model_copy(update={"test_points": []})
        accuracy = aoa_accuracy_study(simulate_scene(scene, state.seed, snr_db), settings)
        rows = [{"error_deg": e, "fraction": f} for e, f in accuracy.cdf]
    _emit_csv(rows, list(rows[0]) if rows else [], state.out)


@app.command("aoa-spectrum")
@reports_errors
def aoa_spectrum(
    ctx: typer.Context,
    trace_path: Annotated[Path, typer.Argument(metavar="TRACE", help="Trace file")],
    raw: Annotated[bool, typer.Option(help="Skip calibration")] = False,
):
    """Write the MUSIC pseudo-spectrum of a trace as (theta, tau, power_db) rows."""
    state = _state(ctx)
    trace = load_trace(trace_path)
    if not raw:
        trace, _ = calibrate(trace, state.settings.calibration)
    result = analyze(trace, state.settings.aoa)
    rows = [{"theta": t, "tau": tau, "power_db": p} for t, tau, p in result.spectrum.rows()]
    _emit_csv(rows, ["theta", "tau", "power_db"], state.out)
    logger.info(
        f"First arrival theta={result.fingerprint.theta:.1f} deg tau={result.fingerprint.tau * 1e9:.1f} ns "
        f"from {len(result.peaks)} peaks"
    )


@app.command("entropy-dump")
@reports_errors
def entropy_dump(
    ctx: typer.Context,
    trace_path: Annotated[Path, typer.Argument(metavar="TRACE", help="Trace file")],
):
    """Write per-stream entropy diagnostics of a trace."""
    state = _state(ctx)
    trace, _ = calibrate_amplitude(load_trace(trace_path), state.settings.calibration)
    _, rows = fingerprint_with_diagnostics(trace, state.settings.entropy)
    columns = ["index", "tx", "rx", "subcarrier", "order", "sigma2", "entropy", "cepstral", "flagged"]
    _emit_csv([{c: getattr(r, c) for c in columns} for r in rows], columns, state.out)


@app.command()
@reports_errors
def schema(
    ctx: typer.Context,
    kind: Annotated[SchemaKind, typer.Argument(help="Document type")],
):
    """Print the JSON schema of an emitted document."""
    models = {
        SchemaKind.radio_map: RadioMap,
        SchemaKind.eval_report: EvalReport,
        SchemaKind.match_params: MatchParams,
        SchemaKind.scene: SceneSpec,
    }
    _emit_json(models[kind].model_json_schema(), _state(ctx).out)


def main() -> None:
    """Console entry point; usage errors exit with 1."""
    try:
        code = app(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as e:
        e.show()
        sys.exit(1)
    if isinstance(code, int):
        sys.exit(code)

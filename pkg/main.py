"""AngLoc API - Main FastAPI Application.

Provides endpoints for:
- Location estimation from per-AP CSI traces against the configured radio map
- Joint AoA-ToF analysis of a single trace
"""

import logging

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field, ValidationError

from angloc import __version__
from angloc.aoa import analyze
from angloc.calibration import calibrate
from angloc.classes.radio import CsiTrace, RadioConfig
from angloc.classes.radio_map import RadioMap
from angloc.config import load_settings
from angloc.errors import AnglocError, InvalidConfigError
from angloc.locator import locate

app = FastAPI(
    title="AngLoc API",
    description="CSI fingerprint indoor localization with AR entropy and AoA-ToF matching",
    version=__version__,
)

settings = load_settings()

logging.basicConfig(
    level=settings.log_level.upper(),
    format="%(asctime)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Module-level cache for the radio map
_radio_map_cache: RadioMap | None = None


def get_radio_map() -> RadioMap:
    """Load the radio map from ``settings.radio_map_path`` on first use.

    Raises:
        HTTPException: 503 if no radio map is configured or it cannot be read.
    """
    global _radio_map_cache  # noqa: PLW0603

    if _radio_map_cache is None:
        if settings.radio_map_path is None:
            raise HTTPException(status_code=503, detail="No radio map configured (ANGLOC_RADIO_MAP_PATH)")
        try:
            _radio_map_cache = RadioMap.load(settings.radio_map_path)
        except (OSError, ValidationError) as e:
            logger.error(f"Cannot load radio map: {e}")
            raise HTTPException(status_code=503, detail=f"Cannot load radio map: {e}") from e

    return _radio_map_cache


def set_radio_map(radio_map: RadioMap | None) -> None:
    """Replace the cached radio map (``None`` reloads from settings on next use)."""
    global _radio_map_cache  # noqa: PLW0603
    _radio_map_cache = radio_map


def to_http_error(error: AnglocError) -> HTTPException:
    status = 422 if isinstance(error, InvalidConfigError) else 400
    return HTTPException(status_code=status, detail=str(error))


@app.get("/")
def root():
    """Health check endpoint."""
    return {"status": "ok", "service": "AngLoc API", "version": __version__}


@app.get("/ping")
def ping():
    """Lightweight health check endpoint for monitoring services."""
    return {"status": "ok"}


class TracePayload(BaseModel):
    """One CSI trace as JSON.

    ``csi`` is indexed [packet][rx][tx][subcarrier] and holds ``[re, im]`` pairs.
    """

    radio: RadioConfig = Field(default_factory=RadioConfig)
    csi: list = Field(..., min_length=1, description="Packets of [rx][tx][subcarrier][re, im]")
    timestamps: list[float] | None = None
    source_id: str = ""

    def to_trace(self) -> CsiTrace:
        try:
            values = np.asarray(self.csi, dtype=float)
        except ValueError as e:
            raise HTTPException(status_code=422, detail=f"Ragged CSI array: {e}") from e
        if values.ndim != 5 or values.shape[-1] != 2:
            raise HTTPException(
                status_code=422,
                detail=f"CSI must have shape (packets, rx, tx, subcarriers, 2), got {values.shape}",
            )
        tensor = values[..., 0] + 1j * values[..., 1]
        return CsiTrace.from_tensor(self.radio, tensor, self.timestamps, self.source_id)


class MatchOverrides(BaseModel):
    m_c: int | None = Field(default=None, ge=1)
    w_a: float | None = Field(default=None, ge=0.0, le=1.0)
    rho_e: float | None = Field(default=None, gt=0.0)
    rho_a: float | None = Field(default=None, gt=0.0)


class LocateRequest(BaseModel):
    """Online traces keyed by AP id plus optional matching overrides."""

    traces: dict[str, TracePayload] = Field(..., min_length=1)
    params: MatchOverrides = Field(default_factory=MatchOverrides)


class SpectrumRequest(BaseModel):
    trace: TracePayload
    calibrate: bool = Field(default=True, description="Run phase calibration first")


@app.post("/locate")
async def locate_endpoint(request: LocateRequest) -> dict:
    """Estimate a location from per-AP online traces.

    Returns:
        {
            "estimate": {"x": 3.1, "y": 4.6},
            "candidates": ["rp012", ...],
            "distances": [{"entropy": 1.2, "aoa": 4.5}, ...],
            "kernels": [0.61, ...]
        }
    """
    radio_map = get_radio_map()
    try:
        params = radio_map.params.override(**request.params.model_dump())
        traces = {ap_id: payload.to_trace() for ap_id, payload in request.traces.items()}
        estimate = locate(traces, radio_map, settings, params)
    except AnglocError as e:
        logger.error(f"Location estimation failed: {e}")
        raise to_http_error(e) from e
    logger.info(f"Located request at ({estimate.x:.2f}, {estimate.y:.2f})")
    return estimate.to_output()


@app.post("/aoa-spectrum")
async def aoa_spectrum(request: SpectrumRequest) -> dict:
    """Joint AoA-ToF analysis of one trace: peaks and first-arrival fingerprint."""
    try:
        trace = request.trace.to_trace()
        if request.calibrate:
            trace, _ = calibrate(trace, settings.calibration)
        result = analyze(trace, settings.aoa)
    except AnglocError as e:
        logger.error(f"AoA analysis failed: {e}")
        raise to_http_error(e) from e
    return {
        "fingerprint": result.fingerprint.model_dump(),
        "peaks": [{"theta": t, "tau": tau, "power": p} for t, tau, p in result.peaks],
        "argmax": dict(zip(("theta", "tau"), result.spectrum.argmax(), strict=True)),
    }

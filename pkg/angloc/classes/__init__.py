from .channel import ChannelSpec, ImpairmentSpec, PathComponent, RoomSpec, ScenePoint
from .fingerprints import AoaTofFingerprint, ArModel, EntropyFingerprint, RescaleBounds, SpectrumGrid
from .radio import (
    INTEL5300_SUBCARRIERS_20MHZ,
    CirVector,
    CsiPacket,
    CsiTrace,
    RadioConfig,
    cfr_to_cir,
    cir_to_cfr,
)
from .radio_map import (
    CandidateScore,
    LocationEstimate,
    MatchParams,
    RadioMap,
    RpEntry,
    SurveyPoint,
)

__all__ = [
    "AoaTofFingerprint",
    "ArModel",
    "CandidateScore",
    "ChannelSpec",
    "CirVector",
    "CsiPacket",
    "CsiTrace",
    "EntropyFingerprint",
    "INTEL5300_SUBCARRIERS_20MHZ",
    "ImpairmentSpec",
    "LocationEstimate",
    "MatchParams",
    "PathComponent",
    "RadioConfig",
    "RadioMap",
    "RescaleBounds",
    "RoomSpec",
    "RpEntry",
    "ScenePoint",
    "SpectrumGrid",
    "SurveyPoint",
    "cfr_to_cir",
    "cir_to_cfr",
]

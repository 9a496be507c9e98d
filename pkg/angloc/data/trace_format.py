"""Portable binary CSI trace format.

Little-endian throughout::

    magic "CSIT" | version u16 | n_rx u8 | n_tx u8 | n_sub u16 | n_packets u32
    | f_c f64 | f_delta f64 | d f64
    [version 2 only] flags u8
        bit 0: source id (u16 byte length + utf-8)
        bit 1: location tag (x f64, y f64)
        bit 2: subcarrier index map (n_sub x i16)
        bit 3: propagation speed c (f64)
    n_packets x { timestamp f64 | n_rx*n_tx*n_sub x (real f32, imag f32) }

Packets are stored in [rx][tx][subcarrier] order. Version 1 is written
whenever a trace carries nothing beyond the version 1 header, so files stay
readable by tools that only know that layout.
"""

import io
import logging
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from ..classes.radio import SPEED_OF_LIGHT, CsiTrace, RadioConfig
from ..errors import AnglocError, InvalidInputError, TraceFormatError
from ..utils import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"CSIT"
VERSION_PLAIN = 1
VERSION_EXTENDED = 2
SUPPORTED_VERSIONS = (VERSION_PLAIN, VERSION_EXTENDED)

HEADER = struct.Struct("<4sHBBHIddd")

FLAG_SOURCE_ID = 0x01
FLAG_LOCATION = 0x02
FLAG_INDICES = 0x04
FLAG_SPEED = 0x08


def _extension_flags(trace: CsiTrace) -> int:
    flags = 0
    if trace.source_id:
        flags |= FLAG_SOURCE_ID
    if trace.location_tag is not None:
        flags |= FLAG_LOCATION
    if trace.config.subcarrier_indices is not None:
        flags |= FLAG_INDICES
    if trace.config.c != SPEED_OF_LIGHT:
        flags |= FLAG_SPEED
    return flags


def dumps_trace(trace: CsiTrace) -> bytes:
    """Serialize a trace. Complex values are stored as float32 pairs."""
    n = len(trace)
    cfg = trace.config
    flags = _extension_flags(trace)
    version = VERSION_EXTENDED if flags else VERSION_PLAIN

    out = io.BytesIO()
    out.write(
        HEADER.pack(
            MAGIC, version, cfg.n_rx, cfg.n_tx, cfg.n_sub, n, cfg.f_c, cfg.f_delta, cfg.d
        )
    )
    if version == VERSION_EXTENDED:
        out.write(struct.pack("<B", flags))
        if flags & FLAG_SOURCE_ID:
            name = trace.source_id.encode("utf-8")
            out.write(struct.pack("<H", len(name)))
            out.write(name)
        if flags & FLAG_LOCATION:
            out.write(struct.pack("<dd", *trace.location_tag))
        if flags & FLAG_INDICES:
            out.write(np.asarray(cfg.subcarrier_indices, dtype="<i2").tobytes())
        if flags & FLAG_SPEED:
            out.write(struct.pack("<d", cfg.c))

    stamps = trace.timestamps()
    tensor = trace.tensor().astype(np.complex64)
    for stamp, h in zip(stamps, tensor, strict=True):
        out.write(struct.pack("<d", stamp))
        out.write(np.ascontiguousarray(h).view(np.float32).astype("<f4").tobytes())
    return out.getvalue()


def save_trace(trace: CsiTrace, sink: str | Path | BinaryIO) -> None:
    """Write a trace to a path (atomically) or an open binary stream."""
    data = dumps_trace(trace)
    if isinstance(sink, str | Path):
        atomic_write_bytes(sink, data)
        logger.debug(f"Saved {len(trace)} packets to {sink}")
    else:
        sink.write(data)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise TraceFormatError(
                f"Truncated {what}: need {size} bytes, {len(self.data) - self.offset} left",
                self.offset,
            )
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads_trace(data: bytes) -> CsiTrace:
    """Parse a serialized trace.

    Raises:
        TraceFormatError: On bad magic, unknown version, truncation or trailing bytes.
    """
    reader = _Reader(bytes(data))
    if len(reader.data) < len(MAGIC) or reader.data[: len(MAGIC)] != MAGIC:
        raise TraceFormatError("Bad magic, not a CSIT trace", 0)
    _magic, version, n_rx, n_tx, n_sub, n_packets, f_c, f_delta, d = HEADER.unpack(
        reader.take(HEADER.size, "header")
    )
    if version not in SUPPORTED_VERSIONS:
        raise TraceFormatError(f"Unsupported trace format version {version}", 4)
    if n_packets < 1:
        raise TraceFormatError("Trace declares no packets", 10)

    source_id = ""
    location = None
    indices = None
    c = SPEED_OF_LIGHT
    if version == VERSION_EXTENDED:
        (flags,) = reader.unpack("<B", "extension flags")
        if flags & FLAG_SOURCE_ID:
            (length,) = reader.unpack("<H", "source id length")
            start = reader.offset
            try:
                source_id = reader.take(length, "source id").decode("utf-8")
            except UnicodeDecodeError as e:
                raise TraceFormatError("Source id is not valid utf-8", start) from e
        if flags & FLAG_LOCATION:
            location = reader.unpack("<dd", "location tag")
        if flags & FLAG_INDICES:
            raw = reader.take(2 * n_sub, "subcarrier index map")
            indices = tuple(int(v) for v in np.frombuffer(raw, dtype="<i2"))
        if flags & FLAG_SPEED:
            (c,) = reader.unpack("<d", "propagation speed")

    try:
        config = RadioConfig(
            n_rx=n_rx,
            n_tx=n_tx,
            n_sub=n_sub,
            f_c=f_c,
            f_delta=f_delta,
            d=d,
            c=c,
            subcarrier_indices=indices,
        )
    except AnglocError as e:
        raise TraceFormatError(f"Invalid radio header: {e}", 6) from e

    entries = n_rx * n_tx * n_sub
    packet_size = 8 + 8 * entries
    available = len(reader.data) - reader.offset
    if available < n_packets * packet_size:
        complete = available // packet_size
        raise TraceFormatError(
            f"Truncated packet {complete} of {n_packets}", reader.offset + complete * packet_size
        )
    stamps = np.empty(n_packets)
    tensor = np.empty((n_packets, n_rx, n_tx, n_sub), dtype=np.complex64)
    for i in range(n_packets):
        (stamps[i],) = struct.unpack("<d", reader.take(8, "timestamp"))
        values = np.frombuffer(reader.take(8 * entries, "packet payload"), dtype="<f4")
        tensor[i] = values.astype(np.float32).view(np.complex64).reshape(n_rx, n_tx, n_sub)
    if reader.offset != len(reader.data):
        raise TraceFormatError(
            f"{len(reader.data) - reader.offset} unexpected trailing bytes", reader.offset
        )
    try:
        return CsiTrace.from_tensor(config, tensor, stamps, source_id, location)
    except InvalidInputError as e:
        raise TraceFormatError(f"Invalid packet data: {e}", HEADER.size) from e


def load_trace(source: str | Path | BinaryIO) -> CsiTrace:
    if isinstance(source, str | Path):
        data = Path(source).read_bytes()
    else:
        data = source.read()
    trace = loads_trace(data)
    logger.debug(f"Loaded {len(trace)} packets from {source}")
    return trace

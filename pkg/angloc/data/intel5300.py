"""Reader for Intel 5300 CSI Tool captures.

A capture is a stream of records, each a 2-byte big-endian field length
followed by a 1-byte code and ``field_length - 1`` bytes of body. Code 0xBB
carries a beamforming feedback (CSI) record; other codes are skipped.

The CSI payload holds 30 subcarrier groups. Each group starts with 3 unused
bits followed by ``n_rx * n_tx`` complex entries of signed 8-bit real and
imaginary parts, packed contiguously without byte alignment.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..classes.radio import INTEL5300_SUBCARRIERS_20MHZ, CsiPacket, CsiTrace, RadioConfig
from ..errors import CorruptRecordError, TraceFormatError

logger = logging.getLogger(__name__)

CSI_CODE = 0xBB
N_GROUPS = 30
# OFDM tone spacing in 20 MHz mode; the index map is expressed in these units.
TONE_SPACING_HZ = 312.5e3

BFEE_HEADER = struct.Struct("<IHHBBBBBbBBHH")


@dataclass(frozen=True)
class Intel5300Metadata:
    """Per-record fields reported next to the CSI matrix.

    RSSI, AGC and noise are kept as reported; no absolute-power scaling is applied.
    """

    timestamp_low: int
    bfee_count: int
    n_rx: int
    n_tx: int
    rssi_a: int
    rssi_b: int
    rssi_c: int
    noise: int
    agc: int
    antenna_sel: int
    rate: int
    perm: tuple[int, ...]
    offset: int


def expected_payload_length(n_rx: int, n_tx: int) -> int:
    """Bytes needed for 30 groups of 3 guard bits plus 16 bits per entry."""
    return (N_GROUPS * (n_rx * n_tx * 16 + 3) + 7) // 8


def antenna_permutation(antenna_sel: int, n_rx: int) -> tuple[int, ...]:
    return tuple((antenna_sel >> (2 * i)) & 0x3 for i in range(n_rx))


def unpack_csi_payload(payload: bytes, n_rx: int, n_tx: int) -> np.ndarray:
    """Decode the bit-packed payload into a raw (n_rx, n_tx, 30) complex array."""
    n = n_rx * n_tx
    p = np.frombuffer(bytes(payload) + b"\x00", dtype=np.uint8).astype(np.uint16)
    group = np.arange(N_GROUPS)[:, None]
    entry = np.arange(n)[None, :]
    real_pos = 3 * (group + 1) + 16 * (n * group + entry)

    def read(pos):
        byte, rem = np.divmod(pos, 8)
        value = ((p[byte] >> rem) | (p[byte + 1] << (8 - rem))) & 0xFF
        return value.astype(np.uint8).view(np.int8).astype(float)

    values = read(real_pos) + 1j * read(real_pos + 8)
    # entry j of a group is (tx = j % n_tx, rx = j // n_tx)
    return values.reshape(N_GROUPS, n_rx, n_tx).transpose(1, 2, 0)


def _apply_permutation(raw: np.ndarray, perm: tuple[int, ...], offset: int) -> np.ndarray:
    n_rx = raw.shape[0]
    if sorted(perm) != list(range(n_rx)):
        logger.warning(
            f"Invalid antenna permutation {perm} in record at offset {offset}, keeping raw order"
        )
        return raw
    out = np.empty_like(raw)
    out[list(perm)] = raw
    return out


def _parse_bfee(body: bytes, offset: int) -> tuple[CsiPacket, Intel5300Metadata]:
    if len(body) < BFEE_HEADER.size:
        raise TraceFormatError("Truncated CSI record header", offset)
    (
        timestamp_low,
        bfee_count,
        _reserved,
        n_rx,
        n_tx,
        rssi_a,
        rssi_b,
        rssi_c,
        noise,
        agc,
        antenna_sel,
        length,
        rate,
    ) = BFEE_HEADER.unpack_from(body)
    if n_rx < 1 or n_tx < 1:
        raise CorruptRecordError(f"Record declares {n_rx}x{n_tx} antennas", offset)
    expected = expected_payload_length(n_rx, n_tx)
    if length != expected:
        raise CorruptRecordError(
            f"CSI payload length {length} inconsistent with {n_rx}x{n_tx} antennas (expected {expected})",
            offset,
        )
    payload = body[BFEE_HEADER.size : BFEE_HEADER.size + length]
    if len(payload) < length:
        raise TraceFormatError(
            f"Truncated CSI payload: {len(payload)} of {length} bytes", offset + BFEE_HEADER.size
        )
    perm = antenna_permutation(antenna_sel, n_rx)
    h = _apply_permutation(unpack_csi_payload(payload, n_rx, n_tx), perm, offset)
    meta = Intel5300Metadata(
        timestamp_low=timestamp_low,
        bfee_count=bfee_count,
        n_rx=n_rx,
        n_tx=n_tx,
        rssi_a=rssi_a,
        rssi_b=rssi_b,
        rssi_c=rssi_c,
        noise=noise,
        agc=agc,
        antenna_sel=antenna_sel,
        rate=rate,
        perm=perm,
        offset=offset,
    )
    return CsiPacket(timestamp_low * 1e-6, h), meta


def parse_intel5300(data: bytes) -> list[tuple[CsiPacket, Intel5300Metadata]]:
    """Decode every CSI record of a capture.

    Raises:
        TraceFormatError: If the stream ends inside a record.
        CorruptRecordError: If a record's payload length contradicts its antenna counts.
    """
    data = bytes(data)
    records = []
    skipped = 0
    offset = 0
    while offset < len(data):
        if offset + 2 > len(data):
            raise TraceFormatError("Capture ends inside a record length field", offset)
        (field_len,) = struct.unpack_from(">H", data, offset)
        if field_len < 1:
            raise TraceFormatError("Record declares zero length", offset)
        start = offset + 2
        end = start + field_len
        if end > len(data):
            raise TraceFormatError(
                f"Truncated record: {field_len} bytes declared, {len(data) - start} available",
                offset,
            )
        code = data[start]
        if code == CSI_CODE:
            records.append(_parse_bfee(data[start + 1 : end], start + 1))
        else:
            skipped += 1
        offset = end
    logger.info(f"Parsed {len(records)} CSI records, skipped {skipped} other records")
    return records


def read_intel5300(path: str | Path) -> list[tuple[CsiPacket, Intel5300Metadata]]:
    return parse_intel5300(Path(path).read_bytes())


def intel5300_radio(n_rx: int, n_tx: int, f_c: float = 5.32e9) -> RadioConfig:
    """Radio config for the grouped 20 MHz subcarrier map."""
    return RadioConfig(
        n_rx=n_rx,
        n_tx=n_tx,
        n_sub=N_GROUPS,
        f_c=f_c,
        f_delta=TONE_SPACING_HZ,
        subcarrier_indices=INTEL5300_SUBCARRIERS_20MHZ,
    )


def intel5300_to_trace(
    records: list[tuple[CsiPacket, Intel5300Metadata]],
    source_id: str = "",
    location_tag: tuple[float, float] | None = None,
    f_c: float = 5.32e9,
) -> CsiTrace:
    """Collect parsed records into a trace.

    Records whose antenna counts differ from the first record are dropped with a warning.
    """
    if not records:
        raise TraceFormatError("Capture contains no CSI records", 0)
    first = records[0][1]
    packets = [p for p, m in records if (m.n_rx, m.n_tx) == (first.n_rx, first.n_tx)]
    if len(packets) < len(records):
        logger.warning(
            f"Dropped {len(records) - len(packets)} records whose antenna layout differs "
            f"from {first.n_rx}x{first.n_tx}"
        )
    return CsiTrace(intel5300_radio(first.n_rx, first.n_tx, f_c), packets, source_id, location_tag)

"""Builders shared by the unit tests."""

import struct

import numpy as np

from angloc.classes.channel import ImpairmentSpec, PathComponent, RoomSpec
from angloc.classes.radio import CsiTrace, RadioConfig
from angloc.data.scene import SceneSpec
from angloc.simulator import synth_trace

BFEE = struct.Struct("<IHHBBBBBbBBHH")


def random_trace(rng: np.random.Generator, n_packets: int = 4, config: RadioConfig | None = None) -> CsiTrace:
    config = config or RadioConfig()
    shape = (n_packets, *config.shape)
    tensor = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return CsiTrace.from_tensor(config, tensor, np.arange(n_packets) * 1e-3, "ap1")


def single_path_trace(
    theta: float,
    tau: float = 0.0,
    n_packets: int = 15,
    snr_db: float | None = None,
    seed: int = 0,
    config: RadioConfig | None = None,
) -> CsiTrace:
    path = PathComponent(alpha=1.0, phi=0.3, tau=tau, theta=theta)
    return synth_trace([path], config or RadioConfig(), ImpairmentSpec(snr_db=snr_db), n_packets, seed)


def pack_csi_bits(raw: np.ndarray) -> bytes:
    """Bit-pack a raw (n_rx, n_tx, 30) int8 CSI matrix the way the firmware does.

    Each of the 30 groups holds 3 zero bits followed by the entries of
    rx-major, tx-minor order, real then imaginary byte, least significant
    bit first.
    """
    n_rx, n_tx, n_groups = raw.shape
    bits = []
    for g in range(n_groups):
        bits.extend([0, 0, 0])
        for rx in range(n_rx):
            for tx in range(n_tx):
                for part in (raw[rx, tx, g].real, raw[rx, tx, g].imag):
                    byte = int(part) & 0xFF
                    bits.extend((byte >> i) & 1 for i in range(8))
    return np.packbits(np.array(bits, dtype=np.uint8), bitorder="little").tobytes()


def intel_record(
    h: np.ndarray,
    perm: tuple[int, ...] | None = None,
    timestamp_low: int = 1000,
    bfee_count: int = 1,
    payload_length: int | None = None,
) -> bytes:
    """One framed 0xBB record whose decoded (permuted) CSI equals ``h``."""
    n_rx, n_tx, _ = h.shape
    perm = perm or tuple(range(n_rx))
    raw = np.empty_like(h)
    for i, p in enumerate(perm):
        raw[i] = h[p]
    payload = pack_csi_bits(raw)
    antenna_sel = sum(p << (2 * i) for i, p in enumerate(perm))
    header = BFEE.pack(
        timestamp_low,
        bfee_count,
        0,
        n_rx,
        n_tx,
        30,
        31,
        32,
        -92,
        40,
        antenna_sel,
        len(payload) if payload_length is None else payload_length,
        0x1C113,
    )
    body = bytes([0xBB]) + header + payload
    return struct.pack(">H", len(body)) + body


def other_record(code: int = 0xC1, size: int = 5) -> bytes:
    body = bytes([code]) + bytes(size)
    return struct.pack(">H", len(body)) + body


def random_int8_csi(rng: np.random.Generator, n_rx: int = 3, n_tx: int = 1) -> np.ndarray:
    re = rng.integers(-128, 128, (n_rx, n_tx, 30))
    im = rng.integers(-128, 128, (n_rx, n_tx, 30))
    return re + 1j * im


def small_scene(n_packets: int = 100, snr_db: float = 30.0, test_points=None) -> SceneSpec:
    """4 x 3 m room, 12 reference points on a 1 m grid, two access points."""
    room = RoomSpec(
        width=4.0,
        height=3.0,
        tx_positions=[(0.2, 1.5), (2.0, 0.1)],
        array_orientations=[0.0, 90.0],
    )
    return SceneSpec(
        room=room,
        rp_grid_spacing=1.0,
        test_points=test_points if test_points is not None else [(1.5, 1.5), (2.0, 1.0)],
        impairments=ImpairmentSpec(sfo=10e-9, sto_taps=2, cfo_step=0.1, cpo=0.3, snr_db=snr_db),
        n_packets=n_packets,
        seed=3,
    )

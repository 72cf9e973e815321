"""Binary framing of converter samples for the TCP link.

A packet is a little-endian header, a payload of ``n`` samples and a
CRC-16/CCITT-FALSE trailer computed over everything between the magic and
the CRC::

    magic(2) version(1) flags(1) seq(u32) t_us(u64) n(u8) payload crc(u16)

Each sample carries 8 big-endian 24-bit converter counts followed by
3 accelerometer and 3 gyroscope readings as little-endian int16.
"""

import binascii
import logging
import struct
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from ..core import ADC_CHANNELS, SAMPLE_PERIOD_US, SampleFrame
from ..exceptions import ProtocolError

logger = logging.getLogger(__name__)

MAGIC = b"\xa5\x5a"
VERSION = 1
HEADER = struct.Struct("<2sBBIQB")
CRC = struct.Struct("<H")
SAMPLE_SIZE = ADC_CHANNELS * 3 + 6 * 2
MAX_FRAMES = 25
DEFAULT_FRAMES_PER_PACKET = 10

FLAG_SIMULATED = 0x01

# backward seq jumps up to this size are late packets; larger ones are a device restart
REORDER_WINDOW_FRAMES = 250

_U32 = 2**32


def crc16_ccitt(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: polynomial 0x1021, initial value 0xFFFF, no reflection."""
    return binascii.crc_hqx(data, 0xFFFF)


def packet_size(n_frames: int) -> int:
    return HEADER.size + n_frames * SAMPLE_SIZE + CRC.size


@dataclass(frozen=True)
class Packet:
    seq: int
    t_us: int
    frames: Sequence[SampleFrame]
    flags: int = 0
    version: int = VERSION


@dataclass(frozen=True)
class Gap:
    first_seq: int
    last_seq: int

    @property
    def n_missing(self) -> int:
        return self.last_seq - self.first_seq + 1


def _pack_payload(frames: Sequence[SampleFrame]) -> bytes:
    adc = np.array([frame.adc for frame in frames], dtype=np.int64) & 0xFFFFFF
    adc_bytes = np.stack(
        [(adc >> 16) & 0xFF, (adc >> 8) & 0xFF, adc & 0xFF], axis=-1
    ).astype(np.uint8)
    imu = np.array([frame.accel + frame.gyro for frame in frames], dtype="<i2")
    payload = np.concatenate(
        [adc_bytes.reshape(len(frames), -1), imu.view(np.uint8).reshape(len(frames), -1)],
        axis=1,
    )
    return payload.tobytes()


def _unpack_payload(payload: bytes, n: int):
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(n, SAMPLE_SIZE)
    adc_bytes = raw[:, : ADC_CHANNELS * 3].reshape(n, ADC_CHANNELS, 3).astype(np.int32)
    adc = (adc_bytes[..., 0] << 16) | (adc_bytes[..., 1] << 8) | adc_bytes[..., 2]
    adc = np.where(adc >= 2**23, adc - 2**24, adc)
    imu = np.ascontiguousarray(raw[:, ADC_CHANNELS * 3 :]).view("<i2").reshape(n, 6)
    return adc, imu


def encode_packet(frames: Sequence[SampleFrame], flags: int = 0) -> bytes:
    frames = list(frames)
    if not 1 <= len(frames) <= MAX_FRAMES:
        raise ValueError(f"a packet holds 1 to {MAX_FRAMES} frames, got {len(frames)}")

    first = frames[0]
    for i, frame in enumerate(frames):
        if frame.seq != first.seq + i:
            raise ValueError(f"frames are not contiguous in seq at position {i}")
        if frame.t_us != first.t_us + i * SAMPLE_PERIOD_US:
            raise ValueError(f"frame {frame.seq} is off the {SAMPLE_PERIOD_US} us sample grid")

    body = (
        HEADER.pack(MAGIC, VERSION, flags, first.seq % _U32, first.t_us, len(frames))[2:]
        + _pack_payload(frames)
    )
    return MAGIC + body + CRC.pack(crc16_ccitt(body))


def decode_packet(data: bytes) -> Packet:
    """Decode exactly one packet, raising ProtocolError on any framing fault."""
    if len(data) < packet_size(1):
        raise ProtocolError(f"packet too short: {len(data)} bytes")
    magic, version, flags, seq, t_us, n = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic.hex()}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    if not 1 <= n <= MAX_FRAMES:
        raise ProtocolError(f"frame count {n} outside 1..{MAX_FRAMES}")
    if len(data) != packet_size(n):
        raise ProtocolError(f"length mismatch: {len(data)} bytes for {n} frames")

    (crc,) = CRC.unpack_from(data, len(data) - CRC.size)
    expected = crc16_ccitt(data[2 : len(data) - CRC.size])
    if crc != expected:
        raise ProtocolError(f"CRC mismatch: received 0x{crc:04X}, computed 0x{expected:04X}")

    adc, imu = _unpack_payload(data[HEADER.size : len(data) - CRC.size], n)
    frames = [
        SampleFrame(
            seq=seq + i,
            t_us=t_us + i * SAMPLE_PERIOD_US,
            adc=tuple(adc[i].tolist()),
            accel=tuple(imu[i, :3].tolist()),
            gyro=tuple(imu[i, 3:].tolist()),
        )
        for i in range(n)
    ]
    return Packet(seq=seq, t_us=t_us, frames=frames, flags=flags, version=version)


@dataclass
class DecodeStats:
    packets: int = 0
    frames: int = 0
    crc_failures: int = 0
    framing_errors: int = 0
    resyncs: int = 0
    stale_packets: int = 0
    restarts: int = 0
    skipped_bytes: int = 0
    gaps: List[Gap] = field(default_factory=list)


class StreamDecoder:
    """Incremental decoder that tolerates joining a byte stream mid-packet."""

    def __init__(self):
        self.buffer = bytearray()
        self.stats = DecodeStats()
        self.next_seq = None

    def _skip(self, n_bytes: int) -> None:
        del self.buffer[:n_bytes]
        self.stats.skipped_bytes += n_bytes

    def feed(self, data: bytes) -> List[SampleFrame]:
        self.buffer.extend(data)
        frames: List[SampleFrame] = []

        while True:
            start = self.buffer.find(MAGIC)
            if start < 0:
                # Keep a trailing byte that may begin the next magic.
                keep = 1 if self.buffer[-1:] == MAGIC[:1] else 0
                if len(self.buffer) > keep:
                    self.stats.resyncs += 1
                    self._skip(len(self.buffer) - keep)
                break
            if start:
                logger.debug("resynchronizing: dropping %d bytes before magic", start)
                self.stats.resyncs += 1
                self._skip(start)

            if len(self.buffer) < HEADER.size:
                break
            _, version, _, _, _, n = HEADER.unpack_from(self.buffer)
            if version != VERSION or not 1 <= n <= MAX_FRAMES:
                self.stats.framing_errors += 1
                self._skip(1)
                continue

            size = packet_size(n)
            if len(self.buffer) < size:
                break

            try:
                packet = decode_packet(bytes(self.buffer[:size]))
            except ProtocolError as exc:
                logger.warning("dropping packet: %s", exc)
                self.stats.crc_failures += 1
                self._skip(1)
                continue

            del self.buffer[:size]
            frames.extend(self._accept(packet))

        return frames

    def _accept(self, packet: Packet) -> List[SampleFrame]:
        if self.next_seq is not None:
            ahead = (packet.seq - self.next_seq) % _U32
            if ahead >= _U32 // 2:
                behind = _U32 - ahead
                if behind <= REORDER_WINDOW_FRAMES:
                    self.stats.stale_packets += 1
                    logger.warning(
                        "discarding out-of-order packet seq=%d (expected %d)", packet.seq, self.next_seq
                    )
                    return []
                self.stats.restarts += 1
                logger.warning(
                    "seq jumped back %d frames to %d; treating the stream as restarted", behind, packet.seq
                )
            elif ahead:
                gap = Gap(self.next_seq, self.next_seq + ahead - 1)
                self.stats.gaps.append(gap)
                logger.warning("gap of %d frames: seq %d..%d", gap.n_missing, gap.first_seq, gap.last_seq)

        self.next_seq = (packet.seq + len(packet.frames)) % _U32
        self.stats.packets += 1
        self.stats.frames += len(packet.frames)
        return list(packet.frames)


@dataclass(frozen=True)
class DecodeResult:
    frames: List[SampleFrame]
    gaps: List[Gap]
    stats: DecodeStats


def decode_stream(data: bytes) -> DecodeResult:
    decoder = StreamDecoder()
    frames = decoder.feed(data)
    return DecodeResult(frames=frames, gaps=list(decoder.stats.gaps), stats=decoder.stats)


def packetize(
    frames: Sequence[SampleFrame], frames_per_packet: int = DEFAULT_FRAMES_PER_PACKET, flags: int = 0
):
    """Yield encoded packets covering `frames` in order."""
    for i in range(0, len(frames), frames_per_packet):
        yield encode_packet(frames[i : i + frames_per_packet], flags=flags)

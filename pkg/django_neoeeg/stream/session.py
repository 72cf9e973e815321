"""Chunked on-disk session format that can be read while it is being written.

Layout::

    b"NEOEEGSF" | u32 header length | header (UTF-8 JSON)
    repeated chunks:
        tag(4) | u32 index | u32 n_samples | u32 body length | u32 crc32(body) | body

``DATA`` bodies hold channel-major float32 microvolts followed by the IMU
track (6 x int16 per sample). ``ANNO`` bodies hold annotation lines.
"""

import json
import logging
import struct
import zlib
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import BinaryIO, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core import (
    ACCEL_LSB_PER_G,
    DEFAULT_GAIN,
    DEFAULT_VREF_V,
    DEVICE_FS_HZ,
    GYRO_LSB_PER_DPS,
    Recording,
    SampleFrame,
    adc_to_microvolts,
)
from ..exceptions import StorageError
from .annotations import Annotation, format_annotations, parse_annotations

logger = logging.getLogger(__name__)

MAGIC = b"NEOEEGSF"
LENGTH = struct.Struct("<I")
CHUNK = struct.Struct("<4sIIII")
DATA_TAG = b"DATA"
ANNOTATION_TAG = b"ANNO"
DEFAULT_CHUNK_SAMPLES = 250
DEFAULT_CHANNELS = ("Fp1", "Fp2", "C3", "C4", "T3", "T4", "O1", "O2")


@dataclass(frozen=True)
class SessionHeader:
    fs_hz: float = DEVICE_FS_HZ
    channels: Tuple[str, ...] = DEFAULT_CHANNELS
    gain: float = DEFAULT_GAIN
    vref_v: float = DEFAULT_VREF_V
    start_time: str = ""
    device_id: str = "neoeeg-sim"
    montage: str = "reduced-neonatal"
    chunk_samples: int = DEFAULT_CHUNK_SAMPLES
    imu_channels: int = 6

    def to_bytes(self) -> bytes:
        values = asdict(self)
        values["channels"] = list(self.channels)
        return json.dumps(values, sort_keys=True).encode()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SessionHeader":
        values = json.loads(raw.decode())
        values["channels"] = tuple(values["channels"])
        return cls(**values)


@dataclass
class Session:
    header: SessionHeader
    data: np.ndarray
    imu: np.ndarray
    annotations: List[Annotation] = field(default_factory=list)
    chunks: int = 0
    truncated: bool = False

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def to_recording(self) -> Recording:
        return Recording(
            fs_hz=self.header.fs_hz,
            channels=self.header.channels,
            data=self.data.astype(np.float64),
            meta={
                "device_id": self.header.device_id,
                "montage": self.header.montage,
                "start_time": self.header.start_time,
            },
        )

    def accel_g(self) -> np.ndarray:
        return self.imu[:3].astype(np.float64) / ACCEL_LSB_PER_G

    def gyro_dps(self) -> np.ndarray:
        return self.imu[3:].astype(np.float64) / GYRO_LSB_PER_DPS


class SessionWriter:
    """Single-writer appender; every completed chunk is flushed to disk."""

    def __init__(self, path: Union[str, Path], header: Optional[SessionHeader] = None):
        self.path = Path(path)
        self.header = header or SessionHeader(
            start_time=datetime.now(timezone.utc).isoformat(timespec="seconds")
        )
        self._uv: List[np.ndarray] = []
        self._imu: List[np.ndarray] = []
        self._pending = 0
        self.chunks_written = 0
        self.samples_written = 0
        try:
            self._fh: BinaryIO = self.path.open("wb")
            raw = self.header.to_bytes()
            self._fh.write(MAGIC + LENGTH.pack(len(raw)) + raw)
            self._fh.flush()
        except OSError as exc:
            raise StorageError(f"cannot create session file {self.path}: {exc}") from exc

    def __enter__(self) -> "SessionWriter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def write_frames(self, frames: Iterable[SampleFrame]) -> None:
        frames = list(frames)
        if not frames:
            return
        counts = np.array([frame.adc for frame in frames], dtype=np.int32).T
        uv = adc_to_microvolts(counts, vref_v=self.header.vref_v, gain=self.header.gain)
        imu = np.array([frame.accel + frame.gyro for frame in frames], dtype=np.int16).T
        self.write_block(uv, imu)

    def write_block(self, uv: np.ndarray, imu: Optional[np.ndarray] = None) -> None:
        uv = np.asarray(uv, dtype=np.float32)
        if uv.shape[0] != len(self.header.channels):
            raise ValueError(
                f"block has {uv.shape[0]} channels, header declares {len(self.header.channels)}"
            )
        if imu is None:
            # device at rest: 1 g on the z axis
            imu = np.zeros((self.header.imu_channels, uv.shape[1]), dtype=np.int16)
            imu[2] = ACCEL_LSB_PER_G
        self._uv.append(uv)
        self._imu.append(np.asarray(imu, dtype=np.int16))
        self._pending += uv.shape[1]
        while self._pending >= self.header.chunk_samples:
            self._emit(self.header.chunk_samples)

    def write_annotations(self, annotations: Sequence[Annotation]) -> None:
        body = format_annotations(annotations).encode()
        self._write_chunk(ANNOTATION_TAG, 0, body)

    def _emit(self, n: int) -> None:
        uv = np.concatenate(self._uv, axis=1)
        imu = np.concatenate(self._imu, axis=1)
        self._uv, self._imu = [uv[:, n:]], [imu[:, n:]]
        self._pending -= n
        body = uv[:, :n].astype("<f4").tobytes() + imu[:, :n].astype("<i2").tobytes()
        self._write_chunk(DATA_TAG, n, body)
        self.samples_written += n

    def _write_chunk(self, tag: bytes, n_samples: int, body: bytes) -> None:
        try:
            self._fh.write(
                CHUNK.pack(tag, self.chunks_written, n_samples, len(body), zlib.crc32(body))
                + body
            )
            self._fh.flush()
        except OSError as exc:
            raise StorageError(
                f"write to {self.path} failed after {self.chunks_written} chunks: {exc}"
            ) from exc
        self.chunks_written += 1

    def close(self) -> None:
        if self._fh.closed:
            return
        try:
            if self._pending:
                self._emit(self._pending)
        finally:
            self._fh.close()
        logger.info(
            "closed session %s: %d samples in %d chunks",
            self.path,
            self.samples_written,
            self.chunks_written,
        )


def record_session(
    frames: Iterable[SampleFrame],
    path: Union[str, Path],
    header: Optional[SessionHeader] = None,
    annotations: Sequence[Annotation] = (),
) -> Session:
    with SessionWriter(path, header) as writer:
        batch: List[SampleFrame] = []
        for frame in frames:
            batch.append(frame)
            if len(batch) >= writer.header.chunk_samples:
                writer.write_frames(batch)
                batch = []
        writer.write_frames(batch)
        if annotations:
            writer.write_annotations(annotations)
    return read_session(path)


def read_session(path: Union[str, Path]) -> Session:
    """Read every complete chunk; a torn final chunk is reported, not raised."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read session file {path}: {exc}") from exc

    if raw[: len(MAGIC)] != MAGIC:
        raise StorageError(f"{path} is not a session file")
    offset = len(MAGIC)
    if len(raw) < offset + LENGTH.size:
        raise StorageError(f"{path}: truncated header")
    (header_len,) = LENGTH.unpack_from(raw, offset)
    offset += LENGTH.size
    if len(raw) < offset + header_len:
        raise StorageError(f"{path}: truncated header")
    header = SessionHeader.from_bytes(raw[offset : offset + header_len])
    offset += header_len

    n_channels = len(header.channels)
    uv_blocks, imu_blocks = [], []
    annotations: List[Annotation] = []
    chunks = 0
    truncated = False

    while offset < len(raw):
        if len(raw) - offset < CHUNK.size:
            truncated = True
            break
        tag, index, n_samples, length, crc = CHUNK.unpack_from(raw, offset)
        body = raw[offset + CHUNK.size : offset + CHUNK.size + length]
        if len(body) < length:
            truncated = True
            break
        if zlib.crc32(body) != crc:
            logger.warning("%s: chunk %d failed its checksum; stopping", path, index)
            truncated = True
            break
        offset += CHUNK.size + length
        chunks += 1

        if tag == DATA_TAG:
            split = n_channels * n_samples * 4
            uv_blocks.append(np.frombuffer(body[:split], dtype="<f4").reshape(n_channels, n_samples))
            imu_blocks.append(
                np.frombuffer(body[split:], dtype="<i2").reshape(header.imu_channels, n_samples)
            )
        elif tag == ANNOTATION_TAG:
            annotations.extend(parse_annotations(body.decode()))
        else:
            logger.warning("%s: skipping unknown chunk tag %r", path, tag)

    if truncated:
        logger.warning("%s: incomplete final chunk; recovered %d chunks", path, chunks)

    data = (
        np.concatenate(uv_blocks, axis=1)
        if uv_blocks
        else np.zeros((n_channels, 0), dtype=np.float32)
    )
    imu = (
        np.concatenate(imu_blocks, axis=1)
        if imu_blocks
        else np.zeros((header.imu_channels, 0), dtype=np.int16)
    )
    return Session(
        header=header,
        data=data,
        imu=imu,
        annotations=annotations,
        chunks=chunks,
        truncated=truncated,
    )


def write_recording(
    recording: Recording,
    path: Union[str, Path],
    header: Optional[SessionHeader] = None,
    imu: Optional[np.ndarray] = None,
    annotations: Sequence[Annotation] = (),
) -> None:
    header = header or SessionHeader(
        fs_hz=recording.fs_hz,
        channels=recording.channels,
        device_id=recording.meta.get("device_id", "neoeeg"),
        montage=recording.meta.get("montage", "reduced-neonatal"),
        start_time=recording.meta.get("start_time", ""),
    )
    with SessionWriter(path, header) as writer:
        writer.write_block(recording.data, imu)
        if annotations:
            writer.write_annotations(annotations)

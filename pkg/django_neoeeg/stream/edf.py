"""Reader and writer for continuous European Data Format files."""

import logging
import re
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from ..core import Recording
from ..exceptions import EdfFormatError, StorageError

logger = logging.getLogger(__name__)

ANNOTATION_LABEL = "EDF Annotations"
DIGITAL_MIN = -32768
DIGITAL_MAX = 32767
UNIT_SCALE_TO_UV = {"uv": 1.0, "µv": 1.0, "mv": 1e3, "v": 1e6, "nv": 1e-3}

_FIXED_FIELDS = (
    ("version", 8),
    ("patient", 80),
    ("recording", 80),
    ("start_date", 8),
    ("start_time", 8),
    ("header_bytes", 8),
    ("reserved", 44),
    ("n_records", 8),
    ("record_duration", 8),
    ("n_signals", 4),
)
_SIGNAL_FIELDS = (
    ("label", 16),
    ("transducer", 80),
    ("physical_dimension", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefiltering", 80),
    ("samples_per_record", 8),
    ("reserved", 32),
)


@dataclass(frozen=True)
class EdfSignal:
    label: str
    physical_dimension: str
    physical_min: float
    physical_max: float
    digital_min: int
    digital_max: int
    samples_per_record: int
    transducer: str = ""
    prefiltering: str = ""

    @property
    def gain(self) -> float:
        return (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min)

    @property
    def offset(self) -> float:
        return self.physical_min - self.gain * self.digital_min

    @property
    def to_uv(self) -> float:
        return UNIT_SCALE_TO_UV.get(self.physical_dimension.strip().lower(), 1.0)


@dataclass(frozen=True)
class EdfHeader:
    patient: str
    recording: str
    start_date: str
    start_time: str
    header_bytes: int
    reserved: str
    n_records: int
    record_duration: float
    signals: Sequence[EdfSignal]

    @property
    def labels(self) -> List[str]:
        return [signal.label for signal in self.signals]


def normalize_label(label: str) -> str:
    """Map corpus labels such as ``EEG Fp1-REF`` onto electrode names."""
    label = re.sub(r"^(EEG|EKG|ECG)\s+", "", label.strip(), flags=re.IGNORECASE)
    return re.sub(r"-(REF|LE|AVG)$", "", label, flags=re.IGNORECASE)


def _field(raw: bytes, offset: int, width: int) -> str:
    return raw[offset : offset + width].decode("latin-1").strip()


def read_edf_header(raw: bytes, path: Union[str, Path] = "<bytes>") -> EdfHeader:
    if len(raw) < 256:
        raise EdfFormatError(f"{path}: file too short for an EDF header")
    if raw[:8] != b"0       ":
        raise EdfFormatError(f"{path}: not an EDF file (version field {raw[:8]!r})")

    values = {}
    offset = 0
    for name, width in _FIXED_FIELDS:
        values[name] = _field(raw, offset, width)
        offset += width

    try:
        n_signals = int(values["n_signals"])
        header_bytes = int(values["header_bytes"])
        n_records = int(values["n_records"])
        record_duration = float(values["record_duration"])
    except ValueError as exc:
        raise EdfFormatError(f"{path}: malformed numeric header field: {exc}") from exc

    if values["reserved"].startswith("EDF+D"):
        raise EdfFormatError(f"{path}: discontinuous EDF+D recordings are not supported")
    if header_bytes != 256 * (n_signals + 1) or len(raw) < header_bytes:
        raise EdfFormatError(f"{path}: header declares {header_bytes} bytes for {n_signals} signals")

    columns = {}
    for name, width in _SIGNAL_FIELDS:
        columns[name] = [_field(raw, offset + i * width, width) for i in range(n_signals)]
        offset += n_signals * width

    signals = []
    for i in range(n_signals):
        try:
            signal = EdfSignal(
                label=columns["label"][i],
                physical_dimension=columns["physical_dimension"][i],
                physical_min=float(columns["physical_min"][i]),
                physical_max=float(columns["physical_max"][i]),
                digital_min=int(columns["digital_min"][i]),
                digital_max=int(columns["digital_max"][i]),
                samples_per_record=int(columns["samples_per_record"][i]),
                transducer=columns["transducer"][i],
                prefiltering=columns["prefiltering"][i],
            )
        except ValueError as exc:
            raise EdfFormatError(f"{path}: malformed field for signal {i}: {exc}") from exc
        if signal.label != ANNOTATION_LABEL and signal.digital_max <= signal.digital_min:
            raise EdfFormatError(
                f"{path}: signal {signal.label!r} has digital max {signal.digital_max} "
                f"not above digital min {signal.digital_min}; cannot scale"
            )
        signals.append(signal)

    if n_records < 0:
        record_bytes = 2 * sum(s.samples_per_record for s in signals)
        n_records = (len(raw) - header_bytes) // record_bytes if record_bytes else 0
        logger.info("%s: record count unknown, inferred %d from file size", path, n_records)

    return EdfHeader(
        patient=values["patient"],
        recording=values["recording"],
        start_date=values["start_date"],
        start_time=values["start_time"],
        header_bytes=header_bytes,
        reserved=values["reserved"],
        n_records=n_records,
        record_duration=record_duration,
        signals=signals,
    )


def read_edf(
    path: Union[str, Path], channels: Optional[Sequence[str]] = None, normalize: bool = True
) -> Recording:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    header = read_edf_header(raw, path)

    labels = [normalize_label(s.label) if normalize else s.label for s in header.signals]
    if channels is None:
        selected = [i for i, s in enumerate(header.signals) if s.label != ANNOTATION_LABEL]
    else:
        missing = [c for c in channels if c not in labels]
        if missing:
            raise EdfFormatError(f"{path}: no signals named {', '.join(missing)}")
        selected = [labels.index(c) for c in channels]

    rates = {header.signals[i].samples_per_record for i in selected}
    if len(rates) > 1:
        raise EdfFormatError(
            f"{path}: selected signals mix sampling rates "
            f"({', '.join(str(r) for r in sorted(rates))} samples per record)"
        )
    if not selected:
        raise EdfFormatError(f"{path}: no data signals")
    samples = header.signals[selected[0]].samples_per_record
    if not header.record_duration > 0:
        raise EdfFormatError(f"{path}: record duration must be positive")

    per_record = [s.samples_per_record for s in header.signals]
    record_width = sum(per_record)
    expected = header.header_bytes + 2 * record_width * header.n_records
    if len(raw) < expected:
        raise EdfFormatError(
            f"{path}: data section holds {len(raw) - header.header_bytes} bytes, "
            f"header promises {expected - header.header_bytes}"
        )

    records = np.frombuffer(
        raw, dtype="<i2", count=record_width * header.n_records, offset=header.header_bytes
    ).reshape(header.n_records, record_width)
    starts = np.concatenate([[0], np.cumsum(per_record)])

    data = np.empty((len(selected), header.n_records * samples))
    for row, i in enumerate(selected):
        signal = header.signals[i]
        digital = records[:, starts[i] : starts[i + 1]].reshape(-1).astype(np.float64)
        data[row] = (digital * signal.gain + signal.offset) * signal.to_uv

    return Recording(
        fs_hz=samples / header.record_duration,
        channels=[labels[i] for i in selected],
        data=data,
        meta={
            "source": str(path),
            "patient": header.patient,
            "recording": header.recording,
            "start": f"{header.start_date} {header.start_time}",
        },
    )


def _fit(value: Union[float, int, str], width: int) -> bytes:
    if isinstance(value, float):
        text = f"{value:.{width}g}"
        precision = width
        while len(text) > width and precision > 1:
            precision -= 1
            text = f"{value:.{precision}g}"
    else:
        text = str(value)
    if len(text) > width:
        raise EdfFormatError(f"value {value!r} does not fit an EDF field of {width} bytes")
    return text.ljust(width).encode("latin-1")


def write_edf(
    recording: Recording,
    path: Union[str, Path],
    patient: str = "X X X X",
    start: Optional[datetime] = None,
) -> None:
    """Export a recording in one-second records, padding a partial last second with its final sample."""
    fs = recording.fs_hz
    if fs != int(fs):
        raise EdfFormatError(f"EDF export needs an integer sampling rate, got {fs}")
    fs = int(fs)
    data = recording.data
    short = -recording.n_samples % fs
    if short:
        logger.warning("padding %s with %d samples to whole one-second records", path, short)
        data = np.pad(data, ((0, 0), (0, short)), mode="edge")
    n = data.shape[1]
    samples, n_records, duration = fs, n // fs, 1

    start = start or datetime(2000, 1, 1)
    n_signals = len(recording.channels)
    physical_min, physical_max, digital = [], [], []
    for row in data:
        lo = float(np.floor(row.min())) if row.size else -1.0
        hi = float(np.ceil(row.max())) if row.size else 1.0
        if hi <= lo:
            lo, hi = lo - 1.0, hi + 1.0
        physical_min.append(lo)
        physical_max.append(hi)
        scale = (DIGITAL_MAX - DIGITAL_MIN) / (hi - lo)
        digital.append(np.rint((row - lo) * scale + DIGITAL_MIN).astype("<i2"))

    header = b"".join(
        [
            _fit(0, 8),
            _fit(patient, 80),
            _fit(recording.meta.get("recording", "Startdate X X X X"), 80),
            _fit(start.strftime("%d.%m.%y"), 8),
            _fit(start.strftime("%H.%M.%S"), 8),
            _fit(256 * (n_signals + 1), 8),
            _fit("", 44),
            _fit(n_records, 8),
            _fit(duration, 8),
            _fit(n_signals, 4),
        ]
    )
    columns = [
        [_fit(label, 16) for label in recording.channels],
        [_fit("AgAgCl electrode", 80)] * n_signals,
        [_fit("uV", 8)] * n_signals,
        [_fit(v, 8) for v in physical_min],
        [_fit(v, 8) for v in physical_max],
        [_fit(DIGITAL_MIN, 8)] * n_signals,
        [_fit(DIGITAL_MAX, 8)] * n_signals,
        [_fit("", 80)] * n_signals,
        [_fit(samples, 8)] * n_signals,
        [_fit("", 32)] * n_signals,
    ]
    header += b"".join(b"".join(column) for column in columns)

    body = (
        np.stack(digital).reshape(n_signals, n_records, samples).transpose(1, 0, 2).tobytes()
        if n_signals and n
        else b""
    )
    try:
        Path(path).write_bytes(header + body)
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc

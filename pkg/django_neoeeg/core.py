from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ShapeError

ADC_CHANNELS = 8
ADC_BITS = 24
ADC_MIN = -(2 ** (ADC_BITS - 1))
ADC_MAX = 2 ** (ADC_BITS - 1) - 1
I16_MIN = -(2**15)
I16_MAX = 2**15 - 1

DEVICE_FS_HZ = 250
SAMPLE_PERIOD_US = 1_000_000 // DEVICE_FS_HZ
DEFAULT_VREF_V = 4.5
DEFAULT_GAIN = 24.0

# IMU full-scale ranges: +/-2 g and +/-250 deg/s on a 16-bit converter.
ACCEL_LSB_PER_G = 16384.0
GYRO_LSB_PER_DPS = 131.0

MODEL_FS_HZ = 32
EPOCH_SECONDS = 12
EPOCH_CHANNELS = 12
EPOCH_SAMPLES = MODEL_FS_HZ * EPOCH_SECONDS

ArrayLike = Union[np.ndarray, Sequence[float]]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class SampleFrame:
    seq: int
    t_us: int
    adc: Tuple[int, ...]
    accel: Tuple[int, int, int] = (0, 0, 0)
    gyro: Tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        object.__setattr__(self, "adc", tuple(int(v) for v in self.adc))
        object.__setattr__(self, "accel", tuple(int(v) for v in self.accel))
        object.__setattr__(self, "gyro", tuple(int(v) for v in self.gyro))

        if len(self.adc) != ADC_CHANNELS:
            raise ShapeError(f"adc must hold {ADC_CHANNELS} values, got {len(self.adc)}")
        if len(self.accel) != 3 or len(self.gyro) != 3:
            raise ShapeError("accel and gyro must hold 3 values each")
        if any(v < ADC_MIN or v > ADC_MAX for v in self.adc):
            raise ValueError("adc value outside the signed 24-bit range")
        if any(v < I16_MIN or v > I16_MAX for v in self.accel + self.gyro):
            raise ValueError("imu value outside the signed 16-bit range")
        if self.seq < 0 or self.t_us < 0:
            raise ValueError("seq and t_us must be non-negative")

    @property
    def accel_g(self) -> np.ndarray:
        return np.asarray(self.accel, dtype=np.float64) / ACCEL_LSB_PER_G

    @property
    def gyro_dps(self) -> np.ndarray:
        return np.asarray(self.gyro, dtype=np.float64) / GYRO_LSB_PER_DPS


@dataclass(frozen=True)
class Recording:
    fs_hz: float
    channels: Tuple[str, ...]
    data: np.ndarray
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

        if not self.fs_hz > 0:
            raise ValueError(f"fs_hz must be positive, got {self.fs_hz}")
        if self.data.ndim != 2 or self.data.shape[0] != len(self.channels):
            raise ShapeError(
                f"data has {self.data.shape[0]} rows but {len(self.channels)} "
                "channel labels"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("recording contains non-finite samples")

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs_hz

    def channel_index(self, label: str) -> int:
        try:
            return self.channels.index(label)
        except ValueError:
            raise KeyError(f"channel {label!r} not in recording") from None

    def select(self, labels: Iterable[str]) -> "Recording":
        labels = tuple(labels)
        rows = [self.channel_index(label) for label in labels]
        return self.replace(data=self.data[rows], channels=labels)

    def slice_seconds(self, t_start_s: float, t_end_s: float) -> "Recording":
        start = max(0, int(round(t_start_s * self.fs_hz)))
        end = min(self.n_samples, int(round(t_end_s * self.fs_hz)))
        return self.replace(data=self.data[:, start:end])

    def replace(self, **changes) -> "Recording":
        values = {
            "fs_hz": self.fs_hz,
            "channels": self.channels,
            "data": self.data,
            "meta": dict(self.meta),
        }
        values.update(changes)
        return Recording(**values)


class SeizureLabel(str, Enum):
    SEIZURE = "seizure"
    NON_SEIZURE = "non-seizure"


@dataclass(frozen=True)
class EpochLabel:
    seizure_seconds: float
    min_seizure_seconds = 1.0

    @property
    def label(self) -> SeizureLabel:
        if self.seizure_seconds >= self.min_seizure_seconds:
            return SeizureLabel.SEIZURE
        return SeizureLabel.NON_SEIZURE

    @property
    def is_seizure(self) -> bool:
        return self.label is SeizureLabel.SEIZURE


@dataclass(frozen=True)
class Epoch:
    data: np.ndarray
    t_start_us: int = 0
    channels: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data))
        object.__setattr__(self, "channels", tuple(self.channels))

        if self.data.shape != (EPOCH_CHANNELS, EPOCH_SAMPLES):
            raise ShapeError(
                f"epoch must be {EPOCH_CHANNELS}x{EPOCH_SAMPLES}, "
                f"got {'x'.join(map(str, self.data.shape))}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("epoch contains non-finite samples")
        if self.channels and len(self.channels) != EPOCH_CHANNELS:
            raise ShapeError("epoch channel labels must match the 12 montage channels")

    @property
    def t_start_s(self) -> float:
        return self.t_start_us / 1e6


def adc_to_microvolts(
    count: Union[int, np.ndarray],
    vref_v: float = DEFAULT_VREF_V,
    gain: float = DEFAULT_GAIN,
) -> Union[float, np.ndarray]:
    """Convert signed 24-bit converter counts to microvolts."""
    if not gain > 0 or not vref_v > 0:
        raise ValueError("gain and vref_v must be positive")
    lsb_uv = (2.0 * vref_v / gain) / 2**ADC_BITS * 1e6
    if isinstance(count, np.ndarray):
        return count.astype(np.float64) * lsb_uv
    return count * lsb_uv


def microvolts_to_adc(
    uv: np.ndarray, vref_v: float = DEFAULT_VREF_V, gain: float = DEFAULT_GAIN
) -> np.ndarray:
    lsb_uv = adc_to_microvolts(1, vref_v=vref_v, gain=gain)
    counts = np.rint(np.asarray(uv, dtype=np.float64) / lsb_uv)
    return np.clip(counts, ADC_MIN, ADC_MAX).astype(np.int32)


def full_scale_span_uv(vref_v: float = DEFAULT_VREF_V, gain: float = DEFAULT_GAIN) -> float:
    return adc_to_microvolts(2**ADC_BITS, vref_v=vref_v, gain=gain)


class SegmentMode(str, Enum):
    TRAIN = "train"
    STREAM = "stream"


class EpochSegmenter:
    epoch_seconds = EPOCH_SECONDS
    seizure_hop_seconds = 1
    background_hop_seconds = 2
    stream_hop_seconds = 1.0

    @classmethod
    def sample_mask(cls, annotations: ArrayLike, n_samples: int, fs_hz: float) -> np.ndarray:
        """Expand a per-second seizure mask onto the sample grid."""
        seconds = np.asarray(annotations).astype(bool)
        index = (np.arange(n_samples) / fs_hz).astype(np.int64)
        if seconds.size * fs_hz < n_samples:
            raise ShapeError(
                f"annotation mask covers {seconds.size} s but the recording "
                f"lasts {n_samples / fs_hz:.2f} s"
            )
        return seconds[index]

    @classmethod
    def window_starts(
        cls,
        sample_mask: np.ndarray,
        fs_hz: float,
        mode: SegmentMode,
        hop_s: Optional[float] = None,
    ) -> List[int]:
        window = int(round(cls.epoch_seconds * fs_hz))
        n_samples = sample_mask.size
        starts = []
        start = 0
        while start + window <= n_samples:
            starts.append(start)
            if mode is SegmentMode.TRAIN:
                seizure_seconds = sample_mask[start : start + window].sum() / fs_hz
                hop = (
                    cls.seizure_hop_seconds
                    if seizure_seconds >= EpochLabel.min_seizure_seconds
                    else cls.background_hop_seconds
                )
            else:
                hop = hop_s if hop_s is not None else cls.stream_hop_seconds
            start += int(round(hop * fs_hz))
        return starts

    @classmethod
    def segment(
        cls,
        rec: Recording,
        annotations: ArrayLike,
        mode: Union[SegmentMode, str] = SegmentMode.TRAIN,
        hop_s: Optional[float] = None,
    ) -> List[Tuple[Epoch, EpochLabel]]:
        mode = SegmentMode(mode)
        if rec.fs_hz != MODEL_FS_HZ:
            raise ShapeError(f"segmentation expects {MODEL_FS_HZ} Hz, got {rec.fs_hz}")
        if len(rec.channels) != EPOCH_CHANNELS:
            raise ShapeError(
                f"segmentation expects {EPOCH_CHANNELS} channels, got {len(rec.channels)}"
            )
        if hop_s is not None and not hop_s > 0:
            raise ValueError("hop_s must be positive")

        mask = cls.sample_mask(annotations, rec.n_samples, rec.fs_hz)
        window = int(round(cls.epoch_seconds * rec.fs_hz))

        segments = []
        for start in cls.window_starts(mask, rec.fs_hz, mode, hop_s):
            epoch = Epoch(
                data=rec.data[:, start : start + window],
                t_start_us=int(round(start / rec.fs_hz * 1e6)),
                channels=rec.channels,
            )
            label = EpochLabel(seizure_seconds=mask[start : start + window].sum() / rec.fs_hz)
            segments.append((epoch, label))
        return segments


def segment_epochs(
    rec: Recording,
    annotations: ArrayLike,
    mode: Union[SegmentMode, str] = SegmentMode.TRAIN,
    hop_s: Optional[float] = None,
) -> List[Tuple[Epoch, EpochLabel]]:
    return EpochSegmenter.segment(rec, annotations, mode=mode, hop_s=hop_s)


@dataclass(frozen=True)
class SeizureOnset:
    t_onset_s: float
    t_detected_s: float
    peak_probability: float


class SeizureTracker:
    """Streaming persistence rule over per-epoch seizure probabilities."""

    min_event_seconds = 5.0

    def __init__(self, threshold: float = 0.5, hop_s: float = 1.0):
        if not 0.0 <= threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if not hop_s > 0:
            raise ValueError("hop_s must be positive")
        self.threshold = threshold
        self.hop_s = hop_s
        self._run_start: Optional[float] = None
        self._run_length = 0
        self._run_peak = 0.0
        self._reported = False

    @property
    def in_event(self) -> bool:
        return self._reported

    def update(self, t_s: float, probability: float) -> Optional[SeizureOnset]:
        if not 0.0 <= probability <= 1.0:
            raise ValueError(f"probability {probability} outside [0, 1]")

        if probability <= self.threshold:
            self._run_start = None
            self._run_length = 0
            self._run_peak = 0.0
            self._reported = False
            return None

        if self._run_start is None:
            self._run_start = t_s
        self._run_length += 1
        self._run_peak = max(self._run_peak, probability)

        covered = self._run_length * self.hop_s
        if not self._reported and covered >= self.min_event_seconds - 1e-9:
            self._reported = True
            return SeizureOnset(
                t_onset_s=self._run_start,
                t_detected_s=t_s,
                peak_probability=self._run_peak,
            )
        return None


def detection_decision(
    window_probs: Sequence[float],
    threshold: float = 0.5,
    hop_s: float = 1.0,
    t0_s: float = 0.0,
) -> Optional[SeizureOnset]:
    """Return the first seizure event in a probability sequence, or None."""
    tracker = SeizureTracker(threshold=threshold, hop_s=hop_s)
    for i, probability in enumerate(window_probs):
        onset = tracker.update(t0_s + i * hop_s, float(probability))
        if onset is not None:
            return onset
    return None

"""Synthetic neonatal EEG device.

The generator mixes a 1/f background with optional eyes-closed alpha,
3 Hz spike-and-wave seizures, 50 Hz powerline, eye blinks, IMU movement
transients and white measurement noise. Output is quantized through the
same converter scaling a physical front end would apply.
"""

import logging
from dataclasses import asdict, dataclass, fields, replace
from functools import cached_property
from pathlib import Path
from typing import Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from ..core import (
    ACCEL_LSB_PER_G,
    DEFAULT_GAIN,
    DEFAULT_VREF_V,
    DEVICE_FS_HZ,
    GYRO_LSB_PER_DPS,
    I16_MAX,
    I16_MIN,
    SAMPLE_PERIOD_US,
    Recording,
    SampleFrame,
    adc_to_microvolts,
    microvolts_to_adc,
)
from ..exceptions import ConfigurationError
from .annotations import BLINK, EYES_CLOSED, MOTION, SEIZURE, Annotation
from .protocol import DEFAULT_FRAMES_PER_PACKET, FLAG_SIMULATED, packetize
from .session import DEFAULT_CHANNELS

logger = logging.getLogger(__name__)

Segment = Tuple[float, float]

# Relative amplitude of each source per referential channel (Fp1 Fp2 C3 C4 T3 T4 O1 O2).
ALPHA_WEIGHTS = np.array([0.1, 0.1, 0.3, 0.3, 0.3, 0.3, 1.0, 1.0])
SEIZURE_WEIGHTS = np.array([0.5, 0.5, 1.0, 1.0, 0.8, 0.8, 0.6, 0.6])
BLINK_WEIGHTS = np.array([1.0, 1.0, 0.15, 0.15, 0.1, 0.1, 0.05, 0.05])


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    duration_s: float = 60.0
    background_uv: float = 10.0
    noise_uv: float = 1.0
    line_uv: float = 5.0
    line_hz: float = 50.0
    alpha_uv: float = 20.0
    alpha_hz: float = 10.0
    eyes_closed: Sequence[Segment] = ()
    seizure_uv: float = 150.0
    seizure_hz: float = 3.0
    seizures: Sequence[Segment] = ()
    blink_uv: float = 100.0
    blinks: Sequence[float] = ()
    motion_accel_g: float = 0.5
    motion_gyro_dps: float = 80.0
    motions: Sequence[Segment] = ()
    vref_v: float = DEFAULT_VREF_V
    gain: float = DEFAULT_GAIN
    frames_per_packet: int = DEFAULT_FRAMES_PER_PACKET
    device_id: str = "neoeeg-sim"

    def __post_init__(self):
        for name in ("eyes_closed", "seizures", "motions"):
            segments = tuple(tuple(float(v) for v in seg) for seg in getattr(self, name))
            for start, end in segments:
                if not 0 <= start < end:
                    raise ConfigurationError(f"{name}: invalid segment {start}-{end}")
            object.__setattr__(self, name, segments)
        object.__setattr__(self, "blinks", tuple(float(t) for t in self.blinks))

        if not self.duration_s > 0:
            raise ConfigurationError("duration_s must be positive")
        for name in ("background_uv", "noise_uv", "line_uv", "alpha_uv", "seizure_uv", "blink_uv"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must not be negative")
        if not 1 <= self.frames_per_packet <= 25:
            raise ConfigurationError("frames_per_packet must lie in 1..25")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * DEVICE_FS_HZ))

    @classmethod
    def from_dict(cls, values: Mapping) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigurationError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
        return cls(**values)

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "SynthConfig":
        try:
            values = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"cannot load scenario {path}: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigurationError(f"scenario {path} must be a mapping")
        return cls.from_dict(values)

    def to_dict(self) -> dict:
        values = asdict(self)
        for name in ("eyes_closed", "seizures", "motions"):
            values[name] = [list(seg) for seg in values[name]]
        values["blinks"] = list(values["blinks"])
        return values

    def replace(self, **changes) -> "SynthConfig":
        return replace(self, **changes)


def pink_noise(rng: np.random.Generator, n_channels: int, n_samples: int, fs_hz: float) -> np.ndarray:
    """Unit-RMS noise with a 1/f power spectrum."""
    if n_samples == 0:
        return np.zeros((n_channels, 0))
    spectrum = rng.standard_normal((n_channels, n_samples // 2 + 1)) + 1j * rng.standard_normal(
        (n_channels, n_samples // 2 + 1)
    )
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / fs_hz)
    spectrum *= 1.0 / np.sqrt(np.maximum(freqs, 0.5))
    spectrum[:, 0] = 0.0
    noise = np.fft.irfft(spectrum, n=n_samples, axis=-1)
    rms = noise.std(axis=-1, keepdims=True)
    return noise / np.where(rms > 0, rms, 1.0)


def spike_wave(t: np.ndarray, freq_hz: float) -> np.ndarray:
    """Slow wave at `freq_hz` with a sharp spike riding each crest."""
    phase = np.mod(t, 1.0 / freq_hz)
    wave = np.sin(2 * np.pi * freq_hz * t)
    spike = np.exp(-0.5 * ((phase - 0.25 / freq_hz) / 0.012) ** 2)
    return 0.8 * wave + 0.5 * spike


def _segment_mask(t: np.ndarray, segments: Sequence[Segment]) -> np.ndarray:
    mask = np.zeros(t.size, dtype=bool)
    for start, end in segments:
        mask |= (t >= start) & (t < end)
    return mask


class DeviceSimulator:
    channels = DEFAULT_CHANNELS
    fs_hz = DEVICE_FS_HZ

    def __init__(self, config: Optional[SynthConfig] = None):
        self.config = config or SynthConfig()

    @cached_property
    def t(self) -> np.ndarray:
        return np.arange(self.config.n_samples) / self.fs_hz

    @cached_property
    def sources(self) -> np.ndarray:
        """Noise-free cortical and artifact sources shared by every virtual device."""
        c = self.config
        rng = np.random.default_rng([c.seed, 0])
        n_channels, t = len(self.channels), self.t

        x = c.background_uv * pink_noise(rng, n_channels, t.size, self.fs_hz)

        phases = rng.uniform(0, 2 * np.pi, size=(n_channels, 1))
        x += c.line_uv * np.sin(2 * np.pi * c.line_hz * t + phases)

        if c.eyes_closed and c.alpha_uv:
            envelope = 0.75 + 0.25 * np.sin(2 * np.pi * 0.2 * t)
            alpha = envelope * np.sin(2 * np.pi * c.alpha_hz * t) * _segment_mask(t, c.eyes_closed)
            x += c.alpha_uv * ALPHA_WEIGHTS[:, np.newaxis] * alpha

        if c.seizures and c.seizure_uv:
            complex_train = spike_wave(t, c.seizure_hz) * _segment_mask(t, c.seizures)
            x += c.seizure_uv * SEIZURE_WEIGHTS[:, np.newaxis] * complex_train

        if c.blinks and c.blink_uv:
            blink = np.zeros_like(t)
            for t_blink in c.blinks:
                blink += np.exp(-(((t - t_blink) / 0.08) ** 2))
            x += c.blink_uv * BLINK_WEIGHTS[:, np.newaxis] * blink

        return x

    def microvolts(self, device: int = 0, noise_uv: Optional[float] = None) -> np.ndarray:
        """Unquantized signal seen by one virtual device."""
        c = self.config
        noise_uv = c.noise_uv if noise_uv is None else noise_uv
        rng = np.random.default_rng([c.seed, device + 1])
        noise = rng.standard_normal(self.sources.shape)
        return self.sources + noise_uv * noise

    def quantized(self, device: int = 0, noise_uv: Optional[float] = None) -> np.ndarray:
        counts = microvolts_to_adc(
            self.microvolts(device, noise_uv), vref_v=self.config.vref_v, gain=self.config.gain
        )
        return counts

    def recording(self, device: int = 0, noise_uv: Optional[float] = None) -> Recording:
        counts = self.quantized(device, noise_uv)
        return Recording(
            fs_hz=self.fs_hz,
            channels=self.channels,
            data=adc_to_microvolts(counts, vref_v=self.config.vref_v, gain=self.config.gain),
            meta={"device_id": f"{self.config.device_id}-{device}", "seed": str(self.config.seed)},
        )

    @cached_property
    def imu(self) -> Tuple[np.ndarray, np.ndarray]:
        """Accelerometer (g) and gyroscope (deg/s) tracks, 3 x n each."""
        c = self.config
        rng = np.random.default_rng([c.seed, 1000])
        t = self.t
        accel = 0.005 * rng.standard_normal((3, t.size))
        accel[2] += 1.0
        gyro = 0.5 * rng.standard_normal((3, t.size))
        for start, end in c.motions:
            inside = (t >= start) & (t < end)
            window = np.sin(np.pi * (t[inside] - start) / (end - start)) ** 2
            accel[0, inside] += c.motion_accel_g * window
            gyro[2, inside] += c.motion_gyro_dps * window
        return accel, gyro

    def imu_counts(self) -> Tuple[np.ndarray, np.ndarray]:
        accel, gyro = self.imu
        accel = np.clip(np.rint(accel * ACCEL_LSB_PER_G), I16_MIN, I16_MAX).astype(np.int16)
        gyro = np.clip(np.rint(gyro * GYRO_LSB_PER_DPS), I16_MIN, I16_MAX).astype(np.int16)
        return accel, gyro

    def frames(self, device: int = 0) -> Iterator[SampleFrame]:
        counts = self.quantized(device).T.tolist()
        accel, gyro = (a.T.tolist() for a in self.imu_counts())
        for i in range(len(counts)):
            yield SampleFrame(
                seq=i,
                t_us=i * SAMPLE_PERIOD_US,
                adc=counts[i],
                accel=accel[i],
                gyro=gyro[i],
            )

    def packets(self, device: int = 0) -> Iterator[bytes]:
        return packetize(
            list(self.frames(device)),
            frames_per_packet=self.config.frames_per_packet,
            flags=FLAG_SIMULATED,
        )

    def annotations(self) -> List[Annotation]:
        c = self.config
        annotations = [Annotation(s, e, SEIZURE) for s, e in c.seizures]
        annotations += [Annotation(s, e, EYES_CLOSED) for s, e in c.eyes_closed]
        annotations += [Annotation(t - 0.2, t + 0.2, BLINK) for t in c.blinks if t >= 0.2]
        annotations += [Annotation(s, e, MOTION) for s, e in c.motions]
        return sorted(annotations)

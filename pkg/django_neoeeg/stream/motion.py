import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np

logger = logging.getLogger(__name__)


class Severity(str, Enum):
    MINOR = "minor"
    MAJOR = "major"


@dataclass(frozen=True)
class MotionThresholds:
    accel_thresh_g: float = 0.2
    gyro_thresh_dps: float = 50.0
    min_duration_s: float = 0.1
    quiet_time_s: float = 0.5
    major_accel_g: float = 1.0
    major_gyro_dps: float = 200.0


@dataclass(frozen=True)
class MotionEvent:
    t_start_us: int
    t_end_us: int
    peak_accel_g: float
    peak_gyro_dps: float
    severity: Severity

    def __post_init__(self):
        if self.t_end_us < self.t_start_us:
            raise ValueError("motion event ends before it starts")

    @property
    def duration_s(self) -> float:
        return (self.t_end_us - self.t_start_us) / 1e6


class MotionDetector:
    """Threshold detector with hysteresis, fed one IMU sample at a time.

    `push` returns a confirmed event as soon as over-threshold activity has
    lasted `min_duration_s`; `closed` collects events once `quiet_time_s`
    has passed without any over-threshold sample.
    """

    def __init__(self, fs_hz: float, thresholds: Optional[MotionThresholds] = None):
        self.fs_hz = fs_hz
        self.thresholds = thresholds or MotionThresholds()
        self.closed: List[MotionEvent] = []
        self._reset()

    def _reset(self) -> None:
        self._start_us: Optional[int] = None
        self._last_over_us = 0
        self._peak_accel = 0.0
        self._peak_gyro = 0.0
        self._confirmed = False

    @property
    def active(self) -> bool:
        """A confirmed event is still open."""
        return self._start_us is not None and self._confirmed

    def _event(self) -> MotionEvent:
        t = self.thresholds
        major = self._peak_accel >= t.major_accel_g or self._peak_gyro >= t.major_gyro_dps
        return MotionEvent(
            t_start_us=self._start_us,
            t_end_us=self._last_over_us,
            peak_accel_g=self._peak_accel,
            peak_gyro_dps=self._peak_gyro,
            severity=Severity.MAJOR if major else Severity.MINOR,
        )

    def push(self, t_us: int, accel_g: np.ndarray, gyro_dps: np.ndarray) -> Optional[MotionEvent]:
        t = self.thresholds
        accel_dev = abs(float(np.linalg.norm(accel_g)) - 1.0)
        gyro_mag = float(np.linalg.norm(gyro_dps))
        over = accel_dev > t.accel_thresh_g or gyro_mag > t.gyro_thresh_dps
        period_us = 1e6 / self.fs_hz

        if self._start_us is not None and not over:
            if t_us - self._last_over_us >= t.quiet_time_s * 1e6:
                if self._confirmed:
                    event = self._event()
                    self.closed.append(event)
                    logger.info("motion event closed after %.2f s", event.duration_s)
                self._reset()
            return None
        if not over:
            return None

        if self._start_us is None:
            self._start_us = t_us
        self._last_over_us = t_us
        self._peak_accel = max(self._peak_accel, accel_dev)
        self._peak_gyro = max(self._peak_gyro, gyro_mag)

        span_us = t_us - self._start_us + period_us
        if not self._confirmed and span_us >= t.min_duration_s * 1e6 - 1e-6:
            self._confirmed = True
            return self._event()
        return None

    def flush(self) -> Optional[MotionEvent]:
        """Close an open confirmed event at end of stream."""
        if self._start_us is not None and self._confirmed:
            event = self._event()
            self.closed.append(event)
            self._reset()
            return event
        self._reset()
        return None


def detect_motion(
    accel_g: np.ndarray,
    gyro_dps: np.ndarray,
    fs_hz: float,
    thresholds: Optional[MotionThresholds] = None,
    t0_us: int = 0,
) -> List[MotionEvent]:
    """Batch form over 3 x n accelerometer (g) and gyroscope (deg/s) tracks."""
    accel_g = np.asarray(accel_g, dtype=np.float64)
    gyro_dps = np.asarray(gyro_dps, dtype=np.float64)
    if accel_g.shape != gyro_dps.shape or accel_g.shape[0] != 3:
        raise ValueError("accel and gyro must both be 3 x n arrays")

    detector = MotionDetector(fs_hz, thresholds)
    for i in range(accel_g.shape[1]):
        detector.push(t0_us + int(round(i * 1e6 / fs_hz)), accel_g[:, i], gyro_dps[:, i])
    detector.flush()
    return detector.closed

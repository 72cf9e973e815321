"""Application settings.

Values are resolved in order, later sources winning: built-in defaults,
the ``NEOEEG`` dict in Django settings, a YAML file (``--config`` or the
``NEOEEG_CONFIG`` environment variable), then command-line flags.
"""

import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Tuple, Union

import yaml
from django.conf import settings

from .dsp import EdgeConvention
from .exceptions import ConfigurationError
from .stream.motion import MotionThresholds

logger = logging.getLogger(__name__)

CONFIG_ENV = "NEOEEG_CONFIG"
PORT_ENV = "NEOEEG_PORT"
PATH_KEYS = ("montage_file", "weights", "scenario")


@dataclass(frozen=True)
class AppSettings:
    host: str = "127.0.0.1"
    port: int = 5555
    montage_file: Optional[str] = None
    weights: Optional[str] = None
    filter_edges: str = EdgeConvention.FS.value
    detection_threshold: float = 0.5
    stream_hop_s: float = 1.0
    frames_per_packet: int = 10
    vref_v: float = 4.5
    gain: float = 24.0
    accel_thresh_g: float = 0.2
    gyro_thresh_dps: float = 50.0
    min_motion_s: float = 0.1
    quiet_time_s: float = 0.5
    scenario: Optional[str] = None
    zscore: bool = True
    retry_attempts: int = 3
    retry_delay_s: float = 1.0
    queue_size: int = 64

    def __post_init__(self):
        try:
            EdgeConvention(self.filter_edges)
        except ValueError:
            raise ConfigurationError(
                f"filter_edges must be 'fs' or 'nyquist', got {self.filter_edges!r}"
            ) from None
        if not 0.0 < self.detection_threshold < 1.0:
            raise ConfigurationError("detection_threshold must lie strictly between 0 and 1")
        if not 0 < self.port < 65536:
            raise ConfigurationError(f"port {self.port} is out of range")
        if not 1 <= self.frames_per_packet <= 25:
            raise ConfigurationError("frames_per_packet must lie in 1..25")
        if not self.stream_hop_s > 0 or self.queue_size < 1 or self.retry_attempts < 1:
            raise ConfigurationError("stream_hop_s, queue_size and retry_attempts must be positive")
        for key in PATH_KEYS:
            value = getattr(self, key)
            if value is not None and not Path(value).exists():
                raise ConfigurationError(f"{key}: {value} does not exist")

    @property
    def endpoint(self) -> Tuple[str, int]:
        return self.host, self.port

    @property
    def edges(self) -> EdgeConvention:
        return EdgeConvention(self.filter_edges)

    @property
    def motion_thresholds(self) -> MotionThresholds:
        return MotionThresholds(
            accel_thresh_g=self.accel_thresh_g,
            gyro_thresh_dps=self.gyro_thresh_dps,
            min_duration_s=self.min_motion_s,
            quiet_time_s=self.quiet_time_s,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def _check_keys(cls, values: Mapping[str, Any], source: str) -> None:
        unknown = set(values) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigurationError(f"{source}: unknown keys {', '.join(sorted(unknown))}")

    @classmethod
    def read_yaml(cls, path: Union[str, Path]) -> dict:
        try:
            values = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"cannot load config {path}: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigurationError(f"config {path} must be a mapping")
        cls._check_keys(values, str(path))
        return values

    @classmethod
    def load(
        cls,
        path: Optional[Union[str, Path]] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "AppSettings":
        values: dict = {}

        from_settings = getattr(settings, "NEOEEG", {}) if settings.configured else {}
        cls._check_keys(from_settings, "settings.NEOEEG")
        values.update(from_settings)

        path = path or os.environ.get(CONFIG_ENV)
        if path:
            values.update(cls.read_yaml(path))
            logger.debug("loaded config from %s", path)

        port = os.environ.get(PORT_ENV)
        if port:
            try:
                values["port"] = int(port)
            except ValueError:
                raise ConfigurationError(f"{PORT_ENV} must be an integer, got {port!r}") from None

        flags = {k: v for k, v in (overrides or {}).items() if v is not None}
        cls._check_keys(flags, "command line")
        values.update(flags)
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    def replace(self, **changes) -> "AppSettings":
        return replace(self, **changes)

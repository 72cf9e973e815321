import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import signal

from .core import DEVICE_FS_HZ, MODEL_FS_HZ
from .exceptions import DesignError, NumericError, ShapeError

logger = logging.getLogger(__name__)

STABILITY_MARGIN = 1e-6


@dataclass(frozen=True)
class BiquadCascade:
    sos: np.ndarray

    def __post_init__(self):
        sos = np.array(self.sos, dtype=np.float64, copy=True).reshape(-1, 6)
        if not np.all(np.isfinite(sos)):
            raise DesignError("filter coefficients must be finite")
        if not np.allclose(sos[:, 3], 1.0):
            raise DesignError("second-order sections must be normalized (a0 == 1)")
        # scipy's sosfilt kernels reject read-only buffers
        object.__setattr__(self, "_kernel", sos.copy())
        sos.flags.writeable = False
        object.__setattr__(self, "sos", sos)

        radii = self.pole_radii()
        if radii.size and radii.max() >= 1.0 - STABILITY_MARGIN:
            raise DesignError(f"unstable section: pole radius {radii.max():.12f}")

    @classmethod
    def from_sections(
        cls, sections: Iterable[Tuple[float, float, float, float, float]]
    ) -> "BiquadCascade":
        rows = [(b0, b1, b2, 1.0, a1, a2) for b0, b1, b2, a1, a2 in sections]
        return cls(np.array(rows, dtype=np.float64))

    @classmethod
    def concat(cls, *cascades: "BiquadCascade") -> "BiquadCascade":
        return cls(np.vstack([cascade.sos for cascade in cascades]))

    @property
    def n_sections(self) -> int:
        return self.sos.shape[0]

    @property
    def sections(self) -> List[Tuple[float, float, float, float, float]]:
        return [(s[0], s[1], s[2], s[4], s[5]) for s in self.sos]

    def pole_radii(self) -> np.ndarray:
        radii = [np.abs(np.roots([1.0, s[4], s[5]])) for s in self.sos]
        return np.concatenate(radii) if radii else np.zeros(0)

    def frequency_response(self, freqs_hz: Union[float, Sequence[float]], fs_hz: float) -> np.ndarray:
        freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
        _, response = signal.sosfreqz(self._kernel, worN=freqs, fs=fs_hz)
        return response

    def magnitude_db(self, freqs_hz: Union[float, Sequence[float]], fs_hz: float) -> np.ndarray:
        magnitude = np.abs(self.frequency_response(freqs_hz, fs_hz))
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(magnitude)

    def impulse_response(self, n_samples: int) -> np.ndarray:
        impulse = np.zeros(n_samples)
        impulse[0] = 1.0
        return signal.sosfilt(self._kernel, impulse)

    def to_text(self) -> str:
        """One section per line: b0 b1 b2 a1 a2 with 17 significant digits."""
        return "\n".join(
            " ".join(f"{value:.17g}" for value in section) for section in self.sections
        )


@dataclass(frozen=True)
class Spectrum:
    freqs_hz: np.ndarray
    power: np.ndarray
    method: str = "welch"

    @property
    def resolution_hz(self) -> float:
        return float(self.freqs_hz[1] - self.freqs_hz[0]) if self.freqs_hz.size > 1 else 0.0

    def band_power(self, lo_hz: float, hi_hz: float) -> np.ndarray:
        """Integrated power over the half-open band [lo_hz, hi_hz)."""
        mask = (self.freqs_hz >= lo_hz) & (self.freqs_hz < hi_hz)
        return self.power[..., mask].sum(axis=-1) * self.resolution_hz

    def total_power(self) -> np.ndarray:
        return self.power.sum(axis=-1) * self.resolution_hz

    def peak_frequency(self) -> float:
        power = self.power if self.power.ndim == 1 else self.power.mean(axis=0)
        return float(self.freqs_hz[int(np.argmax(power))])


def _check_order(order: int) -> None:
    if order <= 0 or order % 2:
        raise DesignError(f"filter order must be a positive even integer, got {order}")


def design_butterworth_bandpass(order: int, lo_norm: float, hi_norm: float) -> BiquadCascade:
    """Butterworth bandpass with edges given as fractions of the sampling rate."""
    _check_order(order)
    if not 0.0 < lo_norm < hi_norm < 0.5:
        raise DesignError(
            f"band edges must satisfy 0 < lo < hi < 0.5 (got {lo_norm}, {hi_norm})"
        )
    # scipy normalizes to Nyquist.
    sos = signal.butter(order, [2.0 * lo_norm, 2.0 * hi_norm], btype="bandpass", output="sos")
    return BiquadCascade(sos)


def design_butterworth_band_hz(order: int, lo_hz: float, hi_hz: float, fs_hz: float) -> BiquadCascade:
    return design_butterworth_bandpass(order, lo_hz / fs_hz, hi_hz / fs_hz)


def design_notch(center_hz: float, bw_3db_hz: float, fs_hz: float) -> BiquadCascade:
    """Second-order notch: zeros on the unit circle, pole radius set by bandwidth."""
    if not 0.0 < center_hz < fs_hz / 2.0:
        raise DesignError(f"notch center {center_hz} Hz must lie below Nyquist ({fs_hz / 2} Hz)")
    if not bw_3db_hz > 0:
        raise DesignError("notch bandwidth must be positive")
    b, a = signal.iirnotch(center_hz, center_hz / bw_3db_hz, fs=fs_hz)
    return BiquadCascade(signal.tf2sos(b, a))


def design_chebyshev2_bandpass(
    order: int, lo_hz: float, hi_hz: float, stop_atten_db: float, fs_hz: float
) -> BiquadCascade:
    """Chebyshev type II bandpass; the edges mark where the stopband attenuation is reached."""
    if order <= 0:
        raise DesignError(f"filter order must be positive, got {order}")
    if not 0.0 < lo_hz < hi_hz < fs_hz / 2.0:
        raise DesignError(f"band edges must satisfy 0 < lo < hi < fs/2 (got {lo_hz}, {hi_hz})")
    if not stop_atten_db > 0:
        raise DesignError("stopband attenuation must be positive")
    sos = signal.cheby2(
        order, stop_atten_db, [lo_hz, hi_hz], btype="bandpass", fs=fs_hz, output="sos"
    )
    return BiquadCascade(sos)


class CascadeFilter:
    """Causal per-channel state for one stream through a BiquadCascade."""

    def __init__(self, cascade: BiquadCascade, n_channels: int):
        self.cascade = cascade
        self.n_channels = n_channels
        self.reset()

    def reset(self) -> None:
        self.state = np.zeros((self.cascade.n_sections, self.n_channels, 2))

    def prime(self, first_sample: np.ndarray) -> None:
        """Start from the steady state reached by a constant input."""
        zi = signal.sosfilt_zi(self.cascade._kernel)
        self.state = zi[:, np.newaxis, :] * np.asarray(first_sample, dtype=np.float64)[
            np.newaxis, :, np.newaxis
        ]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != self.n_channels:
            raise ShapeError(
                f"expected {self.n_channels} channels, got array of shape {x.shape}"
            )
        finite = np.isfinite(x)
        if not finite.all():
            channel, index = np.argwhere(~finite)[0]
            raise NumericError(f"non-finite sample at channel {channel}, index {index}")
        if x.shape[1] == 0:
            return x.copy()
        y, self.state = signal.sosfilt(self.cascade._kernel, x, axis=-1, zi=self.state)
        return y


def filter_forward(f: CascadeFilter, x: np.ndarray) -> np.ndarray:
    return f.forward(x)


def filtfilt_offline(cascade: BiquadCascade, x: np.ndarray) -> np.ndarray:
    """Zero-phase forward-backward filtering, for offline analysis only."""
    return signal.sosfiltfilt(cascade._kernel, np.asarray(x, dtype=np.float64), axis=-1)


def resample(x: np.ndarray, fs_in: float, fs_out: float) -> np.ndarray:
    """Polyphase rational-rate conversion with a Kaiser-windowed prototype."""
    ratio = Fraction(fs_out).limit_denominator(10_000) / Fraction(fs_in).limit_denominator(10_000)
    if ratio == 1:
        return np.array(x, dtype=np.float64, copy=True)
    return signal.resample_poly(
        np.asarray(x, dtype=np.float64),
        ratio.numerator,
        ratio.denominator,
        axis=-1,
        window=("kaiser", 5.0),
        padtype="mean",
    )


def resample_to_32hz(x: np.ndarray) -> np.ndarray:
    ratio = Fraction(MODEL_FS_HZ, DEVICE_FS_HZ)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % ratio.denominator:
        raise ShapeError(
            f"input length {x.shape[-1]} is not a multiple of {ratio.denominator} samples"
        )
    return resample(x, DEVICE_FS_HZ, MODEL_FS_HZ)


def welch_psd(
    x: np.ndarray,
    fs_hz: float,
    seg_len: Optional[int] = None,
    overlap: float = 0.5,
    window: str = "hann",
) -> Spectrum:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0 or x.shape[-1] == 0:
        raise ValueError("cannot estimate a spectrum from an empty signal")
    if seg_len is None:
        seg_len = min(int(round(2.0 * fs_hz)), x.shape[-1])
    if not 0 < seg_len <= x.shape[-1]:
        raise ValueError(f"segment length {seg_len} exceeds signal length {x.shape[-1]}")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must lie in [0, 1)")

    freqs, power = signal.welch(
        x,
        fs=fs_hz,
        window=window,
        nperseg=seg_len,
        noverlap=int(seg_len * overlap),
        detrend="constant",
        scaling="density",
        axis=-1,
    )
    method = "periodogram" if seg_len == x.shape[-1] else "welch"
    return Spectrum(freqs_hz=freqs, power=np.maximum(power, 0.0), method=method)


class EdgeConvention(str, Enum):
    FS = "fs"
    NYQUIST = "nyquist"


class Preprocessor:
    """Streaming front-end chain: bandpass plus powerline notches."""

    bandpass_order = 4
    band_edges = (0.004, 0.4)
    notch_centers_hz = (50.0, 100.0)
    notch_bandwidth_hz = 4.0

    def __init__(
        self,
        fs_hz: float,
        n_channels: int,
        edges: Union[EdgeConvention, str] = EdgeConvention.FS,
    ):
        self.fs_hz = fs_hz
        self.edges = EdgeConvention(edges)
        self.cascade = self.design(fs_hz, self.edges)
        self.filter = CascadeFilter(self.cascade, n_channels)

    @classmethod
    def design(cls, fs_hz: float, edges: Union[EdgeConvention, str] = EdgeConvention.FS) -> BiquadCascade:
        lo, hi = cls.band_edges
        if EdgeConvention(edges) is EdgeConvention.NYQUIST:
            lo, hi = lo / 2.0, hi / 2.0
        stages = [design_butterworth_bandpass(cls.bandpass_order, lo, hi)]
        for center in cls.notch_centers_hz:
            if center < fs_hz / 2.0:
                stages.append(design_notch(center, cls.notch_bandwidth_hz, fs_hz))
            else:
                logger.warning("skipping %.0f Hz notch above Nyquist at fs=%.1f Hz", center, fs_hz)
        return BiquadCascade.concat(*stages)

    def process(self, x: np.ndarray) -> np.ndarray:
        return self.filter.forward(x)


class ModelBandFilter:
    """The 1-16 Hz band applied to each epoch ahead of inference."""

    order = 4
    lo_hz = 1.0
    hi_hz = 16.0

    @classmethod
    def design(cls, fs_hz: float = DEVICE_FS_HZ) -> BiquadCascade:
        return design_butterworth_band_hz(cls.order, cls.lo_hz, cls.hi_hz, fs_hz)

    @classmethod
    def apply(cls, x: np.ndarray, fs_hz: float = DEVICE_FS_HZ) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        stream = CascadeFilter(cls.design(fs_hz), x.shape[0])
        stream.prime(x[:, 0])
        return stream.forward(x)

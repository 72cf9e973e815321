"""Signal-quality analytics: cross-device correlation, SNR and state spectra."""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import signal, stats

from .core import Recording
from .dsp import BiquadCascade, Spectrum, design_chebyshev2_bandpass, filtfilt_offline, welch_psd
from .exceptions import NumericError, ShapeError
from .stream.annotations import BLINK, EYES_CLOSED, EYES_OPEN, MOTION, SEIZURE, Annotation

logger = logging.getLogger(__name__)

CORRELATION_BAND_HZ = (2.0, 30.0)
POWERLINE_BAND_HZ = (2.0, 90.0)
LINE_NOISE_HZ = (48.0, 52.0)
ALPHA_BAND_HZ = (8.0, 13.0)
PREFILTER_ORDER = 6
PREFILTER_ATTEN_DB = 40.0
ZERO_NOISE_RATIO = 1e-12
MIN_SEGMENT_S = 2.0
DEFAULT_STATES = (EYES_OPEN, EYES_CLOSED, SEIZURE)
NON_STATE_LABELS = (BLINK, MOTION)


def chebyshev_prefilter(band_hz: Tuple[float, float], fs_hz: float) -> BiquadCascade:
    return design_chebyshev2_bandpass(PREFILTER_ORDER, *band_hz, PREFILTER_ATTEN_DB, fs_hz)


def aligned_correlation(
    a: np.ndarray,
    b: np.ndarray,
    fs_hz: float,
    max_lag_s: float = 0.5,
    prefilter: bool = False,
) -> Tuple[float, float]:
    """Pearson r at the lag maximizing the cross-correlation; positive lag means b trails a."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"series must be 1-D and equally long, got {a.shape} and {b.shape}")
    if prefilter:
        cascade = chebyshev_prefilter(CORRELATION_BAND_HZ, fs_hz)
        a, b = filtfilt_offline(cascade, a), filtfilt_offline(cascade, b)
    if a.std() == 0 or b.std() == 0:
        raise NumericError("correlation is undefined for a zero-variance series")

    a0, b0 = a - a.mean(), b - b.mean()
    xcorr = signal.correlate(b0, a0, mode="full", method="fft")
    lags = signal.correlation_lags(b0.size, a0.size, mode="full")
    max_lag = min(int(round(max_lag_s * fs_hz)), a.size - 2)
    window = np.abs(lags) <= max_lag
    lag = int(lags[window][np.argmax(xcorr[window])])

    if lag >= 0:
        x, y = a[: a.size - lag], b[lag:]
    else:
        x, y = a[-lag:], b[: b.size + lag]
    r = float(np.clip(np.corrcoef(x, y)[0, 1], -1.0, 1.0))
    return r, lag / fs_hz


def _power_ratio_db(signal_power: float, noise_power: float, method: str) -> float:
    if noise_power <= ZERO_NOISE_RATIO * signal_power:
        logger.warning("%s: noise band is empty, reporting +inf", method)
        return math.inf
    if signal_power <= 0:
        return -math.inf
    return 10.0 * math.log10(signal_power / noise_power)


def _spectrum(x: np.ndarray, fs_hz: float, band_hz: Tuple[float, float], prefilter: bool) -> Spectrum:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a single series, got shape {x.shape}")
    if prefilter:
        x = filtfilt_offline(chebyshev_prefilter(band_hz, fs_hz), x)
    return welch_psd(x, fs_hz)


def snr_powerline(x: np.ndarray, fs_hz: float, prefilter: bool = False) -> float:
    """Wideband signal against the 50 Hz line component, in dB."""
    if fs_hz < 200:
        raise ValueError(f"powerline SNR needs fs >= 200 Hz, got {fs_hz}")
    psd = _spectrum(x, fs_hz, POWERLINE_BAND_HZ, prefilter)
    noise = float(psd.band_power(*LINE_NOISE_HZ))
    wideband = float(psd.band_power(*POWERLINE_BAND_HZ)) - noise
    return _power_ratio_db(wideband, noise, "snr_powerline")


def snr_alpha(x: np.ndarray, fs_hz: float, prefilter: bool = False) -> float:
    """Alpha band against the rest of 2-30 Hz, in dB."""
    if fs_hz < 64:
        raise ValueError(f"alpha SNR needs fs >= 64 Hz, got {fs_hz}")
    psd = _spectrum(x, fs_hz, CORRELATION_BAND_HZ, prefilter)
    alpha = float(psd.band_power(*ALPHA_BAND_HZ))
    rest = float(psd.band_power(*CORRELATION_BAND_HZ)) - alpha
    return _power_ratio_db(alpha, rest, "snr_alpha")


SNR_METHODS: Mapping[str, Callable[..., float]] = {
    "powerline": snr_powerline,
    "alpha": snr_alpha,
}


def _finite_mean(values: Iterable[float]) -> float:
    finite = [v for v in values if math.isfinite(v)]
    return float(np.mean(finite)) if finite else math.nan


@dataclass(frozen=True)
class SnrSummary:
    """SNR in dB per (segment, channel), with the three aggregations."""

    table: np.ndarray
    channels: Tuple[str, ...]

    @property
    def by_channel(self) -> Dict[str, float]:
        return {c: _finite_mean(self.table[:, i]) for i, c in enumerate(self.channels)}

    @property
    def by_segment(self) -> List[float]:
        return [_finite_mean(row) for row in self.table]

    @property
    def overall(self) -> float:
        return _finite_mean(self.table.ravel())


def snr_summary(
    rec: Recording, segments: Sequence[Annotation], method: str = "powerline"
) -> SnrSummary:
    estimate = SNR_METHODS[method]
    table = np.array(
        [
            [estimate(row, rec.fs_hz) for row in rec.slice_seconds(s.t_start_s, s.t_end_s).data]
            for s in segments
        ]
    ).reshape(len(segments), len(rec.channels))
    return SnrSummary(table=table, channels=rec.channels)


@dataclass(frozen=True)
class StateCorrelation:
    state: str
    mean: float
    ci_low: float
    ci_high: float
    n_segments: int
    n_samples: int


@dataclass(frozen=True)
class QualityReport:
    correlations: Mapping[str, StateCorrelation]
    snr: Mapping[str, Mapping[str, SnrSummary]]
    spectra: Mapping[str, Mapping[str, Spectrum]]
    omitted: Tuple[str, ...] = field(default=())

    def segment_counts(self) -> Dict[str, int]:
        return {state: c.n_segments for state, c in self.correlations.items()}

    def to_text(self) -> str:
        lines = ["# state n_segments n_samples mean_r ci_low ci_high"]
        for c in self.correlations.values():
            lines.append(
                f"{c.state} {c.n_segments} {c.n_samples} {c.mean:.4f} {c.ci_low:.4f} {c.ci_high:.4f}"
            )
        lines.append("# device method aggregation key snr_db")
        for device, methods in self.snr.items():
            for method, summary in methods.items():
                lines.append(f"{device} {method} overall all {summary.overall:.2f}")
                for channel, value in summary.by_channel.items():
                    lines.append(f"{device} {method} channel {channel} {value:.2f}")
                for i, value in enumerate(summary.by_segment):
                    lines.append(f"{device} {method} segment {i} {value:.2f}")
        for state in self.omitted:
            lines.append(f"# omitted {state}: no segments")
        return "\n".join(lines) + "\n"


def _bootstrap_ci(samples: np.ndarray, n_resamples: int, seed: int) -> Tuple[float, float]:
    mean = float(samples.mean())
    if samples.size < 2 or np.ptp(samples) == 0:
        return mean, mean
    result = stats.bootstrap(
        (samples,),
        np.mean,
        n_resamples=n_resamples,
        confidence_level=0.95,
        method="percentile",
        random_state=np.random.default_rng(seed),
    )
    low, high = result.confidence_interval
    return min(float(low), mean), max(float(high), mean)


def usable_segments(annotations: Sequence[Annotation], duration_s: float) -> List[Annotation]:
    """Clip annotations to the recording and drop those shorter than one Welch window."""
    usable = []
    for a in annotations:
        clipped = Annotation(min(a.t_start_s, duration_s), min(a.t_end_s, duration_s), a.label)
        if clipped.t_end_s - clipped.t_start_s < MIN_SEGMENT_S:
            logger.info(
                "skipping %s segment %.1f-%.1f s: under %.1f s within the %.1f s both devices cover",
                a.label,
                a.t_start_s,
                a.t_end_s,
                MIN_SEGMENT_S,
                duration_s,
            )
            continue
        usable.append(clipped)
    return usable


def state_report(
    device_a: Recording,
    device_b: Recording,
    annotations: Sequence[Annotation],
    states: Optional[Sequence[str]] = None,
    n_resamples: int = 1000,
    seed: int = 0,
    max_lag_s: float = 0.5,
) -> QualityReport:
    if device_a.fs_hz != device_b.fs_hz or device_a.channels != device_b.channels:
        raise ShapeError("both devices must share sampling rate and channel layout")
    fs = device_a.fs_hz
    n_common = min(device_a.n_samples, device_b.n_samples)
    if n_common < max(device_a.n_samples, device_b.n_samples):
        logger.warning(
            "devices differ in length (%d and %d samples); analysing the first %d",
            device_a.n_samples,
            device_b.n_samples,
            n_common,
        )
        device_a = device_a.replace(data=device_a.data[:, :n_common])
        device_b = device_b.replace(data=device_b.data[:, :n_common])
    if states is None:
        states = list(DEFAULT_STATES) + sorted(
            {a.label for a in annotations} - set(DEFAULT_STATES) - set(NON_STATE_LABELS)
        )
    annotations = usable_segments([a for a in annotations if a.label in states], n_common / fs)

    cascade = chebyshev_prefilter(CORRELATION_BAND_HZ, fs)
    filtered_a = device_a.replace(data=filtfilt_offline(cascade, device_a.data))
    filtered_b = device_b.replace(data=filtfilt_offline(cascade, device_b.data))

    correlations: Dict[str, StateCorrelation] = {}
    spectra: Dict[str, Dict[str, Spectrum]] = {}
    omitted = []
    for state in states:
        segments = [a for a in annotations if a.label == state]
        if not segments:
            logger.info("no usable segments labelled %s; omitting it from the report", state)
            omitted.append(state)
            continue

        samples = []
        for s in segments:
            seg_a = filtered_a.slice_seconds(s.t_start_s, s.t_end_s).data
            seg_b = filtered_b.slice_seconds(s.t_start_s, s.t_end_s).data
            for row_a, row_b in zip(seg_a, seg_b):
                r, _ = aligned_correlation(row_a, row_b, fs, max_lag_s=max_lag_s)
                samples.append(r)
        samples = np.asarray(samples)
        low, high = _bootstrap_ci(samples, n_resamples, seed)
        correlations[state] = StateCorrelation(
            state=state,
            mean=float(samples.mean()),
            ci_low=low,
            ci_high=high,
            n_segments=len(segments),
            n_samples=samples.size,
        )
        spectra[state] = {
            name: average_spectrum(rec, segments) for name, rec in (("a", device_a), ("b", device_b))
        }

    scored = [a for a in annotations if a.label in correlations]
    snr = {
        name: {method: snr_summary(rec, scored, method) for method in SNR_METHODS}
        for name, rec in (("a", device_a), ("b", device_b))
    }
    return QualityReport(
        correlations=correlations, snr=snr, spectra=spectra, omitted=tuple(omitted)
    )


def average_spectrum(rec: Recording, segments: Sequence[Annotation]) -> Spectrum:
    """Welch spectrum averaged over segments and channels."""
    pieces = [rec.slice_seconds(s.t_start_s, s.t_end_s).data for s in segments]
    seg_len = min([int(round(2.0 * rec.fs_hz))] + [p.shape[1] for p in pieces])
    spectra = [welch_psd(p, rec.fs_hz, seg_len=seg_len) for p in pieces]
    power = np.mean([s.power.mean(axis=0) for s in spectra], axis=0)
    return Spectrum(freqs_hz=spectra[0].freqs_hz, power=power)


def write_spectra(report: QualityReport, directory: Union[str, Path]) -> List[Path]:
    """One 'frequency power' file per state and device."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for state, devices in report.spectra.items():
        for device, spectrum in devices.items():
            path = directory / f"spectrum_{state}_{device}.txt"
            np.savetxt(
                path,
                np.column_stack([spectrum.freqs_hz, spectrum.power]),
                fmt="%.6g",
                header="frequency_hz power_uv2_per_hz",
            )
            written.append(path)
    return written

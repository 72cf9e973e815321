import math

import numpy as np
import pytest

from django_neoeeg.analysis import (
    _bootstrap_ci,
    aligned_correlation,
    snr_alpha,
    snr_powerline,
    snr_summary,
    state_report,
    usable_segments,
    write_spectra,
)
from django_neoeeg.core import Recording
from django_neoeeg.exceptions import NumericError, ShapeError
from django_neoeeg.stream.annotations import EYES_CLOSED, EYES_OPEN, SEIZURE, Annotation
from django_neoeeg.stream.simulator import DeviceSimulator, SynthConfig

FS = 250.0
T = np.arange(int(60 * FS)) / FS


def _tone(freq_hz: float, rms_uv: float) -> np.ndarray:
    return rms_uv * np.sqrt(2.0) * np.sin(2 * np.pi * freq_hz * T)


def test_delayed_copy_is_found_at_its_lag():
    # given
    base = np.random.default_rng(0).standard_normal(T.size + 25)
    a, b = base[25:], base[: T.size]

    # when
    r, lag_s = aligned_correlation(a, b, FS, max_lag_s=0.5)

    # then
    assert lag_s == pytest.approx(0.1, abs=1 / FS)
    assert r >= 0.99


def test_lag_search_is_bounded_by_the_maximum_lag():
    # given
    base = np.random.default_rng(1).standard_normal(T.size + 250)
    a, b = base[250:], base[: T.size]

    # when
    r, lag_s = aligned_correlation(a, b, FS, max_lag_s=0.5)

    # then
    assert abs(lag_s) <= 0.5
    assert r < 0.1


def test_correlation_needs_matching_non_constant_series():
    with pytest.raises(ShapeError):
        aligned_correlation(np.zeros(10), np.zeros(11), FS)
    with pytest.raises(NumericError, match="zero-variance"):
        aligned_correlation(np.ones(500), np.random.default_rng(0).standard_normal(500), FS)


def test_powerline_snr_of_a_tone_over_hum_is_20_db():
    # given
    x = _tone(10.0, 20.0) + _tone(50.0, 2.0)

    # then
    assert snr_powerline(x, FS) == pytest.approx(20.0, abs=0.5)


def test_powerline_snr_of_equal_powers_is_0_db():
    # given
    x = _tone(10.0, 2.0) + _tone(50.0, 2.0)

    # then
    assert snr_powerline(x, FS) == pytest.approx(0.0, abs=0.5)


def test_powerline_snr_without_hum_is_infinite():
    assert snr_powerline(_tone(10.0, 20.0), FS) == math.inf


def test_powerline_snr_needs_a_fast_enough_rate():
    with pytest.raises(ValueError, match="200"):
        snr_powerline(np.random.default_rng(0).standard_normal(2560), 128.0)


def test_alpha_snr_of_white_noise_follows_the_bandwidth_ratio():
    # given
    x = np.random.default_rng(3).standard_normal(T.size)

    # then
    assert snr_alpha(x, FS) == pytest.approx(10 * math.log10(5 / 23), abs=1.0)


def test_alpha_snr_rises_with_an_alpha_rhythm():
    # given
    noise = np.random.default_rng(4).standard_normal(T.size)

    # then
    assert snr_alpha(noise + _tone(10.0, 5.0), FS) > snr_alpha(noise, FS) + 10.0


def test_snr_summary_aggregates_by_channel_segment_and_overall():
    # given
    data = np.vstack([_tone(10.0, 20.0) + _tone(50.0, 2.0), _tone(10.0, 2.0) + _tone(50.0, 2.0)])
    recording = Recording(fs_hz=FS, channels=["C3", "C4"], data=data)
    segments = [Annotation(0.0, 30.0, EYES_OPEN), Annotation(30.0, 60.0, EYES_OPEN)]

    # when
    summary = snr_summary(recording, segments)

    # then
    assert summary.table.shape == (2, 2)
    assert summary.by_channel["C3"] == pytest.approx(20.0, abs=0.5)
    assert summary.by_channel["C4"] == pytest.approx(0.0, abs=0.5)
    assert summary.by_segment[0] == pytest.approx(10.0, abs=0.5)
    assert summary.overall == pytest.approx(10.0, abs=0.5)


def test_infinite_snr_values_are_left_out_of_the_means():
    # given
    data = np.vstack([_tone(10.0, 20.0), _tone(10.0, 20.0) + _tone(50.0, 2.0)])
    recording = Recording(fs_hz=FS, channels=["C3", "C4"], data=data)

    # when
    summary = snr_summary(recording, [Annotation(0.0, 60.0, EYES_OPEN)])

    # then
    assert summary.by_channel["C3"] == math.inf
    assert summary.overall == pytest.approx(20.0, abs=0.5)


def test_bootstrap_interval_brackets_the_mean():
    # given
    samples = np.random.default_rng(5).normal(0.8, 0.05, size=40)

    # when
    low, high = _bootstrap_ci(samples, n_resamples=500, seed=0)

    # then
    assert low <= samples.mean() <= high
    assert high - low < 0.1
    assert _bootstrap_ci(np.array([0.7]), 500, 0) == (0.7, 0.7)


@pytest.fixture
def two_devices():
    simulator = DeviceSimulator(SynthConfig(seed=11, duration_s=40.0, eyes_closed=[(20.0, 40.0)]))
    annotations = [Annotation(0.0, 10.0, EYES_OPEN), Annotation(10.0, 20.0, EYES_OPEN)]
    annotations += simulator.annotations()
    return simulator.recording(0), simulator.recording(1), annotations


def test_state_report_correlates_devices_per_state(two_devices):
    # given
    device_a, device_b, annotations = two_devices

    # when
    report = state_report(device_a, device_b, annotations, n_resamples=200)

    # then
    assert report.segment_counts() == {EYES_OPEN: 2, EYES_CLOSED: 1}
    assert report.omitted == (SEIZURE,)
    for correlation in report.correlations.values():
        assert correlation.mean > 0.9
        assert correlation.ci_low <= correlation.mean <= correlation.ci_high
        assert correlation.n_samples == correlation.n_segments * 8
    assert set(report.snr) == {"a", "b"}
    assert set(report.snr["a"]) == {"powerline", "alpha"}


def test_eyes_closed_spectrum_carries_more_alpha(two_devices):
    # given
    device_a, device_b, annotations = two_devices

    # when
    spectra = state_report(device_a, device_b, annotations, n_resamples=100).spectra

    # then
    closed = float(spectra[EYES_CLOSED]["a"].band_power(8.0, 13.0))
    opened = float(spectra[EYES_OPEN]["a"].band_power(8.0, 13.0))
    assert closed > 2 * opened


def test_report_text_names_every_state_and_omission(two_devices):
    # given
    report = state_report(*two_devices, n_resamples=100)

    # when
    lines = report.to_text().splitlines()

    # then
    assert lines[0] == "# state n_segments n_samples mean_r ci_low ci_high"
    assert lines[1].startswith(f"{EYES_OPEN} 2 16 ")
    assert lines[-1] == f"# omitted {SEIZURE}: no segments"
    assert any(line.startswith("a powerline overall all ") for line in lines)


def test_spectra_are_written_per_state_and_device(tmp_path, two_devices):
    # given
    report = state_report(*two_devices, n_resamples=100)

    # when
    paths = write_spectra(report, tmp_path / "spectra")

    # then
    assert sorted(p.name for p in paths) == [
        f"spectrum_{EYES_CLOSED}_a.txt",
        f"spectrum_{EYES_CLOSED}_b.txt",
        f"spectrum_{EYES_OPEN}_a.txt",
        f"spectrum_{EYES_OPEN}_b.txt",
    ]
    table = np.loadtxt(paths[0])
    assert table.shape[1] == 2
    assert table[0, 0] == 0.0


def test_devices_must_share_a_layout(two_devices):
    # given
    device_a, device_b, annotations = two_devices

    # then
    with pytest.raises(ShapeError):
        state_report(device_a, device_b.select(device_b.channels[:4]), annotations)


def test_segments_past_the_end_of_the_recording_are_skipped(two_devices):
    # given
    device_a, device_b, annotations = two_devices
    annotations = annotations + [Annotation(41.0, 45.0, EYES_OPEN), Annotation(39.0, 45.0, SEIZURE)]

    # when
    report = state_report(device_a, device_b, annotations, n_resamples=100)

    # then
    assert report.segment_counts() == {EYES_OPEN: 2, EYES_CLOSED: 1}
    assert report.omitted == (SEIZURE,)


def test_a_shorter_device_clips_the_segments_to_the_common_length(two_devices):
    # given
    device_a, device_b, annotations = two_devices
    truncated = device_b.replace(data=device_b.data[:, : int(30 * FS)])

    # when
    report = state_report(device_a, truncated, annotations, n_resamples=100)

    # then
    assert report.segment_counts() == {EYES_OPEN: 2, EYES_CLOSED: 1}
    assert report.correlations[EYES_CLOSED].mean > 0.9
    assert report.snr["a"]["alpha"].table.shape == (3, 8)


def test_usable_segments_clip_and_drop_short_remainders():
    # given
    annotations = [
        Annotation(0.0, 10.0, EYES_OPEN),
        Annotation(8.0, 20.0, EYES_CLOSED),
        Annotation(9.5, 12.0, EYES_OPEN),
    ]

    # then
    assert usable_segments(annotations, 10.0) == [
        Annotation(0.0, 10.0, EYES_OPEN),
        Annotation(8.0, 10.0, EYES_CLOSED),
    ]


def test_identical_devices_correlate_perfectly(two_devices):
    # given
    device_a, _, annotations = two_devices

    # when
    report = state_report(device_a, device_a, annotations, n_resamples=100)

    # then
    for correlation in report.correlations.values():
        assert correlation.mean == pytest.approx(1.0, abs=1e-9)


def test_correlation_falls_as_device_noise_rises():
    # given
    simulator = DeviceSimulator(SynthConfig(seed=12, duration_s=20.0))
    annotations = [Annotation(0.0, 20.0, EYES_OPEN)]
    reference = simulator.recording(0)

    # when
    means = [
        state_report(reference, simulator.recording(1, noise_uv=noise), annotations, n_resamples=50)
        .correlations[EYES_OPEN]
        .mean
        for noise in (1.0, 5.0, 20.0, 50.0)
    ]

    # then
    assert means == sorted(means, reverse=True)
    assert len(set(means)) == 4


def test_correlation_ignores_per_channel_gain_and_offset(two_devices):
    # given
    device_a, device_b, annotations = two_devices
    gains = np.linspace(0.5, 4.0, 8)[:, np.newaxis]
    offsets = np.linspace(-200.0, 200.0, 8)[:, np.newaxis]
    rescaled = device_b.replace(data=gains * device_b.data + offsets)

    # when
    plain = state_report(device_a, device_b, annotations, n_resamples=100)
    scaled = state_report(device_a, rescaled, annotations, n_resamples=100)

    # then
    for state, correlation in plain.correlations.items():
        assert scaled.correlations[state].mean == pytest.approx(correlation.mean, abs=1e-6)


@pytest.mark.parametrize("estimate", [snr_powerline, snr_alpha])
def test_snr_ignores_global_amplitude(estimate):
    # given
    x = DeviceSimulator(SynthConfig(seed=13, duration_s=20.0, eyes_closed=[(0.0, 20.0)])).microvolts()[0]

    # then
    assert estimate(7.5 * x, FS) == pytest.approx(estimate(x, FS), abs=1e-9)


def test_segment_inventory_is_reproduced_in_the_report():
    # given
    config = SynthConfig(seed=14, duration_s=85.0, eyes_closed=[(35.0, 65.0)], seizures=[(65.0, 85.0)])
    simulator = DeviceSimulator(config)
    layout = [(EYES_OPEN, 0.0, 7), (EYES_CLOSED, 35.0, 6), (SEIZURE, 65.0, 4)]
    annotations = [
        Annotation(start + 5.0 * i, start + 5.0 * (i + 1), state)
        for state, start, count in layout
        for i in range(count)
    ]

    # when
    report = state_report(simulator.recording(0), simulator.recording(1), annotations, n_resamples=100)

    # then
    assert report.segment_counts() == {EYES_OPEN: 7, EYES_CLOSED: 6, SEIZURE: 4}
    lines = report.to_text().splitlines()
    assert [line.split()[:3] for line in lines[1:4]] == [
        [EYES_OPEN, "7", "56"],
        [EYES_CLOSED, "6", "48"],
        [SEIZURE, "4", "32"],
    ]

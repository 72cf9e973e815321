from unittest import mock

import numpy as np
import pytest

from django_neoeeg.core import (
    ADC_MAX,
    ADC_MIN,
    EPOCH_SAMPLES,
    MODEL_FS_HZ,
    Epoch,
    EpochLabel,
    EpochSegmenter,
    Recording,
    SampleFrame,
    SegmentMode,
    SeizureTracker,
    adc_to_microvolts,
    detection_decision,
    microvolts_to_adc,
    segment_epochs,
)
from django_neoeeg.exceptions import ShapeError


def _recording(seconds: float) -> Recording:
    n = int(seconds * MODEL_FS_HZ)
    return Recording(
        fs_hz=MODEL_FS_HZ,
        channels=[f"ch{i}" for i in range(12)],
        data=np.random.default_rng(0).standard_normal((12, n)),
    )


def _brute_force_starts(mask_seconds: np.ndarray) -> list:
    """Window starts in whole seconds, walking the per-second mask directly."""
    starts, start = [], 0
    while start + 12 <= mask_seconds.size:
        starts.append(start)
        start += 1 if mask_seconds[start : start + 12].sum() >= 1 else 2
    return starts


def test_one_converter_count_is_the_documented_lsb():
    # when
    lsb = adc_to_microvolts(1)

    # then
    assert lsb == pytest.approx(2 * 4.5 / 24 / 2**24 * 1e6)


def test_converter_full_scale_maps_to_plus_minus_vref_over_gain():
    # when
    top = adc_to_microvolts(np.array([ADC_MAX]))[0]
    bottom = adc_to_microvolts(np.array([ADC_MIN]))[0]

    # then
    assert bottom == pytest.approx(-4.5 / 24 * 1e6)
    assert top == pytest.approx(4.5 / 24 * 1e6, rel=1e-6)


def test_microvolts_to_adc_saturates_at_the_converter_range():
    # when
    counts = microvolts_to_adc(np.array([1e9, -1e9, 0.0]))

    # then
    assert counts.tolist() == [ADC_MAX, ADC_MIN, 0]


def test_adc_to_microvolts_rejects_a_non_positive_gain():
    with pytest.raises(ValueError):
        adc_to_microvolts(1, gain=0.0)


def test_sample_frame_rejects_values_outside_24_bits():
    with pytest.raises(ValueError):
        SampleFrame(seq=0, t_us=0, adc=(ADC_MAX + 1,) + (0,) * 7)


def test_sample_frame_requires_eight_channels():
    with pytest.raises(ShapeError):
        SampleFrame(seq=0, t_us=0, adc=(0,) * 7)


def test_sample_frame_scales_imu_counts_to_physical_units(sample_frame_factory):
    # given
    frame = sample_frame_factory(accel=(0, 0, 16384), gyro=(131, 0, 0))

    # then
    assert frame.accel_g.tolist() == [0.0, 0.0, 1.0]
    assert frame.gyro_dps.tolist() == [1.0, 0.0, 0.0]


def test_recording_is_immutable():
    # given
    rec = _recording(12)

    # then
    with pytest.raises(ValueError):
        rec.data[0, 0] = 1.0


def test_recording_rejects_non_finite_samples():
    with pytest.raises(ValueError):
        Recording(fs_hz=250, channels=["a"], data=np.array([[0.0, np.nan]]))


def test_recording_slice_and_select_keep_metadata():
    # given
    rec = _recording(20).replace(meta={"source": "x"})

    # when
    part = rec.slice_seconds(2, 5).select(["ch3", "ch1"])

    # then
    assert part.n_samples == 3 * MODEL_FS_HZ
    assert part.channels == ("ch3", "ch1")
    assert part.meta["source"] == "x"
    np.testing.assert_array_equal(part.data[0], rec.data[3, 64:160])


def test_epoch_must_be_twelve_by_384():
    with pytest.raises(ShapeError):
        Epoch(data=np.zeros((12, 383)))


def test_epoch_label_is_seizure_from_one_second_of_seizure():
    assert EpochLabel(seizure_seconds=1.0).is_seizure
    assert not EpochLabel(seizure_seconds=0.99).is_seizure


def test_fully_non_seizure_30_s_record_gives_10_negative_epochs():
    # when
    segments = segment_epochs(_recording(30), np.zeros(30))

    # then
    assert len(segments) == 10
    assert not any(label.is_seizure for _, label in segments)
    assert [epoch.t_start_s for epoch, _ in segments] == [float(s) for s in range(0, 20, 2)]


def test_fully_seizure_30_s_record_gives_19_positive_epochs():
    # when
    segments = segment_epochs(_recording(30), np.ones(30))

    # then
    assert len(segments) == 19
    assert all(label.is_seizure for _, label in segments)
    assert all(epoch.data.shape == (12, EPOCH_SAMPLES) for epoch, _ in segments)


def test_stream_mode_uses_a_fixed_hop_regardless_of_labels():
    # when
    segments = segment_epochs(_recording(30), np.zeros(30), mode="stream", hop_s=1.0)

    # then
    assert len(segments) == 19


def test_segmentation_requires_the_model_rate():
    # given
    rec = _recording(30).replace(fs_hz=64.0)

    # then
    with pytest.raises(ShapeError):
        segment_epochs(rec, np.zeros(30))


def test_segmentation_rejects_a_mask_shorter_than_the_recording():
    with pytest.raises(ShapeError):
        segment_epochs(_recording(30), np.zeros(20))


def test_training_windows_match_the_brute_force_enumerator_on_random_masks():
    # given
    rng = np.random.default_rng(1234)

    for _ in range(1000):
        n_seconds = int(rng.integers(12, 61))
        mask = np.zeros(n_seconds, dtype=bool)
        for _ in range(int(rng.integers(0, 4))):
            start = int(rng.integers(0, n_seconds))
            mask[start : start + int(rng.integers(1, 15))] = True

        # when
        samples = EpochSegmenter.sample_mask(mask, n_seconds * MODEL_FS_HZ, MODEL_FS_HZ)
        starts = EpochSegmenter.window_starts(samples, MODEL_FS_HZ, mode=SegmentMode.TRAIN)

        # then
        assert [s // MODEL_FS_HZ for s in starts] == _brute_force_starts(mask)


@pytest.mark.parametrize("min_seconds", [1.0, 3.0])
def test_labelling_threshold_follows_the_class_constant(min_seconds):
    # when
    with mock.patch.object(EpochLabel, "min_seizure_seconds", min_seconds):
        label = EpochLabel(seizure_seconds=2.0)

    # then
    assert label.is_seizure is (min_seconds <= 2.0)


def test_tracker_reports_onset_after_five_seconds_above_threshold():
    # given
    tracker = SeizureTracker(threshold=0.5, hop_s=1.0)
    probs = [0.1, 0.2, 0.9, 0.8, 0.95, 0.7, 0.6, 0.9]

    # when
    onsets = [tracker.update(float(t), p) for t, p in enumerate(probs)]

    # then
    reported = [o for o in onsets if o is not None]
    assert len(reported) == 1
    assert reported[0].t_onset_s == 2.0
    assert reported[0].t_detected_s == 6.0
    assert reported[0].peak_probability == 0.95


def test_tracker_resets_when_the_run_is_interrupted():
    # given
    probs = [0.9, 0.9, 0.9, 0.9, 0.1, 0.9, 0.9, 0.9, 0.9]

    # when
    onset = detection_decision(probs)

    # then
    assert onset is None


def test_detection_decision_uses_the_hop_for_persistence():
    # when
    onset = detection_decision([0.9, 0.9, 0.9], hop_s=2.0, t0_s=10.0)

    # then
    assert onset is not None
    assert onset.t_onset_s == 10.0
    assert onset.t_detected_s == 14.0


def test_a_probability_at_the_threshold_does_not_count():
    assert detection_decision([0.5] * 10, threshold=0.5) is None


@pytest.mark.parametrize("min_event_seconds", [2.0, 8.0])
def test_persistence_follows_the_class_constant(min_event_seconds):
    # when
    with mock.patch.object(SeizureTracker, "min_event_seconds", min_event_seconds):
        onset = detection_decision([0.9] * 10)

    # then
    assert onset.t_detected_s == min_event_seconds - 1.0

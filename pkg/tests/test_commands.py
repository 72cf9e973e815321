from io import StringIO

import numpy as np
import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from django_neoeeg.core import Recording
from django_neoeeg.detector import WeightContainer, random_container
from django_neoeeg.exceptions import ExitCode
from django_neoeeg.models import MonitoringSession, ScheduledIcaRefit, SeizureEvent
from django_neoeeg.stream.annotations import Annotation, read_annotations, write_annotations
from django_neoeeg.stream.edf import write_edf
from django_neoeeg.stream.session import DEFAULT_CHANNELS, read_session, write_recording
from django_neoeeg.stream.simulator import DeviceSimulator


def run(*args) -> str:
    out = StringIO()
    call_command(*args, stdout=out)
    return out.getvalue()


def returncode(*args) -> int:
    with pytest.raises(CommandError) as exc_info:
        run(*args)
    return exc_info.value.returncode


def _edf(directory, name: str, seconds: int, seizure: bool = None):
    data = 20 * np.random.default_rng(seconds).standard_normal((8, seconds * 250))
    write_edf(Recording(fs_hz=250, channels=DEFAULT_CHANNELS, data=data), directory / f"{name}.edf")
    if seizure is not None:
        (directory / f"{name}.mask").write_text(" ".join([str(int(seizure))] * seconds))


def test_simulate_writes_a_session_and_its_annotations(tmp_path):
    # given
    scenario = tmp_path / "scenario.yaml"
    scenario.write_text("duration_s: 20\nseizures: [[5, 10]]\nmotions: [[12, 13]]\n")

    # when
    out = run(
        "simulate",
        "--scenario", str(scenario),
        "--seed", "3",
        "--output", str(tmp_path / "sim.nes"),
        "--annotations", str(tmp_path / "sim.txt"),
    )

    # then
    assert out.startswith("wrote 5000 frames (20.0 s)")
    session = read_session(tmp_path / "sim.nes")
    assert session.n_samples == 5000
    assert session.header.device_id == "neoeeg-sim-0"
    assert read_annotations(tmp_path / "sim.txt") == [
        Annotation(5.0, 10.0, "seizure"),
        Annotation(12.0, 13.0, "motion"),
    ]
    assert session.annotations == read_annotations(tmp_path / "sim.txt")


def test_simulate_rejects_unknown_scenario_keys(tmp_path):
    # given
    scenario = tmp_path / "scenario.yaml"
    scenario.write_text("duraton_s: 20\n")

    # then
    assert returncode("simulate", "--scenario", str(scenario), "--output", str(tmp_path / "x")) == 1


def test_prepare_cuts_background_and_seizure_recordings(tmp_path):
    # given
    _edf(tmp_path, "calm", 30, seizure=False)
    _edf(tmp_path, "ictal", 30, seizure=True)
    output = tmp_path / "dataset.nwc"

    # when
    out = run("prepare", str(tmp_path), str(output))

    # then
    assert out.strip() == "29 epochs from 2 files: 19 seizure, 10 non-seizure"
    dataset = WeightContainer.read(output)
    assert dataset.kind == "epoch-dataset"
    assert dataset["epochs"].shape == (29, 12, 384)
    assert dataset["labels"].sum() == 19
    assert dataset.metadata["sources"] == ["calm.edf:10", "ictal.edf:19"]


def test_prepare_treats_recordings_without_a_mask_as_seizure_free(tmp_path):
    # given
    _edf(tmp_path, "unlabelled", 30)

    # then
    assert run("prepare", str(tmp_path), str(tmp_path / "d.nwc")).startswith("10 epochs")


def test_prepare_writes_nothing_for_recordings_shorter_than_an_epoch(tmp_path):
    # given
    _edf(tmp_path, "short", 11, seizure=False)

    # when
    out = run("prepare", str(tmp_path), str(tmp_path / "d.nwc"))

    # then
    assert out.startswith("0 epochs from 1 files")
    assert not (tmp_path / "d.nwc").exists()


def test_prepare_needs_a_directory(tmp_path):
    assert returncode("prepare", str(tmp_path / "absent"), str(tmp_path / "d.nwc")) == ExitCode.IO


def test_detect_reports_the_seizure_with_the_oracle(tmp_path, seizure_session):
    # when
    out = run("detect", str(seizure_session), "--oracle", "--relevance", str(tmp_path / "rel.txt"))

    # then
    lines = out.splitlines()
    assert sum(line.startswith("EPOCH ") for line in lines) == 79
    assert sum(line.startswith("SEIZURE ") for line in lines) == 1
    assert lines[-1] == "SUMMARY seizures=1"
    assert len((tmp_path / "rel.txt").read_text().splitlines()) == 2 * 79


def test_detect_scores_edf_files_with_a_weight_container(tmp_path):
    # given
    weights = tmp_path / "weights.nwc"
    random_container(seed=0).write(weights)
    recording = DeviceSimulator().recording().slice_seconds(0.0, 20.0)
    write_edf(recording, tmp_path / "rec.edf")

    # when
    out = run("detect", str(tmp_path / "rec.edf"), "--weights", str(weights), "--hop", "4")

    # then
    epochs = [line for line in out.splitlines() if line.startswith("EPOCH ")]
    assert [line.split()[1] for line in epochs] == ["0.0", "4.0", "8.0"]
    assert all(0.0 < float(line.split()[2]) < 1.0 for line in epochs)


def test_detect_exit_codes(tmp_path, seizure_session):
    assert returncode("detect") == ExitCode.USAGE
    assert returncode("detect", str(seizure_session)) == ExitCode.USAGE
    missing_weights = str(tmp_path / "none.nwc")
    assert returncode("detect", str(seizure_session), "--weights", missing_weights) == ExitCode.USAGE
    assert returncode("detect", str(tmp_path / "absent.nes"), "--oracle") == ExitCode.IO
    assert returncode("detect", str(seizure_session), "--oracle", "--threshold", "2") == ExitCode.USAGE


@pytest.fixture
def blinking_session(tmp_path, synth_config_factory):
    config = synth_config_factory(duration_s=30.0, blinks=[3.0, 8.0, 13.0, 18.0, 23.0, 28.0])
    simulator = DeviceSimulator(config)
    path = tmp_path / "blinks.nes"
    write_recording(simulator.recording(), path, imu=np.vstack(simulator.imu_counts()))
    return path


def test_clean_writes_the_cleaned_session_and_a_component_report(tmp_path, blinking_session):
    # when
    out = run("clean", str(blinking_session))

    # then
    assert out.startswith("# window start=0.0s removed=")
    assert "# component label" in out
    cleaned = read_session(f"{blinking_session}.clean")
    original = read_session(blinking_session)
    assert cleaned.n_samples == original.n_samples
    np.testing.assert_array_equal(cleaned.imu, original.imu)
    assert np.sqrt(np.mean(cleaned.data[0] ** 2)) < np.sqrt(np.mean(original.data[0] ** 2))


def test_clean_writes_the_report_to_a_file(tmp_path, blinking_session):
    # when
    out = run(
        "clean",
        str(blinking_session),
        "--output", str(tmp_path / "out.nes"),
        "--report", str(tmp_path / "r.txt"),
    )

    # then
    assert out == ""
    assert (tmp_path / "out.nes").exists()
    assert (tmp_path / "r.txt").read_text().startswith("# window start=0.0s")


def test_clean_drains_pending_refits(blinking_session, monitoring_session_factory):
    # given
    recorded = monitoring_session_factory(session_file=str(blinking_session))
    unrecorded = monitoring_session_factory()
    recorded.schedule_ica_refit()
    unrecorded.schedule_ica_refit()

    # when
    run("clean", "--pending")

    # then
    assert not ScheduledIcaRefit.objects.pending().exists()
    assert read_session(f"{blinking_session}.clean").n_samples == 7500


def test_clean_needs_an_input_or_pending():
    assert returncode("clean") == ExitCode.USAGE


def test_analyze_reports_each_state(tmp_path, synth_config_factory):
    # given
    simulator = DeviceSimulator(synth_config_factory(duration_s=40.0, eyes_closed=[(20.0, 40.0)]))
    for device in (0, 1):
        write_recording(simulator.recording(device), tmp_path / f"dev{device}.nes")
    annotations = tmp_path / "states.txt"
    states = [Annotation(0.0, 20.0, "eyes-open"), Annotation(20.0, 40.0, "eyes-closed")]
    write_annotations(states, annotations)

    # when
    out = run(
        "analyze",
        str(tmp_path / "dev0.nes"),
        str(tmp_path / "dev1.nes"),
        "--annotations", str(annotations),
        "--resamples", "100",
        "--output", str(tmp_path / "report"),
    )

    # then
    lines = out.splitlines()
    assert lines[0] == "# state n_segments n_samples mean_r ci_low ci_high"
    assert lines[1].startswith("eyes-open 1 8 ")
    assert lines[2].startswith("eyes-closed 1 8 ")
    assert float(lines[1].split()[3]) > 0.9
    assert (tmp_path / "report" / "report.txt").read_text().startswith(lines[0])
    assert len(list((tmp_path / "report").glob("spectrum_*.txt"))) == 4


def test_filter_design_prints_sections_and_response():
    # when
    out = run("filter_design", "preprocess", "--freqs", "10", "50")

    # then
    lines = out.splitlines()
    n_sections = int(lines[0].split("sections=")[1])
    assert lines[0].startswith("# preprocess fs=250 ")
    assert all(len(line.split()) == 5 for line in lines[1 : 1 + n_sections])
    assert lines[1 + n_sections] == "# frequency_hz magnitude_db"
    passband, notch = (float(line.split()[1]) for line in lines[-2:])
    assert abs(passband) < 1.0
    assert notch < -40.0


def test_filter_design_checks_its_arguments():
    assert returncode("filter_design", "butterworth", "--hi", "16") == ExitCode.USAGE
    assert returncode("filter_design", "elliptic") == ExitCode.USAGE
    assert returncode("filter_design", "notch", "--fs", "0") == ExitCode.USAGE
    assert returncode("filter_design", "chebyshev2", "--lo", "30", "--hi", "2") == ExitCode.NUMERIC


def test_monitor_replays_a_session_and_persists_its_events(tmp_path, seizure_session):
    # when
    out = run("monitor", "--replay", str(seizure_session), "--oracle", "--record", str(tmp_path / "copy.nes"))

    # then
    lines = out.splitlines()
    assert sum(line.startswith("SEIZURE onset=") for line in lines) == 1
    assert lines[-1].startswith("SUMMARY frames=22500 ")
    assert lines[-1].endswith("seizures=1 motion=0")
    session = MonitoringSession.objects.get()
    assert not session.is_open()
    assert session.frames_received == 22500
    assert session.refit_scheduled()
    event = SeizureEvent.objects.for_session(session).get()
    assert event.onset_s == pytest.approx(40.0, abs=6.0)
    assert read_session(tmp_path / "copy.nes").n_samples == 22500


def test_monitor_without_persistence_leaves_the_database_alone(seizure_session):
    # when
    run("monitor", "--replay", str(seizure_session), "--oracle", "--no-persist")

    # then
    assert not MonitoringSession.objects.exists()

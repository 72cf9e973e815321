import pytest

from django_neoeeg.montage import MontageGraph
from django_neoeeg.stream.session import write_recording
from django_neoeeg.stream.simulator import DeviceSimulator

from .factories import (
    MonitoringSessionFactory,
    MotionAlertFactory,
    SampleFrameFactory,
    ScheduledIcaRefitFactory,
    SeizureEventFactory,
    SynthConfigFactory,
)


@pytest.fixture
def monitoring_session_factory():
    return MonitoringSessionFactory


@pytest.fixture
def monitoring_session(monitoring_session_factory):
    return monitoring_session_factory()


@pytest.fixture
def seizure_event_factory():
    return SeizureEventFactory


@pytest.fixture
def motion_alert_factory():
    return MotionAlertFactory


@pytest.fixture
def scheduled_ica_refit_factory():
    return ScheduledIcaRefitFactory


@pytest.fixture
def sample_frame_factory():
    SampleFrameFactory.reset_sequence()
    return SampleFrameFactory


@pytest.fixture
def synth_config_factory():
    return SynthConfigFactory


@pytest.fixture
def montage():
    return MontageGraph()


@pytest.fixture
def seizure_session(tmp_path, synth_config_factory):
    """90 s session with a 30 s seizure starting at 40 s, written to disk."""
    config = synth_config_factory(seed=7, duration_s=90.0, seizures=[(40.0, 70.0)])
    simulator = DeviceSimulator(config)
    path = tmp_path / "seizure.nes"
    write_recording(simulator.recording(), path, annotations=simulator.annotations())
    return path

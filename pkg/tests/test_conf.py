import pytest

from django_neoeeg.conf import CONFIG_ENV, PORT_ENV, AppSettings
from django_neoeeg.dsp import EdgeConvention
from django_neoeeg.exceptions import ConfigurationError


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "neoeeg.yaml"
    path.write_text("port: 6000\ndetection_threshold: 0.7\nfilter_edges: nyquist\n")
    return path


def test_defaults_apply_without_any_source():
    # when
    conf = AppSettings.load()

    # then
    assert conf.endpoint == ("127.0.0.1", 5555)
    assert conf.edges is EdgeConvention.FS
    assert conf.weights is None


def test_django_settings_override_the_defaults(settings):
    # given
    settings.NEOEEG = {"port": 7000, "zscore": False}

    # when
    conf = AppSettings.load()

    # then
    assert conf.port == 7000
    assert not conf.zscore


def test_yaml_file_overrides_django_settings(settings, config_file):
    # given
    settings.NEOEEG = {"port": 7000, "queue_size": 8}

    # when
    conf = AppSettings.load(config_file)

    # then
    assert conf.port == 6000
    assert conf.queue_size == 8
    assert conf.edges is EdgeConvention.NYQUIST


def test_config_file_is_found_through_the_environment(monkeypatch, config_file):
    # given
    monkeypatch.setenv(CONFIG_ENV, str(config_file))

    # then
    assert AppSettings.load().detection_threshold == 0.7


def test_port_environment_variable_overrides_the_file(monkeypatch, config_file):
    # given
    monkeypatch.setenv(PORT_ENV, "6100")

    # then
    assert AppSettings.load(config_file).port == 6100


def test_flags_win_and_unset_flags_are_ignored(monkeypatch, config_file):
    # given
    monkeypatch.setenv(PORT_ENV, "6100")

    # when
    conf = AppSettings.load(config_file, {"port": 6200, "detection_threshold": None})

    # then
    assert conf.port == 6200
    assert conf.detection_threshold == 0.7


def test_unknown_keys_are_named(tmp_path, settings):
    # given
    path = tmp_path / "typo.yaml"
    path.write_text("prot: 6000\n")

    # then
    with pytest.raises(ConfigurationError, match="prot"):
        AppSettings.load(path)
    settings.NEOEEG = {"treshold": 0.5}
    with pytest.raises(ConfigurationError, match="settings.NEOEEG"):
        AppSettings.load()


def test_malformed_yaml_is_a_configuration_error(tmp_path):
    # given
    path = tmp_path / "broken.yaml"
    path.write_text("port: [6000\n")

    # then
    with pytest.raises(ConfigurationError, match="cannot load config"):
        AppSettings.load(path)


@pytest.mark.parametrize(
    "changes, message",
    [
        ({"filter_edges": "half"}, "filter_edges"),
        ({"detection_threshold": 1.0}, "detection_threshold"),
        ({"port": 0}, "port"),
        ({"frames_per_packet": 26}, "frames_per_packet"),
        ({"stream_hop_s": 0.0}, "stream_hop_s"),
        ({"weights": "/no/such/weights.nwc"}, "weights"),
    ],
)
def test_invalid_values_are_rejected(changes, message):
    with pytest.raises(ConfigurationError, match=message):
        AppSettings(**changes)


def test_non_integer_port_in_the_environment_is_rejected(monkeypatch):
    # given
    monkeypatch.setenv(PORT_ENV, "http")

    # then
    with pytest.raises(ConfigurationError, match=PORT_ENV):
        AppSettings.load()


def test_motion_thresholds_are_built_from_the_settings():
    # when
    thresholds = AppSettings(accel_thresh_g=0.3, quiet_time_s=1.0).motion_thresholds

    # then
    assert thresholds.accel_thresh_g == 0.3
    assert thresholds.quiet_time_s == 1.0
    assert thresholds.gyro_thresh_dps == 50.0

import numpy as np
import pytest

from django_neoeeg.core import Recording
from django_neoeeg.exceptions import ConfigurationError, ShapeError
from django_neoeeg.montage import (
    ElectrodeSet,
    MontageGraph,
    derive_bipolar,
    dump_montage,
    load_montage,
    reachability,
)


def _referential(labels, n=500, seed=0) -> Recording:
    rng = np.random.default_rng(seed)
    return Recording(fs_hz=250, channels=labels, data=rng.standard_normal((len(labels), n)))


def test_reduced_montage_has_twelve_channels_over_nine_electrodes(montage):
    # then
    assert montage.n_channels == 12
    assert montage.labels[0] == "Fp1-T3"
    assert montage.electrodes.recorded == ("Fp1", "Fp2", "C3", "C4", "T3", "T4", "O1", "O2")
    assert all(count >= 1 for count in montage.electrode_usage().values())


def test_adjacency_is_symmetric_without_self_loops(montage):
    # when
    adjacency = montage.adjacency

    # then
    assert adjacency.shape == (12, 12)
    assert (adjacency == adjacency.T).all()
    assert not adjacency.diagonal().any()
    assert montage.adjacency_with_self_loops().diagonal().all()


def test_channels_sharing_an_electrode_are_adjacent(montage):
    # given
    index = {label: i for i, label in enumerate(montage.labels)}

    # then
    assert montage.adjacency[index["Fp1-T3"], index["T3-O1"]]
    assert montage.adjacency[index["C3-Cz"], index["Cz-C4"]]
    assert not montage.adjacency[index["Fp1-T3"], index["Fp2-T4"]]


def test_mean_third_order_reachability_is_at_least_three_quarters(montage):
    # when
    coverage = montage.mean_reachability(hops=3)

    # then
    assert coverage >= 0.75
    assert coverage == pytest.approx(56 / 72)


def test_reachability_counts_the_node_itself():
    # given
    path = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=bool)

    # when
    one_hop = reachability(path, hops=1)

    # then
    np.testing.assert_allclose(one_hop, [2 / 3, 1.0, 2 / 3])


def test_adjacency_hash_changes_with_channel_order(montage):
    # when
    permuted = montage.permuted([1, 0] + list(range(2, 12)))

    # then
    assert permuted.adjacency_hash() != montage.adjacency_hash()
    assert montage.adjacency_hash() == MontageGraph().adjacency_hash()


def test_unknown_electrodes_are_rejected():
    with pytest.raises(ConfigurationError):
        MontageGraph(channels=(("Fp1", "F7"),))


def test_repeated_pairs_are_rejected():
    with pytest.raises(ConfigurationError):
        MontageGraph(channels=(("Fp1", "T3"), ("Fp1", "T3")))


def test_disconnected_montages_are_rejected():
    with pytest.raises(ConfigurationError):
        MontageGraph(channels=(("Fp1", "T3"), ("C4", "O2")))


def test_electrode_set_needs_the_reference_among_its_labels():
    with pytest.raises(ConfigurationError):
        ElectrodeSet(reference="Pz")


def test_bipolar_derivation_treats_the_missing_reference_as_zero(montage):
    # given
    raw = _referential(montage.electrodes.recorded)

    # when
    bipolar = derive_bipolar(raw, montage)

    # then
    assert bipolar.channels == montage.labels
    np.testing.assert_allclose(
        bipolar.data[montage.labels.index("C3-Cz")], raw.data[raw.channel_index("C3")]
    )
    np.testing.assert_allclose(
        bipolar.data[0], raw.data[raw.channel_index("Fp1")] - raw.data[raw.channel_index("T3")]
    )


def test_bipolar_derivation_uses_a_recorded_reference_channel(montage):
    # given
    labels = ("Cz",) + montage.electrodes.recorded
    raw = _referential(labels)

    # when
    bipolar = derive_bipolar(raw, montage)

    # then
    np.testing.assert_allclose(
        bipolar.data[montage.labels.index("Cz-C4")],
        raw.data[raw.channel_index("Cz")] - raw.data[raw.channel_index("C4")],
    )


def test_bipolar_derivation_is_invariant_to_the_reference_choice(montage):
    # given
    raw = _referential(("Cz",) + montage.electrodes.recorded)
    common = np.random.default_rng(9).standard_normal(raw.n_samples)

    # when
    shifted = raw.replace(data=raw.data + common)

    # then
    np.testing.assert_allclose(
        derive_bipolar(shifted, montage).data, derive_bipolar(raw, montage).data, atol=1e-12
    )


def test_bipolar_derivation_requires_every_recorded_electrode(montage):
    # given
    raw = _referential(("Fp1", "Fp2", "C3", "C4", "T3", "T4", "O1", "Pz"))

    # then
    with pytest.raises(ShapeError):
        derive_bipolar(raw, montage)


def test_bipolar_derivation_rejects_an_extra_channel_other_than_the_reference(montage):
    # given
    raw = _referential(montage.electrodes.recorded + ("Pz",))

    # then
    with pytest.raises(ShapeError, match="unexpected channels Pz"):
        derive_bipolar(raw, montage)


def test_montage_file_round_trips(tmp_path, montage):
    # given
    path = tmp_path / "reduced.txt"

    # when
    dump_montage(montage, path)
    loaded = load_montage(path)

    # then
    assert loaded.channels == montage.channels
    assert loaded.name == "reduced"


def test_montage_file_allows_comments_and_rejects_bad_lines(tmp_path):
    # given
    path = tmp_path / "bad.txt"
    path.write_text("# pairs\nFp1-T3\nT3 O1\n")

    # then
    with pytest.raises(ConfigurationError, match="bad.txt:3"):
        load_montage(path)

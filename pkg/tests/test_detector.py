from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
import torch

from django_neoeeg.core import Epoch
from django_neoeeg.detector import (
    BandPowerOracle,
    CnnGat,
    Detector,
    ModelConfig,
    Relevance,
    forward,
    format_relevance,
    gat_layer,
    grad_cam,
    parameter_counts,
    preprocess_for_model,
    random_container,
)
from django_neoeeg.detector.model import PUBLISHED_COUNTS
from django_neoeeg.exceptions import NumericError, ShapeError, WeightContainerError
from django_neoeeg.montage import derive_bipolar
from django_neoeeg.stream.simulator import DeviceSimulator, SynthConfig


def _epoch(seed: int = 0) -> Epoch:
    return Epoch(data=np.random.default_rng(seed).standard_normal((12, 384)))


def _double_detector(seed: int, adjacency=None, channels=()) -> Detector:
    return Detector(CnnGat.random(seed, adjacency=adjacency).double(), channels=channels)


def _independent_counts(c: ModelConfig):
    """Counts derived from layer arithmetic alone, without touching torch modules."""
    short, long = c.block1_kernels
    f = c.block1_filters
    learnable = f * short + f + f * long + f + 2 * f
    running = 2 * f

    widths = (f,) + c.residual_filters
    for cin, cout in zip(widths, widths[1:]):
        k = c.residual_kernel
        learnable += cin * cout * k + 2 * cout + cout * cout * k + 2 * cout
        running += 4 * cout
        if cin != cout:
            learnable += cin * cout + cout

    dims = (c.residual_filters[-1] * (c.n_samples // c.pool ** (1 + len(c.residual_filters))),) + c.gat_dims
    for din, dout in zip(dims, dims[1:]):
        learnable += din * dout + 3 * dout

    units = (c.gat_dims[-1],) + c.dense_units
    for din, dout in zip(units, units[1:]):
        learnable += din * dout + dout
    return learnable, running


def test_parameter_counts_match_an_independent_count(record_property):
    # given
    config = ModelConfig()

    # when
    counts = parameter_counts(CnnGat(config))

    # then
    assert counts == _independent_counts(config)
    assert counts == (46_619, 208)
    record_property("learnable_delta", abs(counts[0] - PUBLISHED_COUNTS[0]))
    record_property("non_learnable_delta", abs(counts[1] - PUBLISHED_COUNTS[1]))


def test_raw_epoch_becomes_a_12_by_384_model_epoch():
    # given
    raw = np.random.default_rng(0).standard_normal((12, 3000))

    # when
    epoch = preprocess_for_model(raw, t_start_us=5_000_000)

    # then
    assert epoch.data.shape == (12, 384)
    assert epoch.t_start_s == 5.0
    np.testing.assert_allclose(epoch.data.mean(axis=1), 0.0, atol=1e-9)
    np.testing.assert_allclose(epoch.data.std(axis=1), 1.0)


def test_preprocessing_rejects_other_epoch_shapes():
    with pytest.raises(ShapeError, match="12x3000"):
        preprocess_for_model(np.zeros((12, 2999)))


def test_model_rejects_inputs_of_the_wrong_size():
    with pytest.raises(ShapeError):
        CnnGat.random(0).cnn(torch.zeros(1, 12, 383))


def test_random_weights_are_deterministic_per_seed():
    # when
    first, second, other = random_container(seed=4), random_container(seed=4), random_container(seed=5)

    # then
    assert first.checksum == second.checksum
    assert first.checksum != other.checksum


def test_logit_gradient_matches_central_differences_over_100_pairs():
    eps = 1e-6
    basis = np.eye(12 * 32).reshape(-1, 12, 32)

    for seed in range(100):
        # given
        detector = _double_detector(seed)
        _, activations = detector.forward(_epoch(seed))
        nodes = activations.nodes

        # when
        analytic = detector.node_gradient(nodes)
        with torch.no_grad():
            plus = detector.model.head(torch.as_tensor(nodes + eps * basis)).numpy()
            minus = detector.model.head(torch.as_tensor(nodes - eps * basis)).numpy()
        numeric = ((plus - minus) / (2 * eps)).reshape(12, 32)

        # then
        scale = max(np.abs(analytic).max(), 1e-12)
        assert np.abs(analytic - numeric).max() / scale <= 1e-4, seed


def test_head_logit_agrees_with_the_forward_pass():
    # given
    detector = _double_detector(1)

    # when
    probability, activations = detector.forward(_epoch(1))

    # then
    assert detector.head_logit(activations.nodes) == pytest.approx(activations.logit)
    assert probability == pytest.approx(1 / (1 + np.exp(-activations.logit)))
    assert len(activations.blocks) == 4


def test_relevance_scores_lie_in_the_unit_interval():
    # given
    detector = _double_detector(2)

    # when
    probability, relevance = detector.score(_epoch(2))

    # then
    assert 0.0 < probability < 1.0
    for scores in (relevance.channel_scores, relevance.temporal_scores):
        assert scores.min() >= 0.0
        assert scores.max() <= 1.0
    assert relevance.temporal_scores.shape == (384,)
    assert len(relevance.top(3)) == 3


def test_zeroed_dense_head_gives_zero_relevance():
    # given
    detector = _double_detector(3)
    detector.model.dense[0].weight.zero_()

    # when
    _, relevance = detector.score(_epoch(3))

    # then
    assert not relevance.channel_scores.any()
    assert not relevance.temporal_scores.any()


def test_grad_cam_matches_the_relevance_returned_by_score():
    # given
    detector = _double_detector(0)

    # when
    _, scored = detector.score(_epoch(0))
    relevance = detector.grad_cam(_epoch(0))

    # then
    np.testing.assert_array_equal(relevance.channel_scores, scored.channel_scores)
    np.testing.assert_array_equal(relevance.temporal_scores, scored.temporal_scores)


def test_grad_cam_gives_each_thread_the_relevance_of_its_own_epoch():
    # given
    container = random_container(seed=9)
    epochs = [_epoch(seed) for seed in range(16)]
    expected = [Detector.from_container(container).score(epoch)[1] for epoch in epochs]

    # when
    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(lambda i: (i % 16, grad_cam(epochs[i % 16], container)), range(320)))

    # then
    mismatched = [
        i
        for i, relevance in results
        if not np.allclose(relevance.channel_scores, expected[i].channel_scores, atol=1e-6)
    ]
    assert mismatched == []


@pytest.mark.filterwarnings("error:The given NumPy array is not writable:UserWarning")
def test_read_only_epochs_are_scored_without_warnings():
    # given
    epoch = _epoch(4)
    assert not epoch.data.flags.writeable

    # when
    probability, relevance = _double_detector(4).score(epoch)

    # then
    assert 0.0 < probability < 1.0
    assert relevance.channel_scores.shape == (12,)


def test_channel_permutation_permutes_relevance_and_keeps_the_probability(montage):
    # given
    order = np.random.default_rng(8).permutation(12)
    permuted = montage.permuted(order)
    detector = _double_detector(5, montage.adjacency, montage.labels)
    twin = CnnGat(detector.model.config, permuted.adjacency).double()
    twin.load_state_dict(detector.model.state_dict())
    twin_detector = Detector(twin, channels=permuted.labels)
    epoch = _epoch(5)

    # when
    p, relevance = detector.score(epoch)
    p_twin, relevance_twin = twin_detector.score(Epoch(data=epoch.data[order]))

    # then
    assert p_twin == pytest.approx(p, abs=1e-12)
    np.testing.assert_allclose(relevance_twin.channel_scores, relevance.channel_scores[order], atol=1e-9)
    np.testing.assert_allclose(relevance_twin.temporal_scores, relevance.temporal_scores, atol=1e-9)


def test_container_weights_reproduce_the_model():
    # given
    model = CnnGat.random(6)
    epoch = _epoch(6)

    # when
    probability, _ = Detector.from_container(model.to_container()).forward(epoch)

    # then
    with torch.no_grad():
        expected = torch.sigmoid(model(torch.as_tensor(epoch.data, dtype=torch.float32)[None]))[0]
    assert probability == pytest.approx(float(expected), abs=1e-6)


def test_module_level_forward_and_grad_cam_share_the_container():
    # given
    container = random_container(seed=7)
    epoch = _epoch(7)

    # when
    probability, activations = forward(epoch, container)
    relevance = grad_cam(epoch, container)

    # then
    assert probability == pytest.approx(activations.probability)
    assert activations.nodes.shape == (12, 32)
    assert relevance.channels[0] == "Fp1-T3"


def test_containers_built_for_another_adjacency_are_refused(montage):
    # given
    container = random_container(seed=0)

    # then
    with pytest.raises(WeightContainerError, match="adjacency"):
        CnnGat.from_container(container, montage.permuted([1, 0] + list(range(2, 12))))


def test_gat_layer_attends_only_to_graph_neighbours(montage):
    # given
    rng = np.random.default_rng(0)
    h = rng.standard_normal((12, 5))
    weights = {
        "weight": rng.standard_normal((4, 5)),
        "att_src": rng.standard_normal(4),
        "att_dst": rng.standard_normal(4),
        "bias": rng.standard_normal(4),
    }

    # when
    out, attention = gat_layer(h, montage.adjacency, weights)

    # then
    allowed = montage.adjacency_with_self_loops()
    assert out.shape == (12, 4)
    np.testing.assert_allclose(attention.sum(axis=1), 1.0)
    assert not attention[~allowed].any()

    z = h @ weights["weight"].T
    scores = z[0] @ weights["att_src"] + z @ weights["att_dst"]
    scores = np.where(scores > 0, scores, 0.2 * scores)
    scores = np.where(allowed[0], scores, -np.inf)
    alpha = np.exp(scores - scores.max())
    alpha /= alpha.sum()
    pre = alpha @ z + weights["bias"]
    np.testing.assert_allclose(out[0], np.where(pre > 0, pre, np.expm1(pre)))


def test_gat_layer_checks_weight_shapes(montage):
    # given
    weights = {
        "weight": np.zeros((4, 6)),
        "att_src": np.zeros(4),
        "att_dst": np.zeros(4),
        "bias": np.zeros(4),
    }

    # then
    with pytest.raises(ShapeError):
        gat_layer(np.zeros((12, 5)), montage.adjacency, weights)
    with pytest.raises(ShapeError):
        gat_layer(np.zeros((11, 6)), montage.adjacency, weights)


def _simulated_epoch(montage, seizures) -> Epoch:
    simulator = DeviceSimulator(SynthConfig(duration_s=12.0, seizures=seizures))
    bipolar = derive_bipolar(simulator.recording(), montage)
    return preprocess_for_model(bipolar.data)


def test_band_power_oracle_separates_spike_wave_from_background(montage):
    # given
    oracle = BandPowerOracle(montage.labels)

    # when
    p_seizure, relevance = oracle.score(_simulated_epoch(montage, [(0.0, 12.0)]))
    p_background, _ = oracle.score(_simulated_epoch(montage, []))

    # then
    assert p_seizure > 0.9
    assert p_background < 0.1
    assert relevance.channel_scores.max() == pytest.approx(1.0)
    assert not relevance.temporal_scores.any()


def test_relevance_rejects_scores_outside_the_unit_interval():
    with pytest.raises(NumericError):
        Relevance(channel_scores=np.full(12, 1.5), temporal_scores=np.zeros(384))


def test_relevance_dump_has_one_channel_and_one_temporal_line():
    # given
    relevance = Relevance(channel_scores=np.linspace(0, 1, 12), temporal_scores=np.zeros(384))

    # when
    lines = format_relevance(12.0, relevance).splitlines()

    # then
    assert lines[0].startswith("12.000 channel 0 ")
    assert len(lines[0].split()) == 2 + 12
    assert len(lines[1].split()) == 2 + 384

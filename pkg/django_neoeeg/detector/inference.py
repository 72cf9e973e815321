import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch.nn import functional as F

from ..core import DEVICE_FS_HZ, EPOCH_CHANNELS, EPOCH_SAMPLES, EPOCH_SECONDS, MODEL_FS_HZ, Epoch
from ..dsp import ModelBandFilter, resample_to_32hz, welch_psd
from ..exceptions import NumericError, ShapeError
from ..montage import MontageGraph
from .container import WeightContainer
from .model import CnnGat, graph_attention

logger = logging.getLogger(__name__)

RAW_EPOCH_SAMPLES = EPOCH_SECONDS * DEVICE_FS_HZ


def zscore_channels(x: np.ndarray) -> np.ndarray:
    """Per-channel standardization; a flat channel is only centred."""
    centred = x - x.mean(axis=-1, keepdims=True)
    std = centred.std(axis=-1, keepdims=True)
    return centred / np.where(std > 0, std, 1.0)


def preprocess_for_model(
    epoch_raw: np.ndarray,
    zscore: bool = True,
    t_start_us: int = 0,
    channels: Sequence[str] = (),
) -> Epoch:
    """12 bipolar channels x 12 s at 250 Hz -> model-ready 12 x 384 epoch at 32 Hz."""
    x = np.asarray(epoch_raw, dtype=np.float64)
    if x.shape != (EPOCH_CHANNELS, RAW_EPOCH_SAMPLES):
        raise ShapeError(
            f"raw epoch must be {EPOCH_CHANNELS}x{RAW_EPOCH_SAMPLES}, "
            f"got {'x'.join(map(str, x.shape))}"
        )
    x = resample_to_32hz(ModelBandFilter.apply(x, DEVICE_FS_HZ))
    if zscore:
        x = zscore_channels(x)
    return Epoch(data=x, t_start_us=t_start_us, channels=tuple(channels))


@dataclass(frozen=True)
class EncoderActivations:
    blocks: Tuple[np.ndarray, ...]
    nodes: np.ndarray
    logit: float

    @property
    def probability(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.logit)))


@dataclass(frozen=True)
class Relevance:
    channel_scores: np.ndarray
    temporal_scores: np.ndarray
    channels: Tuple[str, ...] = field(default_factory=lambda: MontageGraph().labels)

    def __post_init__(self):
        for name in ("channel_scores", "temporal_scores"):
            scores = np.asarray(getattr(self, name), dtype=np.float64)
            if np.any(scores < 0) or np.any(scores > 1.0 + 1e-12):
                raise NumericError(f"{name} must lie in [0, 1]")
            scores.flags.writeable = False
            object.__setattr__(self, name, scores)
        object.__setattr__(self, "channels", tuple(self.channels))

    @staticmethod
    def normalized(scores: np.ndarray) -> np.ndarray:
        scores = np.maximum(np.asarray(scores, dtype=np.float64), 0.0)
        peak = scores.max() if scores.size else 0.0
        return scores / peak if peak > 0 else np.zeros_like(scores)

    def top(self, k: int = 3) -> Tuple[str, ...]:
        order = np.argsort(-self.channel_scores, kind="stable")[:k]
        return tuple(self.channels[i] for i in order)


class Detector:
    """CNN-GAT inference on one epoch at a time, with Grad-CAM relevance.

    Calls share the model weights and keep no per-epoch state, so one detector
    can score epochs from several threads.
    """

    def __init__(self, model: CnnGat, zscore: bool = True, channels: Sequence[str] = ()):
        self.model = model.eval().requires_grad_(False)
        self.zscore = zscore
        self.channels = tuple(channels) or MontageGraph().labels

    @classmethod
    def from_container(cls, w: WeightContainer, montage: Optional[MontageGraph] = None) -> "Detector":
        montage = montage or MontageGraph()
        model = CnnGat.from_container(w, montage)
        return cls(model, zscore=bool(w.metadata.get("zscore", True)), channels=montage.labels)

    @property
    def dtype(self) -> torch.dtype:
        return next(self.model.parameters()).dtype

    def _tensor(self, epoch: Union[Epoch, np.ndarray]) -> torch.Tensor:
        data = epoch.data if isinstance(epoch, Epoch) else np.asarray(epoch, dtype=np.float64)
        if data.shape != (EPOCH_CHANNELS, EPOCH_SAMPLES):
            raise ShapeError(f"epoch must be {EPOCH_CHANNELS}x{EPOCH_SAMPLES}, got {data.shape}")
        # copies: epoch arrays are read-only
        return torch.tensor(data, dtype=self.dtype).unsqueeze(0)

    def forward(self, epoch: Union[Epoch, np.ndarray]) -> Tuple[float, EncoderActivations]:
        x = self._tensor(epoch)
        with torch.no_grad():
            features, blocks = self.model.cnn(x)
            nodes = self.model.graph(features)
            logit = self.model.head(nodes)
        activations = EncoderActivations(
            blocks=tuple(b[0].numpy().copy() for b in blocks),
            nodes=nodes[0].numpy().copy(),
            logit=float(logit[0]),
        )
        return activations.probability, activations

    def node_gradient(self, nodes: np.ndarray) -> np.ndarray:
        """Gradient of the pre-sigmoid logit with respect to final GAT node features."""
        h = torch.tensor(np.asarray(nodes), dtype=self.dtype).unsqueeze(0)
        h.requires_grad_()
        with torch.enable_grad():
            (grad,) = torch.autograd.grad(self.model.head(h).sum(), [h])
        return grad[0].numpy().copy()

    def head_logit(self, nodes: np.ndarray) -> float:
        with torch.no_grad():
            h = torch.tensor(np.asarray(nodes), dtype=self.dtype).unsqueeze(0)
            return float(self.model.head(h)[0])

    def _relevance(self, x: torch.Tensor) -> Tuple[float, Relevance]:
        with torch.no_grad():
            features, _ = self.model.cnn(x)
        features = features.detach().requires_grad_()
        with torch.enable_grad():
            nodes = self.model.graph(features)
            logit = self.model.head(nodes)
            grad_features, grad_nodes = torch.autograd.grad(logit.sum(), [features, nodes])

        # Channels: feature-wise pooled gradients weight the final GAT node features.
        weights = grad_nodes[0].mean(dim=0)
        channel = F.relu((nodes[0].detach() * weights).sum(dim=-1))

        # Time: the final CNN block still carries a time axis.
        filter_weights = grad_features[0].mean(dim=(1, 2))
        cam = F.relu((features[0].detach() * filter_weights[:, None, None]).sum(dim=0))
        temporal = F.interpolate(
            cam.mean(dim=0)[None, None, :], size=EPOCH_SAMPLES, mode="linear", align_corners=False
        )[0, 0]

        relevance = Relevance(
            channel_scores=Relevance.normalized(channel.numpy()),
            temporal_scores=Relevance.normalized(temporal.numpy()),
            channels=self.channels,
        )
        return float(logit.detach()[0]), relevance

    def grad_cam(self, epoch: Union[Epoch, np.ndarray]) -> Relevance:
        _, relevance = self._relevance(self._tensor(epoch))
        return relevance

    def score(self, epoch: Epoch) -> Tuple[float, Relevance]:
        logit, relevance = self._relevance(self._tensor(epoch))
        return float(1.0 / (1.0 + np.exp(-logit))), relevance


class BandPowerOracle:
    """Test oracle that scores epochs by their 2-4 Hz share of 1-16 Hz power.

    It stands in for trained weights in end-to-end runs; it makes no clinical claim.
    """

    band_hz = (2.0, 4.0)
    reference_hz = (1.0, 16.0)
    ratio_threshold = 0.45
    steepness = 20.0
    segment_seconds = 4

    def __init__(self, channels: Sequence[str] = ()):
        self.channels = tuple(channels) or MontageGraph().labels

    def band_ratio(self, epoch: Epoch) -> np.ndarray:
        spectrum = welch_psd(epoch.data, MODEL_FS_HZ, seg_len=self.segment_seconds * MODEL_FS_HZ)
        reference = spectrum.band_power(*self.reference_hz)
        band = spectrum.band_power(*self.band_hz)
        return np.divide(band, reference, out=np.zeros_like(band), where=reference > 0)

    def score(self, epoch: Epoch) -> Tuple[float, Relevance]:
        ratio = self.band_ratio(epoch)
        probability = float(1.0 / (1.0 + np.exp(-self.steepness * (ratio.mean() - self.ratio_threshold))))
        relevance = Relevance(
            channel_scores=Relevance.normalized(ratio),
            temporal_scores=np.zeros(EPOCH_SAMPLES),
            channels=self.channels,
        )
        return probability, relevance


@lru_cache(maxsize=4)
def _detector_for(w: WeightContainer) -> Detector:
    return Detector.from_container(w)


def forward(epoch: Epoch, w: WeightContainer) -> Tuple[float, EncoderActivations]:
    return _detector_for(w).forward(epoch)


def grad_cam(epoch: Epoch, w: WeightContainer) -> Relevance:
    return _detector_for(w).grad_cam(epoch)


def gat_layer(
    node_feats: np.ndarray,
    adjacency: np.ndarray,
    layer_weights: Mapping[str, np.ndarray],
    negative_slope: float = 0.2,
) -> Tuple[np.ndarray, np.ndarray]:
    """One graph attention layer on plain arrays; returns (features, attention)."""
    h = torch.tensor(np.asarray(node_feats, dtype=np.float64))
    adjacency = np.asarray(adjacency, dtype=bool)
    if adjacency.shape != (h.shape[0], h.shape[0]):
        raise ShapeError(f"adjacency {adjacency.shape} does not match {h.shape[0]} nodes")
    mask = torch.as_tensor(adjacency | np.eye(h.shape[0], dtype=bool))
    weight, att_src, att_dst, bias = (
        torch.tensor(np.asarray(layer_weights[name], dtype=np.float64))
        for name in ("weight", "att_src", "att_dst", "bias")
    )
    if weight.shape[1] != h.shape[1]:
        raise ShapeError(f"weight {tuple(weight.shape)} does not accept {h.shape[1]} input features")
    out, attention = graph_attention(h, mask, weight, att_src, att_dst, bias, negative_slope)
    return out.numpy(), attention.numpy()


def format_relevance(t_start_s: float, relevance: Relevance) -> str:
    """Two dump lines per epoch: channel scores then temporal scores."""
    channel = " ".join(f"{v:.6g}" for v in relevance.channel_scores)
    temporal = " ".join(f"{v:.6g}" for v in relevance.temporal_scores)
    return f"{t_start_s:.3f} channel {channel}\n{t_start_s:.3f} temporal {temporal}\n"

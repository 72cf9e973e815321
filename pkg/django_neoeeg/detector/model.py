import logging
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..core import EPOCH_CHANNELS, EPOCH_SAMPLES
from ..exceptions import ShapeError, WeightContainerError
from ..montage import MontageGraph
from .container import WeightContainer

logger = logging.getLogger(__name__)

CONTAINER_KIND = "cnn-gat"
PUBLISHED_COUNTS = (46_612, 208)


@dataclass(frozen=True)
class ModelConfig:
    """Reference widths for the CNN-GAT; stored in every weight container."""

    version: str = "neoeeg-cnn-gat/1"
    n_channels: int = EPOCH_CHANNELS
    n_samples: int = EPOCH_SAMPLES
    block1_filters: int = 8
    block1_kernels: Tuple[int, int] = (5, 7)
    residual_filters: Tuple[int, ...] = (16, 16, 16)
    residual_kernel: int = 5
    pool: int = 2
    gat_dims: Tuple[int, ...] = (78, 64, 32)
    negative_slope: float = 0.2
    dense_units: Tuple[int, ...] = (32, 16, 1)
    bn_eps: float = 1e-3

    def __post_init__(self):
        for name in ("block1_kernels", "residual_filters", "gat_dims", "dense_units"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.dense_units[-1] != 1:
            raise ValueError("the last dense layer must produce a single logit")
        if self.reduced_samples < 1:
            raise ValueError("too many pooling stages for the epoch length")

    @property
    def reduced_samples(self) -> int:
        return self.n_samples // self.pool ** (1 + len(self.residual_filters))

    @property
    def node_features(self) -> int:
        return self.residual_filters[-1] * self.reduced_samples

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in values.items()}

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise WeightContainerError(f"unknown model_config keys: {', '.join(sorted(unknown))}")
        return cls(**values)


def graph_attention(
    h: torch.Tensor,
    mask: torch.Tensor,
    weight: torch.Tensor,
    att_src: torch.Tensor,
    att_dst: torch.Tensor,
    bias: torch.Tensor,
    negative_slope: float = 0.2,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Single-head graph attention over `mask` (which must contain self-loops).

    Returns ELU-activated node features and the per-node attention rows.
    """
    z = h @ weight.T
    scores = (z @ att_src).unsqueeze(-1) + (z @ att_dst).unsqueeze(-2)
    scores = F.leaky_relu(scores, negative_slope)
    scores = scores.masked_fill(~mask, float("-inf"))
    attention = torch.softmax(scores, dim=-1)
    return F.elu(attention @ z + bias), attention


class GraphAttentionLayer(nn.Module):
    def __init__(self, in_features: int, out_features: int, negative_slope: float = 0.2):
        super().__init__()
        self.negative_slope = negative_slope
        self.weight = nn.Parameter(torch.empty(out_features, in_features))
        self.att_src = nn.Parameter(torch.empty(out_features))
        self.att_dst = nn.Parameter(torch.empty(out_features))
        self.bias = nn.Parameter(torch.zeros(out_features))
        nn.init.xavier_uniform_(self.weight)
        nn.init.normal_(self.att_src, std=0.1)
        nn.init.normal_(self.att_dst, std=0.1)

    def forward(self, h: torch.Tensor, mask: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        return graph_attention(
            h, mask, self.weight, self.att_src, self.att_dst, self.bias, self.negative_slope
        )


class InputBlock(nn.Module):
    """Two parallel temporal convolutions, summed, pooled and normalized."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        short, long = config.block1_kernels
        self.conv_a = nn.Conv2d(1, config.block1_filters, (1, short), padding=(0, short // 2))
        self.conv_b = nn.Conv2d(1, config.block1_filters, (1, long), padding=(0, long // 2))
        self.pool = nn.AvgPool2d((1, config.pool))
        self.bn = nn.BatchNorm2d(config.block1_filters, eps=config.bn_eps)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.bn(self.pool(self.conv_a(x) + self.conv_b(x)))


class ResidualBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, config: ModelConfig):
        super().__init__()
        k = config.residual_kernel
        self.conv1 = nn.Conv2d(in_channels, out_channels, (1, k), padding=(0, k // 2), bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels, eps=config.bn_eps)
        self.conv2 = nn.Conv2d(out_channels, out_channels, (1, k), padding=(0, k // 2), bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels, eps=config.bn_eps)
        self.shortcut = (
            nn.Conv2d(in_channels, out_channels, 1)
            if in_channels != out_channels
            else nn.Identity()
        )
        self.pool = nn.AvgPool2d((1, config.pool))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = F.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        return self.pool(F.relu(y + self.shortcut(x)))


class CnnGat(nn.Module):
    """Temporal CNN per channel row, graph attention across rows, dense head."""

    def __init__(self, config: Optional[ModelConfig] = None, adjacency: Optional[np.ndarray] = None):
        super().__init__()
        self.config = config or ModelConfig()
        c = self.config
        if adjacency is None:
            adjacency = MontageGraph().adjacency
        adjacency = np.asarray(adjacency, dtype=bool)
        if adjacency.shape != (c.n_channels, c.n_channels):
            raise ShapeError(
                f"adjacency is {adjacency.shape}, model expects {c.n_channels} nodes"
            )
        mask = torch.as_tensor(adjacency | np.eye(c.n_channels, dtype=bool))
        self.register_buffer("mask", mask, persistent=False)

        self.block1 = InputBlock(c)
        widths = (c.block1_filters,) + c.residual_filters
        self.blocks = nn.ModuleList(
            ResidualBlock(widths[i], widths[i + 1], c) for i in range(len(c.residual_filters))
        )

        dims = (c.node_features,) + c.gat_dims
        self.gat = nn.ModuleList(
            GraphAttentionLayer(dims[i], dims[i + 1], c.negative_slope) for i in range(len(c.gat_dims))
        )

        units = (c.gat_dims[-1],) + c.dense_units
        self.dense = nn.ModuleList(nn.Linear(units[i], units[i + 1]) for i in range(len(c.dense_units)))

    def cnn(self, x: torch.Tensor) -> Tuple[torch.Tensor, Tuple[torch.Tensor, ...]]:
        """(B, channels, samples) -> final maps (B, filters, channels, reduced) plus block outputs."""
        if x.shape[-2:] != (self.config.n_channels, self.config.n_samples):
            raise ShapeError(
                f"input is {tuple(x.shape[-2:])}, model expects "
                f"{(self.config.n_channels, self.config.n_samples)}"
            )
        y = self.block1(x.unsqueeze(1))
        outputs = [y]
        for block in self.blocks:
            y = block(y)
            outputs.append(y)
        return y, tuple(outputs)

    def graph(self, features: torch.Tensor) -> torch.Tensor:
        """Final CNN maps -> final GAT node features (B, channels, gat_dims[-1])."""
        nodes = features.permute(0, 2, 1, 3).flatten(2)
        for layer in self.gat:
            nodes, _ = layer(nodes, self.mask)
        return nodes

    def head(self, nodes: torch.Tensor) -> torch.Tensor:
        """Global average over nodes, then the dense stack; returns the pre-sigmoid logit."""
        y = nodes.mean(dim=1)
        for i, layer in enumerate(self.dense):
            y = layer(y)
            if i < len(self.dense) - 1:
                y = F.elu(y)
        return y.squeeze(-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        features, _ = self.cnn(x)
        return self.head(self.graph(features))

    def stored_tensors(self) -> Dict[str, torch.Tensor]:
        """Learned parameters plus batch-norm running statistics."""
        return {
            name: value
            for name, value in self.state_dict().items()
            if not name.endswith("num_batches_tracked")
        }

    def to_container(self, montage: Optional[MontageGraph] = None, zscore: bool = True) -> WeightContainer:
        montage = montage or MontageGraph()
        return WeightContainer(
            {name: value.detach().cpu().numpy() for name, value in self.stored_tensors().items()},
            model_config=self.config.to_dict(),
            kind=CONTAINER_KIND,
            metadata={
                "adjacency_sha256": montage.adjacency_hash(),
                "channels": list(montage.labels),
                "zscore": zscore,
            },
        )

    @classmethod
    def from_container(cls, w: WeightContainer, montage: Optional[MontageGraph] = None) -> "CnnGat":
        w.expect_kind(CONTAINER_KIND)
        montage = montage or MontageGraph()
        if w.adjacency_hash != montage.adjacency_hash():
            raise WeightContainerError(
                f"weights were built for adjacency {str(w.adjacency_hash)[:12]}, "
                f"montage {montage.name!r} has {montage.adjacency_hash()[:12]}"
            )
        model = cls(ModelConfig.from_dict(w.model_config), montage.adjacency)
        expected = {name: tuple(value.shape) for name, value in model.stored_tensors().items()}
        w.check_shapes(expected)
        model.load_state_dict(
            {name: torch.from_numpy(np.array(w[name])) for name in expected}, strict=False
        )
        return model.eval().requires_grad_(False)

    @classmethod
    def random(cls, seed: int = 0, config: Optional[ModelConfig] = None, adjacency=None) -> "CnnGat":
        """Randomly initialized model with randomized running statistics."""
        generator = torch.Generator().manual_seed(seed)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            model = cls(config, adjacency)
        for module in model.modules():
            if isinstance(module, nn.BatchNorm2d):
                module.running_mean.normal_(0.0, 0.1, generator=generator)
                module.running_var.uniform_(0.5, 1.5, generator=generator)
        return model.eval().requires_grad_(False)


def parameter_counts(model: CnnGat) -> Tuple[int, int]:
    """(learnable, non-learnable) counts; the latter are batch-norm running statistics."""
    learnable = sum(p.numel() for p in model.parameters())
    non_learnable = sum(
        b.numel()
        for name, b in model.named_buffers()
        if name.endswith(("running_mean", "running_var"))
    )
    return learnable, non_learnable


def random_container(
    seed: int = 0,
    montage: Optional[MontageGraph] = None,
    config: Optional[ModelConfig] = None,
    zscore: bool = True,
) -> WeightContainer:
    montage = montage or MontageGraph()
    return CnnGat.random(seed, config, montage.adjacency).to_container(montage, zscore=zscore)

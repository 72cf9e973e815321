import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Protocol, Tuple

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..detector.container import WeightContainer
from .features import TOPOMAP_SIZE, ComponentFeatures

logger = logging.getLogger(__name__)

ENSEMBLE_KIND = "component-ensemble"


class ArtifactClass(str, Enum):
    ARTIFACTUAL = "artifactual"
    NON_ARTIFACTUAL = "non-artifactual"


@dataclass(frozen=True)
class ComponentLabel:
    label: ArtifactClass
    confidence: float
    rationale: str

    def __post_init__(self):
        object.__setattr__(self, "label", ArtifactClass(self.label))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def is_artifact(self) -> bool:
        return self.label is ArtifactClass.ARTIFACTUAL


class ComponentClassifier(Protocol):
    def classify(self, f: ComponentFeatures) -> ComponentLabel:
        ...


class HeuristicComponentClassifier:
    """Rule baseline for blink, ocular drift and powerline components."""

    kurtosis_limit = 8.0
    low_band_limit = 0.7
    line_band_limit = 0.5
    frontal_limit = 0.5
    floor_confidence = 0.5

    def rule_margins(self, f: ComponentFeatures) -> Dict[str, float]:
        frontal = f.frontal_ratio >= self.frontal_limit
        margins = {}
        if frontal and f.kurtosis > self.kurtosis_limit:
            margins["kurtosis"] = (f.kurtosis - self.kurtosis_limit) / self.kurtosis_limit
        if frontal and f.low_band_ratio > self.low_band_limit:
            margins["low-band"] = (f.low_band_ratio - self.low_band_limit) / (1.0 - self.low_band_limit)
        if f.line_band_ratio > self.line_band_limit:
            margins["line-band"] = (f.line_band_ratio - self.line_band_limit) / (
                1.0 - self.line_band_limit
            )
        return margins

    def classify(self, f: ComponentFeatures) -> ComponentLabel:
        margins = self.rule_margins(f)
        if not margins:
            return ComponentLabel(ArtifactClass.NON_ARTIFACTUAL, self.floor_confidence, "no rule fired")
        rule, margin = max(margins.items(), key=lambda item: item[1])
        return ComponentLabel(
            ArtifactClass.ARTIFACTUAL,
            self.floor_confidence + (1.0 - self.floor_confidence) * min(1.0, margin),
            f"{rule} rule (margin {margin:.2f})",
        )


class WaveformBranch(nn.Module):
    """Bidirectional LSTM over per-second summaries of the activation."""

    def __init__(self, hidden: int = 16):
        super().__init__()
        self.lstm = nn.LSTM(4, hidden, batch_first=True, bidirectional=True)
        self.out = nn.Linear(2 * hidden, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _, (h, _) = self.lstm(x)
        return self.out(torch.cat([h[-2], h[-1]], dim=-1)).squeeze(-1)


class TopomapBranch(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 8, 3, padding=1)
        self.bn = nn.BatchNorm2d(8)
        self.conv2 = nn.Conv2d(8, 16, 3, padding=1)
        self.out = nn.Linear(16, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = F.max_pool2d(F.relu(self.bn(self.conv1(x))), 2)
        y = F.adaptive_avg_pool2d(F.relu(self.conv2(y)), 1).flatten(1)
        return self.out(y).squeeze(-1)


class SpectrumBranch(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv1d(1, 8, 5, padding=2)
        self.bn = nn.BatchNorm1d(8)
        self.conv2 = nn.Conv1d(8, 16, 5, padding=2)
        self.out = nn.Linear(16, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = F.max_pool1d(F.relu(self.bn(self.conv1(x))), 2)
        y = F.adaptive_avg_pool1d(F.relu(self.conv2(y)), 1).flatten(1)
        return self.out(y).squeeze(-1)


class ComponentEnsemble(nn.Module):
    def __init__(self):
        super().__init__()
        self.waveform = WaveformBranch()
        self.topomap = TopomapBranch()
        self.spectrum = SpectrumBranch()

    def forward(self, waveform, topomap, spectrum) -> torch.Tensor:
        logits = torch.stack(
            [self.waveform(waveform), self.topomap(topomap), self.spectrum(spectrum)], dim=-1
        )
        return torch.sigmoid(logits).mean(dim=-1)


class EnsembleComponentClassifier:
    """Inference-only three-branch classifier loaded from a weight container."""

    waveform_steps = 120
    spectrum_bins = 64

    def __init__(self, model: ComponentEnsemble):
        self.model = model.eval().requires_grad_(False)

    @classmethod
    def random(cls, seed: int = 0) -> "EnsembleComponentClassifier":
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            return cls(ComponentEnsemble())

    @classmethod
    def from_container(cls, w: WeightContainer) -> "EnsembleComponentClassifier":
        w.expect_kind(ENSEMBLE_KIND)
        model = ComponentEnsemble()
        expected = {
            name: tuple(value.shape)
            for name, value in model.state_dict().items()
            if not name.endswith("num_batches_tracked")
        }
        w.check_shapes(expected)
        model.load_state_dict(
            {name: torch.from_numpy(np.array(w[name])) for name in expected}, strict=False
        )
        return cls(model)

    def to_container(self) -> WeightContainer:
        return WeightContainer(
            {
                name: value.numpy()
                for name, value in self.model.state_dict().items()
                if not name.endswith("num_batches_tracked")
            },
            kind=ENSEMBLE_KIND,
            model_config={
                "waveform_steps": self.waveform_steps,
                "spectrum_bins": self.spectrum_bins,
                "topomap_size": TOPOMAP_SIZE,
            },
        )

    def inputs(self, f: ComponentFeatures) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        segments = np.array_split(f.waveform, self.waveform_steps)
        scale = f.waveform.std() or 1.0
        summary = np.array(
            [
                [s.mean(), s.std(), np.abs(s).max(initial=0.0), np.abs(np.diff(s)).sum()]
                if s.size
                else [0.0, 0.0, 0.0, 0.0]
                for s in segments
            ]
        ) / scale
        grid = np.linspace(0.0, f.psd.freqs_hz[-1], self.spectrum_bins)
        log_psd = np.log10(np.interp(grid, f.psd.freqs_hz, f.psd.power) + 1e-12)
        return (
            torch.tensor(summary, dtype=torch.float32)[None],
            torch.tensor(f.topomap, dtype=torch.float32)[None, None],
            torch.tensor(log_psd - log_psd.mean(), dtype=torch.float32)[None, None],
        )

    def probability(self, f: ComponentFeatures) -> float:
        with torch.no_grad():
            return float(self.model(*self.inputs(f))[0])

    def classify(self, f: ComponentFeatures) -> ComponentLabel:
        p = self.probability(f)
        label = ArtifactClass.ARTIFACTUAL if p > 0.5 else ArtifactClass.NON_ARTIFACTUAL
        return ComponentLabel(label, max(p, 1.0 - p), f"ensemble score {p:.3f}")


def classify_component(
    f: ComponentFeatures, classifier: Optional[ComponentClassifier] = None
) -> ComponentLabel:
    return (classifier or HeuristicComponentClassifier()).classify(f)


def classify_components(
    features: List[ComponentFeatures], classifier: Optional[ComponentClassifier] = None
) -> List[ComponentLabel]:
    classifier = classifier or HeuristicComponentClassifier()
    return [classifier.classify(f) for f in features]

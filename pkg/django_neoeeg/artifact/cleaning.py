import logging
import threading
from concurrent.futures import Executor, Future
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core import DEVICE_FS_HZ
from ..exceptions import ShapeError
from ..montage import ElectrodeSet
from .classifier import ComponentClassifier, ComponentLabel, HeuristicComponentClassifier
from .features import ComponentFeatures, extract_features
from .ica import IcaConfig, IcaModel, fit_ica, inverse_transform, transform

logger = logging.getLogger(__name__)


def remove_artifacts(x: np.ndarray, labels: Sequence[ComponentLabel], model: IcaModel) -> np.ndarray:
    """Zero the artifactual components and project back to the channels."""
    if len(labels) != model.n_components:
        raise ShapeError(f"{len(labels)} labels for {model.n_components} components")
    activations = transform(model, x)
    artifactual = [i for i, label in enumerate(labels) if label.is_artifact]
    if not artifactual:
        return np.array(x, dtype=np.float64, copy=True)
    activations[artifactual] = 0.0
    return inverse_transform(model, activations)


@dataclass(frozen=True)
class CleaningResult:
    cleaned: np.ndarray
    labels: Tuple[ComponentLabel, ...]
    features: Tuple[ComponentFeatures, ...]
    model: IcaModel
    stale: bool = False

    @property
    def removed(self) -> Tuple[int, ...]:
        return tuple(i for i, label in enumerate(self.labels) if label.is_artifact)


class ArtifactCleaner:
    """Keeps the most recent ICA fit and cleans 8-channel referential windows."""

    window_seconds = 120

    def __init__(
        self,
        classifier: Optional[ComponentClassifier] = None,
        electrodes: Optional[ElectrodeSet] = None,
        fs_hz: float = DEVICE_FS_HZ,
        config: Optional[IcaConfig] = None,
    ):
        self.classifier = classifier or HeuristicComponentClassifier()
        self.electrodes = electrodes or ElectrodeSet()
        self.fs_hz = fs_hz
        self.config = config or IcaConfig()
        self.model: Optional[IcaModel] = None
        self._lock = threading.Lock()

    @property
    def window_samples(self) -> int:
        return int(round(self.window_seconds * self.fs_hz))

    def fit(self, x: np.ndarray) -> IcaModel:
        model = fit_ica(x, self.config, channels=self.electrodes.recorded)
        with self._lock:
            self.model = model
        logger.info(
            "fitted ICA on %.1f s (%s after %d steps)",
            np.shape(x)[1] / self.fs_hz,
            "converged" if model.converged else "not converged",
            model.n_iter,
        )
        return model

    def fit_async(self, x: np.ndarray, executor: Executor) -> Future:
        """Fit off the caller's thread; the model is swapped in when done."""
        return executor.submit(self.fit, np.array(x, dtype=np.float64, copy=True))

    def label(self, model: IcaModel, x: np.ndarray) -> Tuple[List[ComponentFeatures], List[ComponentLabel]]:
        activations = transform(model, x)
        features = [
            extract_features(model, activations, i, self.electrodes, self.fs_hz)
            for i in range(model.n_components)
        ]
        return features, [self.classifier.classify(f) for f in features]

    def clean(self, x: np.ndarray) -> CleaningResult:
        x = np.asarray(x, dtype=np.float64)
        stale = False
        if x.shape[-1] >= self.window_samples or self.model is None:
            model = self.fit(x)
        else:
            with self._lock:
                model = self.model
            stale = True
            logger.warning(
                "window of %.1f s is shorter than %d s; reusing the previous ICA fit",
                x.shape[-1] / self.fs_hz,
                self.window_seconds,
            )

        features, labels = self.label(model, x)
        return CleaningResult(
            cleaned=remove_artifacts(x, labels, model),
            labels=tuple(labels),
            features=tuple(features),
            model=model,
            stale=stale,
        )


def format_component_report(result: CleaningResult) -> str:
    lines = ["# component label confidence kurtosis low_band line_band frontal rationale"]
    for f, label in zip(result.features, result.labels):
        lines.append(
            f"{f.index} {label.label.value} {label.confidence:.3f} {f.kurtosis:.3f} "
            f"{f.low_band_ratio:.3f} {f.line_band_ratio:.3f} {f.frontal_ratio:.3f} "
            f"{label.rationale}"
        )
    return "\n".join(lines) + "\n"

from .classifier import (
    ArtifactClass,
    ComponentLabel,
    EnsembleComponentClassifier,
    HeuristicComponentClassifier,
    classify_component,
)
from .cleaning import ArtifactCleaner, CleaningResult, format_component_report, remove_artifacts
from .features import ComponentFeatures, extract_features, interpolate_topomap
from .ica import IcaConfig, IcaModel, amari_index, fit_ica, inverse_transform, transform

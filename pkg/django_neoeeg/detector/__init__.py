from .container import WeightContainer
from .inference import (
    BandPowerOracle,
    Detector,
    EncoderActivations,
    Relevance,
    forward,
    format_relevance,
    gat_layer,
    grad_cam,
    preprocess_for_model,
    zscore_channels,
)
from .model import CnnGat, ModelConfig, parameter_counts, random_container

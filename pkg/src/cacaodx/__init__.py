"""cacaodx: offline cacao pod disease triage.

Dataset cleaning pipeline, from-scratch CNN training with compound
scaling and early stopping, a flat binary model container, a two-stage
diagnosis cascade with management recommendations, and a local CLI +
HTTP service for the field UI.
"""

from .arch import ArchSpec, CompoundScalingConfig, LayerSpec, cacaonet_b0, scale_arch
from .cascade import CascadeEngine, Diagnosis
from .errors import CacaoDxError
from .kb import KnowledgeBase, RecommendationEntry, load_kb
from .nn import Model, avg_pool2d, backward, conv2d, cross_entropy, forward, relu, softmax_op
from .tensor import Tensor
from .train import TrainConfig, TrainHistory, augment, train

__version__ = "0.1.0"

__all__ = [
    "ArchSpec",
    "CacaoDxError",
    "CascadeEngine",
    "CompoundScalingConfig",
    "Diagnosis",
    "KnowledgeBase",
    "LayerSpec",
    "Model",
    "RecommendationEntry",
    "Tensor",
    "TrainConfig",
    "TrainHistory",
    "augment",
    "avg_pool2d",
    "backward",
    "cacaonet_b0",
    "conv2d",
    "cross_entropy",
    "forward",
    "load_kb",
    "relu",
    "scale_arch",
    "softmax_op",
    "train",
    "__version__",
]

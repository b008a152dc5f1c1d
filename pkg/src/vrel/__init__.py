"""vrel: 3D CNN inference with deep Taylor relevance propagation and
discriminative spatio-temporal decomposition of video explanations."""

__version__ = "0.1.0"

from .discriminative import (ExplanationTriple, discriminative_decompose, freeze_frame,
                             spatial_relevance)
from .network import Network, bind_weights, fold_batchnorm, forward, load_architecture
from .relevance import RelevanceConfig, RelevanceMap, explain
from .tensor import Tensor, as_tensor

__all__ = [
    "__version__",
    "Tensor", "as_tensor",
    "Network", "load_architecture", "bind_weights", "fold_batchnorm", "forward",
    "RelevanceConfig", "RelevanceMap", "explain",
    "ExplanationTriple", "freeze_frame", "spatial_relevance", "discriminative_decompose",
]

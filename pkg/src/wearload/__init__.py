"""Perceived-workload prediction from smartwatch RR intervals and wrist acceleration."""
from .config import PipelineConfig
from .core import FEATURE_NAMES, Label

__version__ = "0.1.0"
__all__ = ["FEATURE_NAMES", "Label", "PipelineConfig", "__version__"]

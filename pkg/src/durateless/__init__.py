"""Distributed unequal-error-protection rateless codes for two sources and a relay."""

__version__ = "0.1.0"

from .codec import CodeEnsemble, DecoderGraph, CheckNode  # noqa: E402
from .degree import DegreeDistribution, new_distribution  # noqa: E402

__all__ = ["CodeEnsemble", "DecoderGraph", "CheckNode", "DegreeDistribution", "new_distribution"]

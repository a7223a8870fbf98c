"""Beamforming-free microbubble localization on raw RF channel data."""

from .geometry import ArrayGeometry, BmodePoint, RfLabel
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["ArrayGeometry", "BACKEND", "BmodePoint", "RfLabel", "__version__"]

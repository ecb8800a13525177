"""Proxy-based point cloud completion at desk scale.

Geometry kernels, evaluation metrics, a minimal reverse-mode autodiff
core, and a trainable completion network that predicts a shape's missing
part from learned proxies of the observed part.
"""
from . import data, geometry, metrics, model, nn

__version__ = "0.1.0"

__all__ = ["data", "geometry", "metrics", "model", "nn", "__version__"]

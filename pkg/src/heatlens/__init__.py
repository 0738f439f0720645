"""Heatmap interpretability for small CNNs: LIME, KernelSHAP, Grad-CAM and LRP,
scored against expert masks by IoU."""

__version__ = "0.1.0"

from .errors import DataError, FormatError, HeatlensError, NumericError, ShapeError

__all__ = ["DataError", "FormatError", "HeatlensError", "NumericError", "ShapeError", "__version__"]

"""Adaptive blurred-region identification network for image deblurring."""

__version__ = "0.1.0"

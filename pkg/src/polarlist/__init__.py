"""Polar-code list decoding with selective expansion and double thresholding."""
__version__ = "0.1.0"

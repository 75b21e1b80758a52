"""Operator-performance classification from ECG spectrograms, HRV features
and fNIRS functional-connectivity graphs, with a synthetic data generator."""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]

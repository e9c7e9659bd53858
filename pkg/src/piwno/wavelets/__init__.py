"""Wavelet transforms used by the neural operator.

Two families are provided: a periodic orthonormal Daubechies DWT and the
2-D dual-tree complex wavelet transform.  Both accept numpy arrays or torch
tensors; torch inputs stay on the autograd tape.
"""
from .coeffs import WaveletCoeffs
from .dtcwt import ORIENTATIONS, dtcwt_adjoint, dtcwt_forward, dtcwt_inverse
from .dwt import dwt_forward, dwt_inverse, parse_family

__all__ = [
    "WaveletCoeffs", "ORIENTATIONS", "dtcwt_forward", "dtcwt_inverse", "dtcwt_adjoint",
    "dwt_forward", "dwt_inverse", "parse_family",
]

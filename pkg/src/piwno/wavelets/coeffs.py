from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch


@dataclass
class WaveletCoeffs:
    """Multilevel wavelet decomposition of a field.

    ``details[0]`` is the finest level and ``details[-1]`` the coarsest.
    For the DWT each detail array has shape ``(..., 3, h, w)`` in 2-D
    (``(..., h)`` in 1-D).  For the DTCWT it is ``(..., 6, h, w, 2)``: six
    orientations (15, 45, 75, 105, 135, 165 degrees) with real and
    imaginary parts on the last axis, i.e. twelve real coefficient sets.
    Arrays are numpy or torch, matching the input of the forward transform.
    """

    family: str
    levels: int
    coarse: Any
    details: list = field(default_factory=list)
    shape: tuple = ()

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def map(self, fn) -> "WaveletCoeffs":
        """Apply ``fn`` to every coefficient array."""
        return WaveletCoeffs(self.family, self.levels, fn(self.coarse),
                             [fn(d) for d in self.details], self.shape)

    def combine(self, other: "WaveletCoeffs", fn) -> "WaveletCoeffs":
        self._check_compatible(other)
        return WaveletCoeffs(self.family, self.levels, fn(self.coarse, other.coarse),
                             [fn(a, b) for a, b in zip(self.details, other.details)], self.shape)

    def __add__(self, other):
        return self.combine(other, lambda a, b: a + b)

    def __mul__(self, scalar):
        return self.map(lambda a: a * scalar)

    __rmul__ = __mul__

    def inner(self, other: "WaveletCoeffs") -> float:
        """Euclidean inner product over all coefficients."""
        self._check_compatible(other)
        total = float((_np(self.coarse) * _np(other.coarse)).sum())
        for a, b in zip(self.details, other.details):
            total += float((_np(a) * _np(b)).sum())
        return total

    def energy(self) -> float:
        return self.inner(self)

    def zeros_like(self) -> "WaveletCoeffs":
        return self.map(lambda a: a * 0)

    def _check_compatible(self, other):
        if (self.family, self.levels, self.shape) != (other.family, other.levels, other.shape):
            raise ValueError("coefficient sets come from different transforms")


def _np(a):
    if isinstance(a, torch.Tensor):
        return a.detach().cpu().numpy()
    return np.asarray(a)

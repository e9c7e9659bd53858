"""Periodic orthonormal Daubechies DWT in one and two dimensions."""
from __future__ import annotations

import re

import torch

from . import _ops
from ._backend import from_tensor, mat, sandwich, to_tensor
from .coeffs import WaveletCoeffs

__all__ = ["dwt_forward", "dwt_inverse", "parse_family"]


def parse_family(family: str) -> int:
    """``'db6'`` -> 6."""
    m = re.fullmatch(r"db(\d+)", family)
    if not m:
        raise ValueError(f"unknown DWT family {family!r}; expected 'dbN'")
    return int(m.group(1))


def _check_extent(shape, levels):
    if levels < 1:
        raise ValueError("levels must be >= 1")
    for n in shape:
        if n < 2 ** levels or n % (2 ** levels):
            raise ValueError(
                f"axis of length {n} cannot be decomposed to {levels} periodic levels "
                f"(needs a multiple of {2 ** levels})")


def dwt_forward(field, levels: int, family: str = "db6", ndim: int | None = None) -> WaveletCoeffs:
    """Multilevel periodic DWT over the trailing ``ndim`` axes (1 or 2).

    Leading axes (batch, channel) are carried along.  The transform is
    orthonormal, so coefficient energy equals field energy.
    """
    order = parse_family(family)
    x, was_np = to_tensor(field)
    if ndim is None:
        ndim = min(x.ndim, 2)
    if ndim not in (1, 2) or x.ndim < ndim:
        raise ValueError(f"ndim must be 1 or 2 and not exceed the field rank, got {ndim}")
    shape = tuple(x.shape[-ndim:])
    _check_extent(shape, levels)

    details = []
    cur = x
    for _ in range(levels):
        if ndim == 1:
            lo, hi = _ops.periodic_analysis(cur.shape[-1], order)
            det = torch.matmul(cur, mat(hi, cur).T)
            cur = torch.matmul(cur, mat(lo, cur).T)
        else:
            lr, hr = (mat(m, cur) for m in _ops.periodic_analysis(cur.shape[-2], order))
            lc, hc = (mat(m, cur) for m in _ops.periodic_analysis(cur.shape[-1], order))
            det = torch.stack([sandwich(hr, cur, lc), sandwich(lr, cur, hc),
                               sandwich(hr, cur, hc)], dim=-3)
            cur = sandwich(lr, cur, lc)
        details.append(from_tensor(det, was_np))
    return WaveletCoeffs(family, levels, from_tensor(cur, was_np), details, shape)


def dwt_inverse(coeffs: WaveletCoeffs):
    """Inverse of :func:`dwt_forward` (the transpose, by orthonormality)."""
    order = parse_family(coeffs.family)
    if len(coeffs.details) != coeffs.levels:
        raise ValueError("number of detail levels does not match 'levels'")
    cur, was_np = to_tensor(coeffs.coarse)
    ndim = coeffs.ndim
    for level in reversed(range(coeffs.levels)):
        det, _ = to_tensor(coeffs.details[level])
        det = det.to(cur.dtype)
        n_full = [s // 2 ** level for s in coeffs.shape]
        if ndim == 1:
            if det.shape[-1] != cur.shape[-1] or 2 * cur.shape[-1] != n_full[0]:
                raise ValueError(f"inconsistent coefficient shapes at level {level + 1}")
            lo, hi = _ops.periodic_analysis(n_full[0], order)
            cur = torch.matmul(cur, mat(lo, cur)) + torch.matmul(det, mat(hi, cur))
        else:
            if det.shape[-3] != 3 or det.shape[-2:] != cur.shape[-2:] \
                    or [2 * s for s in cur.shape[-2:]] != n_full:
                raise ValueError(f"inconsistent coefficient shapes at level {level + 1}")
            lr, hr = (mat(m, cur).T for m in _ops.periodic_analysis(n_full[0], order))
            lc, hc = (mat(m, cur).T for m in _ops.periodic_analysis(n_full[1], order))
            cur = (sandwich(lr, cur, lc) + sandwich(hr, det[..., 0, :, :], lc)
                   + sandwich(lr, det[..., 1, :, :], hc) + sandwich(hr, det[..., 2, :, :], hc))
    return from_tensor(cur, was_np)

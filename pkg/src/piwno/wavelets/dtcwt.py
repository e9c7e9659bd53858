"""Two-dimensional dual-tree complex wavelet transform.

Level 1 uses the near-symmetric (13,19)-tap biorthogonal pair and deeper
levels the 14-tap q-shift filters.  Each level yields six complex
orientation subbands, stored as real/imaginary pairs.  Odd extents and
extents not divisible by four at deeper levels are handled by edge
extension whose inverse crops back exactly.
"""
from __future__ import annotations

import math

import torch

from . import _ops
from ._backend import from_tensor, mat, sandwich, to_tensor
from .coeffs import WaveletCoeffs

__all__ = ["dtcwt_forward", "dtcwt_inverse", "dtcwt_adjoint", "ORIENTATIONS"]

ORIENTATIONS = (15, 45, 75, 105, 135, 165)
FAMILY = "dtcwt"

_R = math.sqrt(0.5)


def _q2c(y: torch.Tensor) -> torch.Tensor:
    """Quad image ``(..., 2m, 2n)`` -> two complex subbands ``(..., 2, m, n, 2)``."""
    a, b = y[..., 0::2, 0::2], y[..., 0::2, 1::2]
    c, d = y[..., 1::2, 0::2], y[..., 1::2, 1::2]
    z1 = torch.stack([(a - d) * _R, (b + c) * _R], dim=-1)
    z2 = torch.stack([(a + d) * _R, (b - c) * _R], dim=-1)
    return torch.stack([z1, z2], dim=-4)


def _c2q(z: torch.Tensor) -> torch.Tensor:
    """Inverse (and transpose) of :func:`_q2c`."""
    z1r, z1i = z[..., 0, :, :, 0], z[..., 0, :, :, 1]
    z2r, z2i = z[..., 1, :, :, 0], z[..., 1, :, :, 1]
    a = (z1r + z2r) * _R
    b = (z1i + z2i) * _R
    c = (z1i - z2i) * _R
    d = (z2r - z1r) * _R
    top = torch.stack([a, b], dim=-1).flatten(-2)
    bottom = torch.stack([c, d], dim=-1).flatten(-2)
    return torch.stack([top, bottom], dim=-2).flatten(-3, -2)


# orientation slots filled by the (first, second) output of _q2c
_SLOTS = {"lh": (0, 5), "hh": (1, 4), "hl": (2, 3)}


def _pack(lh, hl, hh) -> torch.Tensor:
    parts = {"lh": _q2c(lh), "hl": _q2c(hl), "hh": _q2c(hh)}
    bands = [None] * 6
    for name, (i, j) in _SLOTS.items():
        bands[i] = parts[name][..., 0, :, :, :]
        bands[j] = parts[name][..., 1, :, :, :]
    return torch.stack(bands, dim=-4)


def _unpack(det: torch.Tensor):
    out = []
    for name in ("lh", "hl", "hh"):
        i, j = _SLOTS[name]
        out.append(_c2q(torch.stack([det[..., i, :, :, :], det[..., j, :, :, :]], dim=-4)))
    return out


def _stages(shape, levels):
    if levels < 1:
        raise ValueError("levels must be >= 1")
    return _ops.dualtree_axis(shape[0], levels), _ops.dualtree_axis(shape[1], levels)


def dtcwt_forward(field, levels: int) -> WaveletCoeffs:
    """Forward 2-D DTCWT over the last two axes of ``field``."""
    x, was_np = to_tensor(field)
    if x.ndim < 2:
        raise ValueError("the dual-tree transform is two-dimensional; got a 1-D field")
    shape = tuple(x.shape[-2:])
    if min(shape) < 2:
        raise ValueError(f"field extent {shape} too small")
    rows, cols = _stages(shape, levels)
    details = []
    cur = x
    for (lr, hr, _, _), (lc, hc, _, _) in zip(rows, cols):
        lr, hr, lc, hc = (mat(m, cur) for m in (lr, hr, lc, hc))
        lh = sandwich(hr, cur, lc)
        hl = sandwich(lr, cur, hc)
        hh = sandwich(hr, cur, hc)
        cur = sandwich(lr, cur, lc)
        details.append(from_tensor(_pack(lh, hl, hh), was_np))
    return WaveletCoeffs(FAMILY, levels, from_tensor(cur, was_np), details, shape)


def _check(coeffs: WaveletCoeffs):
    if coeffs.family != FAMILY:
        raise ValueError(f"expected dtcwt coefficients, got {coeffs.family!r}")
    if len(coeffs.details) != coeffs.levels or coeffs.ndim != 2:
        raise ValueError("malformed dtcwt coefficient set")


def _reconstruct(coeffs: WaveletCoeffs, adjoint: bool):
    _check(coeffs)
    rows, cols = _stages(coeffs.shape, coeffs.levels)
    cur, was_np = to_tensor(coeffs.coarse)
    for level in reversed(range(coeffs.levels)):
        det, _ = to_tensor(coeffs.details[level])
        det = det.to(cur.dtype)
        lr, hr, sr0, sr1 = rows[level]
        lc, hc, sc0, sc1 = cols[level]
        if adjoint:
            r0, r1, c0, c1 = lr.T, hr.T, lc.T, hc.T
        else:
            r0, r1, c0, c1 = sr0, sr1, sc0, sc1
        expected = (lr.shape[0], lc.shape[0])
        if tuple(cur.shape[-2:]) != expected or tuple(det.shape[-4:-1]) != (6, expected[0] // 2, expected[1] // 2):
            raise ValueError(f"inconsistent coefficient shapes at level {level + 1}")
        lh, hl, hh = _unpack(det)
        r0, r1, c0, c1 = (mat(m, cur) for m in (r0, r1, c0, c1))
        cur = (sandwich(r0, cur, c0) + sandwich(r1, lh, c0)
               + sandwich(r0, hl, c1) + sandwich(r1, hh, c1))
    return from_tensor(cur, was_np)


def dtcwt_inverse(coeffs: WaveletCoeffs):
    """Synthesis with the dual filters; reconstructs the field up to the
    (near-perfect) reconstruction accuracy of the filter set."""
    return _reconstruct(coeffs, adjoint=False)


def dtcwt_adjoint(coeffs: WaveletCoeffs):
    """Exact adjoint of :func:`dtcwt_forward`: ``<W x, y> == <x, W^T y>``."""
    return _reconstruct(coeffs, adjoint=True)

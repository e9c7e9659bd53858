"""One-dimensional filter-bank stages written as dense matrices.

Every stage of both transforms is linear and acts along a single axis, so
it is represented by a small matrix.  A separable 2-D stage is then
``A @ X @ B.T`` and the adjoint is ``A.T @ Y @ B``.  Grid sizes in this
package are at most a few hundred nodes per axis, so dense storage is cheap.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import filters


def _reflect(idx: np.ndarray, n: int) -> np.ndarray:
    # half-sample symmetric extension: -1 -> 0, n -> n-1
    i = np.mod(idx, 2 * n)
    return np.where(i >= n, 2 * n - 1 - i, i)


def _valid_conv(xe: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Convolve the columns of ``xe`` with ``h``, keeping the 'valid' part."""
    m = len(h)
    out_len = xe.shape[0] - m + 1
    out = np.zeros((out_len,) + xe.shape[1:], dtype=np.float64)
    for j, hj in enumerate(h):
        start = m - 1 - j
        out += hj * xe[start:start + out_len]
    return out


# --- periodic orthonormal DWT -------------------------------------------------

@lru_cache(maxsize=None)
def periodic_analysis(n: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowpass and highpass analysis matrices (each ``n/2 x n``) of one
    periodic DWT stage.  Stacked they form an orthogonal matrix."""
    if n % 2:
        raise ValueError(f"periodic DWT stage needs an even length, got {n}")
    h = filters.daubechies(order)
    g = ((-1.0) ** np.arange(len(h))) * h[::-1]
    lo = np.zeros((n // 2, n))
    hi = np.zeros((n // 2, n))
    rows = np.arange(n // 2)
    for k in range(len(h)):
        cols = (2 * rows + k) % n
        np.add.at(lo, (rows, cols), h[k])
        np.add.at(hi, (rows, cols), g[k])
    lo.setflags(write=False)
    hi.setflags(write=False)
    return lo, hi


# --- dual-tree stages ----------------------------------------------------------

def colfilter(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Undecimated filtering of the columns of ``x`` by odd-length ``h`` with
    symmetric extension; output has the same number of rows."""
    r = x.shape[0]
    m2 = len(h) // 2
    xe = _reflect(np.arange(-m2, r + m2), r)
    return _valid_conv(x[xe], h)


def coldfilt(x: np.ndarray, ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    """Decimate-by-two q-shift filtering of the columns of ``x``.

    ``ha`` runs on odd samples and ``hb`` on even ones; the two outputs are
    interleaved.  Row count must be a multiple of four.
    """
    r = x.shape[0]
    if r % 4:
        raise ValueError(f"coldfilt needs a row count divisible by 4, got {r}")
    m = len(ha)
    if len(hb) != m or m % 2:
        raise ValueError("q-shift filters must share one even length")
    xe = _reflect(np.arange(-m, r + m), r)
    t = np.arange(5, r + 2 * m - 2, 4)
    hao, hae = ha[0::2], ha[1::2]
    hbo, hbe = hb[0::2], hb[1::2]
    y = np.zeros((r // 2,) + x.shape[1:])
    if np.sum(ha * hb) > 0:
        s1, s2 = slice(0, r // 2, 2), slice(1, r // 2, 2)
    else:
        s1, s2 = slice(1, r // 2, 2), slice(0, r // 2, 2)
    y[s1] = _valid_conv(x[xe[t - 1]], hao) + _valid_conv(x[xe[t - 3]], hae)
    y[s2] = _valid_conv(x[xe[t]], hbo) + _valid_conv(x[xe[t - 2]], hbe)
    return y


def colifilt(x: np.ndarray, ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    """Interpolate-by-two q-shift filtering of the columns of ``x`` (the
    synthesis counterpart of :func:`coldfilt`)."""
    r = x.shape[0]
    if r % 2:
        raise ValueError(f"colifilt needs an even row count, got {r}")
    m = len(ha)
    if len(hb) != m or m % 2:
        raise ValueError("q-shift filters must share one even length")
    m2 = m // 2
    hao, hae = ha[0::2], ha[1::2]
    hbo, hbe = hb[0::2], hb[1::2]
    xe = _reflect(np.arange(-m2, r + m2), r)
    y = np.zeros((2 * r,) + x.shape[1:])
    s = np.arange(0, 2 * r, 4)
    positive = np.sum(ha * hb) > 0
    if m2 % 2 == 0:
        t = np.arange(3, r + m, 2)
        ta, tb = (t, t - 1) if positive else (t - 1, t)
        y[s] = _valid_conv(x[xe[tb - 2]], hae)
        y[s + 1] = _valid_conv(x[xe[ta - 2]], hbe)
        y[s + 2] = _valid_conv(x[xe[tb]], hao)
        y[s + 3] = _valid_conv(x[xe[ta]], hbo)
    else:
        t = np.arange(2, r + m - 1, 2)
        ta, tb = (t, t - 1) if positive else (t - 1, t)
        y[s] = _valid_conv(x[xe[tb]], hao)
        y[s + 1] = _valid_conv(x[xe[ta]], hbo)
        y[s + 2] = _valid_conv(x[xe[tb]], hae)
        y[s + 3] = _valid_conv(x[xe[ta]], hbe)
    return y


def _edge_extend(n: int, front: int, back: int) -> np.ndarray:
    """Matrix repeating the first sample ``front`` times and the last ``back`` times."""
    idx = np.concatenate([np.zeros(front, int), np.arange(n), np.full(back, n - 1)])
    e = np.zeros((len(idx), n))
    e[np.arange(len(idx)), idx] = 1.0
    return e


def _crop(n_out: int, n_in: int, front: int) -> np.ndarray:
    c = np.zeros((n_out, n_in))
    c[np.arange(n_out), front + np.arange(n_out)] = 1.0
    return c


@lru_cache(maxsize=None)
def dualtree_axis(n: int, levels: int) -> tuple[tuple[np.ndarray, ...], ...]:
    """Per-level analysis/synthesis matrices for one axis of the 2-D DTCWT.

    Returns a tuple with one entry per level, each ``(lo, hi, syn_lo, syn_hi)``.
    ``lo``/``hi`` map the previous lowpass (length ``n_{j-1}``) to this level's
    lowpass/highpass; ``syn_lo``/``syn_hi`` map them back, including the
    crop that undoes any edge extension, so the stage is perfectly
    reconstructing up to the filter-set accuracy.
    """
    bi = filters.near_sym_b()
    qs = filters.qshift_b()
    stages = []
    size = n
    for level in range(levels):
        if level == 0:
            ext = _edge_extend(size, 0, size % 2)
            m = ext.shape[0]
            eye = np.eye(m)
            lo = colfilter(eye, bi["h0o"]) @ ext
            hi = colfilter(eye, bi["h1o"]) @ ext
            crop = _crop(size, m, 0)
            eye_out = np.eye(m)
            syn_lo = crop @ colfilter(eye_out, bi["g0o"])
            syn_hi = crop @ colfilter(eye_out, bi["g1o"])
        else:
            if size < 4:
                raise ValueError(f"axis of length {n} cannot be decomposed to {levels} levels")
            pad = 1 if size % 4 else 0
            ext = _edge_extend(size, pad, pad)
            m = ext.shape[0]
            if m % 4:
                raise ValueError(f"axis of length {n} cannot be decomposed to {levels} levels")
            eye = np.eye(m)
            lo = coldfilt(eye, qs["h0b"], qs["h0a"]) @ ext
            hi = coldfilt(eye, qs["h1b"], qs["h1a"]) @ ext
            crop = _crop(size, m, pad)
            eye_out = np.eye(m // 2)
            syn_lo = crop @ colifilt(eye_out, qs["g0b"], qs["g0a"])
            syn_hi = crop @ colifilt(eye_out, qs["g1b"], qs["g1a"])
        for mat in (lo, hi, syn_lo, syn_hi):
            mat.setflags(write=False)
        stages.append((lo, hi, syn_lo, syn_hi))
        size = lo.shape[0]
    return tuple(stages)

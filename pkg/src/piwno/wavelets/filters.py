"""Literal filter coefficient tables shipped with the package.

The tables live in ``data/*.txt``: comment lines start with ``#``, a
``[name]`` line opens a block, and every following line holds one
coefficient.
"""
from __future__ import annotations

from functools import lru_cache
from importlib import resources

import numpy as np

__all__ = ["load_table", "daubechies", "near_sym_b", "qshift_b"]


@lru_cache(maxsize=None)
def load_table(name: str) -> dict[str, np.ndarray]:
    text = resources.files("piwno.wavelets").joinpath("data", f"{name}.txt").read_text()
    blocks: dict[str, list[float]] = {}
    current = None
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            blocks[current] = []
        elif current is None:
            raise ValueError(f"coefficient before any block header in {name}.txt")
        else:
            blocks[current].append(float(line))
    out = {}
    for key, vals in blocks.items():
        arr = np.asarray(vals, dtype=np.float64)
        arr.setflags(write=False)
        out[key] = arr
    return out


def daubechies(order: int) -> np.ndarray:
    """Decomposition lowpass filter of the Daubechies wavelet with ``order``
    vanishing moments (``2 * order`` taps)."""
    table = load_table("daubechies")
    key = f"db{order}"
    if key not in table:
        raise ValueError(f"no Daubechies table for order {order}; available: {sorted(table)}")
    return table[key]


def near_sym_b() -> dict[str, np.ndarray]:
    """Level-1 biorthogonal filters: ``h0o`` (13 taps), ``h1o`` (19), ``g0o`` (19), ``g1o`` (13)."""
    return load_table("near_sym_b")


def qshift_b() -> dict[str, np.ndarray]:
    """14-tap quarter-shift filters for levels >= 2 (``h0a``, ``h0b``, ``g0a``, ...)."""
    return load_table("qshift_b")

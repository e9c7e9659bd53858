from __future__ import annotations

import numpy as np
import torch


def to_tensor(x):
    """Return ``(tensor, was_numpy)``; numpy input is promoted to float64."""
    if isinstance(x, torch.Tensor):
        if not torch.is_floating_point(x):
            x = x.to(torch.float64)
        return x, False
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("field contains non-finite values")
    return torch.from_numpy(arr), True


def from_tensor(t: torch.Tensor, as_numpy: bool):
    return t.detach().numpy() if as_numpy else t


_cache: dict = {}


def mat(m: np.ndarray, like: torch.Tensor) -> torch.Tensor:
    """Cached torch copy of an operator matrix in the dtype/device of ``like``."""
    key = (id(m), like.dtype, like.device)
    hit = _cache.get(key)
    if hit is None or hit[0] is not m:
        hit = (m, torch.tensor(np.array(m), dtype=like.dtype, device=like.device))
        _cache[key] = hit
    return hit[1]


def sandwich(a: torch.Tensor, x: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """``a @ x @ b.T`` over the last two axes of ``x``."""
    return torch.matmul(torch.matmul(a, x), b.transpose(0, 1))

"""Stochastic-projection derivative estimates on structured grids.

At a node ``p`` with neighbours ``i`` inside radius ``r_n`` the gradient is
the least-squares slope

    G(p) = [sum_i (u_i - u_p) dx_i^T] [sum_i dx_i dx_i^T]^{-1},   dx_i = x_i - x_p.

For a fixed grid this is a linear map of the nodal values, so it is
precomputed once as a padded neighbour table with per-axis weights.  The
table is applied with a gather, which keeps the estimate differentiable
under torch autograd.  Second derivatives compose two first-derivative passes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import itertools

import numpy as np
import torch
from scipy import sparse

from .grids import Grid

__all__ = [
    "NeighborhoodSpec", "DegenerateGeometryError", "SPOperator", "build_sp_operator",
    "sp_gradient", "sp_gradient_field", "sp_second_derivative", "fd_gradient_oracle",
]


class DegenerateGeometryError(ValueError):
    """Moment matrix of a neighbourhood is singular or too ill-conditioned."""


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Neighbour rule: every grid node within ``radius`` of the centre node.

    ``radius`` is in physical units; when omitted it is ``radius_factor``
    times the largest grid spacing.  ``periodic`` lists axes that wrap.
    """

    radius: float | None = None
    radius_factor: float = 2.5
    min_neighbors: int | None = None
    periodic: tuple = ()
    max_condition: float = 1e12

    def resolve_radius(self, grid: Grid) -> float:
        h = max(grid.spacing)
        r = self.radius if self.radius is not None else self.radius_factor * h
        if r < 1.5 * h - 1e-12:
            raise ValueError(f"radius {r} is below 1.5 x grid spacing {h}")
        return float(r)


class SPOperator:
    """Precomputed stochastic-projection gradient on a grid.

    Attributes
    ----------
    index : ndarray ``(N, K)``
        Flat neighbour indices, padded with the centre index.
    weights : ndarray ``(ndim, N, K)``
        Weight of ``u_i`` in each gradient component; the centre weight
        (last column) is minus the sum of the neighbour weights.
    """

    def __init__(self, grid: Grid, spec: NeighborhoodSpec):
        self.grid = grid
        self.spec = spec
        self.radius = spec.resolve_radius(grid)
        d = grid.ndim
        n_min = spec.min_neighbors if spec.min_neighbors is not None else d + 1
        if n_min < d + 1:
            raise ValueError(f"min_neighbors must be at least {d + 1}")
        h = np.asarray(grid.spacing)
        reach = [int(np.floor(self.radius / hi + 1e-9)) for hi in h]
        offsets = np.array([o for o in itertools.product(*[range(-m, m + 1) for m in reach])
                            if any(o) and np.sum((np.asarray(o) * h) ** 2) <= self.radius ** 2 * (1 + 1e-12)])
        dims = np.asarray(grid.dims)
        idx = np.indices(grid.dims).reshape(d, -1).T  # (N, d)
        nbr = idx[:, None, :] + offsets[None, :, :]  # (N, K, d)
        valid = np.ones(nbr.shape[:2], dtype=bool)
        for a in range(d):
            if a in spec.periodic:
                nbr[..., a] %= dims[a]
            else:
                valid &= (nbr[..., a] >= 0) & (nbr[..., a] < dims[a])
        dx = (offsets * h)[None, :, :] * valid[..., None]  # (N, K, d)
        count = valid.sum(axis=1)
        if np.any(count < n_min):
            raise DegenerateGeometryError(f"some nodes have fewer than {n_min} neighbours")
        moment = np.einsum("nki,nkj->nij", dx, dx)
        cond = np.linalg.cond(moment)
        if np.any(~np.isfinite(cond)) or np.any(cond > spec.max_condition):
            raise DegenerateGeometryError("moment matrix is singular for at least one node (collinear neighbourhood)")
        w = np.einsum("nki,nij->jnk", dx, np.linalg.inv(moment))  # (d, N, K)
        flat = np.ravel_multi_index(tuple(np.clip(nbr[..., a], 0, dims[a] - 1) for a in range(d)), grid.dims)
        centre = np.arange(idx.shape[0])
        flat = np.where(valid, flat, centre[:, None])
        self.index = np.concatenate([flat, centre[:, None]], axis=1)
        self.weights = np.concatenate([w, -w.sum(axis=2, keepdims=True)], axis=2)
        self._torch = {}

    @property
    def n_nodes(self) -> int:
        return self.index.shape[0]

    def matrix(self, axis: int) -> sparse.csr_matrix:
        n, k = self.index.shape
        rows = np.repeat(np.arange(n), k)
        return sparse.csr_matrix((self.weights[axis].ravel(), (rows, self.index.ravel())), shape=(n, n))

    def _torch_tables(self, like: torch.Tensor):
        key = (like.dtype, like.device)
        if key not in self._torch:
            self._torch[key] = (torch.as_tensor(self.index, device=like.device),
                                torch.as_tensor(self.weights, dtype=like.dtype, device=like.device))
        return self._torch[key]

    def apply(self, u, axis: int):
        """Derivative along ``axis`` of a field whose trailing axes are the grid."""
        nd = self.grid.ndim
        if tuple(u.shape[-nd:]) != tuple(self.grid.dims):
            raise ValueError(f"field shape {tuple(u.shape)} does not end with grid dims {self.grid.dims}")
        lead = tuple(u.shape[:-nd])
        if isinstance(u, torch.Tensor):
            idx, w = self._torch_tables(u)
            flat = u.reshape(lead + (-1,))
            out = (flat[..., idx] * w[axis]).sum(-1)
            return out.reshape(u.shape)
        flat = np.asarray(u, dtype=np.float64).reshape(lead + (-1,))
        out = np.einsum("...nk,nk->...n", flat[..., self.index], self.weights[axis])
        return out.reshape(u.shape)

    def second(self, u, axis: int):
        return self.apply(self.apply(u, axis), axis)


@lru_cache(maxsize=32)
def build_sp_operator(grid: Grid, spec: NeighborhoodSpec = NeighborhoodSpec()) -> SPOperator:
    """Cached :class:`SPOperator` for ``(grid, spec)``."""
    return SPOperator(grid, spec)


def sp_gradient(field, point_index, grid: Grid, spec: NeighborhoodSpec = NeighborhoodSpec()) -> np.ndarray:
    """Gradient vector at a single node (multi-index ``point_index``)."""
    op = build_sp_operator(grid, spec)
    field = np.asarray(field, dtype=np.float64)
    if field.shape != tuple(grid.dims):
        raise ValueError("field must match the grid")
    p = np.ravel_multi_index(tuple(point_index), grid.dims)
    vals = field.ravel()[op.index[p]]
    return np.array([vals @ op.weights[a, p] for a in range(grid.ndim)])


def sp_gradient_field(field, grid: Grid, spec: NeighborhoodSpec = NeighborhoodSpec()):
    """All gradient components stacked on a new leading axis."""
    op = build_sp_operator(grid, spec)
    comps = [op.apply(field, a) for a in range(grid.ndim)]
    return torch.stack(comps) if isinstance(field, torch.Tensor) else np.stack(comps)


def sp_second_derivative(field, axis: int, grid: Grid, spec: NeighborhoodSpec = NeighborhoodSpec()):
    """``d^2 u / dx_axis^2`` by two first-derivative passes."""
    return build_sp_operator(grid, spec).second(field, axis)


def fd_gradient_oracle(field, axis: int, grid: Grid) -> np.ndarray:
    """Second-order finite differences (central inside, one-sided at the ends)."""
    field = np.asarray(field, dtype=np.float64)
    nd = grid.ndim
    if field.shape[-nd:] != tuple(grid.dims):
        raise ValueError("field must end with the grid dims")
    if grid.dims[axis] < 3:
        raise ValueError("need at least 3 nodes along the axis")
    return np.gradient(field, grid.spacing[axis], axis=field.ndim - nd + axis, edge_order=2)

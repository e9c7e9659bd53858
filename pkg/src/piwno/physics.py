"""PDE residuals and the physics loss for the four benchmark systems.

Field layouts (leading batch axis optional, numpy or torch):

* ``diffusion_reaction`` and ``nagumo``: ``u[..., ix, it]`` on an ``(x, t)`` grid.
* ``darcy``: ``u[..., ix, iy]`` and permeability ``a`` on an ``(x, y)`` grid.
* ``allen_cahn``: frames ``u[..., k, ix, iy]`` on a periodic ``(x, y)`` grid,
  consecutive frames ``dt_frame`` apart.

Derivatives come from the stochastic-projection operator, so every residual
is differentiable with respect to ``u`` when torch tensors are passed.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import torch

from .gradients import NeighborhoodSpec, build_sp_operator
from .grids import Grid

__all__ = [
    "PhysicsSpec", "default_physics", "residual_diffusion_reaction", "residual_nagumo",
    "residual_darcy", "residual_allen_cahn", "loss_terms", "physics_loss", "SYSTEMS",
]

SYSTEMS = ("diffusion_reaction", "nagumo", "darcy", "allen_cahn")

_DEFAULT_CONSTANTS = {
    "diffusion_reaction": {"B": 0.01, "k": 0.01},
    "nagumo": {"eps": 1.0, "alpha": -0.5},
    "darcy": {"f": 1.0},
    "allen_cahn": {"eps": 1e-3},
}


@dataclass(frozen=True)
class PhysicsSpec:
    system: str
    constants: dict = field(default_factory=dict)
    bc: str = "dirichlet_zero"
    alpha1: float = 1.0
    alpha2: float = 1.0
    dt_frame: float = 0.05
    radius_factor: float = 2.5

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ValueError(f"unknown system {self.system!r}")
        merged = dict(_DEFAULT_CONSTANTS[self.system])
        unknown = set(self.constants) - set(merged)
        if unknown:
            raise ValueError(f"unknown constants for {self.system}: {sorted(unknown)}")
        merged.update(self.constants)
        object.__setattr__(self, "constants", merged)
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("loss weights must be non-negative")
        if self.bc not in ("dirichlet_zero", "periodic"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.system == "nagumo" and merged["eps"] <= 0:
            raise ValueError("Nagumo diffusion coefficient must be positive")
        if self.system == "allen_cahn" and merged["eps"] <= 0:
            raise ValueError("Allen-Cahn epsilon must be positive")
        if self.dt_frame <= 0:
            raise ValueError("dt_frame must be positive")

    def neighborhood(self) -> NeighborhoodSpec:
        periodic = (0, 1) if self.bc == "periodic" else ()
        return NeighborhoodSpec(radius_factor=self.radius_factor, periodic=periodic)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PhysicsSpec":
        return cls(**d)


def default_physics(system: str, **kw) -> PhysicsSpec:
    bc = "periodic" if system == "allen_cahn" else "dirichlet_zero"
    return PhysicsSpec(system, bc=kw.pop("bc", bc), **kw)


def _check(u, grid: Grid, n_trailing: int = 2):
    if tuple(u.shape[-n_trailing:]) != tuple(grid.dims[-n_trailing:]):
        raise ValueError(f"field of shape {tuple(u.shape)} does not match grid {grid.dims}")


def _xt_derivs(u, grid: Grid, spec: PhysicsSpec):
    op = build_sp_operator(grid, spec.neighborhood())
    ix, it = grid.role_index("space-x"), grid.role_index("time")
    return op.apply(u, it), op.second(u, ix)


def _like(f, u):
    if isinstance(u, torch.Tensor) and not isinstance(f, torch.Tensor):
        return torch.as_tensor(np.asarray(f), dtype=u.dtype, device=u.device)
    return f


def residual_diffusion_reaction(u, f, grid: Grid, spec: PhysicsSpec):
    """``u_t - B u_xx - k u^2 - f`` with ``f`` broadcast along time."""
    _check(u, grid)
    c = spec.constants
    u_t, u_xx = _xt_derivs(u, grid, spec)
    f = _like(f, u)
    if tuple(f.shape[-1:]) != (grid.dims[0],):
        raise ValueError("source must be sampled on the spatial nodes")
    return u_t - c["B"] * u_xx - c["k"] * u ** 2 - f[..., :, None]


def residual_nagumo(u, grid: Grid, spec: PhysicsSpec):
    """``u_t - eps u_xx - u (1 - u)(u - alpha)``."""
    _check(u, grid)
    c = spec.constants
    u_t, u_xx = _xt_derivs(u, grid, spec)
    return u_t - c["eps"] * u_xx - u * (1 - u) * (u - c["alpha"])


def residual_darcy(u, a, grid: Grid, spec: PhysicsSpec):
    """``-div(a grad u) - f`` expanded as ``-a Lap(u) - grad(a).grad(u) - f``."""
    _check(u, grid)
    a = _like(a, u)
    _check(a, grid)
    amin = float(a.min())
    if amin <= 0:
        raise ValueError("permeability must be strictly positive")
    op = build_sp_operator(grid, spec.neighborhood())
    lap = op.second(u, 0) + op.second(u, 1)
    grad_dot = op.apply(a, 0) * op.apply(u, 0) + op.apply(a, 1) * op.apply(u, 1)
    return -a * lap - grad_dot - spec.constants["f"]


def residual_allen_cahn(frames, grid: Grid, spec: PhysicsSpec):
    """Residual of ``u_t = eps Lap(u) + u - u^3`` for each frame transition.

    The time derivative is the forward difference between frames; the right
    side is averaged over the two frames (trapezoidal rule).  Output has one
    fewer frame than the input.
    """
    _check(frames, grid)
    if frames.shape[-3] < 2:
        raise ValueError("need at least two frames")
    op = build_sp_operator(grid, spec.neighborhood())
    eps = spec.constants["eps"]
    rhs = eps * (op.second(frames, 0) + op.second(frames, 1)) + frames - frames ** 3
    u_t = (frames[..., 1:, :, :] - frames[..., :-1, :, :]) / spec.dt_frame
    return u_t - 0.5 * (rhs[..., 1:, :, :] + rhs[..., :-1, :, :])


def _mean_sq(x):
    return (x ** 2).mean()


def loss_terms(u, inputs, grid: Grid, spec: PhysicsSpec) -> dict:
    """The three loss terms (PDE, boundary, initial condition) as a dict.

    ``inputs`` is the raw input function: the source ``f`` for diffusion-
    reaction, ``u0`` for Nagumo, the permeability ``a`` for Darcy and the
    known past frames for Allen-Cahn.
    """
    s = spec.system
    zero = u.sum() * 0
    if s in ("diffusion_reaction", "nagumo"):
        ix, it = grid.role_index("space-x"), grid.role_index("time")
        if (ix, it) != (0, 1):
            raise ValueError("expected an (x, t) grid")
        r = residual_diffusion_reaction(u, inputs, grid, spec) if s == "diffusion_reaction" \
            else residual_nagumo(u, grid, spec)
        pde = _mean_sq(r[..., 1:-1, :])
        bc = _mean_sq(u[..., [0, -1], :])
        target = 0.0 if s == "diffusion_reaction" else _like(inputs, u)
        ic = _mean_sq(u[..., :, 0] - target)
        return {"pde": pde, "bc": bc, "ic": ic}
    if s == "darcy":
        r = residual_darcy(u, inputs, grid, spec)
        pde = _mean_sq(r[..., 1:-1, 1:-1])
        edge = [u[..., 0, :], u[..., -1, :], u[..., 1:-1, 0], u[..., 1:-1, -1]]
        cat = torch.cat if isinstance(u, torch.Tensor) else np.concatenate
        bc = _mean_sq(cat(edge, -1))
        return {"pde": pde, "bc": bc, "ic": zero}
    # allen_cahn: prepend the last known frame so the first predicted frame is constrained
    past = _like(inputs, u)
    cat = torch.cat if isinstance(u, torch.Tensor) else np.concatenate
    frames = cat([past[..., -1:, :, :], u], -3)
    r = residual_allen_cahn(frames, grid, spec)
    return {"pde": _mean_sq(r), "bc": zero, "ic": zero}


def physics_loss(u, inputs, grid: Grid, spec: PhysicsSpec, return_terms: bool = False):
    """``mean r^2 + alpha1 * mean bc^2 + alpha2 * mean ic^2``."""
    t = loss_terms(u, inputs, grid, spec)
    total = t["pde"] + spec.alpha1 * t["bc"] + spec.alpha2 * t["ic"]
    return (total, t) if return_terms else total

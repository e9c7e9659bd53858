"""Wavelet neural operator.

The network lifts the input channels pointwise to a ``width``-channel latent
field, applies ``blocks`` wavelet kernel-integration blocks

    v_{j+1} = act( W^{-1}( R_j . W(v_j) ) + W_j v_j ),

and projects pointwise back to the output channels.  ``W`` is a 2-D wavelet
transform; only the bands at the coarsest decomposition level are multiplied
by the learned kernel ``R_j``, every finer band is passed through unchanged.
Inputs are channels-last ``(batch, nx, ny, c_in)``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .wavelets import WaveletCoeffs, dtcwt_forward, dtcwt_inverse, dwt_forward, dwt_inverse
from .wavelets import _ops
from .wavelets.dwt import parse_family

__all__ = ["WnoConfig", "WNO", "spectral_conv", "band_shapes", "ACTIVATIONS"]

ACTIVATIONS = {
    "gelu": nn.functional.gelu,
    "tanh": torch.tanh,
    "silu": nn.functional.silu,
}


@dataclass(frozen=True)
class WnoConfig:
    """Architecture hyperparameters.

    ``grid_shape`` is the spatial (or space-time) resolution the operator
    acts on; kernel weights are sized from it.
    """

    in_channels: int
    out_channels: int
    grid_shape: tuple = (64, 64)
    width: int = 64
    levels: int = 4
    blocks: int = 4
    wavelet: str = "dtcwt"
    activation: str = "gelu"
    include_coordinates: bool = True
    lift_hidden: int = 64
    project_hidden: int = 128
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "grid_shape", tuple(int(n) for n in self.grid_shape))
        if self.width < 1 or self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if not 1 <= self.blocks <= 8:
            raise ValueError("blocks must lie in [1, 8]")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.grid_shape) != 2:
            raise ValueError("the operator acts on 2-D grids")
        if self.wavelet != "dtcwt":
            parse_family(self.wavelet)
        band_shapes(self)  # raises when levels do not fit the grid

    @property
    def total_in(self) -> int:
        return self.in_channels + (2 if self.include_coordinates else 0)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["grid_shape"] = list(self.grid_shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WnoConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown WnoConfig keys: {sorted(unknown)}")
        return cls(**d)


def _padded_shape(cfg: WnoConfig) -> tuple:
    m = 2 ** cfg.levels
    return tuple(-(-n // m) * m for n in cfg.grid_shape)


def band_shapes(cfg: WnoConfig) -> dict:
    """Spatial shapes of the parametrised bands at the coarsest level."""
    if cfg.levels < 1:
        raise ValueError("levels must be >= 1")
    if cfg.wavelet == "dtcwt":
        rows = _ops.dualtree_axis(cfg.grid_shape[0], cfg.levels)
        cols = _ops.dualtree_axis(cfg.grid_shape[1], cfg.levels)
        hc, wc = rows[-1][0].shape[0], cols[-1][0].shape[0]
        if min(hc, wc) < 2:
            raise ValueError(f"{cfg.levels} levels are too many for grid {cfg.grid_shape}")
        return {"coarse": (hc, wc), "detail": (hc // 2, wc // 2)}
    ph, pw = _padded_shape(cfg)
    m = 2 ** cfg.levels
    if ph // m < 1 or pw // m < 1:
        raise ValueError(f"{cfg.levels} levels are too many for grid {cfg.grid_shape}")
    return {"coarse": (ph // m, pw // m)}


def _mix(x: torch.Tensor, r: torch.Tensor) -> torch.Tensor:
    # per-location channel mixing: out[b,o,x,y] = sum_i x[b,i,x,y] r[i,o,x,y]
    return torch.einsum("bixy,ioxy->boxy", x, r)


def spectral_conv(coeffs: WaveletCoeffs, r_coarse: torch.Tensor, r_detail: torch.Tensor | None = None) -> WaveletCoeffs:
    """Multiply the coarsest-level bands by the kernel weights.

    Parameters
    ----------
    coeffs : WaveletCoeffs
        Decomposition of a ``(batch, channels, nx, ny)`` field.
    r_coarse : tensor ``(c_in, c_out, hc, wc)``
    r_detail : tensor ``(6, 2, c_in, c_out, hd, wd)``, optional
        Weights for the twelve real detail sets of the coarsest DTCWT level.
        Ignored (must be ``None``) for the DWT.
    """
    coarse = coeffs.coarse
    if tuple(r_coarse.shape[2:]) != tuple(coarse.shape[-2:]) or r_coarse.shape[0] != coarse.shape[1]:
        raise ValueError(f"coarse kernel {tuple(r_coarse.shape)} does not match band {tuple(coarse.shape)}")
    details = list(coeffs.details)
    if r_detail is not None:
        if coeffs.family != "dtcwt":
            raise ValueError("detail kernels are only defined for the dual-tree transform")
        top = details[-1]
        if tuple(r_detail.shape[:2]) != (6, 2) or tuple(r_detail.shape[4:]) != tuple(top.shape[-3:-1]) \
                or r_detail.shape[2] != top.shape[1]:
            raise ValueError(f"detail kernel {tuple(r_detail.shape)} does not match band {tuple(top.shape)}")
        sets = [torch.stack([_mix(top[:, :, o, :, :, p], r_detail[o, p]) for p in range(2)], dim=-1)
                for o in range(6)]
        details[-1] = torch.stack(sets, dim=2)
    return WaveletCoeffs(coeffs.family, coeffs.levels, _mix(coarse, r_coarse), details, coeffs.shape)


class _Pointwise(nn.Module):
    """Two-layer pointwise map acting on the last axis."""

    def __init__(self, c_in, hidden, c_out, act):
        super().__init__()
        self.fc1 = nn.Linear(c_in, hidden)
        self.fc2 = nn.Linear(hidden, c_out)
        self.act = act

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class WaveletBlock(nn.Module):
    def __init__(self, cfg: WnoConfig, generator: torch.Generator):
        super().__init__()
        self.cfg = cfg
        d = cfg.width
        shapes = band_shapes(cfg)
        hc, wc = shapes["coarse"]
        n_loc = hc * wc
        scale = 1.0 / (d * n_loc)
        self.r_coarse = nn.Parameter(scale * torch.rand(d, d, hc, wc, generator=generator))
        if cfg.wavelet == "dtcwt":
            hd, wd = shapes["detail"]
            self.r_detail = nn.Parameter(scale * torch.rand(6, 2, d, d, hd, wd, generator=generator))
        else:
            self.register_parameter("r_detail", None)
        self.w = nn.Conv2d(d, d, 1)
        bound = 1.0 / math.sqrt(d)
        with torch.no_grad():
            self.w.weight.uniform_(-bound, bound, generator=generator)
            self.w.bias.uniform_(-bound, bound, generator=generator)
        self.act = ACTIVATIONS[cfg.activation]

    def kernel(self, v: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        if cfg.wavelet == "dtcwt":
            c = dtcwt_forward(v, cfg.levels)
            return dtcwt_inverse(spectral_conv(c, self.r_coarse, self.r_detail))
        nx, ny = v.shape[-2:]
        px, py = _padded_shape(cfg)
        vp = nn.functional.pad(v, (0, py - ny, 0, px - nx))
        c = dwt_forward(vp, cfg.levels, cfg.wavelet, ndim=2)
        return dwt_inverse(spectral_conv(c, self.r_coarse))[..., :nx, :ny]

    def forward(self, v: torch.Tensor) -> torch.Tensor:
        return self.act(self.kernel(v) + self.w(v))


def _init_linear(layer: nn.Linear, generator: torch.Generator):
    bound = 1.0 / math.sqrt(layer.in_features)
    with torch.no_grad():
        layer.weight.uniform_(-bound, bound, generator=generator)
        layer.bias.uniform_(-bound, bound, generator=generator)


class WNO(nn.Module):
    """Wavelet neural operator ``(batch, nx, ny, c_in) -> (batch, nx, ny, c_out)``.

    Examples
    --------
    >>> cfg = WnoConfig(in_channels=1, out_channels=1, grid_shape=(64, 64), width=8, levels=2, blocks=1)
    >>> WNO(cfg)(torch.zeros(2, 64, 64, 1)).shape
    torch.Size([2, 64, 64, 1])
    """

    def __init__(self, cfg: WnoConfig):
        super().__init__()
        self.cfg = cfg
        gen = torch.Generator().manual_seed(int(cfg.seed))
        act = ACTIVATIONS[cfg.activation]
        self.lift_net = _Pointwise(cfg.total_in, cfg.lift_hidden, cfg.width, act)
        self.blocks = nn.ModuleList([WaveletBlock(cfg, gen) for _ in range(cfg.blocks)])
        self.project_net = _Pointwise(cfg.width, cfg.project_hidden, cfg.out_channels, act)
        for layer in (self.lift_net.fc1, self.lift_net.fc2, self.project_net.fc1, self.project_net.fc2):
            _init_linear(layer, gen)
        n = sum(p.numel() for p in self.parameters())
        if n != self.expected_parameter_count(cfg):
            raise AssertionError(f"parameter count {n} != closed form {self.expected_parameter_count(cfg)}")

    @staticmethod
    def expected_parameter_count(cfg: WnoConfig) -> int:
        d = cfg.width
        shapes = band_shapes(cfg)
        hc, wc = shapes["coarse"]
        kernel = d * d * hc * wc
        if cfg.wavelet == "dtcwt":
            hd, wd = shapes["detail"]
            kernel += 12 * d * d * hd * wd
        lift = cfg.total_in * cfg.lift_hidden + cfg.lift_hidden + cfg.lift_hidden * d + d
        project = d * cfg.project_hidden + cfg.project_hidden + cfg.project_hidden * cfg.out_channels + cfg.out_channels
        return lift + cfg.blocks * (kernel + d * d + d) + project

    def coordinates(self, like: torch.Tensor) -> torch.Tensor:
        nx, ny = self.cfg.grid_shape
        gx = torch.linspace(0, 1, nx, dtype=like.dtype, device=like.device)
        gy = torch.linspace(0, 1, ny, dtype=like.dtype, device=like.device)
        mx, my = torch.meshgrid(gx, gy, indexing="ij")
        return torch.stack([mx, my], dim=-1).expand(like.shape[0], nx, ny, 2)

    def lift(self, a: torch.Tensor) -> torch.Tensor:
        """Pointwise lift of ``(batch, nx, ny, c_in)`` to ``(batch, nx, ny, width)``."""
        if a.shape[-1] != self.cfg.in_channels and not (
                a.shape[-1] == self.cfg.total_in and self.cfg.include_coordinates):
            raise ValueError(f"expected {self.cfg.in_channels} input channels, got {a.shape[-1]}")
        if self.cfg.include_coordinates and a.shape[-1] == self.cfg.in_channels:
            a = torch.cat([a, self.coordinates(a)], dim=-1)
        return self.lift_net(a)

    def project(self, v: torch.Tensor) -> torch.Tensor:
        if v.shape[-1] != self.cfg.width:
            raise ValueError(f"expected {self.cfg.width} latent channels, got {v.shape[-1]}")
        return self.project_net(v)

    def forward(self, a: torch.Tensor) -> torch.Tensor:
        if tuple(a.shape[1:3]) != self.cfg.grid_shape:
            raise ValueError(f"input grid {tuple(a.shape[1:3])} != configured {self.cfg.grid_shape}")
        v = self.lift(a).permute(0, 3, 1, 2)
        for block in self.blocks:
            v = block(v)
        return self.project(v.permute(0, 2, 3, 1))

    def state_arrays(self) -> dict:
        """Parameters as named numpy arrays (key schema: ``module.submodule.param``)."""
        return {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}

    def load_arrays(self, arrays: dict):
        ref = self.state_dict()
        missing = set(ref) - set(arrays)
        if missing:
            raise ValueError(f"missing parameters: {sorted(missing)}")
        self.load_state_dict({k: torch.as_tensor(np.asarray(arrays[k])).to(ref[k].dtype) for k in ref})

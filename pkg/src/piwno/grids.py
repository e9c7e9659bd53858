"""Structured grids, random input functions and intrinsic-dimension estimates.

Every sampler is a pure function of ``(spec, grid, seed)``.  Banks of samples
are drawn with one integer seed per sample (see :func:`sample_seeds`) so any
single member can be regenerated on its own.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import fft as sfft
from scipy import linalg

__all__ = [
    "Grid", "FieldSample", "GrfSpec", "make_grid", "periodic_grid", "sample_seeds",
    "sample_trig_source", "trig_source_bank", "sample_grf_rbf", "sample_grf_spectral",
    "grf_bank", "darcy_pushforward", "kle_intrinsic_dim", "kle_spectrum",
    "ALLEN_CAHN_STD_EXPONENT",
]

AXIS_ROLES = ("space-x", "space-y", "time")
FIELD_KINDS = ("source", "initial_condition", "permeability", "solution")

# Mode standard deviation of the Allen-Cahn initial-condition field is
# tau**(alpha-1) * (pi^2 |k|^2 + tau^2) ** (ALLEN_CAHN_STD_EXPONENT * (alpha+1) / 2).
# The value -2 (i.e. std exponent -(alpha+1) for alpha=1) reproduces an intrinsic
# dimension near 232; the alternative reading -1 gives several hundred more modes.
ALLEN_CAHN_STD_EXPONENT = -2.0


@dataclass(frozen=True)
class Grid:
    """Node-centred rectangular grid; coordinates follow ``np.linspace``."""

    dims: tuple
    bounds: tuple
    axes_roles: tuple

    def __post_init__(self):
        if not (len(self.dims) == len(self.bounds) == len(self.axes_roles)):
            raise ValueError("dims, bounds and axes_roles must have equal length")
        for n in self.dims:
            if int(n) != n or n < 2:
                raise ValueError(f"every axis needs at least 2 nodes, got {self.dims}")
        for lo, hi in self.bounds:
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ValueError("grid bounds must be finite")
            if not lo < hi:
                raise ValueError(f"axis bounds must satisfy lo < hi, got {(lo, hi)}")
        for r in self.axes_roles:
            if r not in AXIS_ROLES:
                raise ValueError(f"unknown axis role {r!r}")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def spacing(self) -> tuple:
        return tuple((hi - lo) / (n - 1) for n, (lo, hi) in zip(self.dims, self.bounds))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.dims))

    def axis(self, i: int) -> np.ndarray:
        lo, hi = self.bounds[i]
        return np.linspace(lo, hi, self.dims[i])

    def axes(self) -> list:
        return [self.axis(i) for i in range(self.ndim)]

    def mesh(self) -> list:
        """Coordinate arrays of shape ``dims`` (``indexing='ij'``)."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def role_index(self, role: str) -> int:
        return self.axes_roles.index(role)

    def sub(self, axes: Sequence[int]) -> "Grid":
        """Grid restricted to a subset of axes."""
        return Grid(tuple(self.dims[i] for i in axes), tuple(self.bounds[i] for i in axes),
                    tuple(self.axes_roles[i] for i in axes))

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "bounds": [list(b) for b in self.bounds],
                "axes_roles": list(self.axes_roles)}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return make_grid(d["bounds"], d["dims"], d["axes_roles"])


def make_grid(bounds, dims, axes_roles=None) -> Grid:
    """Build a :class:`Grid`.

    Parameters
    ----------
    bounds : sequence of (lo, hi)
    dims : sequence of int
    axes_roles : sequence of str, optional
        Defaults to ``space-x``, ``space-y`` ... in order.

    Examples
    --------
    >>> make_grid([(0, 1), (0, 1)], [81, 81], ["space-x", "time"]).spacing
    (0.0125, 0.0125)
    """
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    dims = tuple(int(n) for n in dims)
    if axes_roles is None:
        axes_roles = AXIS_ROLES[:len(dims)]
    return Grid(dims, bounds, tuple(axes_roles))


def periodic_grid(n: int) -> Grid:
    """``n x n`` grid on the unit torus; the duplicate endpoint is dropped."""
    hi = 1.0 - 1.0 / n
    return make_grid([(0.0, hi), (0.0, hi)], [n, n], ["space-x", "space-y"])


@dataclass
class FieldSample:
    grid: Grid
    values: np.ndarray
    kind: str
    seed: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        shape = self.values.shape
        if shape != tuple(self.grid.dims) and shape[1:] != tuple(self.grid.dims):
            raise ValueError(f"values of shape {shape} do not match grid {self.grid.dims}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")


@dataclass(frozen=True)
class GrfSpec:
    """Gaussian random field description.

    ``kind='rbf'`` uses ``sigma`` and ``length_scale``.  The spectral kinds use
    ``tau``, ``alpha_exp`` and ``laplacian_shift``; ``sigma`` then acts as a
    plain amplitude multiplier (1 leaves the analytic spectrum untouched).
    """

    kind: str = "rbf"
    sigma: float = 0.1
    length_scale: float = 0.1
    tau: float = 15.0
    alpha_exp: float = 1.0
    laplacian_shift: float = 9.0
    boundary: str = "neumann"

    def __post_init__(self):
        if self.kind not in ("rbf", "spectral_laplacian", "spectral_powerlaw"):
            raise ValueError(f"unknown GRF kind {self.kind!r}")
        if self.boundary not in ("neumann", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.kind == "rbf" and self.length_scale <= 0:
            raise ValueError("length_scale must be positive")
        if self.kind == "spectral_powerlaw" and self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.kind == "spectral_laplacian" and self.laplacian_shift <= 0:
            raise ValueError("laplacian_shift must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GrfSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown GrfSpec keys: {sorted(unknown)}")
        return cls(**d)


def sample_seeds(base_seed: int, n: int) -> np.ndarray:
    """Per-sample integer seeds derived deterministically from ``base_seed``."""
    return np.random.SeedSequence(int(base_seed)).generate_state(int(n), dtype=np.uint32).astype(np.int64)


# --- trigonometric source -------------------------------------------------------

def _trig(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    n, p, w = (params[:, i:i + 1] for i in range(3))
    px = np.pi * x[None, :]
    return (n * np.sin(px) + (1 - n) * np.cos(px)
            + p * np.sin(2 * px) + (1 - p) * np.cos(2 * px)
            + w * np.sin(3 * px) + (1 - w) * np.cos(3 * px))


def trig_source_bank(params, grid_1d: Grid) -> np.ndarray:
    """Vectorised source evaluation for an ``(N, 3)`` array of ``(n, p, w)``."""
    params = np.atleast_2d(np.asarray(params, dtype=np.float64))
    if params.shape[-1] != 3:
        raise ValueError("source parameters must have shape (N, 3)")
    if np.any(params < 0) or np.any(params > 1) or not np.all(np.isfinite(params)):
        raise ValueError("source parameters must lie in [0, 1]")
    if grid_1d.ndim != 1:
        raise ValueError("trigonometric source lives on a 1-D grid")
    return _trig(params, grid_1d.axis(0))


def sample_trig_source(n: float, p: float, w: float, grid_1d: Grid, seed: int | None = None) -> FieldSample:
    """Random source built from the first three sine/cosine pairs."""
    vals = trig_source_bank([[n, p, w]], grid_1d)[0]
    return FieldSample(grid_1d, vals, "source", seed)


# --- Gaussian random fields ----------------------------------------------------

@lru_cache(maxsize=16)
def _rbf_factor(x_key: bytes, n: int, sigma: float, length: float) -> np.ndarray:
    x = np.frombuffer(x_key, dtype=np.float64)
    d = x[:, None] - x[None, :]
    cov = sigma ** 2 * np.exp(-d ** 2 / (2 * length ** 2))
    lam, vec = linalg.eigh(cov)
    scale = max(lam.max(), 1e-300)
    if lam.min() < -1e-8 * scale:
        raise RuntimeError(f"RBF covariance is not positive semidefinite (min eigenvalue {lam.min():.3e})")
    factor = vec * np.sqrt(np.clip(lam, 0.0, None))[None, :]
    factor.setflags(write=False)
    return factor


def _rbf_draws(spec: GrfSpec, grid: Grid, seeds) -> np.ndarray:
    if grid.ndim != 1:
        raise ValueError("the RBF sampler is one-dimensional")
    x = grid.axis(0)
    if spec.sigma == 0:
        return np.zeros((len(seeds), x.size))
    factor = _rbf_factor(x.tobytes(), x.size, float(spec.sigma), float(spec.length_scale))
    xi = np.stack([np.random.default_rng(int(s)).standard_normal(x.size) for s in seeds])
    return xi @ factor.T


def spectral_mode_std(spec: GrfSpec, n: int) -> np.ndarray:
    """Standard deviation of every eigenmode of the ``n x n`` spectral sampler.

    For Neumann boundaries modes are indexed by ``k = 0..n-1`` (cosine
    ``cos(pi k x)``); for periodic boundaries by the signed FFT integers with
    basis ``exp(2 pi i k x)``.  The zero mode is always set to 0.
    """
    if spec.boundary == "neumann":
        k = np.arange(n, dtype=np.float64)
    else:
        k = np.fft.fftfreq(n, d=1.0 / n)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    if spec.kind == "spectral_laplacian":
        # covariance (-Lap + shift I)^(-2): standard deviation is the inverse eigenvalue
        std = (np.pi ** 2 * k2 + spec.laplacian_shift) ** -1.0
    elif spec.kind == "spectral_powerlaw":
        a, tau = spec.alpha_exp, spec.tau
        std = tau ** (a - 1) * (np.pi ** 2 * k2 + tau ** 2) ** (ALLEN_CAHN_STD_EXPONENT * (a + 1) / 2)
    else:
        raise ValueError(f"{spec.kind!r} is not a spectral kind")
    std = std * spec.sigma
    std[0, 0] = 0.0
    return std


def _spectral_draws(spec: GrfSpec, grid: Grid, seeds) -> np.ndarray:
    if grid.ndim != 2 or grid.dims[0] != grid.dims[1]:
        raise ValueError(f"spectral sampler needs a square 2-D grid, got {grid.dims}")
    n = grid.dims[0]
    std = spectral_mode_std(spec, n)
    out = np.empty((len(seeds), n, n))
    for i, s in enumerate(seeds):
        rng = np.random.default_rng(int(s))
        if spec.boundary == "neumann":
            xi = rng.standard_normal((n, n))
            out[i] = n * sfft.idctn(std * xi, type=1, norm="ortho")
        else:
            xi = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            out[i] = n * np.real(sfft.ifft2(std * xi, norm="ortho"))
    return out


def grf_bank(spec: GrfSpec, grid: Grid, seeds) -> np.ndarray:
    """Draw one field per seed; returns an array of shape ``(len(seeds), *grid.dims)``."""
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.int64))
    if spec.kind == "rbf":
        return _rbf_draws(spec, grid, seeds)
    return _spectral_draws(spec, grid, seeds)


def sample_grf_rbf(spec: GrfSpec, grid_1d: Grid, seed: int, kind: str = "initial_condition") -> FieldSample:
    """Zero-mean field with covariance ``sigma^2 exp(-(x-x')^2 / (2 l^2))``."""
    if spec.kind != "rbf":
        raise ValueError("sample_grf_rbf needs a GrfSpec with kind='rbf'")
    return FieldSample(grid_1d, grf_bank(spec, grid_1d, [seed])[0], kind, seed)


def sample_grf_spectral(spec: GrfSpec, grid_2d: Grid, seed: int, kind: str = "initial_condition") -> FieldSample:
    """Zero-mean field synthesised in the Laplacian eigenbasis of the unit square."""
    if spec.kind == "rbf":
        raise ValueError("sample_grf_spectral needs a spectral GrfSpec")
    return FieldSample(grid_2d, grf_bank(spec, grid_2d, [seed])[0], kind, seed)


def darcy_pushforward(g, mode: str = "binary", high: float = 12.0, low: float = 3.0):
    """Map a Gaussian draw to a positive permeability.

    ``binary``: ``high`` where ``g >= 0`` and ``low`` elsewhere.  ``exp``: ``exp(g)``.
    Accepts a :class:`FieldSample` (returns one) or a plain array.
    """
    vals = g.values if isinstance(g, FieldSample) else np.asarray(g, dtype=np.float64)
    if mode == "binary":
        a = np.where(vals >= 0, high, low)
    elif mode == "exp":
        a = np.exp(vals)
    else:
        raise ValueError(f"unknown pushforward {mode!r}")
    if isinstance(g, FieldSample):
        return FieldSample(g.grid, a, "permeability", g.seed)
    return a


# --- Karhunen-Loeve ----------------------------------------------------------------

def kle_spectrum(samples) -> np.ndarray:
    """Eigenvalues of the empirical covariance, clipped at 0 and sorted descending."""
    if isinstance(samples, (list, tuple)) and samples and isinstance(samples[0], FieldSample):
        grids = {s.grid for s in samples}
        if len(grids) != 1:
            raise ValueError("all samples must share one grid")
        data = np.stack([s.values for s in samples])
    else:
        data = np.asarray(samples, dtype=np.float64)
    if data.ndim < 2 or data.shape[0] < 2:
        raise ValueError("at least two samples are needed")
    x = data.reshape(data.shape[0], -1)
    x = x - x.mean(axis=0)
    s = linalg.svdvals(x)
    lam = s ** 2 / (x.shape[0] - 1)
    return np.sort(np.clip(lam, 0.0, None))[::-1]


def kle_intrinsic_dim(samples, energy_fraction: float = 0.99) -> int:
    """Smallest number of leading modes capturing ``energy_fraction`` of the variance."""
    if not 0 < energy_fraction <= 1:
        raise ValueError("energy_fraction must lie in (0, 1]")
    lam = kle_spectrum(samples)
    total = lam.sum()
    if total == 0:
        return 0
    frac = np.cumsum(lam) / total
    return int(min(np.searchsorted(frac, energy_fraction * (1 - 1e-12)) + 1, lam.size))

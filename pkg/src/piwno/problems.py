"""The four benchmark systems: random inputs, encodings, solvers and limit states.

A :class:`Problem` bundles everything the experiment commands need for one
system: how input functions are drawn, how they are laid out for the
operator, the physics specification, the reference solver and the default
limit state.

Layouts
-------
``raw`` inputs are the physical input functions; ``decoded`` solutions are
the layout the residuals use (see :mod:`piwno.physics`).

================== ======================= ========================== ==========================
system             raw input               operator input (nx, ny, c) decoded solution
================== ======================= ========================== ==========================
diffusion_reaction source ``f`` (N, nx)    ``f`` repeated along t     ``u`` (N, nx, nt)
nagumo             ``u0`` (N, nx)          ``u0`` repeated along t    ``u`` (N, nx, nt)
darcy              ``a`` (N, n, n)         ``a``                      ``u`` (N, n, n)
allen_cahn         frames 0..9 (N,10,n,n)  frames as channels         frames 10..22 (N,13,n,n)
================== ======================= ========================== ==========================
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .grids import (GrfSpec, Grid, darcy_pushforward, grf_bank, make_grid, periodic_grid,
                    sample_seeds, spectral_mode_std, trig_source_bank)
from .operator import WnoConfig
from .physics import PhysicsSpec, default_physics
from .reliability import LimitState, peak_response
from .solvers import SolverConfig, solve_allen_cahn, solve_darcy, solve_diffusion_reaction, solve_nagumo
from .training import float64_copy, predict

__all__ = ["ProblemSettings", "Problem", "make_problem", "EXAMPLES", "DEFAULT_SETTINGS"]

EXAMPLES = ("diffusion_reaction", "nagumo", "darcy", "allen_cahn")

# Internal time steps found by step-halving calibration (sup-norm change < 1e-6).
_INTERNAL_DT = {
    "diffusion_reaction": 1.0 / (80 * 64),
    "nagumo": 1.0 / (64 * 128),
    "allen_cahn": 0.05 / 256,
}

# Allen-Cahn: history frames fed to the operator and total frames simulated.
AC_HISTORY = 10
AC_FRAMES = 23


@dataclass(frozen=True)
class ProblemSettings:
    """Per-system settings that an experiment config may override.

    ``resolution`` is the node count per axis (the time axis uses the same
    count for the 1-D problems).  ``probe_x`` is the physical coordinate of a
    point probe; ``None`` means a field-max probe.  ``input_std`` rescales
    Allen-Cahn initial fields to a fixed pointwise standard deviation.
    """

    resolution: int
    e_h: float
    probe_x: float | None = None
    window: tuple | None = None
    grf: GrfSpec | None = None
    pushforward: str = "binary"
    input_std: float | None = None
    constants: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["grf"] = self.grf.to_dict() if self.grf is not None else None
        d["window"] = list(self.window) if self.window is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSettings":
        d = dict(d)
        if d.get("grf") is not None:
            d["grf"] = GrfSpec.from_dict(d["grf"])
        if d.get("window") is not None:
            d["window"] = tuple(d["window"])
        return cls(**d)


DEFAULT_SETTINGS = {
    # x = 0.5125 is node 41 (0-based) of the 81-node grid
    "diffusion_reaction": ProblemSettings(81, 0.85, probe_x=41 / 80),
    "nagumo": ProblemSettings(65, 1.45, probe_x=0.5, grf=GrfSpec("rbf", sigma=0.1, length_scale=0.1)),
    "darcy": ProblemSettings(64, 0.078, grf=GrfSpec("spectral_laplacian", sigma=1.0, laplacian_shift=9.0,
                                                    boundary="neumann")),
    "allen_cahn": ProblemSettings(64, 0.78, window=(10, 22), input_std=0.125,
                                  grf=GrfSpec("spectral_powerlaw", sigma=1.0, tau=15.0, alpha_exp=1.0,
                                              boundary="periodic")),
}


class Problem:
    """One benchmark system at a given resolution."""

    def __init__(self, example: str, settings: ProblemSettings | None = None):
        if example not in EXAMPLES:
            raise ValueError(f"unknown example {example!r}; choose from {EXAMPLES}")
        self.example = example
        self.settings = settings if settings is not None else DEFAULT_SETTINGS[example]
        s = self.settings
        n = s.resolution
        if n < 9:
            raise ValueError("resolution must be at least 9")
        if example in ("diffusion_reaction", "nagumo"):
            self.grid = make_grid([(0.0, 1.0), (0.0, 1.0)], [n, n], ["space-x", "time"])
            self.input_grid = self.grid.sub([0])
        elif example == "darcy":
            self.grid = make_grid([(0.0, 1.0), (0.0, 1.0)], [n, n], ["space-x", "space-y"])
            self.input_grid = self.grid
        else:
            self.grid = periodic_grid(n)
            self.input_grid = self.grid
        self.physics: PhysicsSpec = default_physics(example, constants=dict(s.constants))
        if s.window is not None and example != "allen_cahn":
            raise ValueError("a time window is only used by the Allen-Cahn limit state")

    # --- configuration ---------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.settings.resolution

    @property
    def probe_index(self) -> int | None:
        if self.settings.probe_x is None:
            return None
        x = self.settings.probe_x
        if not 0.0 <= x <= 1.0:
            raise ValueError("probe_x must lie in [0, 1]")
        return int(math.floor(x * (self.n - 1) + 0.5))

    def limit_state(self, e_h: float | None = None) -> LimitState:
        e = self.settings.e_h if e_h is None else e_h
        if self.example in ("diffusion_reaction", "nagumo"):
            return LimitState(e, "point", index=self.probe_index, time_axis=-1)
        if self.example == "darcy":
            return LimitState(e, "field_max", time_axis=None, mode="time_independent")
        w = self.settings.window
        if w[1] >= AC_FRAMES:
            raise ValueError(f"window end must be below {AC_FRAMES}")
        return LimitState(e, "field_max", window=w, time_axis=0)

    def times(self) -> np.ndarray:
        """Physical times of the frames inside the limit-state window."""
        if self.example in ("diffusion_reaction", "nagumo"):
            return self.grid.axis(1)
        if self.example == "darcy":
            raise ValueError("Darcy flow is time independent")
        t1, t2 = self.settings.window
        return np.arange(t1, t2 + 1) * self.physics.dt_frame

    def solver_config(self) -> SolverConfig:
        n = self.n
        if self.example in ("diffusion_reaction", "nagumo"):
            sub = max(1, math.ceil((1.0 / (n - 1)) / _INTERNAL_DT[self.example] - 1e-9))
            return SolverConfig(nx=n, nt=n, substeps=sub)
        if self.example == "allen_cahn":
            return SolverConfig(nx=n, substeps=max(1, round(self.physics.dt_frame / _INTERNAL_DT["allen_cahn"])),
                                dt_frame=self.physics.dt_frame)
        return SolverConfig(nx=n, nt=2)

    def wno_config(self, **overrides) -> WnoConfig:
        base = {
            "diffusion_reaction": dict(in_channels=1, out_channels=1, width=32, levels=3, blocks=4),
            "nagumo": dict(in_channels=1, out_channels=1, width=32, levels=3, blocks=4),
            "darcy": dict(in_channels=1, out_channels=1, width=32, levels=3, blocks=4),
            "allen_cahn": dict(in_channels=AC_HISTORY, out_channels=AC_FRAMES - AC_HISTORY, width=32,
                               levels=3, blocks=4),
        }[self.example]
        base.update(overrides)
        base["grid_shape"] = tuple(self.grid.dims)
        return WnoConfig(**base)

    # --- inputs ------------------------------------------------------------------------

    def sample(self, base_seed: int, n_samples: int) -> dict:
        """Draw ``n_samples`` inputs deterministically from ``base_seed``.

        Returns a dict with ``raw`` (operator-independent input functions),
        ``seeds`` and, for diffusion-reaction, the ``latent`` uniform
        parameters ``(n, p, w)``.
        """
        return self.draw(sample_seeds(base_seed, n_samples))

    def draw(self, seeds) -> dict:
        """Inputs for explicit per-sample seeds (see :meth:`sample`).

        Banks can be streamed in chunks: ``draw(sample_seeds(b, n)[i:j])``
        equals ``sample(b, n)`` restricted to rows ``i:j``.
        """
        seeds = np.asarray(seeds, dtype=np.int64)
        s = self.settings
        out = {"seeds": seeds}
        if self.example == "diffusion_reaction":
            latent = np.stack([np.random.default_rng(int(sd)).uniform(size=3) for sd in seeds])
            out["latent"] = latent
            out["raw"] = trig_source_bank(latent, self.input_grid)
        elif self.example == "nagumo":
            out["raw"] = grf_bank(s.grf, self.input_grid, seeds)
        elif self.example == "darcy":
            g = grf_bank(s.grf, self.grid, seeds)
            out["latent"] = g
            out["raw"] = darcy_pushforward(g, s.pushforward)
        else:
            u0 = grf_bank(s.grf, self.grid, seeds)
            if s.input_std is not None:
                u0 = u0 * (s.input_std / self.ac_reference_std())
            out["latent"] = u0
            out["raw"] = self.ac_history(u0)
        return out

    def ac_reference_std(self) -> float:
        """Pointwise standard deviation of the unscaled Allen-Cahn input field.

        The synthesis keeps the real part of an orthonormal inverse FFT of
        complex Gaussian modes scaled by ``n``, so the pointwise variance is
        the plain sum of the squared mode standard deviations.
        """
        std = spectral_mode_std(self.settings.grf, self.n)
        return float(np.sqrt(np.sum(std ** 2)))

    def ac_history(self, u0) -> np.ndarray:
        """Frames ``0..AC_HISTORY-1`` simulated from the initial fields."""
        return solve_allen_cahn(np.asarray(u0), n_frames=AC_HISTORY, cfg=self.solver_config(),
                                eps=self.physics.constants["eps"])

    def encode(self, raw) -> np.ndarray:
        """Operator input ``(N, nx, ny, c)`` from raw input functions."""
        raw = np.asarray(raw, dtype=np.float64)
        if self.example in ("diffusion_reaction", "nagumo"):
            if raw.ndim != 2 or raw.shape[1] != self.n:
                raise ValueError(f"expected raw inputs of shape (N, {self.n})")
            return np.repeat(raw[:, :, None, None], self.n, axis=2)
        if self.example == "darcy":
            return raw[..., None]
        if raw.shape[1:] != (AC_HISTORY, self.n, self.n):
            raise ValueError(f"expected history frames of shape (N, {AC_HISTORY}, {self.n}, {self.n})")
        return np.moveaxis(raw, 1, -1)

    def physics_inputs(self, raw) -> np.ndarray:
        return np.asarray(raw, dtype=np.float64)

    # --- reference solutions -----------------------------------------------------------

    def solve(self, raw) -> np.ndarray:
        """Reference solutions in the decoded layout."""
        raw = np.asarray(raw, dtype=np.float64)
        c = self.physics.constants
        cfg = self.solver_config()
        if self.example == "diffusion_reaction":
            return solve_diffusion_reaction(raw, cfg, B=c["B"], k=c["k"])
        if self.example == "nagumo":
            return solve_nagumo(raw, cfg, eps=c["eps"], alpha=c["alpha"])
        if self.example == "darcy":
            return solve_darcy(raw, f=c["f"])
        # continue from the last history frame; its two-step start is first order
        # only inside the first frame interval, well below the calibration tolerance
        last = raw[:, -1]
        frames = solve_allen_cahn(last, n_frames=AC_FRAMES - AC_HISTORY + 1, cfg=cfg, eps=c["eps"])
        return frames[:, 1:]

    def solve_full(self, latent_or_raw) -> np.ndarray:
        """Allen-Cahn only: all frames from the initial field in one integration."""
        if self.example != "allen_cahn":
            raise ValueError("solve_full is specific to Allen-Cahn")
        return solve_allen_cahn(np.asarray(latent_or_raw), n_frames=AC_FRAMES, cfg=self.solver_config(),
                                eps=self.physics.constants["eps"])

    def response(self, decoded, raw) -> np.ndarray:
        """Array the limit state is evaluated on (batch leading)."""
        if self.example != "allen_cahn":
            return np.asarray(decoded)
        return np.concatenate([np.asarray(raw), np.asarray(decoded)], axis=1)

    # --- low-dimensional limit state (FORM/SORM) ---------------------------------------

    def latent_limit_state(self, e_h: float | None = None, model=None):
        """``g(z)`` for the diffusion-reaction source in standard-normal space.

        ``z`` maps to ``(n, p, w) = Phi(z)``; ``g`` accepts a batch ``(m, 3)``.
        Responses come from the reference solver, or from a trained operator
        (evaluated in float64) when ``model`` is given.
        """
        if self.example != "diffusion_reaction":
            raise ValueError("FORM/SORM are offered for the three-variable diffusion-reaction example")
        ls = self.limit_state(e_h)
        # finite-difference searches need float64 responses
        net = float64_copy(model) if model is not None else None

        def g(z):
            z = np.atleast_2d(np.asarray(z, dtype=np.float64))
            q = special.ndtr(z)
            f = trig_source_bank(q, self.input_grid)
            u = self.solve(f) if net is None else predict(net, self.encode(f))
            return ls.e_h - peak_response(u, ls)

        return g


def make_problem(example: str, **overrides) -> Problem:
    """Problem with default settings, selectively overridden.

    ``grf`` overrides may be given as a dict of :class:`GrfSpec` fields.
    """
    base = DEFAULT_SETTINGS.get(example)
    if base is None:
        raise ValueError(f"unknown example {example!r}; choose from {EXAMPLES}")
    if isinstance(overrides.get("grf"), dict):
        grf = dataclasses.asdict(base.grf) if base.grf is not None else {}
        grf.update(overrides["grf"])
        overrides["grf"] = GrfSpec.from_dict(grf)
    if overrides.get("window") is not None:
        overrides["window"] = tuple(overrides["window"])
    return Problem(example, dataclasses.replace(base, **overrides))

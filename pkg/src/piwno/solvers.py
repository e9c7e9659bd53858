"""Reference numerical solvers used as ground truth and as the direct Monte
Carlo oracle.

* Diffusion-reaction and Nagumo: second-order finite differences in space,
  second-order IMEX backward differencing (SBDF2) in time with the diffusion
  implicit and the reaction explicit.  Batches of samples share one factorisation.
* Darcy: node-based five-point finite-volume scheme with harmonic-mean face
  permeabilities and a sparse direct solve.
* Allen-Cahn: five-point periodic Laplacian, stabilised semi-implicit SBDF2
  whose linear solves are diagonal in Fourier space.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.linalg import lapack
from scipy.sparse import linalg as splinalg

__all__ = [
    "SolverConfig", "solve_diffusion_reaction", "solve_nagumo", "solve_darcy",
    "solve_allen_cahn", "allen_cahn_energy", "calibrate_substeps", "imex_1d",
    "darcy_series_max",
]


@dataclass(frozen=True)
class SolverConfig:
    """Discretisation settings.

    Parameters
    ----------
    nx : int
        Spatial nodes per axis (boundaries included).
    nt : int
        Output frames in time (including ``t = 0``).
    t_end : float
        Final time for the 1-D problems; frame spacing for Allen-Cahn is
        ``dt_frame``.
    substeps : int
        Internal steps between consecutive output frames.
    """

    nx: int = 81
    nt: int = 81
    t_end: float = 1.0
    substeps: int = 8
    dt_frame: float = 0.05
    stabilization: float = 2.0
    tol: float = 1e-10

    def __post_init__(self):
        if self.nx < 3 or self.nt < 2 or self.substeps < 1:
            raise ValueError("nx >= 3, nt >= 2 and substeps >= 1 are required")
        if self.t_end <= 0 or self.dt_frame <= 0:
            raise ValueError("time spans must be positive")


# --- 1-D IMEX ---------------------------------------------------------------------

class _SpdTridiag:
    """Factorised ``c I - nu * D2`` (D2 the Dirichlet second difference), which
    is symmetric positive definite; solves many right-hand sides at once."""

    def __init__(self, n: int, c: float, nu: float):
        d = np.full(n, c + 2.0 * nu)
        e = np.full(n - 1, -nu)
        self.d, self.e, info = lapack.dpttrf(d, e)
        if info != 0:
            raise ArithmeticError("implicit diffusion matrix is not positive definite")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        # rhs: (n, batch)
        x, info = lapack.dpttrs(self.d, self.e, rhs, overwrite_b=True)
        if info != 0:
            raise ArithmeticError("tridiagonal solve failed")
        return x


def imex_1d(u0: np.ndarray, diff: float, reaction: Callable, cfg: SolverConfig,
            forcing: Callable | None = None) -> np.ndarray:
    """Integrate ``u_t = diff u_xx + reaction(u) + forcing(t, x)`` with zero
    Dirichlet boundaries.

    ``u0`` has shape ``(batch, nx)``; the result has shape ``(batch, nx, nt)``.
    The first step is IMEX Euler; the rest SBDF2.
    """
    u0 = np.atleast_2d(np.asarray(u0, dtype=np.float64))
    b, nx = u0.shape
    if nx != cfg.nx:
        raise ValueError(f"expected {cfg.nx} spatial nodes, got {nx}")
    x = np.linspace(0.0, 1.0, nx)
    h = x[1] - x[0]
    n_steps = (cfg.nt - 1) * cfg.substeps
    dt = cfg.t_end / n_steps
    nu = dt * diff / h ** 2
    euler = _SpdTridiag(nx - 2, 1.0, nu)
    bdf2 = _SpdTridiag(nx - 2, 1.5, nu)
    xi = x[1:-1]

    # internal state is laid out (node, batch) so the banded solves need no copies
    def explicit(u, t):
        r = reaction(u)
        if forcing is not None:
            r = r + forcing(t, xi)[:, None]
        return r

    out = np.zeros((b, nx, cfg.nt))
    out[:, :, 0] = u0
    prev = None
    cur = np.asfortranarray(u0[:, 1:-1].T)
    n_prev = None
    n_cur = explicit(cur, 0.0)
    for step in range(1, n_steps + 1):
        t_new = step * dt
        if prev is None:
            rhs = np.asfortranarray(cur + dt * n_cur)
            new = euler.solve(rhs)
        else:
            rhs = np.asfortranarray(2.0 * cur - 0.5 * prev + dt * (2.0 * n_cur - n_prev))
            new = bdf2.solve(rhs)
        prev, cur = cur, new
        n_prev, n_cur = n_cur, explicit(cur, t_new)
        if step % cfg.substeps == 0:
            out[:, 1:-1, step // cfg.substeps] = cur.T
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("time integration diverged; reduce the step")
    return out


def solve_diffusion_reaction(f, cfg: SolverConfig = SolverConfig(substeps=64), B: float = 0.01, k: float = 0.01,
                             forcing: Callable | None = None) -> np.ndarray:
    """``u_t - B u_xx - k u^2 = f(x)`` on ``(0,1) x (0,1]``, ``u = 0`` at ``t = 0`` and
    on the boundary.  ``f`` has shape ``(batch, nx)`` or ``(nx,)``; output ``(batch, nx, nt)``.

    ``forcing(t, x)`` replaces ``f`` by a time-dependent source (used for
    manufactured solutions).
    """
    f = np.atleast_2d(np.asarray(f, dtype=np.float64))
    fi = f[:, 1:-1].T
    if forcing is None:
        reaction = lambda u: k * u ** 2 + fi  # noqa: E731
    else:
        reaction = lambda u: k * u ** 2  # noqa: E731
    return imex_1d(np.zeros_like(f), B, reaction, cfg, forcing)


def solve_nagumo(u0, cfg: SolverConfig = SolverConfig(nx=65, nt=65, substeps=128), eps: float = 1.0, alpha: float = -0.5,
                 forcing: Callable | None = None) -> np.ndarray:
    """``u_t - eps u_xx = u (1 - u)(u - alpha)`` with zero Dirichlet boundaries.

    The boundary values of ``u0`` are kept in the first frame and set to zero afterwards.
    """
    reaction = lambda u: u * (1 - u) * (u - alpha)  # noqa: E731
    return imex_1d(u0, eps, reaction, cfg, forcing)


# --- Darcy ------------------------------------------------------------------------------

def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def darcy_matrix(a: np.ndarray) -> sparse.csr_matrix:
    """Five-point finite-volume operator for ``-div(a grad u)`` on interior nodes."""
    n = a.shape[0]
    h = 1.0 / (n - 1)
    m = n - 2
    ax = _harmonic(a[1:, :], a[:-1, :])  # face between rows i and i+1
    ay = _harmonic(a[:, 1:], a[:, :-1])
    idx = np.arange(m * m).reshape(m, m)
    e = ax[1:, 1:-1]          # east face of interior node (i,j) -> (i+1,j)
    w = ax[:-1, 1:-1]         # west face
    nn = ay[1:-1, 1:]
    s = ay[1:-1, :-1]
    diag = (e + w + nn + s).ravel()
    rows, cols, vals = [idx.ravel()], [idx.ravel()], [diag]
    couplings = (
        (idx[:-1, :], idx[1:, :], e[:-1, :]),   # east
        (idx[1:, :], idx[:-1, :], w[1:, :]),    # west
        (idx[:, :-1], idx[:, 1:], nn[:, :-1]),  # north
        (idx[:, 1:], idx[:, :-1], s[:, 1:]),    # south
    )
    for src, dst, c in couplings:
        rows.append(src.ravel())
        cols.append(dst.ravel())
        vals.append(-c.ravel())
    mat = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(m * m, m * m))
    return mat / h ** 2


def solve_darcy(a, f=1.0, tol: float = 1e-10) -> np.ndarray:
    """``-div(a grad u) = f`` on the unit square with ``u = 0`` on the boundary.

    ``a`` is sampled on an ``n x n`` node grid (boundaries included); a
    leading batch axis is allowed.  ``f`` is a scalar or an ``n x n`` array.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 3:
        return np.stack([solve_darcy(ai, f, tol) for ai in a])
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("permeability must be a square 2-D array")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ValueError("permeability must be finite and strictly positive")
    n = a.shape[0]
    mat = darcy_matrix(a).tocsc()
    rhs = np.broadcast_to(np.asarray(f, dtype=np.float64), (n, n))[1:-1, 1:-1].ravel()
    sol = splinalg.splu(mat).solve(rhs)
    res = np.linalg.norm(mat @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if not res < tol:
        raise ArithmeticError(f"Darcy solve residual {res:.2e} exceeds {tol:.0e}")
    u = np.zeros((n, n))
    u[1:-1, 1:-1] = sol.reshape(n - 2, n - 2)
    return u


def darcy_series_max(terms: int = 199) -> float:
    """Centre value of the solution of ``-Lap u = 1`` on the unit square from
    its double sine series (the maximum by symmetry)."""
    k = np.arange(1, terms + 1, 2, dtype=np.float64)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    coef = 16.0 / (np.pi ** 4 * kx * ky * (kx ** 2 + ky ** 2))
    return float(np.sum(coef * np.sin(kx * np.pi / 2) * np.sin(ky * np.pi / 2)))


# --- Allen-Cahn -----------------------------------------------------------------------------

def _periodic_symbol(n: int) -> np.ndarray:
    """Eigenvalues of the periodic five-point Laplacian on the unit torus."""
    h = 1.0 / n
    s = np.sin(np.pi * np.fft.fftfreq(n, d=1.0 / n) / n) ** 2
    return -4.0 / h ** 2 * (s[:, None] + s[None, :])


def periodic_laplacian(u: np.ndarray) -> np.ndarray:
    n = u.shape[-1]
    return (np.roll(u, 1, -1) + np.roll(u, -1, -1) + np.roll(u, 1, -2) + np.roll(u, -1, -2) - 4 * u) * n ** 2


def solve_allen_cahn(u0, n_frames: int = 23, cfg: SolverConfig = SolverConfig(nx=64, substeps=256),
                     eps: float = 1e-3) -> np.ndarray:
    """``u_t = eps Lap(u) + u - u^3`` on the periodic unit square.

    Stabilised semi-implicit stepping: diffusion implicit, reaction explicit,
    with a stabilising term ``S (u^{n+1} - extrapolated u)`` on both sides.
    The first step is first order, the rest second-order backward
    differencing.  Every linear solve is diagonal in Fourier space.

    ``u0`` is ``(n, n)`` or ``(batch, n, n)``; returns frames
    ``(batch, n_frames, n, n)`` spaced ``cfg.dt_frame`` apart, frame 0 = ``u0``.
    """
    u0 = np.asarray(u0, dtype=np.float64)
    squeeze = u0.ndim == 2
    u = u0[None] if squeeze else u0
    n = u.shape[-1]
    if u.ndim != 3 or u.shape[-2] != n:
        raise ValueError("Allen-Cahn grid must be square")
    dt = cfg.dt_frame / cfg.substeps
    s = cfg.stabilization
    if s < 1.0:
        raise ValueError("stabilisation must be >= 1 for an energy-stable step")
    lap = _periodic_symbol(n)[:, :n // 2 + 1]
    euler = 1.0 + s * dt - dt * eps * lap
    bdf2 = 1.5 + s * dt - dt * eps * lap

    def react(v):
        return v - v ** 3

    frames = np.empty((u.shape[0], n_frames, n, n))
    frames[:, 0] = u
    prev, cur = None, u.copy()
    for k in range(1, n_frames):
        for _ in range(cfg.substeps):
            if prev is None:
                rhs = (1.0 + s * dt) * cur + dt * react(cur)
                new = np.fft.irfft2(np.fft.rfft2(rhs) / euler, s=(n, n))
            else:
                ext = 2.0 * cur - prev
                rhs = 2.0 * cur - 0.5 * prev + s * dt * ext + dt * react(ext)
                new = np.fft.irfft2(np.fft.rfft2(rhs) / bdf2, s=(n, n))
            prev, cur = cur, new
        frames[:, k] = cur
    if not np.all(np.isfinite(frames)):
        raise FloatingPointError("Allen-Cahn integration diverged; reduce the step")
    return frames[0] if squeeze else frames


def allen_cahn_energy(u: np.ndarray, eps: float = 1e-3) -> np.ndarray:
    """Ginzburg-Landau energy ``int eps/2 |grad u|^2 + (1 - u^2)^2 / 4`` on the torus
    (forward differences, consistent with the five-point Laplacian)."""
    n = u.shape[-1]
    gx = (np.roll(u, -1, -2) - u) * n
    gy = (np.roll(u, -1, -1) - u) * n
    dens = 0.5 * eps * (gx ** 2 + gy ** 2) + 0.25 * (1 - u ** 2) ** 2
    return dens.mean(axis=(-2, -1))


# --- step calibration ---------------------------------------------------------------------

def calibrate_substeps(run: Callable[[int], np.ndarray], start: int = 1, tol: float = 1e-6,
                       max_substeps: int = 4096) -> int:
    """Smallest power-of-two multiple of ``start`` such that halving the step
    changes the output by less than ``tol`` in the sup norm."""
    s = start
    prev = run(s)
    while s < max_substeps:
        nxt = run(2 * s)
        if np.max(np.abs(nxt - prev)) < tol:
            return s
        s, prev = 2 * s, nxt
    raise RuntimeError(f"no step convergence below {tol} within {max_substeps} substeps")

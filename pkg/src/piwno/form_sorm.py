"""First- and second-order reliability methods in standard-normal space.

The limit state ``g(u)`` is negative in the failure domain.  The most
probable point is located by the Hasofer-Lind / Rackwitz-Fiessler iteration
with central-difference gradients; SORM applies Breitung's asymptotic
correction with curvatures taken from a finite-difference Hessian projected
onto the tangent plane at that point.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

__all__ = ["MppResult", "SormResult", "uniform_to_standard_normal", "standard_normal_to_uniform",
           "fd_gradient", "fd_hessian", "form_hlrf", "sorm_breitung"]


def uniform_to_standard_normal(q):
    """``z = Phi^{-1}(q)``; the endpoints map to ``-inf`` / ``+inf``."""
    q = np.asarray(q, dtype=np.float64)
    if np.any((q < 0) | (q > 1)):
        raise ValueError("q must lie in [0, 1]")
    return special.ndtri(q)


def standard_normal_to_uniform(z):
    return special.ndtr(np.asarray(z, dtype=np.float64))


def _batch_eval(g: Callable, points: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        return np.asarray(g(points), dtype=np.float64).ravel()
    return np.array([float(g(p)) for p in points])


def fd_gradient(g: Callable, u: np.ndarray, step: float = 1e-4, vectorized: bool = False):
    """Central-difference gradient; returns ``(g(u), grad)``."""
    u = np.asarray(u, dtype=np.float64)
    d = u.size
    eye = np.eye(d) * step
    pts = np.vstack([u[None], u + eye, u - eye])
    vals = _batch_eval(g, pts, vectorized)
    return vals[0], (vals[1:d + 1] - vals[d + 1:]) / (2 * step)


def fd_hessian(g: Callable, u: np.ndarray, step: float = 1e-4, vectorized: bool = False) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    d = u.size
    pts, keys = [u], [()]
    for i in range(d):
        for j in range(i, d):
            for si in (1, -1):
                for sj in (1, -1):
                    p = u.copy()
                    p[i] += si * step
                    p[j] += sj * step
                    pts.append(p)
                    keys.append((i, j, si * sj))
    vals = _batch_eval(g, np.array(pts), vectorized)
    h = np.zeros((d, d))
    for v, k in zip(vals[1:], keys[1:]):
        i, j, s = k
        h[i, j] += s * v
    h /= 4 * step ** 2
    return np.triu(h) + np.triu(h, 1).T


@dataclass
class MppResult:
    u_star: np.ndarray
    beta_form: float
    iterations: int
    converged: bool
    gradient: np.ndarray
    g_value: float
    curvatures: np.ndarray | None = None
    history: list = field(default_factory=list)

    @property
    def pf_form(self) -> float:
        return float(special.ndtr(-self.beta_form))

    @property
    def alpha(self) -> np.ndarray:
        """Unit normal pointing into the failure domain."""
        return -self.gradient / np.linalg.norm(self.gradient)


@dataclass
class SormResult:
    pf: float
    curvatures: np.ndarray
    defined: bool
    pf_form: float


def form_hlrf(g: Callable, u0, tol: float = 1e-6, max_iter: int = 100, step: float = 1e-4,
              vectorized: bool = False) -> MppResult:
    """HL-RF search for the most probable point.

    ``beta`` carries the sign of ``g(0)``: positive when the origin is safe.
    """
    u = np.asarray(u0, dtype=np.float64).copy()
    history = []
    converged = False
    it = 0
    gu, grad = fd_gradient(g, u, step, vectorized)
    for it in range(1, max_iter + 1):
        nrm2 = float(grad @ grad)
        if nrm2 == 0:
            raise ArithmeticError("zero gradient of the limit state")
        new = ((grad @ u - gu) / nrm2) * grad
        history.append(u.copy())
        delta = np.linalg.norm(new - u)
        u = new
        gu, grad = fd_gradient(g, u, step, vectorized)
        if delta < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"HL-RF did not converge in {max_iter} iterations", RuntimeWarning, stacklevel=2)
    sign = 1.0 if float(_batch_eval(g, np.zeros((1, u.size)), vectorized)[0]) >= 0 else -1.0
    return MppResult(u, sign * float(np.linalg.norm(u)), it, converged, grad, float(gu), history=history)


def sorm_breitung(g: Callable, mpp: MppResult, step: float = 1e-4, vectorized: bool = False,
                  hessian: np.ndarray | None = None) -> SormResult:
    """Breitung's correction ``Phi(-beta) prod (1 + beta k_i)^(-1/2)``.

    Curvatures are the eigenvalues of the tangential block of the Hessian
    divided by the gradient norm.  When some ``beta k_i <= -1`` the
    correction is undefined: ``defined`` is False and ``pf`` is ``nan``.
    """
    if not mpp.converged:
        raise ValueError("SORM needs a converged most probable point")
    d = mpp.u_star.size
    h = fd_hessian(g, mpp.u_star, step, vectorized) if hessian is None else np.asarray(hessian, dtype=np.float64)
    n = mpp.alpha
    # orthonormal basis of the tangent plane
    q, _ = np.linalg.qr(np.column_stack([n, np.eye(d)]))
    tangent = q[:, 1:d]
    kappa = np.linalg.eigvalsh(tangent.T @ h @ tangent) / np.linalg.norm(mpp.gradient)
    beta = mpp.beta_form
    factors = 1.0 + beta * kappa
    pf_form = mpp.pf_form
    if np.any(factors <= 0):
        warnings.warn("Breitung correction undefined (beta * kappa <= -1)", RuntimeWarning, stacklevel=2)
        return SormResult(math.nan, kappa, False, pf_form)
    return SormResult(float(pf_form * np.prod(factors ** -0.5)), kappa, True, pf_form)

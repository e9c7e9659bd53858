"""Limit states, Monte Carlo failure probabilities and related statistics."""
from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

__all__ = [
    "LimitState", "ReliabilityReport", "probe_trajectory", "peak_response", "evaluate_limit_state",
    "first_passage_time", "first_passage_times", "estimate_pf", "reliability_index",
    "pdf_estimate", "silverman_bandwidth", "threshold_sweep",
]


@dataclass(frozen=True)
class LimitState:
    """Failure when the peak absolute response over the probe set exceeds ``e_h``.

    Parameters
    ----------
    e_h : float
        Threshold.
    probe : {'point', 'field_max'}
    index : int, optional
        Spatial node of a point probe (index along the first spatial axis).
    window : (int, int), optional
        Inclusive frame window ``[t1, t2]`` on the time axis.
    time_axis : int, optional
        Time axis of a single-sample response array (``None`` for static fields).
    mode : {'time_independent', 'first_passage'}
    """

    e_h: float
    probe: str = "point"
    index: int | None = None
    window: tuple | None = None
    time_axis: int | None = -1
    mode: str = "first_passage"

    def __post_init__(self):
        if self.probe not in ("point", "field_max"):
            raise ValueError(f"unknown probe {self.probe!r}")
        if self.mode not in ("time_independent", "first_passage"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.probe == "point" and (self.index is None or self.index < 0):
            raise ValueError("a point probe needs a non-negative index")
        if self.window is not None:
            t1, t2 = self.window
            if not t1 < t2:
                raise ValueError("window must satisfy t1 < t2")
            object.__setattr__(self, "window", (int(t1), int(t2)))
        if not np.isfinite(self.e_h):
            raise ValueError("threshold must be finite")

    def with_threshold(self, e_h: float) -> "LimitState":
        return dataclasses.replace(self, e_h=float(e_h))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["window"] = list(self.window) if self.window is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LimitState":
        d = dict(d)
        if d.get("window") is not None:
            d["window"] = tuple(d["window"])
        return cls(**d)


def probe_trajectory(u, ls: LimitState, batched: bool = True) -> np.ndarray:
    """Absolute response reduced to ``(..., time)`` (or ``(...,)`` when static)."""
    u = np.abs(np.asarray(u, dtype=np.float64))
    off = 1 if batched else 0
    nd = u.ndim - off
    ta = None if ls.time_axis is None else (ls.time_axis % nd) + off
    if ta is not None:
        u = np.moveaxis(u, ta, -1)
        if ls.window is not None:
            t1, t2 = ls.window
            if t2 >= u.shape[-1]:
                raise IndexError(f"window end {t2} outside {u.shape[-1]} frames")
            u = u[..., t1:t2 + 1]
    n_space = u.ndim - off - (1 if ta is not None else 0)
    if ls.probe == "point":
        if ls.index >= u.shape[off]:
            raise IndexError(f"probe index {ls.index} outside axis of length {u.shape[off]}")
        u = np.take(u, ls.index, axis=off)
        n_space -= 1
    if n_space > 0:
        axes = tuple(range(off, off + n_space))
        u = u.max(axis=axes)
    return u


def peak_response(u, ls: LimitState, batched: bool = True) -> np.ndarray:
    """``max |u|`` over the probe set (and the time window); shape ``(batch,)``."""
    traj = probe_trajectory(u, ls, batched)
    if ls.time_axis is not None:
        traj = traj.max(axis=-1)
    return traj


def evaluate_limit_state(u, ls: LimitState, batched: bool = False):
    """Margin ``J = e_h - max|u|``; failure iff ``J < 0``."""
    return ls.e_h - peak_response(u, ls, batched)


def first_passage_time(trajectory, e_h: float, times=None):
    """First time ``|u|`` strictly exceeds ``e_h``, linearly interpolated.

    Returns ``None`` when the threshold is never crossed.
    """
    y = np.abs(np.asarray(trajectory, dtype=np.float64)).ravel()
    if y.size == 0:
        raise ValueError("empty trajectory")
    t = np.arange(y.size, dtype=np.float64) if times is None else np.asarray(times, dtype=np.float64)
    hit = np.flatnonzero(y > e_h)
    if hit.size == 0:
        return None
    k = hit[0]
    if k == 0:
        return float(t[0])
    frac = (e_h - y[k - 1]) / (y[k] - y[k - 1])
    return float(t[k - 1] + frac * (t[k] - t[k - 1]))


def first_passage_times(u, ls: LimitState, times=None) -> np.ndarray:
    """Batched first-passage times (``nan`` where no crossing occurs).

    ``times`` are the physical times of the frames inside the window.
    """
    if ls.time_axis is None:
        raise ValueError("first-passage analysis needs a time axis")
    traj = probe_trajectory(u, ls, batched=True)
    out = np.full(traj.shape[0], np.nan)
    for i, y in enumerate(traj):
        tau = first_passage_time(y, ls.e_h, times)
        if tau is not None:
            out[i] = tau
    return out


def reliability_index(pf: float) -> float:
    """``beta = Phi^{-1}(1 - P_f)``; ``+inf``/``-inf`` for ``P_f`` of 0/1."""
    pf = float(pf)
    if not 0.0 <= pf <= 1.0:
        raise ValueError("P_f must lie in [0, 1]")
    if pf == 0.0:
        warnings.warn("no failures observed: reliability index reported as +inf", RuntimeWarning, stacklevel=2)
        return math.inf
    if pf == 1.0:
        warnings.warn("every sample failed: reliability index reported as -inf", RuntimeWarning, stacklevel=2)
        return -math.inf
    return float(-special.ndtri(pf))


@dataclass
class ReliabilityReport:
    pf: float
    beta: float
    n_samples: int
    n_failures: int
    stderr: float
    samples: np.ndarray | None = None
    density: dict | None = None
    extras: dict = field(default_factory=dict)

    def ci95(self) -> tuple:
        half = 1.959963984540054 * self.stderr
        return (max(0.0, self.pf - half), min(1.0, self.pf + half))

    def to_dict(self) -> dict:
        beta = self.beta if math.isfinite(self.beta) else ("inf" if self.beta > 0 else "-inf")
        return {"pf": self.pf, "beta": beta, "n_samples": self.n_samples, "n_failures": self.n_failures,
                "stderr": self.stderr, "ci95": list(self.ci95()), **self.extras}


def estimate_pf(failed, samples=None) -> ReliabilityReport:
    """Counting estimator with binomial standard error.

    ``failed`` is a boolean array (or margins, where ``J < 0`` means failure).
    """
    arr = np.asarray(failed).ravel()
    if arr.size < 1:
        raise ValueError("need at least one sample")
    flags = arr if arr.dtype == bool else arr < 0
    n = int(flags.size)
    k = int(flags.sum())
    pf = k / n
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        beta = reliability_index(pf)
    if k in (0, n):
        warnings.warn(f"degenerate estimate P_f={pf}; reliability index is a sentinel", RuntimeWarning, stacklevel=2)
    return ReliabilityReport(pf, beta, n, k, math.sqrt(pf * (1 - pf) / n), samples)


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=np.float64).ravel()
    return float(stats.gaussian_kde(x, bw_method="silverman").factor * x.std(ddof=1))


def pdf_estimate(samples, n_points: int = 512) -> dict:
    """Gaussian KDE with Silverman's bandwidth on ``[min - 3b, max + 3b]``.

    Returns ``{'x', 'pdf', 'bandwidth', 'point_mass'}``.  Identical samples
    give a point mass (with a warning) instead of a curve.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    x = x[np.isfinite(x)]
    if x.size < 10:
        raise ValueError("at least 10 finite samples are needed for a density estimate")
    if np.ptp(x) == 0:
        warnings.warn("all samples identical: density is a point mass", RuntimeWarning, stacklevel=2)
        return {"x": np.array([x[0]]), "pdf": np.array([1.0]), "bandwidth": 0.0, "point_mass": True}
    kde = stats.gaussian_kde(x, bw_method="silverman")
    b = float(kde.factor * x.std(ddof=1))
    grid = np.linspace(x.min() - 3 * b, x.max() + 3 * b, n_points)
    return {"x": grid, "pdf": kde(grid), "bandwidth": b, "point_mass": False}


def threshold_sweep(peaks, thresholds) -> list:
    """``(e_h, P_f, beta, stderr)`` rows from one shared set of peak responses."""
    peaks = np.asarray(peaks, dtype=np.float64).ravel()
    rows = []
    for e in thresholds:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep = estimate_pf(peaks > e)
        rows.append({"e_h": float(e), "pf": rep.pf, "beta": rep.beta, "stderr": rep.stderr})
    return rows

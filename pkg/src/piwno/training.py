"""Physics-informed and data-driven training loops for the wavelet operator.

The physics-informed loop needs only input functions: each batch is pushed
through the operator, decoded into the solution layout the residuals expect,
and the physics loss is minimised with AdamW (Adam with decoupled weight
decay).  Gradients flow through the derivative estimates because the
stochastic-projection operator is linear in the field.
"""
from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from . import io as pio
from .grids import Grid
from .operator import WNO, WnoConfig
from .physics import PhysicsSpec, loss_terms

__all__ = [
    "TrainConfig", "TrainResult", "TrainingDivergedError", "default_decode", "relative_l2",
    "train_pio", "train_data_driven", "gradient_check", "save_checkpoint", "load_checkpoint", "predict",
    "float64_copy",
]

MODES = ("physics", "data", "hybrid")
_DTYPES = {"float32": torch.float32, "float64": torch.float64}


class TrainingDivergedError(FloatingPointError):
    """Raised when the loss becomes non-finite; carries the epoch, batch and term values."""

    def __init__(self, epoch: int, batch: int, terms: dict):
        self.epoch, self.batch, self.terms = epoch, batch, terms
        detail = ", ".join(f"{k}={v:.4g}" for k, v in terms.items())
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch} ({detail})")


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings.

    ``alpha1``/``alpha2`` (boundary and initial-condition weights) live on
    :class:`~piwno.physics.PhysicsSpec`; values given here override them when
    not ``None``.
    """

    mode: str = "physics"
    epochs: int = 300
    batch_size: int = 20
    lr: float = 1e-3
    weight_decay: float = 1e-6
    seed: int = 0
    alpha1: float | None = None
    alpha2: float | None = None
    dtype: str = "float32"
    data_weight: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        # lr = 0 is accepted: the weights stay frozen while the loss history is still recorded
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("learning rate and weight decay must be non-negative")
        if self.dtype not in _DTYPES:
            raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return _DTYPES[self.dtype]

    def physics(self, spec: PhysicsSpec) -> PhysicsSpec:
        over = {k: v for k, v in (("alpha1", self.alpha1), ("alpha2", self.alpha2)) if v is not None}
        return dataclasses.replace(spec, **over) if over else spec

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainResult:
    model: WNO
    history: list
    best_state: dict
    best_loss: float
    best_epoch: int
    optimizer: torch.optim.Optimizer | None = None
    seconds: float = 0.0
    extras: dict = field(default_factory=dict)

    def history_columns(self) -> dict:
        keys = list(self.history[0]) if self.history else []
        return {k: np.array([h[k] for h in self.history], dtype=np.float64) for k in keys}

    def best_model(self) -> WNO:
        m = WNO(self.model.cfg).to(next(self.model.parameters()).dtype)
        m.load_arrays(self.best_state)
        return m


def default_decode(out: torch.Tensor) -> torch.Tensor:
    """Operator output ``(b, nx, ny, c)`` to the residual layout.

    One channel is squeezed away (giving ``(b, nx, ny)``); several channels
    are treated as frames and moved in front of the grid axes.
    """
    if out.shape[-1] == 1:
        return out[..., 0]
    return out.permute(0, 3, 1, 2)


def relative_l2(pred, target, reduce: bool = True):
    """Per-sample ``||pred - target|| / ||target||`` (absolute where the target is 0)."""
    b = pred.shape[0]
    diff = (pred - target).reshape(b, -1)
    ref = target.reshape(b, -1)
    if isinstance(pred, torch.Tensor):
        num, den = diff.norm(dim=1), ref.norm(dim=1)
        den = torch.where(den > 0, den, torch.ones_like(den))
    else:
        num, den = np.linalg.norm(diff, axis=1), np.linalg.norm(ref, axis=1)
        den = np.where(den > 0, den, 1.0)
    err = num / den
    return err.mean() if reduce else err


def _as_tensor(x, dtype):
    if isinstance(x, torch.Tensor):
        return x.to(dtype)
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def _batches(n: int, batch_size: int, seed: int, epoch: int):
    # the permutation depends only on (seed, epoch), so resumed runs replay identically
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _make_optimizer(model: WNO, cfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)


def _run(model: WNO, cfg: TrainConfig, n: int, batch_loss: Callable, optimizer=None, start_epoch: int = 0,
         callback: Callable | None = None, history: list | None = None) -> TrainResult:
    opt = optimizer if optimizer is not None else _make_optimizer(model, cfg)
    history = list(history or [])
    best_loss = min((h["loss"] for h in history), default=math.inf)
    best_epoch = int(min(history, key=lambda h: h["loss"])["epoch"]) if history else -1
    best_state = model.state_arrays()
    t0 = time.perf_counter()
    for epoch in range(start_epoch, cfg.epochs):
        model.train()
        sums, count = {}, 0
        for bi, idx in enumerate(_batches(n, cfg.batch_size, cfg.seed, epoch)):
            opt.zero_grad(set_to_none=True)
            loss, terms = batch_loss(idx)
            vals = {"loss": float(loss.detach())}
            vals.update({k: float(v.detach()) for k, v in terms.items()})
            if not all(math.isfinite(v) for v in vals.values()):
                raise TrainingDivergedError(epoch, bi, vals)
            loss.backward()
            opt.step()
            for k, v in vals.items():
                sums[k] = sums.get(k, 0.0) + v * len(idx)
            count += len(idx)
        row = {"epoch": epoch, **{k: v / count for k, v in sums.items()}}
        history.append(row)
        # the epoch loss is measured during the epoch; the checkpoint is the post-epoch weights
        if row["loss"] < best_loss:
            best_loss, best_epoch, best_state = row["loss"], epoch, model.state_arrays()
        if callback is not None:
            callback(row)
    model.eval()
    return TrainResult(model, history, best_state, best_loss, best_epoch, opt, time.perf_counter() - t0)


def _prepare(model: WNO | WnoConfig, cfg: TrainConfig) -> WNO:
    m = WNO(model) if isinstance(model, WnoConfig) else model
    return m.to(cfg.torch_dtype)


def train_pio(model, inputs, config: TrainConfig, physics: PhysicsSpec, grid: Grid, physics_inputs=None,
              decode: Callable = default_decode, targets=None, optimizer=None, start_epoch: int = 0,
              history: list | None = None, callback: Callable | None = None) -> TrainResult:
    """Physics-informed training from input functions alone.

    Parameters
    ----------
    model : WNO or WnoConfig
    inputs : array ``(N, nx, ny, c_in)``
        Encoded operator inputs.
    physics_inputs : array, optional
        Raw input functions handed to the residuals (source, initial
        condition, permeability or past frames); defaults to channel 0 of
        ``inputs``.
    targets : array, optional
        Solutions in the decoded layout; only used by ``mode='hybrid'``.

    Returns
    -------
    TrainResult
        Final model, per-epoch history and the best-loss checkpoint.
    """
    if config.mode == "data":
        raise ValueError("mode='data' uses train_data_driven")
    if config.mode == "hybrid" and targets is None:
        raise ValueError("hybrid training needs targets")
    model = _prepare(model, config)
    dtype = config.torch_dtype
    x = _as_tensor(inputs, dtype)
    raw = _as_tensor(physics_inputs if physics_inputs is not None else np.asarray(x[..., 0]), dtype)
    y = _as_tensor(targets, dtype) if targets is not None else None
    spec = config.physics(physics)
    if raw.shape[0] != x.shape[0]:
        raise ValueError("inputs and physics_inputs disagree on the sample count")

    def batch_loss(idx):
        u = decode(model(x[idx]))
        terms = loss_terms(u, raw[idx], grid, spec)
        loss = terms["pde"] + spec.alpha1 * terms["bc"] + spec.alpha2 * terms["ic"]
        if y is not None:
            terms = dict(terms, data=relative_l2(u, y[idx]))
            loss = loss + config.data_weight * terms["data"]
        return loss, terms

    return _run(model, config, x.shape[0], batch_loss, optimizer, start_epoch, callback, history)


def train_data_driven(model, inputs, targets, config: TrainConfig, decode: Callable = default_decode,
                      optimizer=None, start_epoch: int = 0, history: list | None = None,
                      callback: Callable | None = None) -> TrainResult:
    """Supervised training on (input, solution) pairs with the mean relative L2 loss."""
    if targets is None:
        raise ValueError("data-driven training needs a solution bank")
    model = _prepare(model, config)
    dtype = config.torch_dtype
    x, y = _as_tensor(inputs, dtype), _as_tensor(targets, dtype)
    if x.shape[0] != y.shape[0]:
        raise ValueError("inputs and targets disagree on the sample count")

    def batch_loss(idx):
        loss = relative_l2(decode(model(x[idx])), y[idx])
        return loss, {"data": loss}

    return _run(model, config, x.shape[0], batch_loss, optimizer, start_epoch, callback, history)


@torch.no_grad()
def predict(model: WNO, inputs, decode: Callable = default_decode, batch_size: int = 50) -> np.ndarray:
    """Batched inference returning a numpy array in the decoded layout."""
    model.eval()
    dtype = next(model.parameters()).dtype
    x = _as_tensor(inputs, dtype)
    outs = [decode(model(x[i:i + batch_size])).cpu().numpy() for i in range(0, x.shape[0], batch_size)]
    return np.concatenate(outs, axis=0)


def float64_copy(model: WNO) -> WNO:
    """Double-precision copy of ``model`` (finite differences need the extra digits)."""
    m = WNO(model.cfg).double()
    m.load_arrays(model.state_arrays())
    return m


def gradient_check(model: WNO, inputs, physics: PhysicsSpec, grid: Grid, physics_inputs=None,
                   decode: Callable = default_decode, n_coords: int = 5, step: float = 1e-3,
                   seed: int = 0, min_scale: float = 1e-6) -> list:
    """Compare reverse-mode and finite-difference derivatives of the physics loss.

    Runs in float64 on a copy of ``model``.  The finite difference is the
    Richardson extrapolation of central differences with steps ``step`` and
    ``step / 2`` (truncation error of fourth order).  Coordinates are drawn
    at random among those whose derivative is at least ``min_scale`` times
    the largest one; smaller derivatives sit at the round-off floor of the
    loss, where a relative comparison carries no information.

    Returns one dict per sampled coordinate with both derivatives and their
    relative error.
    """
    m = float64_copy(model)
    x = _as_tensor(inputs, torch.float64)
    raw = _as_tensor(physics_inputs if physics_inputs is not None else np.asarray(x[..., 0]), torch.float64)

    def loss_fn():
        t = loss_terms(decode(m(x)), raw, grid, physics)
        return float(t["pde"] + physics.alpha1 * t["bc"] + physics.alpha2 * t["ic"])

    m.zero_grad()
    t = loss_terms(decode(m(x)), raw, grid, physics)
    (t["pde"] + physics.alpha1 * t["bc"] + physics.alpha2 * t["ic"]).backward()
    named = list(m.named_parameters())
    grads = np.concatenate([p.grad.detach().numpy().ravel() for _, p in named])
    offsets = np.cumsum([0] + [p.numel() for _, p in named])
    eligible = np.flatnonzero(np.abs(grads) >= min_scale * np.abs(grads).max())
    rng = np.random.default_rng(seed)
    flat = rng.choice(eligible, size=min(n_coords, eligible.size), replace=False)
    rows = []
    with torch.no_grad():
        for f in flat:
            which = int(np.searchsorted(offsets, f, side="right")) - 1
            name, p = named[which]
            j = int(f - offsets[which])
            pv = p.view(-1)
            old = float(pv[j])

            def central(h):
                pv[j] = old + h
                lp = loss_fn()
                pv[j] = old - h
                lm = loss_fn()
                pv[j] = old
                return (lp - lm) / (2 * h)

            fd = (4 * central(step / 2) - central(step)) / 3
            ad = float(grads[f])
            rel = abs(ad - fd) / max(abs(ad), abs(fd), 1e-300)
            rows.append({"param": name, "index": j, "reverse_mode": ad, "finite_difference": fd, "rel_error": rel})
    return rows


def _optim_arrays(opt: torch.optim.Optimizer, model: WNO) -> dict:
    names = {id(p): k for k, p in model.named_parameters()}
    out = {}
    for group in opt.param_groups:
        for p in group["params"]:
            st = opt.state.get(p)
            if not st:
                continue
            k = names[id(p)]
            out[f"optim/{k}/exp_avg"] = st["exp_avg"].detach().cpu().numpy()
            out[f"optim/{k}/exp_avg_sq"] = st["exp_avg_sq"].detach().cpu().numpy()
            out[f"optim/{k}/step"] = np.asarray(float(st["step"]))
    return out


def save_checkpoint(path, result: TrainResult, train_cfg: TrainConfig, extra: dict | None = None,
                    which: str = "final"):
    """Write parameters, optimizer moments and the loss history to a container.

    ``which`` selects the stored weights: ``'final'`` or ``'best'``; the other
    set is stored under the ``best/`` prefix when ``which='final'``.
    """
    model = result.model
    arrays = {}
    params = model.state_arrays() if which == "final" else result.best_state
    arrays.update({f"param/{k}": v for k, v in params.items()})
    if which == "final":
        arrays.update({f"best/{k}": v for k, v in result.best_state.items()})
        if result.optimizer is not None:
            arrays.update(_optim_arrays(result.optimizer, model))
    arrays.update({f"history/{k}": v for k, v in result.history_columns().items()})
    header = {
        "kind": "checkpoint",
        "weights": which,
        "wno": model.cfg.to_dict(),
        "train": train_cfg.to_dict(),
        "best_epoch": result.best_epoch,
        "best_loss": result.best_loss,
        "epochs_done": len(result.history),
        "version": pio.version_string(),
        **(extra or {}),
    }
    return pio.save_arrays(path, arrays, header)


def load_checkpoint(path, best: bool = False) -> tuple:
    """Return ``(model, header, history, optimizer_or_None)``.

    The optimizer is rebuilt (with its moments) only for final-weight loads,
    which is what resuming needs.
    """
    header, arrays = pio.load_arrays(path)
    if header.get("kind") != "checkpoint":
        raise ValueError(f"{path} is not a checkpoint")
    tcfg = TrainConfig.from_dict(header["train"])
    model = WNO(WnoConfig.from_dict(header["wno"])).to(tcfg.torch_dtype)
    prefix = "best/" if best and header["weights"] == "final" else "param/"
    model.load_arrays({k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)})
    cols = {k[len("history/"):]: v for k, v in arrays.items() if k.startswith("history/")}
    n = len(next(iter(cols.values()))) if cols else 0
    history = [{k: (int(v[i]) if k == "epoch" else float(v[i])) for k, v in cols.items()} for i in range(n)]
    opt = None
    if not best and any(k.startswith("optim/") for k in arrays):
        opt = _make_optimizer(model, tcfg)
        for k, p in model.named_parameters():
            key = f"optim/{k}/"
            if key + "exp_avg" not in arrays:
                continue
            opt.state[p] = {
                "step": torch.tensor(float(arrays[key + "step"].reshape(()))),
                "exp_avg": torch.as_tensor(arrays[key + "exp_avg"]).to(p.dtype).clone(),
                "exp_avg_sq": torch.as_tensor(arrays[key + "exp_avg_sq"]).to(p.dtype).clone(),
            }
    return model, header, history, opt

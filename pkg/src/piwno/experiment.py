"""Experiment configuration and the commands behind the command-line interface.

Every command reads one :class:`ExperimentConfig`, writes into its output
directory and embeds the resolved config plus the package version in each
artifact, so a run can be reconstructed from its directory alone.

Files in an output directory
----------------------------
``bank_<split>.pna``
    Named-array container: ``raw`` input functions, ``seeds`` and optional
    ``latent`` variables and ``solution`` arrays.
``checkpoint.pna`` / ``loss_history.csv``
    Trained operator and per-epoch loss terms.
``validation.csv`` / ``validation.json`` / ``validation_fields.pna``
    Per-sample relative L2 errors, their summary and field dumps.
``responses_<model>.pna``
    Probe trajectories (or peak values) of the Monte Carlo bank.
``reliability_<model>.json``, ``density_<model>.csv``, ``sweep.csv``
    Reports; the CSV schemas are ``x,pdf`` and ``method,e_h,pf,beta,stderr``.
``form.json`` / ``sorm.json`` / ``kle.json`` / ``kle_spectrum.csv``
"""
from __future__ import annotations

import copy
import csv
import dataclasses
import json
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as pio
from .form_sorm import form_hlrf, sorm_breitung
from .grids import grf_bank, kle_intrinsic_dim, kle_spectrum, sample_seeds
from .problems import EXAMPLES, DEFAULT_SETTINGS, Problem, ProblemSettings
from .reliability import (LimitState, estimate_pf, first_passage_times, pdf_estimate, probe_trajectory,
                          reliability_index, threshold_sweep)
from .training import (TrainConfig, load_checkpoint, predict, relative_l2, save_checkpoint, train_data_driven,
                       train_pio)

__all__ = ["ExperimentConfig", "ConfigError", "OUTPUT_ROOT_ENV", "load_config", "apply_overrides",
           "cmd_sample", "cmd_train", "cmd_validate", "cmd_reliability", "cmd_sweep", "cmd_form", "cmd_sorm",
           "cmd_kle"]

OUTPUT_ROOT_ENV = "PIWNO_OUTPUT_ROOT"
SPLITS = ("train", "holdout", "mcs")
MODELS = ("solver", "surrogate")


class ConfigError(ValueError):
    """Inconsistent or invalid experiment settings."""


@dataclass
class ExperimentConfig:
    example: str = "diffusion_reaction"
    problem: dict = field(default_factory=dict)
    wno: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    n_train: int = 600
    n_holdout: int = 50
    n_mcs: int = 10000
    seeds: dict = field(default_factory=lambda: {"train": 0, "holdout": 1, "mcs": 2})
    thresholds: list | None = None
    form: dict = field(default_factory=lambda: {"tol": 1e-6, "max_iter": 100, "step": 1e-4})
    kle: dict = field(default_factory=lambda: {"n_samples": 1000, "energy_fraction": 0.99, "field": "latent"})
    output_dir: str = "runs/default"
    n_field_dumps: int = 4

    # --- construction -------------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**copy.deepcopy(d))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    # --- resolved objects -------------------------------------------------------------

    def build_problem(self) -> Problem:
        base = DEFAULT_SETTINGS[self.example]
        over = dict(self.problem)
        if "grf" in over:
            grf = base.grf.to_dict() if base.grf is not None else {}
            grf.update(over["grf"])
            over["grf"] = grf
        merged = base.to_dict()
        merged.update(over)
        try:
            return Problem(self.example, ProblemSettings.from_dict(merged))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"problem settings: {exc}") from exc

    def train_config(self) -> TrainConfig:
        d = dict(self.train)
        d.setdefault("batch_size", 20 if self.example in ("diffusion_reaction", "nagumo") else 10)
        try:
            return TrainConfig.from_dict(d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"train settings: {exc}") from exc

    def validate(self):
        """Cross-field checks, run before any computation."""
        if self.example not in EXAMPLES:
            raise ConfigError(f"example must be one of {EXAMPLES}")
        for k in ("n_train", "n_holdout", "n_mcs"):
            if int(getattr(self, k)) < 1:
                raise ConfigError(f"{k} must be >= 1")
        missing = set(SPLITS) - set(self.seeds)
        if missing:
            raise ConfigError(f"seeds missing for splits {sorted(missing)}")
        if len({int(self.seeds[s]) for s in SPLITS}) != len(SPLITS):
            raise ConfigError("train, holdout and mcs seeds must differ")
        problem = self.build_problem()
        try:
            problem.limit_state()
            problem.wno_config(**self.wno)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        self.train_config()
        if self.thresholds is not None and len(self.thresholds) == 0:
            raise ConfigError("thresholds must be a non-empty list when given")
        if self.kle.get("field", "latent") not in ("latent", "raw"):
            raise ConfigError("kle.field must be 'latent' or 'raw'")
        return self

    def out(self) -> Path:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        p = Path(self.output_dir)
        if root and not p.is_absolute():
            p = Path(root) / p
        p.mkdir(parents=True, exist_ok=True)
        return p

    def meta(self) -> dict:
        return {"config": self.to_dict(), "version": pio.version_string()}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(d: dict, overrides: list) -> dict:
    """Apply ``dotted.key=value`` overrides (values parsed as JSON when possible)."""
    d = copy.deepcopy(d)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        node = d
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {key!r}: {p!r} is not a section")
        node[parts[-1]] = _parse_value(val)
    return d


def load_config(path=None, overrides: list | None = None) -> ExperimentConfig:
    d = {} if path is None else json.loads(Path(path).read_text())
    return ExperimentConfig.from_dict(apply_overrides(d, overrides or []))


# --- banks ------------------------------------------------------------------------------

def _bank_path(cfg: ExperimentConfig, split: str) -> Path:
    return cfg.out() / f"bank_{split}.pna"


def _n_for(cfg: ExperimentConfig, split: str) -> int:
    return {"train": cfg.n_train, "holdout": cfg.n_holdout, "mcs": cfg.n_mcs}[split]


def cmd_sample(cfg: ExperimentConfig, split: str = "train", with_solutions: bool = False) -> dict:
    """Draw and persist the input bank of one split (plus solver outputs on request)."""
    if split not in SPLITS:
        raise ConfigError(f"split must be one of {SPLITS}")
    problem = cfg.build_problem()
    n = _n_for(cfg, split)
    data = problem.sample(int(cfg.seeds[split]), n)
    arrays = {k: v for k, v in data.items()}
    if with_solutions:
        arrays["solution"] = problem.solve(data["raw"])
    digest = pio.digest_arrays({"raw": data["raw"], "seeds": data["seeds"]})
    header = {"kind": "bank", "split": split, "example": cfg.example, "n": n, "digest": digest,
              "problem": problem.settings.to_dict(), **cfg.meta()}
    path = pio.save_arrays(_bank_path(cfg, split), arrays, header)
    manifest = {"bank": path.name, "split": split, "n": n, "digest": digest,
                "base_seed": int(cfg.seeds[split]), "sample_seeds": data["seeds"], **cfg.meta()}
    pio.write_json(cfg.out() / f"manifest_{split}.json", manifest)
    return {"path": str(path), "digest": digest, "n": n, "solutions": with_solutions}


def _load_bank(cfg: ExperimentConfig, split: str, need_solutions: bool = False, create: bool = True):
    path = _bank_path(cfg, split)
    if not path.exists():
        if not create:
            raise FileNotFoundError(f"{path} not found; run the sample command first")
        cmd_sample(cfg, split, with_solutions=need_solutions)
    header, arrays = pio.load_arrays(path)
    if header.get("example") != cfg.example:
        raise ConfigError(f"{path} holds a {header.get('example')} bank, not {cfg.example}")
    if need_solutions and "solution" not in arrays:
        if not create:
            raise ConfigError(f"{path} has no solution arrays; sample with --with-solutions")
        arrays["solution"] = cfg.build_problem().solve(arrays["raw"])
        pio.save_arrays(path, arrays, header)
    return header, arrays


# --- training ---------------------------------------------------------------------------

def cmd_train(cfg: ExperimentConfig, resume: bool = False, log=None) -> dict:
    """Train the operator on the train bank; writes ``checkpoint.pna`` and ``loss_history.csv``."""
    problem = cfg.build_problem()
    tcfg = cfg.train_config()
    need = tcfg.mode in ("data", "hybrid")
    _, bank = _load_bank(cfg, "train", need_solutions=need, create=not need)
    x = problem.encode(bank["raw"])
    ck = cfg.out() / "checkpoint.pna"
    kw = {}
    if resume:
        if not ck.exists():
            raise FileNotFoundError(f"no checkpoint to resume at {ck}")
        model, header, history, opt = load_checkpoint(ck)
        kw = dict(optimizer=opt, start_epoch=len(history), history=history)
    else:
        model = problem.wno_config(**cfg.wno)
    cb = (lambda row: log(json.dumps(pio.jsonable(row)))) if log else None
    if tcfg.mode == "data":
        res = train_data_driven(model, x, bank["solution"], tcfg, callback=cb, **kw)
    else:
        res = train_pio(model, x, tcfg, problem.physics, problem.grid, physics_inputs=problem.physics_inputs(bank["raw"]),
                        targets=bank.get("solution") if tcfg.mode == "hybrid" else None, callback=cb, **kw)
    save_checkpoint(ck, res, tcfg, extra={"example": cfg.example, **cfg.meta()})
    pio.write_csv(cfg.out() / "loss_history.csv", res.history,
                  comment=json.dumps(pio.jsonable(cfg.meta()), sort_keys=True))
    return {"checkpoint": str(ck), "epochs": len(res.history), "final_loss": res.history[-1]["loss"],
            "best_loss": res.best_loss, "best_epoch": res.best_epoch, "seconds": res.seconds}


def _load_model(cfg: ExperimentConfig, checkpoint=None, best: bool = True):
    path = Path(checkpoint) if checkpoint else cfg.out() / "checkpoint.pna"
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} not found; run the train command first")
    model, header, _, _ = load_checkpoint(path, best=best)
    if header.get("example") not in (None, cfg.example):
        raise ConfigError(f"checkpoint was trained for {header.get('example')}")
    return model


def cmd_validate(cfg: ExperimentConfig, checkpoint=None, n_holdout: int | None = None) -> dict:
    """Relative L2 errors of the operator against the reference solver on held-out inputs."""
    if n_holdout is not None:
        cfg = dataclasses.replace(cfg, n_holdout=int(n_holdout))
    problem = cfg.build_problem()
    _, bank = _load_bank(cfg, "holdout", need_solutions=True)
    raw, truth = bank["raw"][:cfg.n_holdout], bank["solution"][:cfg.n_holdout]
    if raw.shape[0] < cfg.n_holdout:
        raise ConfigError(f"holdout bank has {raw.shape[0]} samples, fewer than {cfg.n_holdout}")
    model = _load_model(cfg, checkpoint)
    pred = predict(model, problem.encode(raw))
    err = relative_l2(pred, truth, reduce=False)
    rows = [{"sample": i, "seed": int(bank["seeds"][i]), "rel_l2": float(e)} for i, e in enumerate(err)]
    meta = json.dumps(pio.jsonable(cfg.meta()), sort_keys=True)
    pio.write_csv(cfg.out() / "validation.csv", rows, comment=meta)
    k = min(cfg.n_field_dumps, raw.shape[0])
    pio.save_arrays(cfg.out() / "validation_fields.pna",
                    {"input": raw[:k], "truth": truth[:k], "prediction": pred[:k]}, {"kind": "fields", **cfg.meta()})
    summary = {"n": int(err.size), "mean": float(err.mean()), "median": float(np.median(err)),
               "max": float(err.max()), "p90": float(np.percentile(err, 90)), **cfg.meta()}
    pio.write_json(cfg.out() / "validation.json", summary)
    return {k: summary[k] for k in ("n", "mean", "median", "max", "p90")}


# --- reliability ------------------------------------------------------------------------

def _responses(cfg: ExperimentConfig, model_kind: str, checkpoint=None, batch: int = 500) -> dict:
    """Probe trajectories of the Monte Carlo bank, cached in ``responses_<model>.pna``."""
    if model_kind not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}")
    problem = cfg.build_problem()
    ls = problem.limit_state()
    path = cfg.out() / f"responses_{model_kind}.pna"
    if path.exists():
        header, arrays = pio.load_arrays(path)
        if header.get("n") == cfg.n_mcs and header.get("limit_state_probe") == _probe_key(ls):
            return arrays
    _, bank = _load_bank(cfg, "mcs")
    raw = bank["raw"][:cfg.n_mcs]
    model = _load_model(cfg, checkpoint) if model_kind == "surrogate" else None
    traj = []
    for i in range(0, raw.shape[0], batch):
        r = raw[i:i + batch]
        dec = problem.solve(r) if model is None else predict(model, problem.encode(r))
        traj.append(probe_trajectory(problem.response(dec, r), ls, batched=True))
    arrays = {"trajectory": np.concatenate(traj), "seeds": bank["seeds"][:cfg.n_mcs]}
    pio.save_arrays(path, arrays, {"kind": "responses", "model": model_kind, "n": cfg.n_mcs,
                                   "limit_state_probe": _probe_key(ls), **cfg.meta()})
    return arrays


def _probe_key(ls) -> str:
    return json.dumps({"probe": ls.probe, "index": ls.index, "window": ls.window, "time_axis": ls.time_axis})


def _peaks(traj: np.ndarray, timed: bool) -> np.ndarray:
    return traj.max(axis=-1) if timed else traj


def cmd_reliability(cfg: ExperimentConfig, model: str = "solver", checkpoint=None, e_h: float | None = None) -> dict:
    """Monte Carlo failure probability, reliability index and density of the QoI.

    ``model='both'`` evaluates solver and surrogate on the same bank and
    reports the surrogate-minus-solver difference.
    """
    kinds = list(MODELS) if model == "both" else [model]
    problem = cfg.build_problem()
    ls = problem.limit_state(e_h)
    timed = ls.time_axis is not None
    meta = json.dumps(pio.jsonable(cfg.meta()), sort_keys=True)
    results = {}
    for kind in kinds:
        traj = _responses(cfg, kind, checkpoint)["trajectory"]
        peaks = _peaks(traj, timed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep = estimate_pf(peaks > ls.e_h)
        extras = {"model": kind, "e_h": ls.e_h, "limit_state": ls.to_dict()}
        if timed:
            times = problem.times()
            fpt = first_passage_times(traj, _series_state(ls), times)
            sample = fpt[np.isfinite(fpt)]
            extras["quantity"] = "first_passage_time"
        else:
            sample = peaks
            extras["quantity"] = "peak_response"
        rep.samples = sample
        if sample.size >= 10:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                dens = pdf_estimate(sample)
            pio.write_csv(cfg.out() / f"density_{kind}.csv", {"x": dens["x"], "pdf": dens["pdf"]}, comment=meta)
            extras["bandwidth"] = dens["bandwidth"]
        else:
            extras["density"] = f"skipped: {sample.size} samples (at least 10 needed)"
        rep.extras = extras
        pio.write_json(cfg.out() / f"reliability_{kind}.json", {**rep.to_dict(), **cfg.meta()})
        results[kind] = rep.to_dict()
    if len(results) == 2:
        results["delta_pf"] = results["surrogate"]["pf"] - results["solver"]["pf"]
        pio.write_json(cfg.out() / "reliability_delta.json", {"delta_pf": results["delta_pf"], **cfg.meta()})
    return results


def _series_state(ls):
    """Limit state acting on pre-reduced ``(batch, time)`` trajectories."""
    return LimitState(ls.e_h, "field_max", time_axis=-1)


def _default_thresholds(problem: Problem) -> list:
    e = problem.settings.e_h
    return [float(v) for v in np.round(np.linspace(0.9 * e, 1.1 * e, 11), 6)]


def _append_sweep(cfg: ExperimentConfig, rows: list):
    """Merge rows into ``sweep.csv`` (keyed by method and threshold)."""
    path = cfg.out() / "sweep.csv"
    existing = []
    if path.exists():
        with path.open() as fh:
            existing = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    keep = {(r["method"], float(r["e_h"])) for r in rows}
    merged = [r for r in existing if (r["method"], float(r["e_h"])) not in keep] + rows
    merged.sort(key=lambda r: (r["method"], float(r["e_h"])))
    pio.write_csv(path, merged, columns=["method", "e_h", "pf", "beta", "stderr"],
                  comment=json.dumps(pio.jsonable(cfg.meta()), sort_keys=True))
    return path


def cmd_sweep(cfg: ExperimentConfig, model: str = "solver", checkpoint=None, thresholds=None) -> list:
    """``P_f`` and ``beta`` over a list of thresholds from one response set."""
    problem = cfg.build_problem()
    ths = thresholds or cfg.thresholds or _default_thresholds(problem)
    ls = problem.limit_state()
    kinds = list(MODELS) if model == "both" else [model]
    rows = []
    for kind in kinds:
        traj = _responses(cfg, kind, checkpoint)["trajectory"]
        for r in threshold_sweep(_peaks(traj, ls.time_axis is not None), ths):
            rows.append({"method": f"mcs_{kind}", **r})
    _append_sweep(cfg, rows)
    return rows


# --- FORM / SORM / KLE ----------------------------------------------------------------------

def _form_run(cfg: ExperimentConfig, e_h: float, model=None):
    """Design-point search; returns ``(g, result)`` or ``(g, reason)`` when the search breaks down."""
    problem = cfg.build_problem()
    g = problem.latent_limit_state(e_h, model)
    f = cfg.form
    try:
        mpp = form_hlrf(g, np.zeros(3), tol=f.get("tol", 1e-6), max_iter=f.get("max_iter", 100),
                        step=f.get("step", 1e-4), vectorized=True)
    except ArithmeticError as exc:
        # e.g. a threshold the response cannot reach: the iterates run off to
        # where the uniform map saturates and the limit state goes flat
        return g, f"design-point search failed: {exc}"
    if not mpp.converged:
        return g, "FORM did not converge"
    return g, mpp


def _form_model(cfg: ExperimentConfig, model: str, checkpoint=None):
    if model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}")
    return _load_model(cfg, checkpoint) if model == "surrogate" else None


def cmd_form(cfg: ExperimentConfig, thresholds=None, model: str = "solver", checkpoint=None) -> list:
    """FORM (HL-RF) for the diffusion-reaction source.

    Responses come from the reference solver by default; ``model='surrogate'``
    uses the trained operator instead.  Thresholds where the search fails are
    reported with ``converged: false`` and a reason, and are left out of the
    sweep table.
    """
    problem = cfg.build_problem()
    net = _form_model(cfg, model, checkpoint)
    method = "form" if net is None else "form_surrogate"
    out, rows = [], []
    for e in thresholds or [problem.settings.e_h]:
        _, mpp = _form_run(cfg, e, net)
        if isinstance(mpp, str):
            out.append({"e_h": float(e), "model": model, "converged": False, "reason": mpp})
            continue
        out.append({"e_h": float(e), "model": model, "beta": mpp.beta_form, "pf": mpp.pf_form, "u_star": mpp.u_star,
                    "iterations": mpp.iterations, "converged": True, "g_value": mpp.g_value})
        rows.append({"method": method, "e_h": float(e), "pf": mpp.pf_form, "beta": mpp.beta_form, "stderr": 0.0})
    pio.write_json(cfg.out() / "form.json", {"results": out, **cfg.meta()})
    if rows:
        _append_sweep(cfg, rows)
    return out


def cmd_sorm(cfg: ExperimentConfig, thresholds=None, model: str = "solver", checkpoint=None) -> list:
    """Breitung SORM on top of the FORM design point (same response switch as :func:`cmd_form`)."""
    problem = cfg.build_problem()
    net = _form_model(cfg, model, checkpoint)
    method = "sorm" if net is None else "sorm_surrogate"
    out, rows = [], []
    for e in thresholds or [problem.settings.e_h]:
        g, mpp = _form_run(cfg, e, net)
        if isinstance(mpp, str):
            out.append({"e_h": float(e), "model": model, "defined": False, "reason": mpp})
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            s = sorm_breitung(g, mpp, step=cfg.form.get("step", 1e-4), vectorized=True)
        beta = reliability_index(s.pf) if s.defined and 0 < s.pf < 1 else float("nan")
        out.append({"e_h": float(e), "model": model, "pf": s.pf, "beta": beta, "pf_form": s.pf_form,
                    "curvatures": s.curvatures, "defined": s.defined})
        if s.defined:
            rows.append({"method": method, "e_h": float(e), "pf": s.pf, "beta": beta, "stderr": 0.0})
    pio.write_json(cfg.out() / "sorm.json", {"results": out, **cfg.meta()})
    if rows:
        _append_sweep(cfg, rows)
    return out


def cmd_kle(cfg: ExperimentConfig) -> dict:
    """Intrinsic dimension of the random input at the configured energy fraction.

    ``kle.field='latent'`` analyses the Gaussian field before any pushforward
    (Darcy) or rescaling (Allen-Cahn initial field); ``'raw'`` analyses the
    operator input itself.  Allen-Cahn ``raw`` uses the initial frame.
    """
    problem = cfg.build_problem()
    k = cfg.kle
    n = int(k.get("n_samples", 1000))
    seed = int(k.get("seed", cfg.seeds["train"]))
    if problem.example == "allen_cahn":
        data = grf_bank(problem.settings.grf, problem.grid, sample_seeds(seed, n))
    else:
        d = problem.sample(seed, n)
        data = d["latent"] if k.get("field", "latent") == "latent" and "latent" in d else d["raw"]
    frac = float(k.get("energy_fraction", 0.99))
    lam = kle_spectrum(data)
    dim = kle_intrinsic_dim(data, frac)
    cum = np.cumsum(lam) / lam.sum()
    pio.write_csv(cfg.out() / "kle_spectrum.csv",
                  {"mode": np.arange(1, lam.size + 1), "eigenvalue": lam, "cumulative_energy": cum},
                  comment=json.dumps(pio.jsonable(cfg.meta()), sort_keys=True))
    res = {"intrinsic_dim": dim, "energy_fraction": frac, "n_samples": n, "field": k.get("field", "latent")}
    pio.write_json(cfg.out() / "kle.json", {**res, **cfg.meta()})
    return res

"""Command-line entry point: ``piwno <command> [--config FILE] [--set key=value ...]``.

Results are printed as one JSON object on stdout.  Failures print a JSON
object ``{"error": type, "message": text}`` on stderr and exit with a
nonzero status (2 for configuration errors, 1 otherwise).  Relative output
directories are resolved under ``$PIWNO_OUTPUT_ROOT`` when it is set.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiment as ex
from .io import jsonable

log = logging.getLogger("piwno")

COMMANDS = ("sample", "train", "validate", "reliability", "sweep", "form", "sorm", "kle")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="JSON experiment config")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-key override, e.g. train.epochs=10 (repeatable)")
    common.add_argument("--verbose", "-v", action="store_true")

    p = argparse.ArgumentParser(prog="piwno", description="Physics-informed wavelet operator reliability toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common], help="draw and store an input bank")
    s.add_argument("--split", choices=ex.SPLITS, default="train")
    s.add_argument("--with-solutions", action="store_true", help="also store reference solutions")

    t = sub.add_parser("train", parents=[common], help="train the operator")
    t.add_argument("--resume", action="store_true", help="continue from checkpoint.pna")

    v = sub.add_parser("validate", parents=[common], help="errors against the reference solver")
    v.add_argument("--checkpoint")
    v.add_argument("--n-holdout", type=int)

    for name, helptext in (("reliability", "Monte Carlo failure probability"),
                           ("sweep", "failure probability over a threshold list")):
        r = sub.add_parser(name, parents=[common], help=helptext)
        r.add_argument("--model", choices=(*ex.MODELS, "both"), default="solver")
        r.add_argument("--checkpoint")
        if name == "reliability":
            r.add_argument("--e-h", type=float, help="threshold (default: the example's)")
        else:
            r.add_argument("--thresholds", type=float, nargs="+")

    for name in ("form", "sorm"):
        f = sub.add_parser(name, parents=[common], help=f"{name.upper()} baseline (diffusion-reaction)")
        f.add_argument("--thresholds", type=float, nargs="+")
        f.add_argument("--model", choices=ex.MODELS, default="solver")
        f.add_argument("--checkpoint")

    sub.add_parser("kle", parents=[common], help="intrinsic dimension of the random input")
    return p


def run(argv=None) -> dict:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    cfg = ex.load_config(args.config, args.overrides)
    c = args.command
    if c == "sample":
        return ex.cmd_sample(cfg, args.split, args.with_solutions)
    if c == "train":
        return ex.cmd_train(cfg, resume=args.resume, log=log.info)
    if c == "validate":
        return ex.cmd_validate(cfg, args.checkpoint, args.n_holdout)
    if c == "reliability":
        return ex.cmd_reliability(cfg, args.model, args.checkpoint, args.e_h)
    if c == "sweep":
        return {"rows": ex.cmd_sweep(cfg, args.model, args.checkpoint, args.thresholds)}
    if c == "form":
        return {"results": ex.cmd_form(cfg, args.thresholds, args.model, args.checkpoint)}
    if c == "sorm":
        return {"results": ex.cmd_sorm(cfg, args.thresholds, args.model, args.checkpoint)}
    return ex.cmd_kle(cfg)


def main(argv=None) -> int:
    try:
        result = run(argv)
    except SystemExit:
        raise
    except ex.ConfigError as exc:
        print(json.dumps({"error": "ConfigError", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # every failure is reported as machine-readable JSON
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(jsonable(result), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())

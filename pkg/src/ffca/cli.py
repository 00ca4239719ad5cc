"""Command line entry point.

Exit codes: 0 success, 2 configuration problem, 3 data or artifact problem,
4 numerical failure. Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import errors as E
from .experiments import EXPERIMENTS, ExperimentConfig, cmd_analyze, cmd_track, run_experiment, verify_manifest

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

_CONFIG = (E.ConfigError, E.CostGuardError, E.SmoothingRequiredError, E.InvalidArchitectureError,
           E.InteractionUnavailableError)
_DATA = (E.DataError, E.InsufficientDataError, E.DimensionMismatchError, E.FeatureSetDriftError,
         FileNotFoundError)
_NUMERIC = (E.DivergenceError, E.SingularSystemError, E.UndefinedCorrelationError, E.UndefinedTakeoffError,
            ArithmeticError, FloatingPointError)


def exit_code_for(exc: BaseException) -> int:
    for classes, code in ((_CONFIG, EXIT_CONFIG), (_DATA, EXIT_DATA), (_NUMERIC, EXIT_NUMERIC)):
        if isinstance(exc, classes):
            return code
    if isinstance(exc, ValueError):
        return EXIT_CONFIG
    return EXIT_NUMERIC


def report(exc: BaseException, stage: str) -> int:
    code = exit_code_for(exc)
    payload = {"error": type(exc).__name__, "stage": getattr(exc, "stage", stage), "message": str(exc)}
    if isinstance(exc, E.DivergenceError):
        payload["epoch"] = exc.epoch
    print(json.dumps(payload), file=sys.stderr)
    return code


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ffca", description="Feature signatures, archetypes and training dynamics.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--hessian", choices=("diagonal", "full"))
    common.add_argument("--beta", type=float)
    common.add_argument("--capture-interval", type=int, dest="capture_interval")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="static analysis of one trained model")
    sub.add_parser("track", parents=[common], help="train while capturing signatures")
    e = sub.add_parser("experiment", parents=[common], help="run a scripted experiment")
    e.add_argument("name", nargs="?", help=f"one of: {', '.join(EXPERIMENTS)}")
    v = sub.add_parser("verify", parents=[common], help="re-hash the artifacts listed in a run manifest")
    v.add_argument("directory", nargs="?")
    return p


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return cfg.override(args.seed, args.hessian, args.beta, args.capture_interval, args.out)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    stage = "config"
    try:
        if args.command == "verify":
            stage = "verify"
            directory = args.directory or args.out
            if directory is None:
                raise E.ConfigError("verify needs a run directory")
            bad = verify_manifest(directory)
            if bad:
                raise E.DataError(f"artifacts missing or modified: {', '.join(bad)}")
            print(json.dumps({"verified": True, "directory": directory}))
            return EXIT_OK
        if args.command == "experiment":
            name, extra = args.name, {}
            if args.config:
                payload = _read_json(args.config)
                name = name or payload.get("name")
                extra = payload
            if name not in EXPERIMENTS:
                raise E.ConfigError(f"unknown experiment {name!r}; valid: {', '.join(EXPERIMENTS)}")
            seed = args.seed if args.seed is not None else int(extra.get("seed", 0))
            out = args.out or extra.get("out") or f"ffca_out/{name}"
            stage = "experiment"
            manifest = run_experiment(name, out, seed, args.hessian or extra.get("hessian"),
                                      args.beta or extra.get("beta"),
                                      args.capture_interval or extra.get("capture_interval"))
        else:
            cfg = _load(args)
            stage = args.command
            manifest = (cmd_analyze if args.command == "analyze" else cmd_track)(cfg)
        print(json.dumps({"verdicts": manifest["verdicts"], "files": len(manifest["files"])}, sort_keys=True))
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001 - every failure maps to an exit code
        return report(exc, stage)


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise E.ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise E.ConfigError(f"config {path} is not valid JSON: {exc}") from None


if __name__ == "__main__":
    sys.exit(main())

"""Command line: ``snlsim run | validate | list-presets``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import (
    ConfigError,
    config_hash,
    load_config_text,
    preset_names,
    read_config_text,
    resolve_seed,
)
from .io import atomic_write_text, write_json

__all__ = ["main", "run_experiment", "exit_status"]


def exit_status(verdict: dict) -> int:
    """0 iff the verdict passed."""
    return 0 if verdict.get("pass") is True else 1


def run_experiment(config_path: str, seed: int | None = None, threads: int | None = None,
                   out: str | None = None) -> tuple[dict, str]:
    """Validate, snapshot the config, run, and persist ``verdict.json``.

    Returns the verdict and the output directory.
    """
    from .experiments import run_kind

    text = read_config_text(config_path)
    cfg = load_config_text(text)
    seed = resolve_seed(seed, cfg)
    out = out or cfg.output or os.path.join("runs", cfg.kind)
    os.makedirs(out, exist_ok=True)
    atomic_write_text(os.path.join(out, "config.yaml"), text)
    base = {"experiment": cfg.kind, "seed": seed, "config_hash": config_hash(text)}
    try:
        verdict = {**base, **run_kind(cfg, seed, out, threads)}
    except (RuntimeError, ValueError, FloatingPointError) as exc:
        verdict = {**base, "pass": False, "metrics": {}, "tolerances": {},
                   "failures": [{"check": "exception", "reason": f"{type(exc).__name__}: {exc}"}]}
    write_json(verdict, os.path.join(out, "verdict.json"))
    return verdict, out


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="snlsim", description="Stochastic NLS experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", required=True, help="YAML file or preset:NAME")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--threads", type=int, default=None)
    run.add_argument("--out", default=None, help="output directory")
    val = sub.add_parser("validate", help="check a config file")
    val.add_argument("--config", required=True)
    sub.add_parser("list-presets", help="list bundled presets")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "list-presets":
        for name in preset_names():
            print(name)
        return 0
    try:
        if args.command == "validate":
            cfg = load_config_text(read_config_text(args.config))
            print(json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True))
            return 0
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError([("seed", "must be an unsigned 64-bit integer")])
        if args.threads is not None and args.threads < 1:
            raise ConfigError([("threads", "must be >= 1")])
        verdict, out = run_experiment(args.config, args.seed, args.threads, args.out)
    except ConfigError as exc:
        print(json.dumps({"pass": False, "failures": [{"key": k, "message": m} for k, m in exc.errors]}),
              file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"pass": False, "failures": [{"message": str(exc)}]}), file=sys.stderr)
        return 2
    print(json.dumps(verdict, sort_keys=True))
    return exit_status(verdict)


if __name__ == "__main__":
    sys.exit(main())

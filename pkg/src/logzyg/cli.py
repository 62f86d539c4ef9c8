"""Command-line entry point: one subcommand per pipeline stage plus the full run."""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
from pathlib import Path

from . import harness, io
from .config import ConfigError, ExperimentConfig, load_config

COMMANDS = {
    "analyze-coefficient": "coefficient",
    "verify-mollifier": "mollifier",
    "verify-lp": "lp",
    "verify-commutator": "commutator",
    "verify-schur": "schur",
    "run-energy": "energy",
    "verify-theorem": "theorem",
}


def _threads(n):
    if n is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _common(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies use SUPPRESS so flags given before the subcommand survive
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=d(None), help="TOML or JSON experiment config")
    common.add_argument("--out", type=Path, default=d(Path("reports")), help="output directory")
    common.add_argument("--seed", type=int, default=d(None), help="override the config seed")
    common.add_argument("--threads", type=int, default=d(None), help="cap BLAS/FFT thread pools")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common(True)
    p = argparse.ArgumentParser(prog="logzyg", parents=[_common(False)],
                                description="Numerical checks of the log-Zygmund energy estimate.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, stage in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=f"run the {stage} stage")
    rp = sub.add_parser("run-pipeline", parents=[common], help="run all seven stages")
    rp.add_argument("--keep-going", action="store_true", help="do not halt at the first failure")
    return p


def load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _print(res: harness.StageResult):
    line = f"{res.stage:12s} {res.status.upper():7s} {res.seconds:8.1f}s"
    if res.message:
        line += f"  {res.message}"
    print(line)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    with _threads(args.threads):
        if args.command == "run-pipeline":
            results = harness.run_pipeline(cfg, args.out, keep_going=args.keep_going)
            for r in results:
                _print(r)
            return 0 if all(r.passed for r in results) else 1
        res = harness.run_stage(COMMANDS[args.command], cfg, args.out)
        io.write_json(args.out / f"{res.stage}_summary.json", res.to_dict())
        _print(res)
        print(json.dumps(io._jsonable(res.key_metrics), indent=2, sort_keys=True))
        return 0 if res.passed else 1


if __name__ == "__main__":
    sys.exit(main())

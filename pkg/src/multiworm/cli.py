"""Command line entry point: ``multiworm {run,resume,merge,ed-diff,recipe,defaults}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from .config import ConfigError, defaults_table, load_config
from .estimators import EstimatorError
from .runner import Halted, RunError, execute, merge_runs, resume


def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace("schedule", seed=args.seed)
    if getattr(args, "chains", None) is not None:
        cfg = cfg.replace("schedule", n_chains=args.chains)
    if getattr(args, "checkpoint_every", None) is not None:
        cfg = cfg.replace("output", checkpoint_every=args.checkpoint_every)
    if getattr(args, "out", None) is not None:
        cfg = cfg.replace("output", directory=args.out)
    return cfg


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    root = execute(cfg, halt_after=args.halt_after)
    print(f"wrote {root}")
    return 0


def cmd_resume(args) -> int:
    root = resume(args.out, halt_after=args.halt_after)
    print(f"wrote {root}")
    return 0


def cmd_merge(args) -> int:
    root = merge_runs(args.runs, args.out)
    print(f"wrote {root}")
    return 0


def cmd_ed_diff(args) -> int:
    from .report import ed_diff
    text = ed_diff(args.out)
    sys.stdout.write(text)
    return 0


def cmd_recipe(args) -> int:
    from .recipes import collect, emit
    if args.collect:
        path = collect(args.figure, args.out)
    else:
        path = emit(args.figure, args.out, scale=args.scale, seed=args.seed)
    print(f"wrote {path}")
    return 0


def cmd_defaults(args) -> int:
    print(defaults_table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multiworm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the chains of a config and write outputs")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--chains", type=int)
    r.add_argument("--checkpoint-every", type=int, metavar="SWEEPS")
    r.add_argument("--halt-after", type=int, metavar="SEGMENTS", help=argparse.SUPPRESS)
    r.set_defaults(func=cmd_run)

    r = sub.add_parser("resume", help="continue an interrupted run from its checkpoints")
    r.add_argument("--out", required=True)
    r.add_argument("--halt-after", type=int, metavar="SEGMENTS", help=argparse.SUPPRESS)
    r.set_defaults(func=cmd_resume)

    r = sub.add_parser("merge", help="pool finished runs of one system as independent chains")
    r.add_argument("--out", required=True)
    r.add_argument("runs", nargs="+")
    r.set_defaults(func=cmd_merge)

    r = sub.add_parser("ed-diff", help="z-scores of a run's summary against exact diagonalization")
    r.add_argument("--out", required=True, help="run directory")
    r.set_defaults(func=cmd_ed_diff)

    r = sub.add_parser("recipe", help="emit or collect a reduced-scale figure recipe")
    r.add_argument("figure")
    r.add_argument("--out", required=True)
    r.add_argument("--scale", default="reduced", choices=["reduced", "smoke"])
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--collect", action="store_true",
                   help="assemble results of the recipe's finished runs")
    r.set_defaults(func=cmd_recipe)

    r = sub.add_parser("defaults", help="print the table of config keys and defaults")
    r.set_defaults(func=cmd_defaults)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Halted as exc:
        print(f"{exc}; continue with: multiworm resume --out DIR", file=sys.stderr)
        return 3
    except (ConfigError, RunError, EstimatorError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

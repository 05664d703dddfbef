"""Command line entry points for the generation toolchain.

Subcommands: canonicalize, correspond, generate, inspect. All read the same
run config file; --out/--seed/--jobs override its fields. Exit codes: 0 on
success, 2 on config or usage errors, 3 when a generation run completes
nothing. Log verbosity comes from DEMOFORGE_LOG (error|warn|info|debug).
"""

import argparse
import glob
import json
import logging
import os
import sys

from demoforge.errors import ConfigError, DemoforgeError
from demoforge.pipeline import (
    cmd_canonicalize,
    cmd_correspond,
    cmd_generate,
    cmd_inspect,
    load_run_config,
)

log = logging.getLogger("demoforge")

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_OUTPUT = 3


def _setup_logging() -> None:
    name = os.environ.get("DEMOFORGE_LOG", "warn").strip().lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(
        level=logging.WARNING if level is None else level,
        format="%(levelname)s %(name)s: %(message)s")
    if level is None:
        log.warning("unknown DEMOFORGE_LOG value %r, using warn", name)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demoforge",
        description="expand one annotated demonstration into a synthetic "
                    "dataset over novel meshes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True,
                        help="run config JSON; relative paths resolve "
                             "against its directory")
        sp.add_argument("--out", default=None,
                        help="output directory override")
        sp.add_argument("--seed", type=int, default=None,
                        help="master seed override")
        sp.add_argument("--jobs", type=int, default=None,
                        help="worker process count override")

    common(sub.add_parser(
        "canonicalize",
        help="align raw meshes to their canonical pose"))
    common(sub.add_parser(
        "correspond",
        help="transfer source keypoints onto every target mesh"))
    common(sub.add_parser(
        "generate",
        help="run the full mesh x pose generation fan-out"))
    p_inspect = sub.add_parser(
        "inspect", help="summarize one stored frame, optionally as PLY")
    common(p_inspect)
    p_inspect.add_argument("--demo", type=int, default=0)
    p_inspect.add_argument("--frame", type=int, default=0)
    return parser


def _run_canonicalize(cfg, out_override) -> int:
    out_dir = out_override if out_override else cfg.meshes_dir
    paths = sorted(glob.glob(os.path.join(cfg.raw_meshes_dir, "*.obj")))
    if not paths:
        raise ConfigError(f"no .obj meshes under {cfg.raw_meshes_dir}")
    report = cmd_canonicalize(paths, out_dir, cfg.canonical_overrides)
    report_path = os.path.join(out_dir, "canonicalize_report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(f"canonicalized {len(report['outputs'])}/{len(paths)} meshes "
          f"into {out_dir} ({len(report['degenerate'])} degenerate, "
          f"{len(report['warnings'])} warnings)")
    return EXIT_OK


def _run_correspond(cfg) -> int:
    report = cmd_correspond(cfg)
    print(f"correspond: {len(report['results'])} results, "
          f"{len(report['failures'])} failures -> {cfg.results_dir}")
    return EXIT_OK


def _run_generate(cfg) -> int:
    summary = cmd_generate(cfg)
    print(f"generated {summary['completed']}/{summary['requested']} demos "
          f"-> {cfg.out_dir}")
    if summary["requested"] > 0 and summary["completed"] == 0:
        log.error("every demo in the run failed")
        return EXIT_NO_OUTPUT
    return EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        # --out means the dataset destination only for generate; canonicalize
        # and inspect use it for their own outputs
        cfg = load_run_config(args.config, seed=args.seed, jobs=args.jobs,
                              out=args.out if args.command == "generate"
                              else None,
                              command=args.command)
        if args.command == "canonicalize":
            return _run_canonicalize(cfg, args.out)
        if args.command == "correspond":
            return _run_correspond(cfg)
        if args.command == "generate":
            return _run_generate(cfg)
        ply = None
        if args.out is not None:
            os.makedirs(args.out, exist_ok=True)
            ply = os.path.join(
                args.out, f"demo{args.demo}_frame{args.frame}.ply")
        print(cmd_inspect(cfg.out_dir, args.demo, args.frame, ply))
        return EXIT_OK
    except ConfigError as e:
        log.error("%s", e)
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DemoforgeError as e:
        log.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())

"""joinlab command line: one subcommand per pipeline stage, plus the full report."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, parse_config
from .orbit import CacheFormatError, EnumerationBudgetError
from .spectrum import InsufficientDataError

EXIT_OK, EXIT_CHECK, EXIT_DATA, EXIT_CONFIG = 0, 2, 3, 4


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", required=True,
                   help="experiment JSON, or the name of a bundled config (e.g. bending_pair)")
    p.add_argument("--out", help="output directory (default: <config out>/<config name>)")
    p.add_argument("--threads", type=int, help="worker threads for enumeration")
    p.add_argument("--max-word-length", type=int, dest="max_word_length",
                   help="enumeration depth L")
    p.add_argument("--seed", type=int, help="seed for sampled checks")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parent = _global_flags()
    ap = argparse.ArgumentParser(prog="joinlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "enumerate": "enumerate the orbit and write the dataset cache",
        "exponents": "critical, factor, Manhattan and min/max exponents",
        "indicator": "limit cone, growth indicator profile and dual vectors",
        "tent": "tent margins over the grid, gap and stretch inequalities",
        "limitset": "box dimension of the limit set and the dimension identities",
        "psmeasure": "Patterson-Sullivan approximations, shadow lemma and ball decay",
        "report": "every stage, then report.json, tables.txt, CSV exports and SVG plots",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[parent], help=text, description=text)
    return ap


def _out_dir(args, cfg) -> Path:
    return Path(args.out) if args.out else Path(cfg.out) / (cfg.name or "run")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
        cfg = cfg.with_overrides(max_word_length=args.max_word_length, seed=args.seed,
                                 threads=args.threads)
        if cfg.max_word_length < 2:
            raise ConfigError("--max-word-length must be at least 2")
    except ConfigError as err:
        print(f"joinlab: invalid config: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args, cfg)
    try:
        if args.command == "report":
            report, checks, status = pipeline.run_pipeline(cfg, out, args.threads)
            sys.stdout.write((out / "tables.txt").read_text())
            print(f"wrote {out / 'report.json'}")
            return status
        run = pipeline.Run(cfg, out, args.threads)
        if args.command == "enumerate":
            run.enumerate()
        result = pipeline.run_stage(run, args.command)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{args.command}.json").write_text(pipeline.dumps(pipeline.stage_document(run, result)))
        if args.command == "indicator":
            (out / "profile.csv").write_text(run.profile.to_csv())
        elif args.command == "limitset":
            pipeline.write_exports(run, out)
        print("\n".join(pipeline.table_lines(args.command, result["section"], result["checks"])))
        return pipeline.exit_status(result["checks"])
    except pipeline.MissingCacheError as err:
        print(f"joinlab: {err}", file=sys.stderr)
        return EXIT_DATA
    except (InsufficientDataError, EnumerationBudgetError) as err:
        print(f"joinlab: insufficient data: {err}", file=sys.stderr)
        return EXIT_DATA
    except CacheFormatError as err:
        print(f"joinlab: unreadable cache: {err}; rerun `joinlab enumerate`", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

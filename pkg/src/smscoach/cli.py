"""Command line: simulate, analyze, replay, report, templates.

Exit codes: 0 success, 1 invalid input (config, flags, or an analysis that
cannot be computed), 2 a log that fails integrity checks or replay.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .analysis.report import SECTIONS, analyze, report_markdown
from .analysis.stats import AnalysisError
from .config import ConfigError, load_config
from .core import TEMPLATES, CoachError
from .eventlog import LogError, read_log

OUT_DIR_ENV = "SMSCOACH_OUT_DIR"

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INTEGRITY = 2

log = logging.getLogger("smscoach")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _out_dir(arg: Optional[str]) -> Path:
    value = arg or os.environ.get(OUT_DIR_ENV)
    if not value:
        raise ConfigError([f"--out: required (or set {OUT_DIR_ENV})"])
    return Path(value)


def cmd_simulate(args) -> int:
    from .engine import run_experiment

    config = load_config(args.config)
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    out = _out_dir(args.out)
    log.info("simulating seed %d for %d weeks", config.seed, config.horizon_weeks)
    result = run_experiment(config)
    log_path, models_path = result.write(out)
    print(log_path)
    print(models_path)
    return EXIT_OK


def cmd_analyze(args) -> int:
    log_file = read_log(args.log)
    summary, files = analyze(log_file, _out_dir(args.out), args.which)
    for f in files:
        print(f)
    return EXIT_OK


def cmd_replay(args) -> int:
    from .replay import replay

    report = replay(args.log)
    print(
        f"replay ok: {report.decisions} decisions, {report.rewards} rewards, "
        f"{report.models} models, {report.events} events"
    )
    return EXIT_OK


def cmd_report(args) -> int:
    text = report_markdown(read_log(args.log))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_templates(args) -> int:
    for kind, text in TEMPLATES.items():
        if text:
            print(f"{kind.value}: {text}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    p = _Parser(prog="smscoach", description="Simulate and analyze adaptive SMS activity coaching.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="run one seeded experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV})")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", parents=[common], help="write analysis CSVs for a log")
    a.add_argument("--log", required=True)
    a.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV})")
    a.add_argument("--which", choices=SECTIONS + ("all",), default="all")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("replay", parents=[common], help="verify every decision, reward and model in a log")
    r.add_argument("--log", required=True)
    r.set_defaults(func=cmd_replay)

    m = sub.add_parser("report", parents=[common], help="markdown summary of all analyses")
    m.add_argument("--log", required=True)
    m.add_argument("--out", help="write to this file instead of stdout")
    m.set_defaults(func=cmd_report)

    t = sub.add_parser("templates", parents=[common], help="print the message texts")
    t.set_defaults(func=cmd_templates)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except LogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (ConfigError, AnalysisError, CoachError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line driver for timed non-repudiation analysis.

Usage:
    python tools/paylogic.py analyze protocols/netbill.ppl
    python tools/paylogic.py analyze protocols/netbill.ppl --check accountability --format text
    python tools/paylogic.py analyze protocols/netbill.ppl --oracle

Exit codes: 0 all requested checks pass, 1 a check fails or the oracle
disagrees, 2 usage or parse error, 3 a check is inconclusive.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

# Add lib to path for imports
_lib_path = Path(__file__).parent.parent / "lib"
if str(_lib_path) not in sys.path:
    sys.path.insert(0, str(_lib_path))

from api import build_report, render_report  # type: ignore
from core.config import Settings  # type: ignore
from core.messages import Knowledge  # type: ignore
from core.timing import entails, render_atom  # type: ignore
from dsl.parser import ParseResult, SourceFile, parse  # type: ignore
from oracle.brute_force import GridSpec, bf_closure, bf_fairness, bf_timed_refutation  # type: ignore
from services.analysis import CHECKS, FAIL, INCONCLUSIVE, analyze  # type: ignore
from services.protocol import full_config, run, timing_system, waiting_condition  # type: ignore

logger = logging.getLogger("paylogic")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_INCONCLUSIVE = 3


def _checks(value: str) -> List[str]:
    names = [name.strip() for name in value.split(",") if name.strip()]
    unknown = [name for name in names if name not in CHECKS]
    if unknown or not names:
        raise argparse.ArgumentTypeError(
            f"unknown check {', '.join(unknown) or value!r}; choose from {', '.join(CHECKS)}"
        )
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paylogic", description="Timed non-repudiation analysis of payment protocols")
    commands = parser.add_subparsers(dest="command", required=True)
    analyze_cmd = commands.add_parser("analyze", help="Analyze a .ppl protocol description")
    analyze_cmd.add_argument("file", help="Path to the .ppl file")
    analyze_cmd.add_argument("--check", type=_checks, help=f"Comma-separated subset of {','.join(CHECKS)}")
    analyze_cmd.add_argument("--format", choices=("json", "text"), default="json", help="Report format (default: json)")
    analyze_cmd.add_argument("--depth", type=int, help="Prover depth limit (default: PAYLOGIC_DEPTH_LIMIT or 12)")
    analyze_cmd.add_argument("--oracle", action="store_true", help="Cross-check against the brute-force oracles")
    return parser


def oracle_disagreements(parsed: ParseResult, report, settings: Settings) -> List[str]:
    """Differences between the engine and the brute-force checkers on this protocol."""
    problems: List[str] = []
    spec, evidence = parsed.spec, parsed.evidence
    for party, timeline in sorted(run(spec, full_config(spec)).timelines.items()):
        for label, held in timeline.entries:
            if Knowledge(held).closure != frozenset(bf_closure(held)):
                problems.append(f"closure of {party} at {label} differs from brute force")
    grid = GridSpec((), high=settings.oracle_grid_high, step=settings.grid_step)
    fairness = report.verdicts.get("fairness")
    if fairness is not None and fairness.subchecks:
        engine = {v.config.describe() for v in fairness.violations}
        oracle = {config.describe() for config, _ in bf_fairness(spec, evidence, grid)}
        for state in sorted(oracle - engine):
            problems.append(f"oracle fairness violation {state} not reported by the engine")
        for state in sorted(engine - oracle):
            problems.append(f"engine fairness violation {state} has no grid model")
    if "timeliness" in report.verdicts or fairness is not None:
        sys = timing_system(spec, full_config(spec))
        for party, timeout in sorted(spec.timeouts.items()):
            for atom in waiting_condition(spec, timeout):
                engine_holds = entails(sys, atom)
                oracle_holds = bf_timed_refutation(sys, atom, grid) is None
                if engine_holds != oracle_holds:
                    problems.append(
                        f"waiting condition {render_atom(atom)} of {party}: engine "
                        f"{'entails' if engine_holds else 'refutes'} it, brute force "
                        f"{'finds no' if oracle_holds else 'finds a'} refuting grid model"
                    )
    logger.info("oracle comparison found %d disagreements", len(problems))
    return problems


def run_analyze(args: argparse.Namespace, settings: Settings) -> int:
    path = Path(args.file)
    if not path.is_file():
        print(f"Error: file not found: {path}", file=sys.stderr)
        return EXIT_USAGE
    parsed = parse(SourceFile.load(path))
    for diagnostic in parsed.diagnostics:
        print(f"{path}:{diagnostic.describe()}", file=sys.stderr)
    if not parsed.ok:
        return EXIT_USAGE

    depth = args.depth if args.depth is not None else settings.depth_limit
    report = analyze(parsed.spec, parsed.evidence, checks=args.check, depth_limit=depth)
    sys.stdout.buffer.write(render_report(build_report(report), args.format))
    sys.stdout.flush()

    statuses = report.statuses()
    code = EXIT_OK
    if INCONCLUSIVE in statuses.values():
        code = EXIT_INCONCLUSIVE
    if FAIL in statuses.values():
        code = EXIT_FAIL
    if args.oracle:
        problems = oracle_disagreements(parsed, report, settings)
        for problem in problems:
            print(f"oracle: {problem}", file=sys.stderr)
        if problems:
            code = EXIT_FAIL
    return code


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    try:
        settings = Settings.from_env()
    except ValueError as err:
        print(f"Error: invalid PAYLOGIC_* setting: {err}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=settings.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")

    if args.depth is not None and args.depth < 1:
        print("Error: --depth must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    return run_analyze(args, settings)


if __name__ == "__main__":
    raise SystemExit(main())

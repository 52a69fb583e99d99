"""
Command-line entry point and corpus harness

    minirace [--machdep=lp64] [--strategy=combined] input.c
    minirace --oracle input.c
    minirace data/corpus --jobs 4

Exit status: 0 no race, 1 race, 2 unknown, 64 parse error or unsupported feature.
"""

import argparse
from collections import Counter
import json
import logging
from multiprocessing import Pool
import os
import sys
import time

import numpy as np

from processing.loader import CorpusLoader
from .config import AnalysisConfig, OracleBounds, STRATEGIES
from .frontend import AnalysisError, ParseError, UnsupportedFeature, build_cfg, parse_program
from .oracle import BOUND_EXCEEDED, NO_RACE as ORACLE_NO_RACE, RACE as ORACLE_RACE, oracle_check
from .race_detect import NO_RACE, RACE, UNKNOWN, Verdict, analyze

logger = logging.getLogger(__name__)

EXIT_NO_RACE = 0
EXIT_RACE = 1
EXIT_UNKNOWN = 2
EXIT_UNSUPPORTED = 64

EXIT_CODES = {NO_RACE: EXIT_NO_RACE, RACE: EXIT_RACE, UNKNOWN: EXIT_UNKNOWN}

CATEGORIES = (
    "correct-true", "correct-false", "wrong-true", "wrong-false", "unknown", "unsupported", "unverified",
)


def report_json(verdict: Verdict, time_ms: int) -> dict:
    """The stable JSON form of a verdict"""
    races = []
    for report in verdict.reports:
        races.append({
            "level": report.level,
            "base": str(report.base),
            "offsets": report.offsets,
            "access1": _access_json(report.a1),
            "access2": _access_json(report.a2),
            "locksets1": report.locksets1,
            "locksets2": report.locksets2,
            "trace1": report.trace1,
            "trace2": report.trace2,
        })
    return {
        "verdict": verdict.word,
        "unsupported": verdict.unsupported_reason,
        "races": races,
        "stats": {"threads": verdict.threads, "contexts": verdict.contexts, "time_ms": time_ms},
    }


def _access_json(access) -> dict:
    return {"file": access.loc.file, "line": access.loc.line, "thread": access.thread, "kind": access.kind}


def write_json(path: str, data: dict):
    with open(path, "w") as f:
        json.dump(data, f, indent=4)
    logger.info("saved report to %s", path)


def analyze_source(text: str, filename: str, config: AnalysisConfig) -> Verdict:
    """Parse and analyze one program; frontend errors propagate"""
    program = parse_program(text, config["machdep"], filename, config)
    return analyze(program, build_cfg(program), config)


def oracle_source(text: str, filename: str, config: AnalysisConfig):
    program = parse_program(text, config["machdep"], filename, config)
    return oracle_check(
        program, build_cfg(program), config.oracle_bounds,
        nondet_values=config["oracle_nondet_values"],
    )


def run(args) -> int:
    """Analyze (or explore with the oracle) a single file and print the verdict line"""
    config = _config(args)
    with open(args.input) as f:
        text = f.read()
    filename = os.path.basename(args.input)

    start = time.perf_counter()
    try:
        if args.oracle:
            result = oracle_source(text, filename, config)
            print(f"verdict: {result.word}")
            for trap in result.traps:
                logger.warning("trap at statement %s: %s", trap.stmt_id, trap.message)
            return {ORACLE_RACE: EXIT_RACE, ORACLE_NO_RACE: EXIT_NO_RACE, BOUND_EXCEEDED: EXIT_UNKNOWN}[result.kind]
        verdict = analyze_source(text, filename, config)
    except (ParseError, UnsupportedFeature) as error:
        print(f"[ERROR] {error}", file=sys.stderr)
        if args.json:
            feature = getattr(error, "feature", "parse error")
            write_json(args.json, report_json(Verdict(UNKNOWN, unsupported_reason=feature), 0))
        return EXIT_UNSUPPORTED
    time_ms = 0 if args.no_time else int(round((time.perf_counter() - start) * 1000))

    if verdict.unsupported_reason is not None:
        print(f"[ERROR] unsupported feature: {verdict.unsupported_reason}", file=sys.stderr)
        if args.json:
            write_json(args.json, report_json(verdict, time_ms))
        return EXIT_UNSUPPORTED

    print(verdict)
    for report in verdict.reports:
        print(report)
    if verdict.reason:
        logger.info("reason: %s", verdict.reason)
    if args.json:
        write_json(args.json, report_json(verdict, time_ms))
    return EXIT_CODES[verdict.kind]


# Corpus

def categorize(verdict: str, truth: str | None) -> str:
    """Score an analyzer verdict word against the ground truth word"""
    if verdict == "unsupported":
        return "unsupported"
    if truth is None:
        return "unverified"
    if verdict == "unknown":
        return "unknown"
    if verdict == "no-race":
        return "correct-true" if truth == "no-race" else "wrong-true"
    return "correct-false" if truth == "race" else "wrong-false"


def score_file(task) -> dict:
    """Analyzer verdict, oracle verdict and category of one corpus file"""
    path, settings, bounds, no_time = task
    config = AnalysisConfig(**settings)
    entry = CorpusLoader(os.path.dirname(path)).load(path)
    row = {"file": entry.name, "expected": entry.expected, "verdict": None, "oracle": None}

    start = time.perf_counter()
    try:
        verdict = analyze_source(entry.text, entry.name, config)
        row["verdict"] = "unsupported" if verdict.unsupported_reason else verdict.word
    except AnalysisError as error:
        row["verdict"] = "unsupported"
        row["reason"] = str(error)
    row["time_ms"] = 0.0 if no_time else (time.perf_counter() - start) * 1000

    truth = None
    if row["verdict"] != "unsupported":
        result = oracle_source(entry.text, entry.name, config.with_oracle_bounds(bounds))
        row["oracle"] = result.word if result.kind != BOUND_EXCEEDED else "bound-exceeded"
        if result.kind != BOUND_EXCEEDED:
            truth = result.word
    row["category"] = categorize(row["verdict"], truth)
    return row


def run_corpus(directory: str, bounds: OracleBounds | None = None, config: AnalysisConfig | None = None,
               jobs: int = 1, no_time: bool = False) -> dict:
    """Score every file of a corpus directory against the oracle

    Args:
        directory: Folder of .c files with `// expect:` headers
        bounds: Oracle bounds. Taken from config when None
        config: Analysis settings shared by every file
        jobs: Worker processes
        no_time: Report every time as 0

    Returns:
        {"files": rows ordered by name, "counts": category counts, "total": n, "time": stats}
    """
    config = config or AnalysisConfig()
    bounds = bounds or config.oracle_bounds
    tasks = [(path, dict(config), bounds, no_time) for path in CorpusLoader(directory).files()]

    start = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        with Pool(jobs) as pool:
            rows = pool.map(score_file, tasks)
    else:
        rows = [score_file(task) for task in tasks]
    wall = 0.0 if no_time else time.perf_counter() - start

    rows.sort(key=lambda r: r["file"])
    for row in rows:
        expected, oracle = row["expected"], row["oracle"]
        if expected in ("race", "no-race") and oracle in ("race", "no-race") and expected != oracle:
            logger.warning("%s: header expects %s, oracle says %s", row["file"], expected, oracle)

    counts = Counter({category: 0 for category in CATEGORIES})
    counts.update(row["category"] for row in rows)
    times = np.array([row["time_ms"] for row in rows], dtype=float)
    return {
        "files": rows,
        "counts": dict(counts),
        "total": len(rows),
        "time": {
            "wall_s": wall,
            "mean_ms": float(times.mean()) if times.size else 0.0,
            "median_ms": float(np.median(times)) if times.size else 0.0,
            "max_ms": float(times.max()) if times.size else 0.0,
        },
    }


def print_corpus(summary: dict):
    print(f"{'file':32} {'expected':12} {'oracle':16} {'verdict':12} category")
    for row in summary["files"]:
        print(
            f"{row['file']:32} {str(row['expected']):12} {str(row['oracle']):16} "
            f"{row['verdict']:12} {row['category']}"
        )
    print()
    for category in CATEGORIES:
        print(f"{category:15}: {summary['counts'][category]}")
    print(f"{'total':15}: {summary['total']}")
    t = summary["time"]
    print(f"time: {t['wall_s']:.2f} s wall, {t['mean_ms']:.1f} ms mean, {t['max_ms']:.1f} ms max per file")


# Arguments

def _config(args) -> AnalysisConfig:
    bounds = OracleBounds.parse(args.oracle_bounds) if args.oracle_bounds else None
    config = AnalysisConfig(machdep=args.machdep, strategy=args.strategy, call_depth=args.call_depth)
    return config.with_oracle_bounds(bounds) if bounds else config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minirace",
        description="Static data-race detection for a pthread subset of C",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="exit status: 0 no race, 1 race, 2 unknown, 64 unsupported input",
    )
    parser.add_argument("input", type=str, help="C file, or a corpus directory")
    parser.add_argument("--machdep", choices=("ilp32", "lp64"), default=None, help="Machine model (default: lp64)")
    parser.add_argument("--strategy", choices=STRATEGIES, default=None, help="Initial-state strategy (default: combined)")
    parser.add_argument("--call-depth", type=int, default=None, help="Call-string length K (default: 2)")
    parser.add_argument("--json", type=str, default=None, help="Write the JSON report to this path")
    parser.add_argument("--oracle", action="store_true", help="Run the interleaving oracle instead of the analyzer")
    parser.add_argument("--oracle-bounds", type=str, default=None, help="Oracle bounds L,T,S (default: 8,4,1000000)")
    parser.add_argument("--no-time", action="store_true", help="Report time_ms as 0")
    parser.add_argument("--jobs", type=int, default=1, help="Worker processes for a corpus directory")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="[%(levelname)s] %(message)s", force=True)

    try:
        if os.path.isdir(args.input):
            config = _config(args)
            summary = run_corpus(args.input, config.oracle_bounds, config, args.jobs, args.no_time)
            print_corpus(summary)
            if args.json:
                write_json(args.json, summary)
            return 0
        return run(args)
    except ValueError as error:
        parser.error(str(error))
    except OSError as error:
        print(f"[ERROR] {error}", file=sys.stderr)
        return EXIT_UNSUPPORTED


if __name__ == "__main__":
    sys.exit(main())

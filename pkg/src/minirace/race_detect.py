"""
Race pairing, active waiting detection and verdicts

A may race needs a write, possible parallelism, no common lock on every
path and overlapping bytes. A must race additionally needs certain
parallelism, no common lock on any path, the same single offset, a strong
base, must-reachable contexts and locksets that did not overflow.
"""

from dataclasses import dataclass, field
import logging

import networkx as nx

from .active_threads import compute_lifecycle, may_parallel, must_parallel
from .config import AnalysisConfig
from .frontend import (
    ASSIGN, BREAK, CONTINUE, Const, Deref, Field, Guard, Index, Stmt, UnsupportedFeature,
    Var, build_cfg,
)
from .lockset import compute_locksets, may_guarded, must_guarded
from .mem_access import WRITE, candidate_bases, classify_bases, collect_accesses
from .thread_system import solve

logger = logging.getLogger(__name__)

RACE = "RACE"
NO_RACE = "NO_RACE"
UNKNOWN = "UNKNOWN"

VERDICT_WORDS = {RACE: "race", NO_RACE: "no-race", UNKNOWN: "unknown"}


@dataclass(frozen=True)
class RaceConditions:
    """Which race conditions hold for certain rather than possibly"""

    write: bool
    parallel: bool
    unguarded: bool
    overlap: bool

    @property
    def certain(self) -> bool:
        return self.write and self.parallel and self.unguarded and self.overlap


@dataclass
class RaceReport:
    level: str
    a1: object
    a2: object
    reason: RaceConditions
    trace1: list = field(default_factory=list)
    trace2: list = field(default_factory=list)
    locksets1: list = field(default_factory=list)
    locksets2: list = field(default_factory=list)

    @property
    def base(self):
        return self.a1.base

    @property
    def offsets(self) -> list:
        span = self.a1.span.meet(self.a2.span)
        return [int(span.lo), int(span.hi)]

    @property
    def trace_hint(self) -> tuple[list, list]:
        return self.trace1, self.trace2

    def key(self):
        return (self.base, tuple(self.offsets), tuple(sorted((self.a1.stmt_id, self.a2.stmt_id))))

    def __str__(self):
        first, second = self.a1, self.a2
        return (
            f"Data race ({self.level}) on {self.base} bytes {self.offsets}: "
            f"{first.kind} by {first.thread} at {first.loc.file}:{first.loc.line} and "
            f"{second.kind} by {second.thread} at {second.loc.file}:{second.loc.line}"
        )


@dataclass
class Verdict:
    kind: str
    reports: list = field(default_factory=list)
    unsupported_reason: str | None = None
    reason: str | None = None
    threads: int = 0
    contexts: int = 0

    @property
    def word(self) -> str:
        return VERDICT_WORDS[self.kind]

    def __str__(self):
        return f"verdict: {self.word}"


def trace_to(table, ctx) -> list[int]:
    """Statement ids along a shortest supergraph path from the thread entry"""
    summary = table.summaries[ctx.thread]
    target = summary.context_nodes[ctx]
    try:
        path = nx.shortest_path(summary.graph, summary.entry_node, target)
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return [ctx.stmt]
    stmts = []
    for u, v in zip(path, path[1:]):
        data = min(summary.graph.get_edge_data(u, v).values(), key=lambda d: d["label"].id)
        stmts.append(data["label"].id)
    stmts.append(ctx.stmt)
    return stmts


def _is_pair_candidate(a1, a2, table) -> bool:
    if a1.atomic or a2.atomic:
        return False
    if WRITE not in (a1.kind, a2.kind):
        return False
    if a1 is a2 or a1 == a2:
        return table.is_multi(a1.thread) and a1.kind == WRITE
    return a1.overlaps(a2)


def detect_races(accesses, locksets, facts, table, candidates) -> list[RaceReport]:
    """May and must race reports over accesses to candidate bases"""
    by_base: dict = {}
    for access in accesses:
        if access.base in candidates:
            by_base.setdefault(access.base, []).append(access)

    reports: dict = {}
    for base in sorted(by_base):
        group = by_base[base]
        for i, a1 in enumerate(group):
            for a2 in group[i:]:
                if not _is_pair_candidate(a1, a2, table):
                    continue
                c1, c2 = a1.context, a2.context
                if not may_parallel(facts, table, c1, c2):
                    continue
                if must_guarded(locksets, c1, c2):
                    continue
                conditions = RaceConditions(
                    write=WRITE in (a1.kind, a2.kind),
                    parallel=(
                        must_parallel(facts, table, c1, c2)
                        and table.state(c1).reachable
                        and table.state(c2).reachable
                    ),
                    unguarded=(
                        not may_guarded(locksets, c1, c2)
                        and c1 not in locksets.overflowed
                        and c2 not in locksets.overflowed
                    ),
                    overlap=(
                        a1.offset.is_singleton
                        and a1.offset == a2.offset
                        and not (base.kind == "dynamic" and base.weak)
                    ),
                )
                must = conditions.certain
                report = RaceReport(
                    "must" if must else "may",
                    a1,
                    a2,
                    conditions,
                    locksets1=locksets.render(c1),
                    locksets2=locksets.render(c2),
                )
                key = report.key()
                known = reports.get(key)
                if known is None or (known.level == "may" and must):
                    reports[key] = report

    result = sorted(reports.values(), key=lambda r: (r.level != "must", r.key()))
    for report in result:
        report.trace1 = trace_to(table, report.a1.context)
        report.trace2 = trace_to(table, report.a2.context)
    return result


# Active waiting

def _plain_read(expr) -> bool:
    if isinstance(expr, (Var, Const)):
        return True
    if isinstance(expr, Deref):
        return _plain_read(expr.operand)
    if isinstance(expr, Index):
        return _plain_read(expr.base) and _plain_read(expr.index)
    if isinstance(expr, Field):
        return _plain_read(expr.base)
    return False


def _read_names(expr) -> set:
    if expr is None:
        return set()
    names = {expr.name} if isinstance(expr, Var) else set()
    for child in expr.children():
        names |= _read_names(child)
    return names


def _waiting_edge(label, locals_: set, watched: set) -> bool:
    if isinstance(label, Guard):
        return True
    if label.kind in (BREAK, CONTINUE):
        return True
    if label.kind == ASSIGN:
        return (
            isinstance(label.target, Var)
            and label.target.name in locals_
            and _plain_read(label.value)
            and _read_names(label.value) <= watched
        )
    return False


def detect_active_waiting(cfgs, program=None) -> bool:
    """Whether some loop body only re-reads its condition's variables until they change

    Assignments count as re-reads only when program is given, so that their
    targets are known to be locals.
    """
    for name in sorted(cfgs):
        cfg = cfgs[name]
        locals_ = set()
        if program is not None:
            locals_ = {n for n, _ in program.functions[name].locals}
        for head, stmt in cfg.loop_heads.items():
            watched = _read_names(stmt.value)
            body = [(u, label, v) for u, label, v in cfg.edges if _in_loop(label, stmt)]
            if all(_waiting_edge(label, locals_, watched) for _, label, _ in body):
                logger.info("active waiting in %s at line %d", name, stmt.loc.line)
                return True
    return False


def _in_loop(label, loop: Stmt) -> bool:
    target = label.stmt if isinstance(label, Guard) else label
    if isinstance(label, Guard) and label.stmt is loop:
        return False
    return _contains(loop.body, target) or _contains(loop.step, target)


def _contains(stmts, target) -> bool:
    for stmt in stmts:
        if stmt is target:
            return True
        if _contains(stmt.body, target) or _contains(stmt.orelse, target) or _contains(stmt.step, target):
            return True
    return False


# Pipeline

@dataclass
class StrategyResult:
    strategy: str
    table: object
    locksets: object
    facts: object
    accesses: list
    states: dict
    reports: list

    @property
    def must_reports(self) -> list:
        return [r for r in self.reports if r.level == "must"]


def run_strategy(program, cfgs, strategy: str, config: AnalysisConfig | None = None) -> StrategyResult:
    config = config or AnalysisConfig()
    table = solve(program, cfgs, strategy, config)
    visits = int(config["dataflow_visits"])
    locksets = compute_locksets(table, cfgs, int(config["lockset_cap"]), visits)
    facts = compute_lifecycle(table, cfgs, visits)
    accesses = collect_accesses(table)
    states = classify_bases(accesses, facts, table)
    reports = detect_races(accesses, locksets, facts, table, candidate_bases(states))
    logger.info(
        "%s: %d accesses, %d may and %d must reports",
        strategy, len(accesses),
        sum(r.level == "may" for r in reports),
        sum(r.level == "must" for r in reports),
    )
    return StrategyResult(strategy, table, locksets, facts, accesses, states, reports)


def _stats(verdict: Verdict, result: StrategyResult) -> Verdict:
    verdict.threads = len(result.table.classes)
    verdict.contexts = result.table.context_count()
    return verdict


def single_strategy_verdict(program, cfgs, strategy: str, config: AnalysisConfig | None = None) -> Verdict:
    """under may only claim RACE, over may only claim NO_RACE"""
    try:
        result = run_strategy(program, cfgs, strategy, config)
    except UnsupportedFeature as error:
        return Verdict(UNKNOWN, unsupported_reason=error.feature, reason=str(error))
    if strategy == "under":
        must = result.must_reports
        if must:
            return _stats(Verdict(RACE, must), result)
        return _stats(Verdict(UNKNOWN, result.reports, reason="no must race"), result)
    if not result.reports:
        return _stats(Verdict(NO_RACE), result)
    return _stats(Verdict(UNKNOWN, result.reports, reason="may races remain"), result)


def combined_verdict(program, cfgs=None, config: AnalysisConfig | None = None) -> Verdict:
    """Over-approximation first, then under-approximation when inconclusive"""
    cfgs = cfgs if cfgs is not None else build_cfg(program)
    if detect_active_waiting(cfgs, program):
        return Verdict(UNKNOWN, reason="active waiting")
    over = single_strategy_verdict(program, cfgs, "over", config)
    if over.kind == NO_RACE or over.unsupported_reason is not None:
        return over
    under = single_strategy_verdict(program, cfgs, "under", config)
    if under.kind == RACE or under.unsupported_reason is not None:
        return under
    over.reason = "no must race"
    return over


def analyze(program, cfgs=None, config: AnalysisConfig | None = None) -> Verdict:
    """Verdict for the strategy selected in config"""
    config = config or AnalysisConfig()
    cfgs = cfgs if cfgs is not None else build_cfg(program)
    if config["strategy"] == "combined":
        return combined_verdict(program, cfgs, config)
    return single_strategy_verdict(program, cfgs, config["strategy"], config)

"""
Thread classes and their initial states

Thread classes are keyed by entry function. The table is solved either by
under-approximation (each class starts from the join of its creators' states
at the create statements, writes stay thread-local) or by over-approximation
(each class starts from everything any thread may have encountered, with weak
stores to shared memory).
"""

from collections import Counter
from dataclasses import dataclass, field
import logging

import networkx as nx

from .absint import (
    AbsState, AbsVal, Base, Cell, Evaluator, Frame, STRONG, WEAK,
    analyze_thread, call_graph, global_init_state, join_states, overlay_states, widen_states,
)
from .config import AnalysisConfig
from .frontend import AddrOf, CREATE, UnsupportedFeature, Var

logger = logging.getLogger(__name__)

MAIN = "main"


class EntryUnresolved(UnsupportedFeature):

    def __init__(self, loc=None):
        super().__init__("unresolved thread entry", loc)


@dataclass
class ThreadClass:
    id: str
    entry: str
    creators: set = field(default_factory=set)
    multi_instance: bool = False

    def __str__(self):
        flag = " (multi-instance)" if self.multi_instance else ""
        return f"{self.id}{flag}"


@dataclass
class ThreadTable:
    program: object
    cfgs: dict
    strategy: str
    classes: dict = field(default_factory=dict)
    init_states: dict = field(default_factory=dict)
    summaries: dict = field(default_factory=dict)
    analysis_counts: Counter = field(default_factory=Counter)
    rounds: int = 0

    def ids(self) -> list[str]:
        return sorted(self.classes, key=lambda c: (c != MAIN, c))

    def contexts(self):
        """Every (Context, AbsState) pair of every class, in a stable order"""
        for cid in self.ids():
            summary = self.summaries[cid]
            for ctx in sorted(summary, key=_context_key):
                yield ctx, summary[ctx]

    def state(self, ctx) -> AbsState:
        return self.summaries[ctx.thread][ctx]

    def node(self, ctx):
        return self.summaries[ctx.thread].context_nodes[ctx]

    def frame(self, ctx) -> Frame:
        cs, fn, _ = self.node(ctx)
        return self.summaries[ctx.thread].frames.get((cs, fn)) or Frame.of(
            self.program, ctx.thread, fn, cs
        )

    def is_multi(self, cid: str) -> bool:
        return self.classes[cid].multi_instance

    def context_count(self) -> int:
        return sum(len(s) for s in self.summaries.values())


def _context_key(ctx):
    return (len(ctx.call_string), ctx.call_string, ctx.stmt)


def resolve_entries(stmt, state: AbsState, frame: Frame, evaluator: Evaluator | None = None) -> list[str]:
    """Function names a create statement may start

    Raises:
        EntryUnresolved: the entry value holds anything but function addresses
    """
    entry = stmt.entry
    if isinstance(entry, AddrOf):
        entry = entry.operand
    if isinstance(entry, Var) and entry.ctype is not None and entry.ctype.kind == "function":
        return [entry.name]
    value = (evaluator or Evaluator()).eval(state, stmt.entry, frame)
    bases = value.bases()
    if not bases or any(b.kind != "function" for b in bases):
        raise EntryUnresolved(stmt.loc)
    return sorted(b.name for b in bases)


def formal_base(program, entry: str) -> Base | None:
    function = program.functions[entry]
    if not function.formals:
        return None
    name, ctype = function.formals[0]
    return Base("formal", name, entry, (), entry, ctype=ctype)


def thread_argument_binding(program, create_stmt, state: AbsState, frame: Frame,
                            evaluator: Evaluator | None = None) -> dict[str, AbsState]:
    """Entry function -> state fragment binding its formal to the create argument"""
    evaluator = evaluator or Evaluator()
    value = evaluator.eval(state, create_stmt.value, frame)
    bindings = {}
    for entry in resolve_entries(create_stmt, state, frame, evaluator):
        base = formal_base(program, entry)
        env = {} if base is None else {Cell(base, 0, base.size or 1): value}
        bindings[entry] = AbsState(env, True)
    return bindings


def _pointee_closure(state: AbsState, value: AbsVal) -> set[Base]:
    seen = set()
    todo = list(value.bases())
    while todo:
        base = todo.pop()
        if base in seen:
            continue
        seen.add(base)
        for cell in state.cells(base):
            todo.extend(state.env[cell].bases())
    return seen


def _shared(base: Base) -> bool:
    return base.is_shared_kind


def static_creation_graph(program) -> nx.DiGraph:
    """Entry -> entry edges for creates naming their entry syntactically"""
    calls = call_graph(program)
    graph = nx.DiGraph()
    graph.add_node(MAIN)
    pending, seen = [MAIN], set()
    while pending:
        entry = pending.pop()
        if entry in seen:
            continue
        seen.add(entry)
        for fn in nx.descendants(calls, entry) | {entry}:
            for stmt in _creates(program, fn):
                target = stmt.entry.operand if isinstance(stmt.entry, AddrOf) else stmt.entry
                if isinstance(target, Var) and target.name in program.functions:
                    graph.add_edge(entry, target.name)
                    pending.append(target.name)
    return graph


def _creates(program, fn: str) -> list:
    return [
        s for s in program.stmts.values()
        if s.kind == CREATE and program.stmt_function[s.id] == fn
    ]


def _rank(program) -> dict[str, int]:
    graph = static_creation_graph(program)
    if nx.is_directed_acyclic_graph(graph):
        order = list(nx.lexicographical_topological_sort(graph))
    else:
        condensed = nx.condensation(graph)
        order = []
        for component in nx.lexicographical_topological_sort(
            condensed, key=lambda c: min(condensed.nodes[c]["members"])
        ):
            order.extend(sorted(condensed.nodes[component]["members"]))
    return {entry: k for k, entry in enumerate(order)}


class _Solver:

    def __init__(self, program, cfgs, strategy: str, config: AnalysisConfig, multi: set):
        self.program = program
        self.cfgs = cfgs
        self.strategy = strategy
        self.config = config
        self.multi = multi
        self.rank = _rank(program)
        self.main_init = global_init_state(program, int(config["array_cells"]))
        self.evaluator = Evaluator(int(config["array_cells"]), defaults=self.main_init)
        self.table = ThreadTable(program, cfgs, strategy)

    def _order(self, cid: str):
        return (self.rank.get(cid, len(self.rank)), cid)

    def analyze(self, cid: str, init: AbsState, mode: str):
        self.table.analysis_counts[cid] += 1
        logger.debug("analysing thread %s (%s, pass %d)", cid, mode, self.table.analysis_counts[cid])
        return analyze_thread(
            self.program,
            self.cfgs,
            cid,
            init,
            mode,
            thread=cid,
            call_depth=int(self.config["call_depth"]),
            widening_delay=int(self.config["widening_delay"]),
            narrowing=int(self.config["narrowing"]),
            multi_instance=cid in self.multi,
            array_cells=int(self.config["array_cells"]),
        )

    def create_sites(self, cid: str, summary):
        """Yield (child, create stmt, pre-state, frame, argument fragment) per reachable create"""
        for ctx in sorted(summary, key=_context_key):
            stmt = self.program.stmts[ctx.stmt]
            state = summary[ctx]
            if stmt.kind != CREATE or not state.reachable:
                continue
            cs, fn, _ = summary.context_nodes[ctx]
            frame = summary.frames.get((cs, fn)) or Frame.of(self.program, cid, fn, cs)
            for child, fragment in thread_argument_binding(
                self.program, stmt, state, frame, self.evaluator
            ).items():
                yield child, stmt, state, frame, fragment

    def _record_classes(self, creators: dict):
        table = self.table
        table.classes = {MAIN: ThreadClass(MAIN, MAIN)}
        for child in sorted(creators, key=self._order):
            if child == MAIN:
                raise UnsupportedFeature("main used as a thread entry")
            table.classes[child] = ThreadClass(child, child, set(creators[child]))
        for cid in list(table.summaries):
            if cid not in table.classes:
                del table.summaries[cid]
                table.init_states.pop(cid, None)
        for cid, cls in table.classes.items():
            cls.multi_instance = cid in self.multi

    # Under-approximation

    def solve_under(self) -> ThreadTable:
        table = self.table
        limit = int(self.config["under_rounds"])
        inits = {MAIN: self.main_init}
        analysed = {}
        contributions: dict = {}

        while True:
            ready = [c for c in inits if c not in analysed or analysed[c] != inits[c]]
            if not ready:
                break
            cid = min(ready, key=self._order)
            if table.analysis_counts[cid] >= limit:
                raise UnsupportedFeature("cyclic thread creation", self.program.functions[cid].loc)
            summary = self.analyze(cid, inits[cid], STRONG)
            analysed[cid] = inits[cid]
            table.summaries[cid] = summary

            for sites in contributions.values():
                for key in [k for k in sites if k[0] == cid]:
                    del sites[key]
            for child, stmt, state, frame, fragment in self.create_sites(cid, summary):
                arg = self.evaluator.eval(state, stmt.value, frame)
                keep = _pointee_closure(state, arg)
                visible = state.restrict(lambda b: _shared(b) or b in keep)
                sites = contributions.setdefault(child, {})
                key = (cid, stmt.id)
                handed = overlay_states(visible, fragment)
                sites[key] = join_states(sites.get(key, AbsState.unreachable()), handed, self.main_init)

            for child, sites in contributions.items():
                if not sites:
                    inits.pop(child, None)
                    analysed.pop(child, None)
                    continue
                init = AbsState.unreachable()
                for key in sorted(sites):
                    init = join_states(init, sites[key], self.main_init)
                inits[child] = init

        table.rounds = max(table.analysis_counts.values(), default=0)
        table.init_states = dict(inits)
        self._record_classes({c: set(s) for c, s in contributions.items() if s})
        return table

    # Over-approximation

    def solve_over(self) -> ThreadTable:
        table = self.table
        limit = int(self.config["over_rounds"])
        inits = {MAIN: self.main_init}
        creators: dict = {}

        for round_no in range(1, limit + 1):
            summaries = {}
            for cid in sorted(inits, key=self._order):
                summaries[cid] = self.analyze(cid, inits[cid], WEAK)

            encountered = AbsState.unreachable()
            bindings: dict = {}
            creators = {}
            for cid in sorted(summaries, key=self._order):
                summary = summaries[cid]
                encountered = join_states(encountered, summary.encountered().restrict(_shared), self.main_init)
                for child, stmt, state, frame, fragment in self.create_sites(cid, summary):
                    creators.setdefault(child, set()).add((cid, stmt.id))
                    keep = _pointee_closure(state, self.evaluator.eval(state, stmt.value, frame))
                    handed = overlay_states(state.restrict(lambda b: b in keep and not _shared(b)), fragment)
                    bindings[child] = join_states(bindings.get(child, AbsState.unreachable()), handed, self.main_init)

            fresh = {MAIN: join_states(self.main_init, encountered, self.main_init)}
            for child in sorted(bindings, key=self._order):
                fresh[child] = overlay_states(encountered, bindings[child])

            updated = {}
            for cid, new in fresh.items():
                old = inits.get(cid)
                if old is None:
                    updated[cid] = new
                else:
                    updated[cid] = widen_states(old, join_states(old, new, self.main_init), self.main_init)

            table.summaries = summaries
            table.rounds = round_no
            if updated == inits:
                logger.debug("over-approximation stable after %d rounds", round_no)
                break
            inits = updated
        else:
            raise UnsupportedFeature("over-approximation did not converge")

        table.init_states = dict(inits)
        self._record_classes(creators)
        return table


def _cycle_nodes(graph) -> set:
    nodes = set()
    for component in nx.strongly_connected_components(graph):
        if len(component) > 1:
            nodes |= component
    nodes |= {u for u, v in graph.edges() if u == v}
    return nodes


def create_nodes(table: ThreadTable, cid: str) -> list:
    """(creator, supergraph node) pairs of the reachable creates of a class"""
    found = set()
    for creator, stmt_id in table.classes[cid].creators:
        summary = table.summaries[creator]
        for ctx, state in summary.items():
            if ctx.stmt == stmt_id and state.reachable:
                found.add((creator, summary.context_nodes[ctx]))
    return sorted(found, key=lambda item: (item[0], len(item[1][0]), item[1]))


def mark_multi_instance(table: ThreadTable, cfgs=None) -> ThreadTable:
    """Flag classes that may have several live instances, to a closure"""
    cycles = {cid: _cycle_nodes(summary.graph) for cid, summary in table.summaries.items()}
    changed = True
    while changed:
        changed = False
        for cid in table.ids():
            cls = table.classes[cid]
            if cls.multi_instance or cid == MAIN:
                continue
            nodes = create_nodes(table, cid)
            multi = any(table.classes[p].multi_instance for p, _ in nodes)
            multi = multi or any(node in cycles[p] for p, node in nodes)
            if not multi and len(nodes) > 1:
                creators = {p for p, _ in nodes}
                if len(creators) > 1:
                    multi = True
                else:
                    graph = table.summaries[nodes[0][0]].graph
                    multi = any(
                        nx.has_path(graph, a, b) or nx.has_path(graph, b, a)
                        for k, (_, a) in enumerate(nodes)
                        for _, b in nodes[k + 1:]
                    )
            if multi:
                cls.multi_instance = True
                changed = True
    return table


def solve(program, cfgs, strategy: str, config: AnalysisConfig | None = None) -> ThreadTable:
    """Solve the thread equation system for one strategy

    Multi-instance flags feed back into heap base strength, so the system is
    re-solved until the set of multi-instance classes is stable.

    Args:
        program: Parsed program
        cfgs: Control-flow graphs from build_cfg
        strategy: "under" or "over"
        config: Analysis settings

    Returns:
        ThreadTable with summaries for every discovered class
    """
    if strategy not in ("under", "over"):
        raise ValueError(f"solve expects under or over, got {strategy!r}")
    config = config or AnalysisConfig()
    multi: set = set()
    while True:
        solver = _Solver(program, cfgs, strategy, config, multi)
        table = solver.solve_under() if strategy == "under" else solver.solve_over()
        mark_multi_instance(table, cfgs)
        found = {cid for cid, cls in table.classes.items() if cls.multi_instance}
        if found <= multi:
            break
        multi = multi | found
    logger.info(
        "%s: %d thread classes (%s)",
        strategy,
        len(table.classes),
        ", ".join(str(table.classes[c]) for c in table.ids()),
    )
    return table

"""
Which thread classes may or must run in parallel at a context

Creation and join facts are computed by forward dataflow over each class's
supergraph. The parallelism queries combine them with the creator relation
between classes.
"""

import logging
from typing import NamedTuple

import networkx as nx

from .absint import Evaluator
from .dataflow import DEFAULT_VISITS, forward
from .frontend import CREATE, JOIN

logger = logging.getLogger(__name__)


class Lifecycle(NamedTuple):
    created_may: frozenset = frozenset()
    created_must: frozenset = frozenset()
    joined_must: frozenset = frozenset()


def _join(a: Lifecycle, b: Lifecycle) -> Lifecycle:
    return Lifecycle(
        a.created_may | b.created_may,
        a.created_must & b.created_must,
        a.joined_must & b.joined_must,
    )


class LifecycleFacts:
    """Per-context lifecycle facts plus cached relations between classes"""

    def __init__(self, table):
        self.table = table
        self.per_context: dict = {}
        self.site_classes: dict = {}
        for cid, cls in table.classes.items():
            for _, stmt_id in cls.creators:
                self.site_classes.setdefault(stmt_id, set()).add(cid)
        self._must_nodes: dict = {}
        self._siblings = None

    def __getitem__(self, ctx) -> Lifecycle:
        return self.per_context.get(ctx, Lifecycle())

    def created_may(self, ctx) -> frozenset:
        return self[ctx].created_may

    def created_must(self, ctx) -> frozenset:
        return self[ctx].created_must

    def joined_must(self, ctx) -> frozenset:
        return self[ctx].joined_must

    def must_nodes(self, cid: str) -> set:
        """Supergraph nodes on every feasible path from the entry to the exit"""
        if cid not in self._must_nodes:
            summary = self.table.summaries[cid]
            live = [n for n, s in summary.node_states.items() if s.reachable]
            graph = summary.graph.subgraph(live)
            nodes = set()
            if summary.exit_node in graph and summary.entry_node in graph:
                idom = nx.immediate_dominators(graph, summary.entry_node)
                node = summary.exit_node
                while node in idom:
                    nodes.add(node)
                    if idom[node] == node:
                        break
                    node = idom[node]
            self._must_nodes[cid] = nodes
        return self._must_nodes[cid]

    def must_reachable(self, ctx) -> bool:
        state = self.table.state(ctx)
        return state.reachable and self.table.node(ctx) in self.must_nodes(ctx.thread)

    def create_contexts(self, cid: str) -> list:
        cls = self.table.classes[cid]
        found = []
        for creator, stmt_id in sorted(cls.creators):
            summary = self.table.summaries[creator]
            found.extend(
                ctx for ctx, state in summary.items() if ctx.stmt == stmt_id and state.reachable
            )
        return found

    def sibling_pairs(self) -> set:
        """Class pairs that are both created and neither joined at some reachable context"""
        if self._siblings is None:
            pairs = set()
            for ctx, fact in self.per_context.items():
                live = sorted(fact.created_must - fact.joined_must)
                for k, a in enumerate(live):
                    for b in live[k + 1:]:
                        pairs.add(frozenset((a, b)))
            self._siblings = pairs
        return self._siblings


class _LifecycleTransfer:

    def __init__(self, table, summary, facts: LifecycleFacts):
        self.table = table
        self.summary = summary
        self.facts = facts
        self.evaluator = Evaluator()

    def __call__(self, kind, label, fact: Lifecycle, src, dst) -> Lifecycle:
        if kind != "stmt":
            return fact
        if label.kind == CREATE:
            created = frozenset(self.facts.site_classes.get(label.id, ()))
            must = fact.created_must | created if len(created) == 1 else fact.created_must
            return Lifecycle(fact.created_may | created, must, fact.joined_must - created)
        if label.kind == JOIN:
            joined = self._joined_class(label, src)
            if joined is not None and joined in fact.created_must:
                return Lifecycle(fact.created_may, fact.created_must, fact.joined_must | {joined})
        return fact

    def _joined_class(self, stmt, src) -> str | None:
        state = self.summary.node_states[src]
        frame = self.summary.frames[(src[0], src[1])]
        value = self.evaluator.eval(state, stmt.value, frame)
        if len(value.points_to) != 1 or not value.interval.is_bottom:
            return None
        base, _ = value.points_to[0]
        if base.kind != "thread":
            return None
        classes = self.facts.site_classes.get(base.site, set())
        if len(classes) != 1:
            return None
        (cid,) = classes
        if self.table.classes[cid].multi_instance:
            return None
        return cid


def compute_lifecycle(table, cfgs=None, limit: int = DEFAULT_VISITS) -> LifecycleFacts:
    """created_may, created_must and joined_must before every context"""
    facts = LifecycleFacts(table)
    for cid in table.ids():
        summary = table.summaries[cid]
        per_node = forward(summary, Lifecycle(), _LifecycleTransfer(table, summary, facts), _join, limit=limit)
        for ctx, node in summary.context_nodes.items():
            if node in per_node and summary[ctx].reachable:
                facts.per_context[ctx] = per_node[node]
    return facts


def sole_creator_chain(table, cid: str) -> list[str]:
    """Classes from cid up through single-creator-class ancestors"""
    chain = [cid]
    while True:
        creators = {p for p, _ in table.classes[chain[-1]].creators}
        if len(creators) != 1:
            return chain
        (parent,) = creators
        if parent in chain:
            return chain
        chain.append(parent)


def _created_later(facts: LifecycleFacts, table, ctx, other: str) -> bool:
    """ctx runs before its thread could have started the ancestor of other"""
    owner = ctx.thread
    if table.is_multi(owner):
        return False
    chain = sole_creator_chain(table, other)
    if owner not in chain[1:]:
        return False
    ancestor = chain[chain.index(owner) - 1]
    return ancestor not in facts.created_may(ctx)


def _joined_before(facts: LifecycleFacts, table, ctx, other: str) -> bool:
    return other in facts.joined_must(ctx)


def _siblings_ordered(facts: LifecycleFacts, table, t1: str, t2: str) -> bool:
    creators1 = {p for p, _ in table.classes[t1].creators}
    creators2 = {p for p, _ in table.classes[t2].creators}
    if len(creators1) != 1 or creators1 != creators2:
        return False
    (parent,) = creators1
    if table.is_multi(parent):
        return False
    for first, second in ((t1, t2), (t2, t1)):
        sites = facts.create_contexts(second)
        if sites and all(first in facts.joined_must(site) for site in sites):
            return True
    return False


def may_parallel(facts: LifecycleFacts, table, c1, c2) -> bool:
    t1, t2 = c1.thread, c2.thread
    if t1 == t2:
        return table.is_multi(t1)
    for a, b in ((c1, c2), (c2, c1)):
        if _created_later(facts, table, a, b.thread):
            return False
        if _joined_before(facts, table, a, b.thread):
            return False
    if t1 != "main" and t2 != "main" and _siblings_ordered(facts, table, t1, t2):
        return False
    return True


def must_parallel(facts: LifecycleFacts, table, c1, c2) -> bool:
    if c1 == c2 or c1.thread == c2.thread:
        return False
    if not may_parallel(facts, table, c1, c2):
        return False
    if not (facts.must_reachable(c1) and facts.must_reachable(c2)):
        return False
    for a, b in ((c1, c2), (c2, c1)):
        if b.thread in facts.created_must(a) and b.thread not in facts.joined_must(a):
            return True
    return frozenset((c1.thread, c2.thread)) in facts.sibling_pairs()

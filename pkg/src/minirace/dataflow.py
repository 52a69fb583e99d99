"""
Forward dataflow over the supergraph of one analysed thread class
"""

import heapq
import logging

from .frontend import UnsupportedFeature

logger = logging.getLogger(__name__)

DEFAULT_VISITS = 200_000


class DataflowLimitReached(UnsupportedFeature):

    def __init__(self, thread: str, limit: int):
        self.thread = thread
        self.limit = limit
        super().__init__("dataflow limit")


def forward(summary, init, transfer, join, equal=None, limit: int = DEFAULT_VISITS) -> dict:
    """Least solution of a forward problem on a ThreadSummary supergraph

    Only edges between nodes that the abstract interpreter found reachable are
    followed, so infeasible guard edges carry no facts.

    Args:
        summary: ThreadSummary whose graph and node_states are used
        init: Fact at the summary's entry node
        transfer: f(kind, label, fact, src, dst) -> fact
        join: f(fact, fact) -> fact
        equal: Fact equality, defaults to ==
        limit: Maximum number of node visits

    Raises:
        DataflowLimitReached: the facts did not stabilize within limit visits

    Returns:
        Mapping from supergraph node to its fact
    """
    equal = equal or (lambda a, b: a == b)
    graph = summary.graph
    order = {node: k for k, node in enumerate(graph.nodes)}

    def reachable(node) -> bool:
        state = summary.node_states.get(node)
        return state is not None and state.reachable

    facts = {}
    if summary.entry_node is None or not reachable(summary.entry_node):
        return facts
    facts[summary.entry_node] = init
    heap = [(order[summary.entry_node], summary.entry_node)]
    queued = {summary.entry_node}
    visits = 0

    while heap:
        _, node = heapq.heappop(heap)
        queued.discard(node)
        visits += 1
        if visits > limit:
            logger.warning("dataflow on thread %s stopped after %d visits", summary.thread, limit)
            raise DataflowLimitReached(summary.thread, limit)
        fact = facts[node]
        for _, dst, data in sorted(graph.out_edges(node, data=True), key=lambda e: order[e[1]]):
            if not reachable(dst):
                continue
            out = transfer(data["kind"], data["label"], fact, node, dst)
            if out is None:
                continue
            if dst in facts:
                merged = join(facts[dst], out)
                if equal(merged, facts[dst]):
                    continue
                facts[dst] = merged
            else:
                facts[dst] = out
            if dst not in queued:
                queued.add(dst)
                heapq.heappush(heap, (order[dst], dst))
    return facts

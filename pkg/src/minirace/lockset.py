"""
Set-of-locksets analysis with must and may guard queries

Each context carries the set of locksets held on the paths reaching it.
Trylock results are tracked as pending tags on the variable holding the
result until a guard on that variable decides success or failure.
"""

from dataclasses import dataclass, field
import logging
from typing import NamedTuple

from .absint import Base, Evaluator, Interval, ZERO
from .dataflow import DEFAULT_VISITS, forward
from .frontend import (
    BinOp, Const, Guard, LOCK, RDLOCK, RWUNLOCK, Stmt, TRYLOCK, UNLOCK, UnOp, Var, WRLOCK,
)

logger = logging.getLogger(__name__)

DEFAULT_CAP = 8

UNKNOWN_LOCK_BASE = Base("unknown", "?")


@dataclass(frozen=True)
class LockId:
    base: Base
    offset: Interval = ZERO
    flavor: str = "mutex"
    exact: bool = True

    def same_lock(self, other: "LockId") -> bool:
        return self.base == other.base and self.offset.intersects(other.offset)

    def excludes(self, other: "LockId", must: bool) -> bool:
        """Whether holding self and other at once is impossible"""
        if self.base == UNKNOWN_LOCK_BASE or other.base == UNKNOWN_LOCK_BASE:
            return not must
        if must and not (self.exact and other.exact and self.offset == other.offset):
            return False
        if not self.same_lock(other):
            return False
        return not (self.flavor == "rwlock_read" and other.flavor == "rwlock_read")

    def inexact(self) -> "LockId":
        return LockId(self.base, self.offset, self.flavor, False)

    def __str__(self):
        text = str(self.base)
        if self.offset != ZERO:
            text += f"+{self.offset.lo}" if self.offset.is_singleton else f"+{self.offset}"
        if self.flavor == "rwlock_read":
            text += ":read"
        elif self.flavor == "rwlock_write":
            text += ":write"
        return text if self.exact else text + "?"


def _lock_key(lock: LockId):
    return (lock.base, lock.offset.lo, lock.offset.hi, lock.flavor, lock.exact)


UNKNOWN_LOCK = LockId(UNKNOWN_LOCK_BASE, ZERO, "mutex", False)


class Lockset(NamedTuple):
    locks: frozenset
    tags: frozenset = frozenset()

    def __str__(self):
        return "{" + ", ".join(str(lock) for lock in sorted(self.locks, key=_lock_key)) + "}"


class LocksetFact(NamedTuple):
    sets: frozenset
    overflowed: bool = False


EMPTY_FACT = LocksetFact(frozenset({Lockset(frozenset())}))


def collapse(sets) -> frozenset:
    """The {union, intersection} pair standing for an overflowing set"""
    sets = list(sets)
    union = frozenset().union(*(s.locks for s in sets))
    inter = frozenset.intersection(*(s.locks for s in sets))
    union_tags = frozenset().union(*(s.tags for s in sets))
    inter_tags = frozenset.intersection(*(s.tags for s in sets))
    return frozenset({Lockset(union, union_tags), Lockset(inter, inter_tags)})


def _cap(fact: LocksetFact, cap: int) -> LocksetFact:
    if len(fact.sets) <= cap:
        return fact
    return LocksetFact(collapse(fact.sets), True)


@dataclass
class LocksetSummary:
    per_context: dict = field(default_factory=dict)
    overflowed: set = field(default_factory=set)

    def sets(self, ctx, must: bool = False) -> list[Lockset]:
        """Locksets of a context; an overflowed context answers with one collapse side"""
        found = self.per_context.get(ctx, frozenset())
        if not must:
            # an undecided trylock may hold its locks
            found = [
                Lockset(s.locks | frozenset(lock.inexact() for _, locks in s.tags for lock in locks))
                for s in found
            ]
        if ctx in self.overflowed and found:
            locks = [s.locks for s in found]
            merged = frozenset.intersection(*locks) if must else frozenset().union(*locks)
            found = [Lockset(merged)]
        return sorted(found, key=lambda s: sorted(map(_lock_key, s.locks)))

    def render(self, ctx) -> list[list[str]]:
        sets = self.per_context.get(ctx, frozenset())
        rendered = {tuple(sorted(str(lock) for lock in s.locks)) for s in sets}
        return [list(s) for s in sorted(rendered)]


def _pair_excludes(l1: Lockset, l2: Lockset, must: bool) -> bool:
    return any(a.excludes(b, must) for a in l1.locks for b in l2.locks)


def must_guarded(summary: LocksetSummary, c1, c2) -> bool:
    sets1, sets2 = summary.sets(c1, must=True), summary.sets(c2, must=True)
    if not sets1 or not sets2:
        return False
    return all(_pair_excludes(l1, l2, True) for l1 in sets1 for l2 in sets2)


def may_guarded(summary: LocksetSummary, c1, c2) -> bool:
    sets1, sets2 = summary.sets(c1), summary.sets(c2)
    return any(_pair_excludes(l1, l2, False) for l1 in sets1 for l2 in sets2)


# Transfer

def _resolve(evaluator, state, expr, frame, flavor: str) -> list[LockId]:
    value = evaluator.eval(state, expr, frame)
    targets = [(b, o) for b, o in value.points_to if b.kind not in ("function", "thread")]
    if not targets:
        logger.debug("lock expression at %s resolved to nothing", frame.function)
        return [UNKNOWN_LOCK]
    exact = len(targets) == 1 and targets[0][1].is_singleton and not targets[0][0].weak
    return [LockId(base, offset, flavor, exact) for base, offset in targets]


def _trylock_test(cond, polarity: bool):
    """(tested expression, success) for guards deciding a trylock result"""
    if isinstance(cond, UnOp) and cond.op == "!":
        found = _trylock_test(cond.operand, not polarity)
        return found
    if isinstance(cond, BinOp) and cond.op in ("==", "!=") and cond.right == Const(0):
        equal = (cond.op == "==") == polarity
        return cond.left, equal
    if isinstance(cond, BinOp) and cond.op in ("==", "!=") and cond.left == Const(0):
        equal = (cond.op == "==") == polarity
        return cond.right, equal
    if isinstance(cond, Var):
        return cond, not polarity
    return None


def _written(kind, label):
    if kind == "guard":
        return None
    return getattr(label, "target", None) if isinstance(label, Stmt) else None


class _LocksetTransfer:

    def __init__(self, summary, evaluator: Evaluator, cap: int):
        self.summary = summary
        self.evaluator = evaluator
        self.cap = cap

    def _map(self, fact: LocksetFact, fn) -> LocksetFact:
        return _cap(LocksetFact(frozenset(fn(s) for s in fact.sets), fact.overflowed), self.cap)

    def __call__(self, kind, label, fact: LocksetFact, src, dst) -> LocksetFact:
        if kind == "guard":
            return self._guard(label, fact)

        target = _written(kind, label)
        if target is not None:
            fact = self._map(fact, lambda s: Lockset(s.locks, frozenset(t for t in s.tags if t[0] != target)))

        if kind != "stmt" or label.kind not in (LOCK, UNLOCK, TRYLOCK, RDLOCK, WRLOCK, RWUNLOCK):
            return fact

        state = self.summary.node_states[src]
        frame = self.summary.frames[(src[0], src[1])]
        locks = _resolve(self.evaluator, state, label.value, frame, label.lock_flavor)

        if label.kind in (LOCK, RDLOCK, WRLOCK):
            return self._map(fact, lambda s: Lockset(s.locks | frozenset(locks), s.tags))
        if label.kind == TRYLOCK:
            if label.target is None:
                maybe = frozenset(lock.inexact() for lock in locks)
                return self._map(fact, lambda s: Lockset(s.locks | maybe, s.tags))
            tag = (label.target, frozenset(locks))
            return self._map(fact, lambda s: Lockset(s.locks, s.tags | {tag}))
        flavors = ("mutex",) if label.kind == UNLOCK else ("rwlock_read", "rwlock_write")
        return self._map(fact, lambda s: Lockset(self._release(s.locks, locks, flavors), s.tags))

    @staticmethod
    def _release(held: frozenset, released: list, flavors) -> frozenset:
        if released == [UNKNOWN_LOCK]:
            return frozenset(lock.inexact() for lock in held)
        exact = len(released) == 1 and released[0].exact
        kept = set()
        for lock in held:
            hit = lock.flavor in flavors and any(lock.same_lock(r) for r in released)
            if not hit:
                kept.add(lock)
            elif not (exact and lock.offset == released[0].offset):
                kept.add(lock.inexact())
        return frozenset(kept)

    def _guard(self, guard: Guard, fact: LocksetFact) -> LocksetFact:
        test = _trylock_test(guard.cond, guard.polarity)
        if test is None:
            return fact
        expr, success = test

        def decide(s: Lockset) -> Lockset:
            tags = [t for t in s.tags if t[0] == expr]
            if not tags:
                return s
            locks = s.locks
            if success:
                for _, acquired in tags:
                    locks = locks | acquired
            return Lockset(locks, frozenset(t for t in s.tags if t[0] != expr))

        return self._map(fact, decide)


def _join(cap: int):
    def join(a: LocksetFact, b: LocksetFact) -> LocksetFact:
        return _cap(LocksetFact(a.sets | b.sets, a.overflowed or b.overflowed), cap)
    return join


def compute_locksets(table, cfgs=None, cap: int = DEFAULT_CAP, limit: int = DEFAULT_VISITS) -> LocksetSummary:
    """Set of locksets held before every reachable context of every class"""
    result = LocksetSummary()
    for cid in table.ids():
        summary = table.summaries[cid]
        evaluator = Evaluator()
        facts = forward(summary, EMPTY_FACT, _LocksetTransfer(summary, evaluator, cap), _join(cap), limit=limit)
        for ctx, node in summary.context_nodes.items():
            fact = facts.get(node)
            if fact is None or not summary[ctx].reachable:
                continue
            result.per_context[ctx] = fact.sets
            if fact.overflowed:
                result.overflowed.add(ctx)
    logger.debug("locksets: %d contexts, %d overflowed", len(result.per_context), len(result.overflowed))
    return result

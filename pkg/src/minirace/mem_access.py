"""
Memory accesses of every reachable context and the base state machine

Bases move through Virgin, Exclusive(class), SharedRead and SharedModified.
Only SharedModified bases are race candidates.
"""

from dataclasses import dataclass
import logging
from typing import NamedTuple

from .absint import Evaluator, Interval
from .frontend import (
    AddrOf, ALLOC, ASSIGN, BinOp, CALL, Cast, Cond, CREATE, Deref, Field, IF, Index,
    JOIN, LOCK_KINDS, RETURN, TRYLOCK, UnOp, Var, WHILE, ASSERT,
)

logger = logging.getLogger(__name__)

READ = "read"
WRITE = "write"


@dataclass(frozen=True)
class Access:
    context: object
    base: object
    offset: Interval
    width: int
    kind: str
    atomic: bool
    loc: object
    stmt_id: int

    @property
    def span(self) -> Interval:
        """Bytes touched, from the first start offset to the last byte of the last start"""
        return Interval(self.offset.lo, self.offset.hi + self.width - 1)

    @property
    def thread(self) -> str:
        return self.context.thread

    def overlaps(self, other: "Access") -> bool:
        return self.base == other.base and self.span.intersects(other.span)

    def sort_key(self):
        ctx = self.context
        return (
            self.stmt_id, ctx.thread, len(ctx.call_string), ctx.call_string,
            self.base, self.offset.lo, self.offset.hi, self.kind,
        )


class _Collector:

    def __init__(self, table, evaluator: Evaluator):
        self.table = table
        self.evaluator = evaluator
        self.found: list[Access] = []

    def _emit(self, ctx, stmt, state, frame, lv, kind):
        if lv.ctype is None or not lv.ctype.is_scalar:
            return
        width = lv.ctype.size
        atomic = lv.ctype.is_atomic
        for base, offset in self.evaluator.locations(state, lv, frame):
            if base.name == "$ret":
                continue
            self.found.append(Access(ctx, base, offset, width, kind, atomic, stmt.loc, stmt.id))

    def address_reads(self, ctx, stmt, state, frame, lv):
        """Reads made while computing where an lvalue lives"""
        if isinstance(lv, Var):
            return
        if isinstance(lv, Deref):
            self.reads(ctx, stmt, state, frame, lv.operand)
        elif isinstance(lv, Index):
            if lv.base.ctype is not None and lv.base.ctype.kind == "array":
                self.address_reads(ctx, stmt, state, frame, lv.base)
            else:
                self.reads(ctx, stmt, state, frame, lv.base)
            self.reads(ctx, stmt, state, frame, lv.index)
        elif isinstance(lv, Field):
            if lv.arrow:
                self.reads(ctx, stmt, state, frame, lv.base)
            else:
                self.address_reads(ctx, stmt, state, frame, lv.base)
        elif isinstance(lv, Cast):
            self.address_reads(ctx, stmt, state, frame, lv.operand)

    def reads(self, ctx, stmt, state, frame, expr):
        if expr is None:
            return
        match expr:
            case Var(ctype=ctype):
                if ctype is not None and ctype.kind in ("function", "array"):
                    return
                self._emit(ctx, stmt, state, frame, expr, READ)
            case Deref() | Index() | Field():
                self.address_reads(ctx, stmt, state, frame, expr)
                if expr.ctype is not None and expr.ctype.kind not in ("array", "record"):
                    self._emit(ctx, stmt, state, frame, expr, READ)
            case AddrOf(operand=lv):
                self.address_reads(ctx, stmt, state, frame, lv)
            case BinOp(left=left, right=right):
                self.reads(ctx, stmt, state, frame, left)
                self.reads(ctx, stmt, state, frame, right)
            case UnOp(operand=operand) | Cast(operand=operand):
                self.reads(ctx, stmt, state, frame, operand)
            case Cond(test=test, then=then, orelse=orelse):
                for part in (test, then, orelse):
                    self.reads(ctx, stmt, state, frame, part)

    def write(self, ctx, stmt, state, frame, lv):
        self.address_reads(ctx, stmt, state, frame, lv)
        self._emit(ctx, stmt, state, frame, lv, WRITE)

    def visit(self, ctx, stmt, state, frame):
        kind = stmt.kind
        if kind == ASSIGN:
            self.reads(ctx, stmt, state, frame, stmt.value)
            self.write(ctx, stmt, state, frame, stmt.target)
        elif kind in (IF, WHILE, RETURN, ASSERT, JOIN):
            self.reads(ctx, stmt, state, frame, stmt.value)
        elif kind == CALL:
            for arg in stmt.args:
                self.reads(ctx, stmt, state, frame, arg)
            if stmt.target is not None:
                self.write(ctx, stmt, state, frame, stmt.target)
        elif kind == CREATE:
            self.reads(ctx, stmt, state, frame, stmt.value)
            self.write(ctx, stmt, state, frame, stmt.target)
        elif kind == ALLOC:
            self.reads(ctx, stmt, state, frame, stmt.value)
            if stmt.target is not None:
                self.write(ctx, stmt, state, frame, stmt.target)
        elif kind == TRYLOCK and stmt.target is not None:
            self.write(ctx, stmt, state, frame, stmt.target)
        elif kind in LOCK_KINDS:
            return


def collect_accesses(table) -> list[Access]:
    """Every read and write of every reachable context, sorted"""
    collector = _Collector(table, Evaluator())
    for ctx, state in table.contexts():
        if not state.reachable:
            continue
        stmt = table.program.stmts[ctx.stmt]
        collector.visit(ctx, stmt, state, table.frame(ctx))
    accesses = sorted(set(collector.found), key=Access.sort_key)
    logger.debug("collected %d accesses", len(accesses))
    return accesses


# Base states

class BaseState(NamedTuple):
    name: str
    owner: str | None = None

    def __str__(self):
        return f"Exclusive({self.owner})" if self.name == "Exclusive" else self.name


VIRGIN = BaseState("Virgin")
SHARED_READ = BaseState("SharedRead")
SHARED_MODIFIED = BaseState("SharedModified")


def Exclusive(owner: str) -> BaseState:
    return BaseState("Exclusive", owner)


def _accessors(access: Access, table) -> list[str]:
    """Distinct accessor identities of one access; multi-instance classes count twice"""
    thread = access.thread
    base = access.base
    own_local = base.kind in ("local", "formal") and base.thread == thread
    if table.is_multi(thread) and not own_local:
        return [f"{thread}#1", f"{thread}#2"]
    return [thread]


def classify_bases(accesses, facts, table) -> dict:
    """Fold accesses into a BaseState per base

    The result depends only on the set of (accessor, kind) pairs per base, so
    the order of accesses does not matter.
    """
    per_base: dict = {}
    for access in accesses:
        if access.atomic:
            continue
        entry = per_base.setdefault(access.base, {"readers": set(), "writers": set(), "main_writes": []})
        for who in _accessors(access, table):
            (entry["writers"] if access.kind == WRITE else entry["readers"]).add(who)
        if access.kind == WRITE and access.thread == "main":
            entry["main_writes"].append(access)

    states = {}
    for base, entry in per_base.items():
        who = entry["readers"] | entry["writers"]
        if not who:
            states[base] = VIRGIN
        elif len(who) == 1:
            (owner,) = who
            states[base] = Exclusive(owner.split("#")[0])
        elif not entry["writers"]:
            states[base] = SHARED_READ
        elif entry["writers"] == {"main"} and facts is not None and all(
            not facts.created_may(a.context) for a in entry["main_writes"]
        ):
            states[base] = SHARED_READ
        else:
            states[base] = SHARED_MODIFIED
    return states


def candidate_bases(states: dict) -> set:
    return {base for base, state in states.items() if state == SHARED_MODIFIED}

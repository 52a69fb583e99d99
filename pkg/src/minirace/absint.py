"""
Sequential abstract interpretation of one thread class

Values are an integer interval together with a set of (base, offset interval)
address pairs. Memory is a map from cells, i.e. scalar slots identified by
(base, byte offset, width), to values. Each thread class is analysed from its
initial state over a supergraph of CFG copies keyed by bounded call strings.
"""

from dataclasses import dataclass, field
import heapq
import logging
import math
from typing import NamedTuple

import networkx as nx

from .frontend import (
    AddrOf, ALLOC, BinOp, BREAK, CALL, Cast, COMPARISONS, Cond, Const, CONTINUE,
    CREATE, CType, Deref, Expr, Field, Guard, Index, Nondet, RETURN, Stmt,
    TRYLOCK, UnOp, UnsupportedFeature, Var,
)

logger = logging.getLogger(__name__)

STRONG = "strong"
WEAK = "weak"

EBUSY = 16


class RecursionUnsupported(UnsupportedFeature):

    def __init__(self, cycle, loc=None):
        self.cycle = tuple(cycle)
        super().__init__("recursion", loc)


# Intervals

def _mul(a, b):
    if a == 0 or b == 0:
        return 0
    return a * b


def _tdiv(a, b):
    """C division truncating toward zero, extended to infinities"""
    if math.isinf(a):
        return a if b > 0 else -a
    if math.isinf(b):
        return 0
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b > 0) else -q


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    @classmethod
    def const(cls, value: int) -> "Interval":
        return cls(value, value)

    @property
    def is_bottom(self) -> bool:
        return self.lo > self.hi

    @property
    def is_top(self) -> bool:
        return self.lo == -math.inf and self.hi == math.inf

    @property
    def is_singleton(self) -> bool:
        return self.lo == self.hi and not math.isinf(self.lo)

    def __contains__(self, value) -> bool:
        return self.lo <= value <= self.hi

    def leq(self, other: "Interval") -> bool:
        if self.is_bottom:
            return True
        if other.is_bottom:
            return False
        return other.lo <= self.lo and self.hi <= other.hi

    def join(self, other: "Interval") -> "Interval":
        if self.is_bottom:
            return other
        if other.is_bottom:
            return self
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def meet(self, other: "Interval") -> "Interval":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Interval(lo, hi) if lo <= hi else BOTTOM

    def widen(self, newer: "Interval") -> "Interval":
        if self.is_bottom:
            return newer
        if newer.is_bottom:
            return self
        lo = -math.inf if newer.lo < self.lo else self.lo
        hi = math.inf if newer.hi > self.hi else self.hi
        return Interval(lo, hi)

    def intersects(self, other: "Interval") -> bool:
        return not self.meet(other).is_bottom

    def __add__(self, other):
        if self.is_bottom or other.is_bottom:
            return BOTTOM
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def __neg__(self):
        if self.is_bottom:
            return BOTTOM
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if self.is_bottom or other.is_bottom:
            return BOTTOM
        products = [_mul(a, b) for a in (self.lo, self.hi) for b in (other.lo, other.hi)]
        return Interval(min(products), max(products))

    def div(self, other: "Interval") -> "Interval":
        if self.is_bottom or other.is_bottom:
            return BOTTOM
        if 0 in other:
            return TOP
        quotients = [_tdiv(a, b) for a in (self.lo, self.hi) for b in (other.lo, other.hi)]
        return Interval(min(quotients), max(quotients))

    def mod(self, other: "Interval") -> "Interval":
        if self.is_bottom or other.is_bottom:
            return BOTTOM
        if 0 in other:
            return TOP
        if self.is_singleton and other.is_singleton:
            q = _tdiv(self.lo, other.lo)
            return Interval.const(int(self.lo - q * other.lo))
        bound = max(abs(other.lo), abs(other.hi)) - 1
        if self.lo >= 0:
            return Interval(0, min(self.hi, bound))
        if self.hi <= 0:
            return Interval(max(self.lo, -bound), 0)
        return Interval(-bound, bound)

    def compare(self, op: str, other: "Interval") -> "Interval":
        if self.is_bottom or other.is_bottom:
            return BOTTOM
        a, b = self, other
        if op == "<":
            sure, never = a.hi < b.lo, a.lo >= b.hi
        elif op == "<=":
            sure, never = a.hi <= b.lo, a.lo > b.hi
        elif op == ">":
            sure, never = a.lo > b.hi, a.hi <= b.lo
        elif op == ">=":
            sure, never = a.lo >= b.hi, a.hi < b.lo
        elif op == "==":
            sure = a.is_singleton and b.is_singleton and a.lo == b.lo
            never = not a.intersects(b)
        else:
            sure = not a.intersects(b)
            never = a.is_singleton and b.is_singleton and a.lo == b.lo
        if sure:
            return ONE
        if never:
            return ZERO
        return BOOL

    def truth(self) -> "Interval":
        """Interval of the C truth value of self"""
        if self.is_bottom:
            return BOTTOM
        if self == ZERO:
            return ZERO
        if 0 not in self:
            return ONE
        return BOOL

    def __str__(self):
        if self.is_bottom:
            return "bottom"
        lo = "-inf" if self.lo == -math.inf else str(int(self.lo))
        hi = "+inf" if self.hi == math.inf else str(int(self.hi))
        return f"[{lo},{hi}]"


TOP = Interval(-math.inf, math.inf)
BOTTOM = Interval(math.inf, -math.inf)
ZERO = Interval(0, 0)
ONE = Interval(1, 1)
BOOL = Interval(0, 1)
NON_NEGATIVE = Interval(0, math.inf)


_NEGATED = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "==": "!=", "!=": "=="}
_SWAPPED = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}


def _constrain(op: str, bound: Interval) -> Interval:
    """Values v satisfying v op x for some x in bound"""
    if bound.is_bottom:
        return BOTTOM
    if op == "<":
        return Interval(-math.inf, bound.hi - 1)
    if op == "<=":
        return Interval(-math.inf, bound.hi)
    if op == ">":
        return Interval(bound.lo + 1, math.inf)
    if op == ">=":
        return Interval(bound.lo, math.inf)
    if op == "==":
        return bound
    return TOP


# Bases and values

@dataclass(frozen=True, order=True)
class Base:
    kind: str
    name: str
    function: str = ""
    call_string: tuple = ()
    thread: str = ""
    site: int = 0
    weak: bool = False
    ctype: CType | None = field(default=None, compare=False, repr=False)
    alloc_size: int | None = field(default=None, compare=False, repr=False)
    zeroed: bool = field(default=False, compare=False, repr=False)

    @property
    def size(self) -> int | None:
        if self.ctype is not None:
            return self.ctype.size
        return self.alloc_size

    @property
    def is_shared_kind(self) -> bool:
        return self.kind in ("global", "dynamic")

    def __str__(self):
        if self.kind in ("local", "formal"):
            return f"{self.function}::{self.name}"
        return self.name


@dataclass(frozen=True)
class AbsVal:
    interval: Interval = TOP
    points_to: tuple = ()

    @classmethod
    def const(cls, value: int) -> "AbsVal":
        return cls(Interval.const(value))

    @classmethod
    def address(cls, base: Base, offset: Interval = ZERO) -> "AbsVal":
        return cls(BOTTOM, ((base, offset),))

    @property
    def is_bottom(self) -> bool:
        return self.interval.is_bottom and not self.points_to

    def bases(self) -> list[Base]:
        return [base for base, _ in self.points_to]

    def leq(self, other: "AbsVal") -> bool:
        if not self.interval.leq(other.interval):
            return False
        theirs = dict(other.points_to)
        return all(
            base in theirs and offset.leq(theirs[base]) for base, offset in self.points_to
        )

    def _merge(self, other: "AbsVal", combine) -> "AbsVal":
        merged = dict(self.points_to)
        for base, offset in other.points_to:
            merged[base] = combine(merged[base], offset) if base in merged else offset
        return tuple(sorted(merged.items(), key=lambda item: item[0]))

    def join(self, other: "AbsVal") -> "AbsVal":
        return AbsVal(self.interval.join(other.interval), self._merge(other, Interval.join))

    def widen(self, newer: "AbsVal") -> "AbsVal":
        return AbsVal(self.interval.widen(newer.interval), self._merge(newer, Interval.widen))

    def __str__(self):
        parts = [] if self.interval.is_bottom and self.points_to else [str(self.interval)]
        parts += [f"&{base}+{offset}" for base, offset in self.points_to]
        return " | ".join(parts)


TOP_VAL = AbsVal(TOP)
BOTTOM_VAL = AbsVal(BOTTOM)
ZERO_VAL = AbsVal(ZERO)


# width of a cell standing for every byte from its offset on
_SUMMARY_WIDTH = 1 << 62


def _points(points: dict) -> tuple:
    return tuple(sorted(points.items(), key=lambda item: item[0]))


class Cell(NamedTuple):
    base: Base
    offset: int
    width: int

    @property
    def span(self) -> Interval:
        return Interval(self.offset, self.offset + self.width - 1)


def _default(cell: Cell, defaults: "AbsState | None" = None) -> AbsVal | None:
    """Value of bytes no cell covers; None is top, which absorbs joins

    Heap bytes are bottom until stored, zero for calloc. Globals take their
    static initializer when defaults, the initial global state, is given.
    """
    base = cell.base
    if base.kind == "dynamic":
        return ZERO_VAL if base.zeroed else BOTTOM_VAL
    if base.kind == "global" and defaults is not None:
        if base.size:
            cell = Cell(base, cell.offset, max(min(cell.width, base.size - cell.offset), 1))
        return _held(defaults, cell)
    return None


def _held(state: "AbsState", cell: Cell, defaults: "AbsState | None" = None) -> AbsVal | None:
    """Value state holds on the bytes of cell, from overlapping cells and then defaults"""
    value = state.env.get(cell)
    if value is not None:
        return value
    hits = [other for other in state.cells(cell.base) if other.span.intersects(cell.span)]
    value = BOTTOM_VAL
    for hit in hits:
        value = value.join(state.env[hit])
    if not _covers(hits, cell.span):
        default = _default(cell, defaults)
        if default is None:
            return None
        value = value.join(default)
    return value


@dataclass(frozen=True)
class AbsState:
    env: dict = field(default_factory=dict)
    reachable: bool = True

    @classmethod
    def unreachable(cls) -> "AbsState":
        return cls({}, False)

    def cells(self, base: Base) -> list[Cell]:
        return sorted(cell for cell in self.env if cell.base == base)

    def bases(self) -> set[Base]:
        return {cell.base for cell in self.env}

    def restrict(self, keep) -> "AbsState":
        if not self.reachable:
            return self
        return AbsState({c: v for c, v in self.env.items() if keep(c.base)}, True)

    def value_of(self, name: str, offset: int = 0) -> AbsVal | None:
        """Value of the first cell whose base is called name, for inspection"""
        for cell in sorted(self.env):
            if cell.base.name == name and cell.offset == offset:
                return self.env[cell]
        return None

    def interval_of(self, name: str, offset: int = 0) -> Interval | None:
        value = self.value_of(name, offset)
        return None if value is None else value.interval

    def __str__(self):
        if not self.reachable:
            return "unreachable"
        return ", ".join(
            f"{cell.base}+{cell.offset}={self.env[cell]}" for cell in sorted(self.env)
        )


def _combine(a: AbsState, b: AbsState, combine, defaults: AbsState | None) -> AbsState:
    if not a.reachable:
        return b
    if not b.reachable:
        return a
    env = {}
    for cell in a.env.keys() | b.env.keys():
        left, right = _held(a, cell, defaults), _held(b, cell, defaults)
        if left is None or right is None:
            if cell.base.kind == "global":
                env[cell] = TOP_VAL
            continue
        env[cell] = combine(left, right)
    return AbsState(env, True)


def join_states(a: AbsState, b: AbsState, defaults: AbsState | None = None) -> AbsState:
    """Pointwise join; a cell one side lacks takes that side's bytes, globals their initializer in defaults"""
    return _combine(a, b, AbsVal.join, defaults)


def widen_states(older: AbsState, newer: AbsState, defaults: AbsState | None = None) -> AbsState:
    return _combine(older, newer, AbsVal.widen, defaults)


def overlay_states(under: AbsState, over: AbsState) -> AbsState:
    """Cells of both states, those of over winning; for fragments on disjoint bases"""
    if not under.reachable or not over.reachable:
        return AbsState.unreachable()
    return AbsState({**under.env, **over.env}, True)


def _covers(cells: list[Cell], span: Interval) -> bool:
    """Whether the cells leave no byte of span unmaterialized"""
    if span.is_bottom:
        return True
    cursor = span.lo
    for cell in sorted(cells, key=lambda c: c.offset):
        if cell.offset > cursor:
            return False
        cursor = max(cursor, cell.offset + cell.width)
        if cursor > span.hi:
            return True
    return False


def state_leq(a: AbsState, b: AbsState) -> bool:
    """Pointwise containment order on states"""
    if not a.reachable:
        return True
    if not b.reachable:
        return False
    for cell in a.env.keys() | b.env.keys():
        left, right = a.env.get(cell), b.env.get(cell)
        default = _default(cell)
        if right is None and default is None:
            continue
        if left is None and default is None:
            return False
        left = default if left is None else left
        right = default if right is None else right
        if not left.leq(right):
            return False
    return True


# Memory layout

def _slot(ctype: CType | None, offset: int, cap: int) -> tuple[int, int | None, bool]:
    """Start, width and summary flag of the scalar slot holding a byte offset"""
    if ctype is None:
        return offset, None, False
    if ctype.kind == "array":
        elem = ctype.target
        if ctype.length > cap:
            return 0, ctype.size, True
        k = min(max(offset // max(elem.size, 1), 0), ctype.length - 1)
        start, width, summary = _slot(elem, offset - k * elem.size, cap)
        return k * elem.size + start, width, summary
    if ctype.kind == "record":
        for _, ftype, foffset in ctype.fields:
            if foffset <= offset < foffset + ftype.size:
                start, width, summary = _slot(ftype, offset - foffset, cap)
                return foffset + start, width, summary
        return 0, ctype.size, True
    return 0, ctype.size, False


def scalar_slots(ctype: CType, cap: int, base_offset: int = 0):
    """Yield (offset, width, summary) for every slot of a type"""
    if ctype.kind == "array":
        if ctype.length > cap:
            yield base_offset, ctype.size, True
            return
        for k in range(ctype.length):
            yield from scalar_slots(ctype.target, cap, base_offset + k * ctype.target.size)
    elif ctype.kind == "record":
        for _, ftype, foffset in ctype.fields:
            yield from scalar_slots(ftype, cap, base_offset + foffset)
    elif ctype.size > 0:
        yield base_offset, ctype.size, False


def global_init_state(program, array_cells: int = 256) -> AbsState:
    """Every global bound to its static initializer, zero when absent"""
    env = {}
    for var in program.globals:
        base = Base("global", var.name, ctype=var.ctype)
        values = list(var.init or ())
        for k, (offset, width, summary) in enumerate(scalar_slots(var.ctype, array_cells)):
            if summary:
                value = ZERO
                for v in values:
                    value = value.join(Interval.const(v))
                env[Cell(base, offset, width)] = AbsVal(value)
            else:
                env[Cell(base, offset, width)] = AbsVal.const(values[k] if k < len(values) else 0)
    return AbsState(env, True)


# Frames and evaluation

@dataclass(frozen=True)
class Frame:
    thread: str = "main"
    function: str = "main"
    call_string: tuple = ()
    scope: dict = field(default_factory=dict, compare=False)

    @classmethod
    def of(cls, program, thread: str, function: str, call_string: tuple = ()) -> "Frame":
        fn = program.functions[function]
        scope = {name: ("formal", ctype) for name, ctype in fn.formals}
        scope.update({name: ("local", ctype) for name, ctype in fn.locals})
        scope["$ret"] = ("local", fn.returns)
        return cls(thread, function, call_string, scope)

    def base(self, name: str, ctype: CType | None = None) -> Base:
        if ctype is not None and ctype.kind == "function":
            return Base("function", name)
        if name in self.scope:
            kind, declared = self.scope[name]
            return Base(kind, name, self.function, self.call_string, self.thread, ctype=declared)
        return Base("global", name, ctype=ctype)

    @property
    def ret(self) -> Base:
        return self.base("$ret")


class Evaluator:
    """Expression evaluation and memory updates against one AbsState"""

    def __init__(self, array_cells: int = 256, weak_shared: bool = False, defaults: AbsState | None = None):
        self.array_cells = array_cells
        self.weak_shared = weak_shared
        self.defaults = defaults

    # Locations

    def _clamp(self, base: Base, offset: Interval, width: int) -> Interval:
        size = base.size
        upper = math.inf if size is None else size - max(width, 1)
        return offset.meet(Interval(0, upper))

    def _shift(self, points, delta: Interval) -> list:
        return [(base, offset + delta) for base, offset in points]

    def locations(self, state: AbsState, lv: Expr, frame: Frame) -> list[tuple[Base, Interval]]:
        """Byte locations an lvalue may designate, clamped to base sizes"""
        width = lv.ctype.size if lv.ctype is not None else 1
        found = []
        for base, offset in self._raw_locations(state, lv, frame):
            if base.kind in ("function", "thread"):
                continue
            clamped = self._clamp(base, offset, width)
            if not clamped.is_bottom:
                found.append((base, clamped))
        return found

    def _raw_locations(self, state, lv, frame) -> list:
        if isinstance(lv, Var):
            return [(frame.base(lv.name, lv.ctype), ZERO)]
        if isinstance(lv, Deref):
            return list(self.eval(state, lv.operand, frame).points_to)
        if isinstance(lv, Index):
            elem = lv.ctype.size if lv.ctype is not None else 1
            index = self.eval(state, lv.index, frame).interval
            if index.is_bottom:
                index = TOP
            delta = index * Interval.const(elem)
            if lv.base.ctype is not None and lv.base.ctype.kind == "array":
                return self._shift(self._raw_locations(state, lv.base, frame), delta)
            return self._shift(self.eval(state, lv.base, frame).points_to, delta)
        if isinstance(lv, Field):
            record = lv.base.ctype.target if lv.arrow else lv.base.ctype
            offset, _ = record.field(lv.name)
            if lv.arrow:
                points = self.eval(state, lv.base, frame).points_to
            else:
                points = self._raw_locations(state, lv.base, frame)
            return self._shift(points, Interval.const(offset))
        if isinstance(lv, Cast):
            return self._raw_locations(state, lv.operand, frame)
        return []

    # Reading

    def _cell_keys(self, state: AbsState, base: Base, offset: Interval, width: int) -> tuple[list, bool]:
        """Cells overlapping an access and whether unmaterialized bytes remain"""
        if offset.is_singleton:
            start, slot_width, _ = _slot(base.ctype, int(offset.lo), self.array_cells)
            cell = Cell(base, start, slot_width or width)
            if cell in state.env:
                return [cell], False
        span = Interval(offset.lo, offset.hi + width - 1)
        if base.size:
            span = span.meet(Interval(0, base.size - 1))
        hits = [cell for cell in state.cells(base) if cell.span.intersects(span)]
        return hits, not _covers(hits, span)

    def read(self, state: AbsState, base: Base, offset: Interval, width: int) -> AbsVal:
        cells, missing = self._cell_keys(state, base, offset, width)
        value = BOTTOM_VAL
        for cell in cells:
            value = value.join(state.env[cell])
        if missing:
            value = value.join(self._unmaterialized(base, offset, width))
        return value

    def _unmaterialized(self, base: Base, offset: Interval, width: int) -> AbsVal:
        if base.zeroed:
            return ZERO_VAL
        if base.kind == "global" and self.defaults is not None and not math.isinf(offset.hi):
            lo = 0 if math.isinf(offset.lo) else max(int(offset.lo), 0)
            default = _default(Cell(base, lo, int(offset.hi) - lo + width), self.defaults)
            if default is not None:
                return default
        return TOP_VAL

    def eval(self, state: AbsState, expr: Expr, frame: Frame) -> AbsVal:
        if not state.reachable:
            return BOTTOM_VAL
        match expr:
            case Const(value=v):
                return AbsVal.const(v)
            case Nondet():
                return TOP_VAL
            case Var(name=name, ctype=ctype):
                if ctype is not None and ctype.kind == "function":
                    return AbsVal.address(Base("function", name))
                if ctype is not None and ctype.kind == "array":
                    return AbsVal.address(frame.base(name, ctype))
                return self._read_lvalue(state, expr, frame)
            case AddrOf(operand=lv):
                if isinstance(lv, Var) and lv.ctype is not None and lv.ctype.kind == "function":
                    return AbsVal.address(Base("function", lv.name))
                points = {}
                for base, offset in self._raw_locations(state, lv, frame):
                    points[base] = points[base].join(offset) if base in points else offset
                return AbsVal(BOTTOM, _points(points))
            case Deref() | Index() | Field():
                if expr.ctype is not None and expr.ctype.kind in ("array", "record"):
                    points = {}
                    for base, offset in self._raw_locations(state, expr, frame):
                        points[base] = points[base].join(offset) if base in points else offset
                    return AbsVal(BOTTOM, _points(points))
                return self._read_lvalue(state, expr, frame)
            case BinOp(op=op, left=left, right=right):
                return self._binop(state, op, left, right, frame)
            case UnOp(op=op, operand=operand):
                value = self.eval(state, operand, frame)
                if op == "-":
                    return AbsVal(-value.interval)
                if op == "!":
                    truth = self._truth(value)
                    return AbsVal(ONE - truth) if not truth.is_bottom else BOTTOM_VAL
                return TOP_VAL
            case Cast(operand=operand):
                return self.eval(state, operand, frame)
            case Cond(test=test, then=then, orelse=orelse):
                truth = self._truth(self.eval(state, test, frame))
                if truth == ONE:
                    return self.eval(state, then, frame)
                if truth == ZERO:
                    return self.eval(state, orelse, frame)
                return self.eval(state, then, frame).join(self.eval(state, orelse, frame))
        raise TypeError(f"cannot evaluate {expr!r}")

    def _read_lvalue(self, state, lv, frame) -> AbsVal:
        width = lv.ctype.size if lv.ctype is not None else 1
        value = BOTTOM_VAL
        for base, offset in self.locations(state, lv, frame):
            value = value.join(self.read(state, base, offset, width))
        return value

    @staticmethod
    def _truth(value: AbsVal) -> Interval:
        if value.points_to:
            if value.interval.is_bottom or 0 not in value.interval:
                return ONE
            return BOOL
        return value.interval.truth()

    def _binop(self, state, op, left, right, frame) -> AbsVal:
        if op in ("&&", "||"):
            a = self._truth(self.eval(state, left, frame))
            if op == "&&" and a == ZERO:
                return ZERO_VAL
            if op == "||" and a == ONE:
                return AbsVal(ONE)
            b = self._truth(self.eval(state, right, frame))
            if op == "&&":
                return AbsVal(ONE if a == ONE and b == ONE else ZERO if b == ZERO else BOOL)
            return AbsVal(ZERO if a == ZERO and b == ZERO else ONE if b == ONE else BOOL)

        a, b = self.eval(state, left, frame), self.eval(state, right, frame)
        if a.is_bottom or b.is_bottom:
            return BOTTOM_VAL

        if op in COMPARISONS:
            if a.points_to or b.points_to:
                return AbsVal(BOOL)
            return AbsVal(a.interval.compare(op, b.interval))

        if op in ("+", "-") and (a.points_to or b.points_to):
            if a.points_to and b.points_to:
                return TOP_VAL
            pointer, other, pexpr = (a, b, left) if a.points_to else (b, a, right)
            scale = self._pointee_size(pexpr)
            delta = other.interval * Interval.const(scale)
            if op == "-":
                delta = -delta
            if delta.is_bottom:
                delta = TOP
            points = {base: offset + delta for base, offset in pointer.points_to}
            return AbsVal(pointer.interval if not pointer.interval.is_bottom else BOTTOM, _points(points))

        x, y = a.interval, b.interval
        if op == "+":
            return AbsVal(x + y)
        if op == "-":
            return AbsVal(x - y)
        if op == "*":
            return AbsVal(x * y)
        if op == "/":
            return AbsVal(x.div(y))
        if op == "%":
            return AbsVal(x.mod(y))
        if x.is_singleton and y.is_singleton:
            i, j = int(x.lo), int(y.lo)
            exact = {
                "&": lambda: i & j,
                "|": lambda: i | j,
                "^": lambda: i ^ j,
                "<<": lambda: i << j if 0 <= j < 64 else None,
                ">>": lambda: i >> j if 0 <= j < 64 else None,
            }.get(op)
            result = exact() if exact else None
            if result is not None:
                return AbsVal.const(result)
        if op == "&" and x.lo >= 0 and y.lo >= 0:
            return AbsVal(Interval(0, min(x.hi, y.hi)))
        return TOP_VAL

    @staticmethod
    def _pointee_size(expr: Expr) -> int:
        ctype = expr.ctype
        if ctype is None:
            return 1
        if ctype.kind == "array":
            return max(ctype.target.size, 1)
        if ctype.kind == "address":
            return ctype.pointee_size
        return 1

    # Writing

    def write(self, state: AbsState, locations: list, width: int, value: AbsVal) -> AbsState:
        if not state.reachable or not locations:
            return state
        env = dict(state.env)
        single = len(locations) == 1
        for base, offset in locations:
            strong = (
                single
                and offset.is_singleton
                and not base.weak
                and not (self.weak_shared and base.is_shared_kind)
            )
            if offset.is_singleton:
                start, slot_width, summary = _slot(base.ctype, int(offset.lo), self.array_cells)
                cell = Cell(base, start, slot_width or width)
                if summary or slot_width not in (None, width):
                    strong = False
                if strong:
                    env[cell] = value
                    continue
                old = _held(AbsState(env, True), cell, self.defaults)
                if old is None:
                    if base.kind == "global":
                        env[cell] = TOP_VAL
                    continue
                env[cell] = old.join(value)
                continue
            span = Interval(offset.lo, offset.hi + width - 1)
            existing = state.cells(base)
            for cell in existing:
                if cell.span.intersects(span):
                    env[cell] = env[cell].join(value)
            for cell in self._fresh_cells(base, existing, offset, width):
                default = _default(cell, self.defaults)
                if default is not None:
                    env[cell] = default.join(value)
                elif base.kind == "global":
                    env[cell] = TOP_VAL
        return AbsState(env, True)

    def _fresh_cells(self, base: Base, existing: list, offset: Interval, width: int) -> list[Cell]:
        """Cells to materialize for an imprecise store over bytes no cell covers"""
        lo = int(offset.lo)
        if offset.hi == math.inf or (offset.hi - lo) // width >= self.array_cells:
            return [Cell(base, lo, _SUMMARY_WIDTH)]
        fresh = []
        for start in range(lo, int(offset.hi) + 1, width):
            cell = Cell(base, start, width)
            if not any(other.span.intersects(cell.span) for other in existing):
                fresh.append(cell)
        return fresh

    def assign(self, state: AbsState, lv: Expr, value: AbsVal, frame: Frame) -> AbsState:
        width = lv.ctype.size if lv.ctype is not None else 1
        return self.write(state, self.locations(state, lv, frame), width, value)

    def bind(self, state: AbsState, base: Base, value: AbsVal) -> AbsState:
        """Strong write of a whole scalar variable"""
        if not state.reachable:
            return state
        width = base.size or 1
        env = dict(state.env)
        env[Cell(base, 0, width)] = value
        return AbsState(env, True)

    # Guards

    def _strong_cell(self, state, lv, frame) -> Cell | None:
        if not isinstance(lv, (Var, Deref, Index, Field)) or lv.ctype is None:
            return None
        if not lv.ctype.is_scalar:
            return None
        locations = self.locations(state, lv, frame)
        if len(locations) != 1:
            return None
        base, offset = locations[0]
        if not offset.is_singleton or base.weak:
            return None
        start, width, summary = _slot(base.ctype, int(offset.lo), self.array_cells)
        if summary or width not in (None, lv.ctype.size):
            return None
        return Cell(base, start, width or lv.ctype.size)

    def _narrow(self, state, lv, op: str, bound: Interval, frame) -> AbsState:
        cell = self._strong_cell(state, lv, frame)
        if cell is None:
            return state
        old = state.env.get(cell)
        if old is None:
            old = self.read(state, cell.base, Interval.const(cell.offset), cell.width)
        if old.points_to:
            return state
        refined = old.interval.meet(_constrain(op, bound))
        if op == "!=" and bound.is_singleton and not refined.is_bottom:
            if refined.lo == bound.lo:
                refined = Interval(refined.lo + 1, refined.hi)
            if refined.hi == bound.lo:
                refined = Interval(refined.lo, refined.hi - 1)
        if refined.is_bottom:
            return AbsState.unreachable()
        env = dict(state.env)
        env[cell] = AbsVal(refined)
        return AbsState(env, True)

    def refine(self, state: AbsState, cond: Expr, polarity: bool, frame: Frame) -> AbsState:
        """State restricted to executions where cond has the given truth value"""
        if not state.reachable:
            return state
        truth = self._truth(self.eval(state, cond, frame))
        if truth.is_bottom or truth == (ZERO if polarity else ONE):
            return AbsState.unreachable()

        if isinstance(cond, UnOp) and cond.op == "!":
            return self.refine(state, cond.operand, not polarity, frame)
        if isinstance(cond, Cast):
            return self.refine(state, cond.operand, polarity, frame)
        if isinstance(cond, BinOp) and cond.op in ("&&", "||"):
            if (cond.op == "&&") == polarity:
                state = self.refine(state, cond.left, polarity, frame)
                return self.refine(state, cond.right, polarity, frame)
            return state
        if isinstance(cond, BinOp) and cond.op in COMPARISONS:
            op = cond.op if polarity else _NEGATED[cond.op]
            right = self.eval(state, cond.right, frame)
            left = self.eval(state, cond.left, frame)
            if left.points_to or right.points_to:
                return state
            state = self._narrow(state, cond.left, op, right.interval, frame)
            if not state.reachable:
                return state
            return self._narrow(state, cond.right, _SWAPPED[op], left.interval, frame)
        if isinstance(cond, (Var, Deref, Index, Field)):
            return self._narrow(state, cond, "!=" if polarity else "==", ZERO, frame)
        return state


_DEFAULT_EVALUATOR = Evaluator()


def eval_expr(state: AbsState, expr: Expr, frame: Frame | None = None) -> AbsVal:
    """Abstract value of expr in state; names outside frame resolve to globals"""
    return _DEFAULT_EVALUATOR.eval(state, expr, frame or Frame())


# Analysis of one thread class

class Context(NamedTuple):
    thread: str
    call_string: tuple
    stmt: int

    def __str__(self):
        calls = "".join(f"/{callee}@{site}" for site, callee in self.call_string)
        return f"{self.thread}{calls}#{self.stmt}"


def push_call(call_string: tuple, site: int, callee: str, depth: int) -> tuple:
    return (call_string + ((site, callee),))[-depth:]


class ThreadSummary(dict):
    """Context -> AbsState map of one thread class, plus the explored supergraph

    Supergraph nodes are (call string, function, cfg node) triples. Edges carry
    kind (stmt, guard, call or return) and the Stmt or Guard label.
    """

    def __init__(self, thread: str, entry: str, defaults: AbsState | None = None):
        super().__init__()
        self.thread = thread
        self.entry = entry
        self.defaults = defaults
        self.graph = nx.MultiDiGraph()
        self.node_states: dict = {}
        self.context_nodes: dict = {}
        self.entry_node = None
        self.exit_node = None
        self.head_visits: dict = {}
        self.frames: dict = {}

    @property
    def reachable_contexts(self) -> list[Context]:
        return [ctx for ctx, state in self.items() if state.reachable]

    def encountered(self) -> AbsState:
        """Join of every reachable node state"""
        result = AbsState.unreachable()
        for node in sorted(self.node_states, key=_node_key):
            result = join_states(result, self.node_states[node], self.defaults)
        return result

    def exit_state(self) -> AbsState:
        return self.node_states.get(self.exit_node, AbsState.unreachable())


def _node_key(node):
    cs, fn, u = node
    return (len(cs), cs, fn, u)


def call_graph(program) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(program.functions)
    for stmt in program.stmts.values():
        if stmt.kind == CALL and stmt.callee in program.functions:
            graph.add_edge(program.stmt_function[stmt.id], stmt.callee)
    return graph


def check_recursion(program, entry: str):
    graph = call_graph(program)
    reachable = nx.descendants(graph, entry) | {entry}
    sub = graph.subgraph(reachable)
    try:
        cycle = nx.find_cycle(sub)
    except nx.NetworkXNoCycle:
        return
    first = program.functions[cycle[0][0]]
    raise RecursionUnsupported([u for u, _ in cycle], first.loc)


def _on_cycle(cfg, node) -> bool:
    graph = cfg.graph
    if graph.has_edge(node, node):
        return True
    for component in nx.strongly_connected_components(graph):
        if node in component:
            return len(component) > 1
    return False


def repeated_functions(program, cfgs, entry: str) -> set[str]:
    """Functions that may execute more than once per run of entry"""
    graph = call_graph(program)
    reachable = nx.descendants(graph, entry) | {entry}
    repeated = set()
    for fn in nx.topological_sort(graph.subgraph(reachable)):
        if fn == entry:
            continue
        sites = [
            s for s in program.stmts.values()
            if s.kind == CALL and s.callee == fn and program.stmt_function[s.id] in reachable
        ]
        for site in sites:
            caller = program.stmt_function[site.id]
            src = next(u for u, label, _ in cfgs[caller].edges if label is site)
            if caller in repeated or _on_cycle(cfgs[caller], src):
                repeated.add(fn)
        if len(sites) > 1:
            repeated.add(fn)
    return repeated


def weak_allocations(program, cfgs, entry: str, multi_instance: bool) -> set[int]:
    """Alloc statements that may run more than once in one thread class"""
    repeated = repeated_functions(program, cfgs, entry)
    weak = set()
    for fn, cfg in cfgs.items():
        for u, label, _ in cfg.edges:
            if isinstance(label, Stmt) and label.kind == ALLOC:
                if multi_instance or fn in repeated or _on_cycle(cfg, u):
                    weak.add(label.id)
    return weak


class _ThreadAnalysis:

    def __init__(self, program, cfgs, entry, init, mode, thread, call_depth,
                 widening_delay, narrowing, multi_instance, array_cells):
        self.program = program
        self.cfgs = cfgs
        self.entry = entry
        self.init = init
        self.thread = thread
        self.depth = call_depth
        self.delay = widening_delay
        self.narrowing = narrowing
        self.defaults = global_init_state(program, array_cells)
        self.evaluator = Evaluator(array_cells, weak_shared=(mode == WEAK), defaults=self.defaults)
        self.weak_allocs = weak_allocations(program, cfgs, entry, multi_instance)

        self.summary = ThreadSummary(thread, entry, self.defaults)
        self.order: dict = {}
        self.returns: dict = {}
        self.explored: set = set()

    def frame(self, cs, fn) -> Frame:
        key = (cs, fn)
        if key not in self.summary.frames:
            self.summary.frames[key] = Frame.of(self.program, self.thread, fn, cs)
        return self.summary.frames[key]

    def _discover(self, node):
        if node not in self.order:
            self.order[node] = len(self.order)
            self.summary.graph.add_node(node)
            self.explored.add((node[0], node[1]))

    def _add_edge(self, src, dst, kind, label):
        self._discover(dst)
        key = (kind, label.id, getattr(label, "polarity", None))
        if not self.summary.graph.has_edge(src, dst, key):
            self.summary.graph.add_edge(src, dst, key=key, kind=kind, label=label)

    def successors(self, node) -> list:
        cs, fn, u = node
        cfg = self.cfgs[fn]
        found = []
        for label, v in cfg.out_edges(u):
            if isinstance(label, Stmt) and label.kind == CALL and label.callee in self.program.functions:
                callee = label.callee
                inner = push_call(cs, label.id, callee, self.depth)
                target = (inner, callee, self.cfgs[callee].entry)
                found.append(("call", label, target))
                self._register_return(inner, callee, (cs, fn, v), label)
            elif isinstance(label, Guard):
                found.append(("guard", label, (cs, fn, v)))
            else:
                found.append(("stmt", label, (cs, fn, v)))
        if u == cfg.exit:
            for target, label in sorted(self.returns.get((cs, fn), ()), key=lambda r: (_node_key(r[0]), r[1].id)):
                found.append(("return", label, target))
        return found

    def _register_return(self, inner, callee, target, label):
        entries = self.returns.setdefault((inner, callee), set())
        if (target, label) not in entries:
            entries.add((target, label))
            exit_node = (inner, callee, self.cfgs[callee].exit)
            if exit_node in self.states:
                self._push(exit_node)

    # Transfer

    def transfer(self, kind, label, state: AbsState, src, dst) -> AbsState:
        if not state.reachable:
            return state
        ev = self.evaluator
        cs, fn, _ = src
        frame = self.frame(cs, fn)

        if kind == "guard":
            return ev.refine(state, label.cond, label.polarity, frame)

        if kind == "call":
            callee_frame = self.frame(dst[0], dst[1])
            callee = self.program.functions[label.callee]
            values = [ev.eval(state, arg, frame) for arg in label.args]
            state = self._drop_frame(state, callee_frame)
            for (name, ctype), value in zip(callee.formals, values):
                state = ev.bind(state, callee_frame.base(name, ctype), value)
            return state

        if kind == "return":
            callee_frame = frame
            caller_frame = self.frame(dst[0], dst[1])
            returns = self.program.functions[callee_frame.function].returns
            value = TOP_VAL
            if returns.size:
                value = ev.read(state, callee_frame.ret, ZERO, returns.size)
            state = self._drop_frame(state, callee_frame)
            if label.target is not None:
                state = ev.assign(state, label.target, value, caller_frame)
            return state

        stmt = label
        if stmt.kind == "assign":
            return ev.assign(state, stmt.target, ev.eval(state, stmt.value, frame), frame)
        if stmt.kind == RETURN:
            if stmt.value is None:
                return state
            return ev.bind(state, frame.ret, ev.eval(state, stmt.value, frame))
        if stmt.kind == TRYLOCK:
            if stmt.target is None:
                return state
            return ev.assign(state, stmt.target, AbsVal(Interval(0, EBUSY)), frame)
        if stmt.kind == ALLOC:
            if stmt.target is None:
                return state
            size = ev.eval(state, stmt.value, frame).interval
            base = Base(
                "dynamic",
                f"heap@{stmt.loc.line}:{stmt.loc.column}",
                thread=self.thread,
                site=stmt.id,
                weak=stmt.id in self.weak_allocs,
                alloc_size=int(size.hi) if size.is_singleton else None,
                zeroed=stmt.callee == "calloc",
            )
            return ev.assign(state, stmt.target, AbsVal.address(base), frame)
        if stmt.kind == CREATE:
            handle = Base("thread", f"thread@{stmt.loc.line}:{stmt.loc.column}", site=stmt.id)
            return ev.assign(state, stmt.target, AbsVal.address(handle), frame)
        if stmt.kind == CALL and stmt.target is not None:
            return ev.assign(state, stmt.target, TOP_VAL, frame)
        return state

    @staticmethod
    def _drop_frame(state: AbsState, frame: Frame) -> AbsState:
        return state.restrict(
            lambda b: not (
                b.kind in ("local", "formal")
                and b.function == frame.function
                and b.call_string == frame.call_string
                and b.thread == frame.thread
            )
        )

    # Fixpoint

    def _push(self, node):
        if node not in self._queued:
            self._queued.add(node)
            heapq.heappush(self._heap, (self.order[node], node))

    def run(self) -> ThreadSummary:
        cfg = self.cfgs[self.entry]
        entry_node = ((), self.entry, cfg.entry)
        self.summary.entry_node = entry_node
        self.summary.exit_node = ((), self.entry, cfg.exit)
        self._discover(entry_node)

        self.states = {entry_node: self.init}
        self._heap, self._queued = [], set()
        self._push(entry_node)
        heads = self.summary.head_visits

        while self._heap:
            _, node = heapq.heappop(self._heap)
            self._queued.discard(node)
            state = self.states[node]
            for kind, label, dst in self.successors(node):
                self._add_edge(node, dst, kind, label)
                out = self.transfer(kind, label, state, node, dst)
                if not out.reachable:
                    continue
                old = self.states.get(dst, AbsState.unreachable())
                new = join_states(old, out, self.defaults)
                if dst[2] in self.cfgs[dst[1]].loop_heads:
                    heads[dst] = heads.get(dst, 0) + 1
                    if heads[dst] > self.delay:
                        new = widen_states(old, new, self.defaults)
                if not state_leq(new, old):
                    self.states[dst] = new
                    self._push(dst)

        for _ in range(self.narrowing):
            self._descend()

        self._emit()
        return self.summary

    def _descend(self):
        graph = self.summary.graph
        for node in sorted(self.order, key=self.order.get):
            new = self.init if node == self.summary.entry_node else AbsState.unreachable()
            for src, _, data in graph.in_edges(node, data=True):
                pre = self.states.get(src)
                if pre is None:
                    continue
                new = join_states(new, self.transfer(data["kind"], data["label"], pre, src, node), self.defaults)
            self.states[node] = new

    def _emit(self):
        summary = self.summary
        summary.node_states = dict(self.states)
        for cs, fn in sorted(self.explored, key=lambda k: (len(k[0]), k[0], k[1])):
            for u, label, _ in self.cfgs[fn].edges:
                node = (cs, fn, u)
                ctx = Context(self.thread, cs, label.id)
                state = self.states.get(node, AbsState.unreachable())
                if ctx in summary:
                    state = join_states(summary[ctx], state, self.defaults)
                summary[ctx] = state
                summary.context_nodes[ctx] = node
        logger.debug(
            "thread %s: %d contexts, %d supergraph nodes",
            self.thread, len(summary), summary.graph.number_of_nodes(),
        )


def analyze_thread(
    program,
    cfgs,
    entry: str,
    init: AbsState,
    mode: str = STRONG,
    *,
    thread: str | None = None,
    call_depth: int = 2,
    widening_delay: int = 3,
    narrowing: int = 1,
    multi_instance: bool = False,
    array_cells: int = 256,
) -> ThreadSummary:
    """Abstract state before every statement of one thread class

    Args:
        program: Parsed program
        cfgs: Control-flow graphs from build_cfg
        entry: Entry function of the thread class
        init: Initial state, binding globals and the entry's formal
        mode: "strong" or "weak"; weak joins every store to a global or heap cell
        thread: Thread class id, defaults to the entry name
        call_depth: Maximum call string length
        widening_delay: Loop head visits joined before widening starts
        narrowing: Number of descending sweeps after stabilization
        multi_instance: Whether several instances of the class may run

    Returns:
        ThreadSummary mapping each Context to its pre-state

    Raises:
        RecursionUnsupported: the call graph below entry has a cycle
    """
    check_recursion(program, entry)
    analysis = _ThreadAnalysis(
        program, cfgs, entry, init, mode, thread or entry, call_depth,
        widening_delay, narrowing, multi_instance, array_cells,
    )
    return analysis.run()

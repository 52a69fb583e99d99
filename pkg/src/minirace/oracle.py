"""
Bounded exhaustive interleaving explorer

Runs a program concretely under every schedule, one CFG edge per step, and
reports a race when two different thread instances can take conflicting
steps from the same state. Bounds cap loop iterations per frame, the number
of thread instances and the number of explored states.
"""

from dataclasses import dataclass, field, replace
import itertools
import logging
from typing import NamedTuple

from .absint import Context, EBUSY, push_call, scalar_slots
from .config import OracleBounds
from .frontend import (
    AddrOf, ALLOC, ASSERT, ASSIGN, BinOp, BREAK, CALL, Cast, COMPARISONS, Cond, Const,
    CONTINUE, CREATE, Deref, Field, Guard, Index, JOIN, LOCK, Nondet, RDLOCK, RETURN,
    RWUNLOCK, TRYLOCK, TRYLOCK_FLAVORS, UNLOCK, UnOp, Var, WRLOCK,
)

logger = logging.getLogger(__name__)

RACE = "race"
NO_RACE = "no_race"
BOUND_EXCEEDED = "bound_exceeded"

_ALL_ELEMENTS = 1 << 30


class ConcreteTrap(Exception):

    def __init__(self, message: str, stmt_id: int | None = None):
        self.message = message
        self.stmt_id = stmt_id
        super().__init__(message)


class _Pruned(Exception):
    pass


class Ptr(NamedTuple):
    block: tuple
    offset: int


class Touch(NamedTuple):
    block: tuple
    offset: int
    width: int
    kind: str
    atomic: bool

    def conflicts(self, other: "Touch") -> bool:
        if self.atomic or other.atomic or "write" not in (self.kind, other.kind):
            return False
        if self.block != other.block:
            return False
        return self.offset < other.offset + other.width and other.offset < self.offset + self.width


@dataclass(frozen=True)
class _Frame:
    fn: str
    node: int
    site: int | None = None
    ret_target: object = None
    counts: tuple = ()

    def key(self):
        return (self.fn, self.node, self.site)


@dataclass(frozen=True)
class _Thread:
    tid: int
    cls: str
    frames: tuple
    finished: bool = False

    def key(self):
        return (self.tid, self.cls, tuple(f.key() for f in self.frames), self.finished)


@dataclass
class ConcreteState:
    memory: dict
    threads: tuple
    mutexes: dict = field(default_factory=dict)
    readers: dict = field(default_factory=dict)
    writers: dict = field(default_factory=dict)
    heap: tuple = ()
    terminated: bool = False

    def copy(self) -> "ConcreteState":
        return ConcreteState(
            dict(self.memory), self.threads, dict(self.mutexes), dict(self.readers),
            dict(self.writers), self.heap, self.terminated,
        )

    def key(self):
        """Memo key, loop counters excluded"""
        return (
            tuple(sorted(self.memory.items(), key=lambda kv: repr(kv[0]))),
            tuple(t.key() for t in self.threads),
            tuple(sorted(self.mutexes.items())),
            tuple(sorted(self.readers.items())),
            tuple(sorted(self.writers.items())),
            self.heap,
            self.terminated,
        )

    def thread(self, tid: int) -> _Thread:
        return self.threads[tid]

    def with_thread(self, thread: _Thread) -> None:
        threads = list(self.threads)
        threads[thread.tid] = thread
        self.threads = tuple(threads)


def _tdiv(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b > 0) else -q


class _Step:
    """Execution of one edge by one thread against a private state copy"""

    def __init__(self, oracle: "Oracle", state: ConcreteState, tid: int, choices):
        self.oracle = oracle
        self.program = oracle.program
        self.state = state
        self.tid = tid
        self.choices = iter(choices)
        self.touches: list[Touch] = []

    @property
    def thread(self) -> _Thread:
        return self.state.thread(self.tid)

    @property
    def frame(self) -> _Frame:
        return self.thread.frames[-1]

    # Memory

    def var_block(self, name: str, depth: int | None = None) -> tuple:
        thread = self.thread
        depth = len(thread.frames) - 1 if depth is None else depth
        fn = self.program.functions[thread.frames[depth].fn]
        if name == "$ret" or fn.var_type(name) is not None:
            return ("l", self.tid, depth, name)
        return ("g", name)

    def block_size(self, block: tuple) -> int:
        match block:
            case ("g", name):
                return self.program.global_var(name).ctype.size
            case ("l", tid, depth, name):
                fn = self.program.functions[self.state.thread(tid).frames[depth].fn]
                ctype = fn.returns if name == "$ret" else fn.var_type(name)
                return ctype.size
            case ("h", n):
                return self.state.heap[n]
        return 0

    def locate(self, lv) -> Ptr:
        match lv:
            case Var(name=name):
                return Ptr(self.var_block(name), 0)
            case Deref(operand=operand):
                return self._pointer(self.value(operand))
            case Index(base=base, index=index):
                if base.ctype is not None and base.ctype.kind == "array":
                    where = self.locate(base)
                else:
                    where = self._pointer(self.value(base))
                k = self._int(self.value(index))
                return Ptr(where.block, where.offset + k * lv.ctype.size)
            case Field(base=base, name=name, arrow=arrow):
                record = base.ctype.target if arrow else base.ctype
                offset, _ = record.field(name)
                where = self._pointer(self.value(base)) if arrow else self.locate(base)
                return Ptr(where.block, where.offset + offset)
            case Cast(operand=operand):
                return self.locate(operand)
        raise ConcreteTrap("not an lvalue")

    def _pointer(self, value) -> Ptr:
        if not isinstance(value, Ptr):
            raise ConcreteTrap("dereference of a non-pointer")
        return value

    @staticmethod
    def _int(value) -> int:
        if isinstance(value, Ptr):
            raise ConcreteTrap("pointer used as an integer")
        return value

    def _check(self, where: Ptr, width: int):
        size = self.block_size(where.block)
        if where.offset < 0 or where.offset + width > size:
            raise ConcreteTrap(f"out-of-bounds access to {where.block[-1]}")

    def read(self, lv):
        where = self.locate(lv)
        width = lv.ctype.size
        self._check(where, width)
        self.touches.append(Touch(where.block, where.offset, width, "read", lv.ctype.is_atomic))
        return self.state.memory.get((where.block, where.offset), 0)

    def store(self, lv, value):
        where = self.locate(lv)
        width = lv.ctype.size
        self._check(where, width)
        self.touches.append(Touch(where.block, where.offset, width, "write", lv.ctype.is_atomic))
        self.state.memory[(where.block, where.offset)] = value

    # Expressions

    def value(self, expr):
        match expr:
            case Const(value=v):
                return v
            case Nondet():
                return next(self.choices)
            case Var(name=name, ctype=ctype):
                if ctype is not None and ctype.kind == "function":
                    return Ptr(("f", name), 0)
                if ctype is not None and ctype.kind == "array":
                    return self.locate(expr)
                return self.read(expr)
            case AddrOf(operand=lv):
                if isinstance(lv, Var) and lv.ctype is not None and lv.ctype.kind == "function":
                    return Ptr(("f", lv.name), 0)
                return self.locate(lv)
            case Deref() | Index() | Field():
                if expr.ctype is not None and expr.ctype.kind in ("array", "record"):
                    return self.locate(expr)
                return self.read(expr)
            case UnOp(op=op, operand=operand):
                v = self.value(operand)
                if op == "!":
                    return int(not self.truth(v))
                if op == "-":
                    return -self._int(v)
                return ~self._int(v)
            case Cast(operand=operand):
                return self.value(operand)
            case Cond(test=test, then=then, orelse=orelse):
                return self.value(then) if self.truth(self.value(test)) else self.value(orelse)
            case BinOp(op=op, left=left, right=right):
                return self._binop(op, left, right)
        raise ConcreteTrap(f"cannot evaluate {expr!r}")

    @staticmethod
    def truth(value) -> bool:
        return True if isinstance(value, Ptr) else value != 0

    def _binop(self, op, left, right):
        if op == "&&":
            return int(self.truth(self.value(left)) and self.truth(self.value(right)))
        if op == "||":
            return int(self.truth(self.value(left)) or self.truth(self.value(right)))
        a, b = self.value(left), self.value(right)
        if isinstance(a, Ptr) or isinstance(b, Ptr):
            return self._pointer_op(op, a, b, left, right)
        if op in COMPARISONS:
            return int({
                "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b, "==": a == b, "!=": a != b,
            }[op])
        if op in ("/", "%"):
            if b == 0:
                raise ConcreteTrap("division by zero")
            q = _tdiv(a, b)
            return q if op == "/" else a - b * q
        if op in ("<<", ">>") and not 0 <= b < 64:
            raise ConcreteTrap("shift out of range")
        return {
            "+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
            "&": lambda: a & b, "|": lambda: a | b, "^": lambda: a ^ b,
            "<<": lambda: a << b, ">>": lambda: a >> b,
        }[op]()

    @staticmethod
    def _scale(expr) -> int:
        ctype = expr.ctype
        if ctype is not None and ctype.kind == "array":
            return max(ctype.target.size, 1)
        if ctype is not None and ctype.kind == "address":
            return ctype.pointee_size
        return 1

    def _pointer_op(self, op, a, b, left, right):
        if op in ("==", "!="):
            same = a == b
            return int(same if op == "==" else not same)
        if op in COMPARISONS:
            if not (isinstance(a, Ptr) and isinstance(b, Ptr) and a.block == b.block):
                raise ConcreteTrap("comparison of unrelated pointers")
            return int({"<": a.offset < b.offset, "<=": a.offset <= b.offset,
                        ">": a.offset > b.offset, ">=": a.offset >= b.offset}[op])
        if op == "+" and isinstance(a, Ptr) and not isinstance(b, Ptr):
            return Ptr(a.block, a.offset + b * self._scale(left))
        if op == "+" and isinstance(b, Ptr) and not isinstance(a, Ptr):
            return Ptr(b.block, b.offset + a * self._scale(right))
        if op == "-" and isinstance(a, Ptr) and not isinstance(b, Ptr):
            return Ptr(a.block, a.offset - b * self._scale(left))
        if op == "-" and isinstance(a, Ptr) and isinstance(b, Ptr) and a.block == b.block:
            return (a.offset - b.offset) // self._scale(left)
        raise ConcreteTrap(f"unsupported pointer arithmetic {op}")


def nondet_count(label) -> int:
    """Number of nondeterministic reads one step performs"""
    def count(expr) -> int:
        if expr is None:
            return 0
        if isinstance(expr, Nondet):
            return 1
        return sum(count(child) for child in expr.children())

    if isinstance(label, Guard):
        return count(label.cond)
    return count(label.target) + count(label.value) + count(label.entry) + sum(count(a) for a in label.args)


@dataclass
class Outcome:
    tid: int
    stmt_id: int
    touches: list
    state: ConcreteState | None


@dataclass
class OracleResult:
    kind: str
    witness: tuple | None = None
    states: int = 0
    bound_exceeded: bool = False
    coenabled: set = field(default_factory=set)
    traps: list = field(default_factory=list)

    @property
    def word(self) -> str:
        return {RACE: "race", NO_RACE: "no-race", BOUND_EXCEEDED: "unknown"}[self.kind]


class Oracle:

    def __init__(self, program, cfgs, bounds: OracleBounds | None = None, nondet_values=(0, 1)):
        self.program = program
        self.cfgs = cfgs
        self.bounds = bounds or OracleBounds()
        self.nondet_values = tuple(nondet_values)
        self.bound_hit = False
        self.traps: list = []

    # States

    def initial_state(self) -> ConcreteState:
        memory = {}
        for var in self.program.globals:
            values = list(var.init or ())
            for k, (offset, width, _) in enumerate(scalar_slots(var.ctype, _ALL_ELEMENTS)):
                memory[(("g", var.name), offset)] = values[k] if k < len(values) else 0
        main = _Thread(0, "main", (_Frame("main", self.cfgs["main"].entry),))
        return ConcreteState(memory, (main,))

    def _move(self, step: _Step, node: int):
        """Advance the current frame of the stepping thread to node"""
        thread = step.thread
        frame = thread.frames[-1]
        counts = dict(frame.counts)
        if node in self.cfgs[frame.fn].loop_heads:
            counts[node] = counts.get(node, 0) + 1
            if counts[node] > self.bounds.loop_iterations + 1:
                self.bound_hit = True
                raise _Pruned()
        frames = thread.frames[:-1] + (replace(frame, node=node, counts=tuple(sorted(counts.items()))),)
        step.state.with_thread(replace(thread, frames=frames))
        self._settle(step.state, step.tid)

    def _settle(self, state: ConcreteState, tid: int):
        thread = state.thread(tid)
        frame = thread.frames[-1]
        if len(thread.frames) == 1 and frame.node == self.cfgs[frame.fn].exit:
            state.with_thread(replace(thread, finished=True))
            if tid == 0:
                state.terminated = True

    # Steps

    def _lock_key(self, step: _Step, expr) -> tuple:
        where = step._pointer(step.value(expr))
        return (where.block, where.offset)

    def blocked(self, state: ConcreteState, tid: int) -> bool:
        thread = state.thread(tid)
        if thread.finished or state.terminated:
            return True
        frame = thread.frames[-1]
        edges = self.cfgs[frame.fn].out_edges(frame.node)
        if not edges:
            return frame.node != self.cfgs[frame.fn].exit or len(thread.frames) == 1
        label = edges[0][0]
        if isinstance(label, Guard):
            return False
        scratch = _Step(self, state.copy(), tid, itertools.repeat(self.nondet_values[0]))
        try:
            if label.kind == LOCK:
                return self._lock_key(scratch, label.value) in state.mutexes
            if label.kind == RDLOCK:
                return self._lock_key(scratch, label.value) in state.writers
            if label.kind == WRLOCK:
                key = self._lock_key(scratch, label.value)
                return key in state.writers or bool(state.readers.get(key))
            if label.kind == JOIN:
                handle = scratch.value(label.value)
                if not isinstance(handle, Ptr) or handle.block[0] != "t":
                    return False
                return not state.thread(handle.block[1]).finished
        except ConcreteTrap:
            return False
        return False

    def outcomes(self, state: ConcreteState, tid: int) -> list[Outcome]:
        thread = state.thread(tid)
        frame = thread.frames[-1]
        cfg = self.cfgs[frame.fn]
        edges = cfg.out_edges(frame.node)
        if not edges:
            return [self._return_outcome(state, tid)]
        label = edges[0][0]
        found = []
        for choice in itertools.product(self.nondet_values, repeat=nondet_count(label)):
            step = _Step(self, state.copy(), tid, choice)
            try:
                if isinstance(label, Guard):
                    taken = step.truth(step.value(label.cond))
                    target = next(v for lab, v in edges if lab.polarity == taken)
                    self._move(step, target)
                else:
                    self._execute(step, label, edges[0][1])
                found.append(Outcome(tid, label.id, step.touches, step.state))
            except ConcreteTrap as trap:
                trap.stmt_id = label.id
                self.traps.append(trap)
                found.append(Outcome(tid, label.id, step.touches, None))
            except _Pruned:
                found.append(Outcome(tid, label.id, step.touches, None))
        return found

    def _return_outcome(self, state: ConcreteState, tid: int) -> Outcome:
        step = _Step(self, state.copy(), tid, ())
        thread = step.thread
        callee = thread.frames[-1]
        value = step.state.memory.get((("l", tid, len(thread.frames) - 1, "$ret"), 0), 0)
        self._drop_locals(step.state, tid, len(thread.frames) - 1)
        step.state.with_thread(replace(thread, frames=thread.frames[:-1]))
        site = self.program.stmts[callee.site]
        try:
            if callee.ret_target is not None:
                step.store(callee.ret_target, value)
            caller = step.frame
            after = next(v for lab, v in self.cfgs[caller.fn].out_edges(caller.node) if lab is site)
            self._move(step, after)
        except ConcreteTrap as trap:
            trap.stmt_id = site.id
            self.traps.append(trap)
            return Outcome(tid, site.id, step.touches, None)
        except _Pruned:
            return Outcome(tid, site.id, step.touches, None)
        return Outcome(tid, site.id, step.touches, step.state)

    @staticmethod
    def _drop_locals(state: ConcreteState, tid: int, depth: int):
        for key in [k for k in state.memory if k[0][0] == "l" and k[0][1] == tid and k[0][2] == depth]:
            del state.memory[key]

    def _execute(self, step: _Step, stmt, after: int):
        state = step.state
        tid = step.tid
        kind = stmt.kind

        if kind == ASSIGN:
            step.store(stmt.target, step.value(stmt.value))
        elif kind == CALL and stmt.callee in self.program.functions:
            callee = self.program.functions[stmt.callee]
            values = [step.value(arg) for arg in stmt.args]
            thread = step.thread
            depth = len(thread.frames)
            self._drop_locals(state, tid, depth)
            frame = _Frame(stmt.callee, self.cfgs[stmt.callee].entry, stmt.id, stmt.target)
            step.state.with_thread(replace(thread, frames=thread.frames + (frame,)))
            for (name, ctype), value in zip(callee.formals, values):
                state.memory[(("l", tid, depth, name), 0)] = value
            node = frame.node
            if node in self.cfgs[stmt.callee].loop_heads:
                self._move(step, node)
            return
        elif kind == CALL:
            for arg in stmt.args:
                step.value(arg)
            if stmt.target is not None:
                step.store(stmt.target, 0)
        elif kind == RETURN:
            if stmt.value is not None:
                value = step.value(stmt.value)
                state.memory[(("l", tid, len(step.thread.frames) - 1, "$ret"), 0)] = value
        elif kind == CREATE:
            entry = step.value(stmt.entry)
            arg = step.value(stmt.value)
            if not isinstance(entry, Ptr) or entry.block[0] != "f":
                raise ConcreteTrap("thread entry is not a function")
            if len(state.threads) - 1 >= self.bounds.thread_instances:
                self.bound_hit = True
                raise _Pruned()
            child_tid = len(state.threads)
            name = entry.block[1]
            child = _Thread(child_tid, name, (_Frame(name, self.cfgs[name].entry),))
            state.threads = state.threads + (child,)
            formals = self.program.functions[name].formals
            if formals:
                state.memory[(("l", child_tid, 0, formals[0][0]), 0)] = arg
            step.store(stmt.target, Ptr(("t", child_tid), 0))
            self._settle(state, child_tid)
        elif kind == JOIN:
            step.value(stmt.value)
        elif kind in (LOCK, RDLOCK, WRLOCK, UNLOCK, RWUNLOCK, TRYLOCK):
            self._lock_step(step, stmt)
        elif kind == ALLOC:
            size = step._int(step.value(stmt.value))
            block = ("h", len(state.heap))
            state.heap = state.heap + (max(size, 0),)
            if stmt.target is not None:
                step.store(stmt.target, Ptr(block, 0))
        elif kind == ASSERT:
            if stmt.value is not None:
                step.value(stmt.value)
        elif kind in (BREAK, CONTINUE):
            pass
        self._move(step, after)

    def _lock_step(self, step: _Step, stmt):
        state = step.state
        tid = step.tid
        key = self._lock_key(step, stmt.value)
        kind = stmt.kind
        if kind == LOCK:
            state.mutexes[key] = tid
        elif kind == UNLOCK:
            if state.mutexes.get(key) == tid:
                del state.mutexes[key]
        elif kind == RDLOCK:
            state.readers[key] = tuple(sorted(state.readers.get(key, ()) + (tid,)))
        elif kind == WRLOCK:
            state.writers[key] = tid
        elif kind == RWUNLOCK:
            if state.writers.get(key) == tid:
                del state.writers[key]
            elif tid in state.readers.get(key, ()):
                readers = list(state.readers[key])
                readers.remove(tid)
                if readers:
                    state.readers[key] = tuple(readers)
                else:
                    del state.readers[key]
        else:
            flavor = TRYLOCK_FLAVORS[stmt.callee]
            if flavor == "mutex":
                free = key not in state.mutexes
                if free:
                    state.mutexes[key] = tid
            elif flavor == "rwlock_read":
                free = key not in state.writers
                if free:
                    state.readers[key] = tuple(sorted(state.readers.get(key, ()) + (tid,)))
            else:
                free = key not in state.writers and not state.readers.get(key)
                if free:
                    state.writers[key] = tid
            if stmt.target is not None:
                step.store(stmt.target, 0 if free else EBUSY)

    # Exploration

    def enabled(self, state: ConcreteState) -> list[int]:
        return [t.tid for t in state.threads if not self.blocked(state, t.tid)]

    def explore(self, memoize: bool = True, stop_at_race: bool = True) -> OracleResult:
        result = OracleResult(NO_RACE)
        visited = set()
        stack = [self.initial_state()]
        explored = 0

        while stack:
            state = stack.pop()
            if memoize:
                key = state.key()
                if key in visited:
                    continue
                visited.add(key)
            explored += 1
            if explored > self.bounds.states:
                self.bound_hit = True
                break
            if state.terminated:
                continue

            per_thread = {tid: self.outcomes(state, tid) for tid in self.enabled(state)}
            tids = sorted(per_thread)
            for k, t1 in enumerate(tids):
                for t2 in tids[k + 1:]:
                    first, second = per_thread[t1][0], per_thread[t2][0]
                    cls1, cls2 = state.thread(t1).cls, state.thread(t2).cls
                    result.coenabled.add(tuple(sorted(((cls1, first.stmt_id), (cls2, second.stmt_id)))))
                    if result.witness is None and any(
                        a.conflicts(b)
                        for o1 in per_thread[t1] for o2 in per_thread[t2]
                        for a in o1.touches for b in o2.touches
                    ):
                        result.witness = (first.stmt_id, second.stmt_id)
                        logger.debug("race between statements %s", result.witness)
            if result.witness is not None and stop_at_race:
                break

            for tid in reversed(tids):
                for outcome in reversed(per_thread[tid]):
                    if outcome.state is not None:
                        stack.append(outcome.state)

        result.states = explored
        result.bound_exceeded = self.bound_hit
        result.traps = list(self.traps)
        if result.witness is not None:
            result.kind = RACE
        elif self.bound_hit:
            result.kind = BOUND_EXCEEDED
        return result

    # Sequential runs

    def concrete_run(self, call_depth: int = 2, max_steps: int = 100_000) -> list:
        """Observations (Context, values) along the run of main alone"""
        observations = []
        state = self.initial_state()
        call_strings = [()]
        for _ in range(max_steps):
            if state.terminated:
                break
            thread = state.thread(0)
            frame = thread.frames[-1]
            edges = self.cfgs[frame.fn].out_edges(frame.node)
            if edges:
                label = edges[0][0]
                ctx = Context("main", call_strings[-1], label.id)
                observations.append((ctx, self._snapshot(state, thread)))
            outcomes = self.outcomes(state, 0)
            if not outcomes or outcomes[0].state is None:
                break
            nxt = outcomes[0].state
            depth_before, depth_after = len(thread.frames), len(nxt.thread(0).frames)
            if depth_after > depth_before:
                call = nxt.thread(0).frames[-1]
                call_strings.append(push_call(call_strings[-1], call.site, call.fn, call_depth))
            elif depth_after < depth_before:
                call_strings.pop()
            state = nxt
        return observations

    def _snapshot(self, state: ConcreteState, thread: _Thread) -> dict:
        depth = len(thread.frames) - 1
        fn = thread.frames[-1].fn
        values = {}
        for (block, offset), value in state.memory.items():
            if isinstance(value, Ptr):
                continue
            if block[0] == "g":
                values[("global", block[1], offset)] = value
            elif block[0] == "l" and block[1] == thread.tid and block[2] == depth and block[3] != "$ret":
                values[(fn, block[3], offset)] = value
        return values


def oracle_check(program, cfgs, bounds: OracleBounds | None = None, memoize: bool = True,
                 nondet_values=(0, 1), stop_at_race: bool = True) -> OracleResult:
    """Ground-truth race check by bounded exhaustive interleaving

    Args:
        program: Parsed program free of unsupported features
        cfgs: Control-flow graphs from build_cfg
        bounds: Loop iterations per frame, thread instances, explored states
        memoize: Skip states already explored
        nondet_values: Values tried for every nondeterministic read
        stop_at_race: Return at the first conflicting state

    Returns:
        OracleResult of kind race, no_race or bound_exceeded
    """
    oracle = Oracle(program, cfgs, bounds, nondet_values)
    result = oracle.explore(memoize=memoize, stop_at_race=stop_at_race)
    logger.info("oracle: %s after %d states", result.kind, result.states)
    return result


def concrete_run(program, cfgs, call_depth: int = 2, nondet_values=(0,), max_steps: int = 100_000) -> list:
    """Observations of main running alone, with loop bounds lifted"""
    bounds = OracleBounds(max_steps, 1, max_steps)
    return Oracle(program, cfgs, bounds, nondet_values).concrete_run(call_depth, max_steps)

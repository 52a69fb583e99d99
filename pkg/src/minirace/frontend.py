"""
Frontend for the supported pthread subset of C

Parses source text with pycparser, lowers it into a small statement IR with
typed expressions and builds one control-flow graph per function. Source
preprocessing (atomic spellings, NULL, static lock initializers, directive
lines) happens here as well.
"""

from dataclasses import dataclass, field
import itertools
import logging
import re
from typing import NamedTuple

import networkx as nx
from pycparser import c_ast, c_parser

from .config import AnalysisConfig

logger = logging.getLogger(__name__)


class AnalysisError(Exception):
    pass


class Loc(NamedTuple):
    file: str
    line: int
    column: int

    def __str__(self):
        return f"{self.file}:{self.line}:{self.column}"


class ParseError(AnalysisError):

    def __init__(self, message: str, loc: Loc | None = None):
        self.message = message
        self.loc = loc
        super().__init__(f"{loc}: {message}" if loc else message)


class UnsupportedFeature(AnalysisError):

    def __init__(self, feature: str, loc: Loc | None = None):
        self.feature = feature
        self.loc = loc
        where = f" at {loc}" if loc else ""
        super().__init__(f"unsupported feature: {feature}{where}")


# Types

@dataclass(frozen=True)
class CType:
    kind: str
    size: int
    target: "CType | None" = None
    length: int | None = None
    fields: tuple = ()
    name: str | None = None

    @property
    def is_pointer(self) -> bool:
        return self.kind == "address"

    @property
    def is_atomic(self) -> bool:
        return self.kind == "atomic_int"

    @property
    def is_scalar(self) -> bool:
        return self.kind not in ("array", "record", "void", "function")

    @property
    def pointee_size(self) -> int:
        if self.target is None or self.target.size == 0:
            return 1
        return self.target.size

    def field(self, name: str) -> tuple[int, "CType"]:
        for fname, ftype, offset in self.fields:
            if fname == name:
                return offset, ftype
        raise KeyError(name)

    def __str__(self):
        if self.kind == "address":
            return f"{self.target}*"
        if self.kind == "array":
            return f"{self.target}[{self.length}]"
        if self.kind == "record":
            return f"struct {self.name}"
        return self.kind


VOID = CType("void", 0)
FUNCTION = CType("function", 0)


# Expressions

class Expr:
    """Base of the typed expression IR"""

    def children(self) -> tuple["Expr", ...]:
        return ()


def _typed():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Const(Expr):
    value: int
    ctype: CType | None = _typed()


@dataclass(frozen=True)
class Var(Expr):
    name: str
    ctype: CType | None = _typed()


@dataclass(frozen=True)
class Nondet(Expr):
    ctype: CType | None = _typed()


@dataclass(frozen=True)
class AddrOf(Expr):
    operand: Expr
    ctype: CType | None = _typed()

    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class Deref(Expr):
    operand: Expr
    ctype: CType | None = _typed()

    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class Index(Expr):
    base: Expr
    index: Expr
    ctype: CType | None = _typed()

    def children(self):
        return (self.base, self.index)


@dataclass(frozen=True)
class Field(Expr):
    base: Expr
    name: str
    arrow: bool
    ctype: CType | None = _typed()

    def children(self):
        return (self.base,)


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr
    ctype: CType | None = _typed()

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class UnOp(Expr):
    op: str
    operand: Expr
    ctype: CType | None = _typed()

    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class Cast(Expr):
    to: CType
    operand: Expr
    ctype: CType | None = _typed()

    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class Cond(Expr):
    test: Expr
    then: Expr
    orelse: Expr
    ctype: CType | None = _typed()

    def children(self):
        return (self.test, self.then, self.orelse)


LVALUES = (Var, Deref, Index, Field)
COMPARISONS = ("<", "<=", ">", ">=", "==", "!=")


def variables(expr: Expr | None) -> set[str]:
    """Names of all variables read or addressed inside expr"""
    if expr is None:
        return set()
    found = {expr.name} if isinstance(expr, Var) else set()
    for child in expr.children():
        found |= variables(child)
    return found


# Statements

ASSIGN = "assign"
CALL = "call"
IF = "if"
WHILE = "while"
RETURN = "return"
CREATE = "create"
JOIN = "join"
LOCK = "lock"
UNLOCK = "unlock"
TRYLOCK = "trylock"
RDLOCK = "rdlock"
WRLOCK = "wrlock"
RWUNLOCK = "rwunlock"
ALLOC = "alloc"
ASSERT = "assert_nonracing"
BREAK = "break"
CONTINUE = "continue"

LOCK_KINDS = (LOCK, UNLOCK, TRYLOCK, RDLOCK, WRLOCK, RWUNLOCK)

INTRINSIC_NOOPS = frozenset({
    "free",
    "pthread_mutex_init",
    "pthread_mutex_destroy",
    "pthread_rwlock_init",
    "pthread_rwlock_destroy",
    "pthread_attr_init",
    "pthread_attr_destroy",
    "sched_yield",
    "pthread_yield",
})

TRYLOCK_FLAVORS = {
    "pthread_mutex_trylock": "mutex",
    "pthread_rwlock_tryrdlock": "rwlock_read",
    "pthread_rwlock_trywrlock": "rwlock_write",
}

_LOCK_CALLS = {
    "pthread_mutex_lock": LOCK,
    "pthread_mutex_unlock": UNLOCK,
    "pthread_rwlock_rdlock": RDLOCK,
    "pthread_rwlock_wrlock": WRLOCK,
    "pthread_rwlock_unlock": RWUNLOCK,
}

_UNSUPPORTED_CALLS = (
    ("sem_", "semaphore"),
    ("__VERIFIER_atomic", "custom atomic function"),
    ("pthread_cond_", "condition variable"),
    ("pthread_barrier_", "barrier"),
    ("pthread_spin_", "spinlock"),
)

_UNSUPPORTED_TYPES = {
    "sem_t": "semaphore",
    "pthread_cond_t": "condition variable",
    "pthread_barrier_t": "barrier",
    "pthread_spinlock_t": "spinlock",
}

_PROCESS_EXIT = frozenset({"exit", "abort", "_exit", "reach_error", "__assert_fail"})


@dataclass(frozen=True, eq=False)
class Stmt:
    id: int
    loc: Loc
    kind: str
    target: Expr | None = None
    value: Expr | None = None
    callee: str | None = None
    entry: Expr | None = None
    args: tuple = ()
    body: tuple = ()
    orelse: tuple = ()
    step: tuple = ()

    @property
    def lock_flavor(self) -> str:
        if self.kind == TRYLOCK:
            return TRYLOCK_FLAVORS[self.callee]
        if self.kind == RDLOCK:
            return "rwlock_read"
        if self.kind == WRLOCK:
            return "rwlock_write"
        return "mutex"

    def shape(self):
        return (
            self.kind,
            self.target,
            self.value,
            self.callee,
            self.entry,
            self.args,
            tuple(s.shape() for s in self.body),
            tuple(s.shape() for s in self.orelse),
            tuple(s.shape() for s in self.step),
        )

    def __repr__(self):
        return f"Stmt#{self.id}({self.kind} @ {self.loc.line})"


@dataclass(frozen=True)
class Guard:
    stmt: Stmt
    polarity: bool

    @property
    def id(self) -> int:
        return self.stmt.id

    @property
    def cond(self) -> Expr:
        return self.stmt.value


@dataclass(frozen=True)
class GlobalVar:
    name: str
    ctype: CType
    init: tuple | None
    loc: Loc


@dataclass(frozen=True)
class Function:
    name: str
    returns: CType
    formals: tuple
    locals: tuple
    body: tuple
    loc: Loc

    def var_type(self, name: str) -> CType | None:
        for vname, vtype in self.formals + self.locals:
            if vname == name:
                return vtype
        return None

    def is_formal(self, name: str) -> bool:
        return any(vname == name for vname, _ in self.formals)


@dataclass(frozen=True)
class Program:
    file: str
    machine_model: str
    pointer_size: int
    globals: tuple
    functions: dict
    records: dict
    stmts: dict
    stmt_function: dict
    entry: str = "main"

    def global_var(self, name: str) -> GlobalVar | None:
        for var in self.globals:
            if var.name == name:
                return var
        return None

    def function_of(self, stmt_id: int) -> Function:
        return self.functions[self.stmt_function[stmt_id]]

    def shape(self):
        """Structure of the program with statement ids and locations erased"""
        return (
            tuple((g.name, g.ctype, g.init) for g in self.globals),
            tuple(
                (f.name, f.returns, f.formals, f.locals, tuple(s.shape() for s in f.body))
                for f in self.functions.values()
            ),
        )


# Preprocessing

PRELUDE = """# 1 "<prelude>"
typedef int pthread_t;
typedef int pthread_mutex_t;
typedef int pthread_rwlock_t;
typedef int pthread_attr_t;
typedef int pthread_mutexattr_t;
typedef int pthread_rwlockattr_t;
typedef int pthread_cond_t;
typedef int pthread_barrier_t;
typedef int pthread_spinlock_t;
typedef int sem_t;
typedef int atomic_int;
typedef int size_t;
"""

_COMMENT = re.compile(
    r"(\"(?:\\.|[^\"\\])*\"|'(?:\\.|[^'\\])*')|(/\*.*?\*/|//[^\n]*)", re.DOTALL
)


def _strip_comment(match: re.Match) -> str:
    if match.group(1):
        return match.group(1)
    return "\n" * match.group(2).count("\n")


def preprocess(source_text: str, filename: str = "<input>") -> str:
    """Rewrite source text into plain pycparser input, keeping line numbers"""
    text = _COMMENT.sub(_strip_comment, source_text)
    lines = ["" if line.lstrip().startswith("#") else line for line in text.split("\n")]
    text = "\n".join(lines)

    text = re.sub(r"_Atomic\s*\(\s*int\s*\)", "atomic_int", text)
    text = re.sub(r"_Atomic\s+int\b", "atomic_int", text)
    text = re.sub(r"\bint\s+_Atomic\b", "atomic_int", text)
    text = re.sub(r"\bNULL\b", "0", text)
    text = re.sub(r"\bPTHREAD_(?:MUTEX|RWLOCK)_INITIALIZER\b", "0", text)

    return f'{PRELUDE}# 1 "{filename}"\n{text}'


# Translation

_INT_SPELLINGS = frozenset({
    "int", "unsigned", "signed", "long", "short", "char", "_Bool", "size_t",
})

_NAMED_TYPES = {
    "pthread_t": "thread_handle",
    "pthread_mutex_t": "mutex",
    "pthread_rwlock_t": "rwlock",
    "atomic_int": "atomic_int",
}

_STMT_FEATURES = {
    "Goto": "goto",
    "Label": "goto",
    "Switch": "switch",
    "Case": "switch",
    "Default": "switch",
    "DoWhile": "do-while loop",
}


class _Translator(c_ast.NodeVisitor):

    def __init__(self, filename: str, sizes: dict, pointer_size: int):
        self.filename = filename
        self.sizes = sizes
        self.pointer_size = pointer_size

        self.globals: dict[str, GlobalVar] = {}
        self.functions: dict[str, Function] = {}
        self.function_names: set[str] = set()
        self.records: dict[str, CType] = {}
        self.typedefs: dict[str, CType] = {}
        self.stmts: dict[int, Stmt] = {}
        self.stmt_function: dict[int, str] = {}

        self._ids = itertools.count(1)
        self._temps = itertools.count()
        self._anon = itertools.count()
        self._calls: list[tuple[str, Loc]] = []
        self._exits: dict[str, Loc] = {}

        self._function: str | None = None
        self._scope: dict[str, CType] = {}
        self._locals: list[tuple[str, CType]] = []
        self._pending: list[Stmt] = []
        self._loop_depth = 0
        self._no_hoist = False

    def _loc(self, node) -> Loc:
        coord = getattr(node, "coord", None)
        if coord is None:
            return Loc(self.filename, 0, 0)
        return Loc(coord.file or self.filename, coord.line or 0, coord.column or 0)

    def _stmt_node(self, kind: str, node, **fields) -> Stmt:
        stmt = Stmt(next(self._ids), self._loc(node), kind, **fields)
        self.stmts[stmt.id] = stmt
        self.stmt_function[stmt.id] = self._function
        return stmt

    # Types

    def _scalar(self, kind: str) -> CType:
        return CType(kind, int(self.sizes[kind]))

    def _pointer(self, target: CType) -> CType:
        return CType("address", self.pointer_size, target)

    def _ctype(self, node, loc: Loc) -> CType:
        if isinstance(node, c_ast.Typename):
            return self._ctype(node.type, loc)
        if isinstance(node, c_ast.TypeDecl):
            inner = node.type
            if isinstance(inner, c_ast.IdentifierType):
                ctype = self._named_type(inner.names, loc)
            elif isinstance(inner, c_ast.Struct):
                ctype = self._record(inner, loc)
            else:
                raise UnsupportedFeature(type(inner).__name__.lower(), loc)
            if "_Atomic" in (node.quals or []) and ctype.kind == "int":
                ctype = self._scalar("atomic_int")
            return ctype
        if isinstance(node, c_ast.PtrDecl):
            if isinstance(node.type, c_ast.FuncDecl):
                return self._pointer(FUNCTION)
            return self._pointer(self._ctype(node.type, loc))
        if isinstance(node, c_ast.ArrayDecl):
            elem = self._ctype(node.type, loc)
            length = self._const_int(node.dim)
            if length is None:
                raise UnsupportedFeature("variable-length array", loc)
            return CType("array", length * elem.size, elem, length)
        if isinstance(node, c_ast.FuncDecl):
            raise UnsupportedFeature("function declarator", loc)
        raise ParseError(f"unsupported declarator {type(node).__name__}", loc)

    def _named_type(self, names: list[str], loc: Loc) -> CType:
        if all(n in _INT_SPELLINGS for n in names):
            return self._scalar("int")
        if names == ["void"]:
            return VOID
        name = " ".join(names)
        if name in _UNSUPPORTED_TYPES:
            raise UnsupportedFeature(_UNSUPPORTED_TYPES[name], loc)
        if name in _NAMED_TYPES:
            return self._scalar(_NAMED_TYPES[name])
        if name in self.typedefs:
            return self.typedefs[name]
        if name in ("pthread_attr_t", "pthread_mutexattr_t", "pthread_rwlockattr_t"):
            return self._scalar("int")
        if "float" in names or "double" in names:
            raise UnsupportedFeature("floating point", loc)
        raise ParseError(f"unknown type {name}", loc)

    def _record(self, node: c_ast.Struct, loc: Loc) -> CType:
        if node.decls is None:
            if node.name not in self.records:
                raise ParseError(f"unknown struct {node.name}", loc)
            return self.records[node.name]
        name = node.name or f"__anon{next(self._anon)}"
        fields, offset = [], 0
        for decl in node.decls:
            if decl.bitsize is not None:
                raise UnsupportedFeature("bit-field", self._loc(decl))
            ftype = self._ctype(decl.type, self._loc(decl))
            fields.append((decl.name, ftype, offset))
            offset += ftype.size
        record = CType("record", offset, fields=tuple(fields), name=name)
        self.records[name] = record
        return record

    def _const_int(self, node) -> int | None:
        if node is None:
            return None
        if isinstance(node, c_ast.Constant):
            return self._literal(node)
        if isinstance(node, c_ast.UnaryOp) and node.op == "-":
            inner = self._const_int(node.expr)
            return None if inner is None else -inner
        if isinstance(node, c_ast.UnaryOp) and node.op == "sizeof":
            return self._sizeof(node.expr)
        if isinstance(node, c_ast.Cast):
            return self._const_int(node.expr)
        if isinstance(node, c_ast.BinaryOp) and node.op in ("+", "-", "*"):
            left, right = self._const_int(node.left), self._const_int(node.right)
            if left is None or right is None:
                return None
            return {"+": left + right, "-": left - right, "*": left * right}[node.op]
        return None

    def _literal(self, node: c_ast.Constant) -> int:
        value = node.value
        if node.type == "char":
            return ord(bytes(value[1:-1], "utf-8").decode("unicode_escape"))
        if node.type in ("float", "double"):
            raise UnsupportedFeature("floating point", self._loc(node))
        if node.type == "string":
            raise UnsupportedFeature("string literal", self._loc(node))
        digits = value.rstrip("uUlL")
        if len(digits) > 1 and digits.startswith("0") and digits.isdigit():
            return int(digits, 8)
        return int(digits, 0)

    def _sizeof(self, node) -> int:
        if isinstance(node, c_ast.Typename):
            return self._ctype(node.type, self._loc(node)).size
        return self._expr(node).ctype.size

    # File level

    def visit_FileAST(self, node):
        for ext in node.ext:
            if isinstance(ext, c_ast.FuncDef):
                self.function_names.add(ext.decl.name)
        for ext in node.ext:
            if ext.coord is not None and ext.coord.file == "<prelude>":
                continue
            self.visit(ext)

    def visit_Typedef(self, node):
        self.typedefs[node.name] = self._ctype(node.type, self._loc(node))

    def visit_Pragma(self, node):
        pass

    def visit_Decl(self, node):
        loc = self._loc(node)
        if isinstance(node.type, c_ast.FuncDecl):
            if node.name and node.name.startswith("__VERIFIER_atomic"):
                raise UnsupportedFeature("custom atomic function", loc)
            return
        if node.name is None:
            if isinstance(node.type, c_ast.Struct):
                self._record(node.type, loc)
                return
            raise ParseError("declaration without a name", loc)
        if node.name in self.globals:
            raise ParseError(f"duplicate global {node.name}", loc)
        ctype = self._ctype(node.type, loc)
        if ctype.kind in ("void", "function"):
            raise ParseError(f"global {node.name} has no storage", loc)
        self.globals[node.name] = GlobalVar(node.name, ctype, self._global_init(node.init, loc), loc)

    def _global_init(self, init, loc: Loc) -> tuple | None:
        if init is None:
            return None
        if isinstance(init, c_ast.InitList):
            values = []
            for item in init.exprs:
                values.extend(self._global_init(item, loc) or (0,))
            return tuple(values)
        value = self._const_int(init)
        if value is None:
            raise UnsupportedFeature("non-constant global initializer", loc)
        return (value,)

    def visit_FuncDef(self, node):
        name = node.decl.name
        loc = self._loc(node)
        if name.startswith("__VERIFIER_atomic"):
            raise UnsupportedFeature("custom atomic function", loc)
        if name in self.functions:
            raise ParseError(f"duplicate function {name}", loc)

        funcdecl = node.decl.type
        returns = self._ctype(funcdecl.type, loc)
        formals = []
        for param in (funcdecl.args.params if funcdecl.args else []):
            if isinstance(param, c_ast.EllipsisParam):
                raise UnsupportedFeature("variadic function", loc)
            if isinstance(param, c_ast.Typename) or param.name is None:
                if self._ctype(param.type, loc) is VOID:
                    continue
                raise ParseError("unnamed parameter", loc)
            ptype = self._ctype(param.type, self._loc(param))
            if ptype.kind == "array":
                ptype = self._pointer(ptype.target)
            formals.append((param.name, ptype))

        self._function = name
        self._scope = dict(formals)
        self._locals = []
        self._loop_depth = 0
        body = tuple(self._block(node.body.block_items or []))
        self.functions[name] = Function(
            name, returns, tuple(formals), tuple(self._locals), body, loc
        )
        self._function = None

    # Statements

    def _block(self, items) -> list[Stmt]:
        stmts = []
        for item in items:
            stmts.extend(self._stmt(item))
        return stmts

    def _body(self, node) -> tuple:
        if node is None:
            return ()
        if isinstance(node, c_ast.Compound):
            return tuple(self._block(node.block_items or []))
        return tuple(self._stmt(node))

    def _stmt(self, node) -> list[Stmt]:
        name = type(node).__name__
        if name in _STMT_FEATURES:
            raise UnsupportedFeature(_STMT_FEATURES[name], self._loc(node))
        method = getattr(self, f"stmt_{name}", None)
        if method is None:
            raise ParseError(f"unsupported statement {name}", self._loc(node))
        saved, self._pending = self._pending, []
        try:
            stmts = method(node)
            return self._pending + stmts
        finally:
            self._pending = saved

    def _new_local(self, name: str, ctype: CType, loc: Loc):
        if name in self._scope:
            raise UnsupportedFeature("shadowed local declaration", loc)
        self._scope[name] = ctype
        self._locals.append((name, ctype))

    def stmt_Decl(self, node):
        loc = self._loc(node)
        if isinstance(node.type, c_ast.FuncDecl):
            raise UnsupportedFeature("local function declaration", loc)
        if node.name is None and isinstance(node.type, c_ast.Struct):
            self._record(node.type, loc)
            return []
        ctype = self._ctype(node.type, loc)
        self._new_local(node.name, ctype, loc)
        if node.init is None:
            return []
        var = Var(node.name, ctype)
        if isinstance(node.init, c_ast.InitList):
            if ctype.kind != "array" or not ctype.target.is_scalar:
                raise UnsupportedFeature("local aggregate initializer", loc)
            stmts = []
            for k, item in enumerate(node.init.exprs):
                element = Index(var, Const(k, self._scalar("int")), ctype.target)
                stmts.extend(self._assign(element, item, node))
            return stmts
        return self._assign(var, node.init, node)

    def stmt_DeclList(self, node):
        return [s for decl in node.decls for s in self._stmt(decl)]

    def stmt_ExprList(self, node):
        return [s for expr in node.exprs for s in self._stmt(expr)]

    def _assign(self, lvalue: Expr, rhs, node) -> list[Stmt]:
        if lvalue.ctype is not None and lvalue.ctype.kind in ("record", "array"):
            raise UnsupportedFeature("record assignment", self._loc(node))
        if isinstance(rhs, c_ast.FuncCall) and not self._is_nondet(rhs):
            stmt = self._call_stmt(rhs, lvalue)
            return [stmt] if stmt is not None else []
        value = self._expr(rhs)
        return [self._stmt_node(ASSIGN, node, target=lvalue, value=value)]

    def stmt_Assignment(self, node):
        lvalue = self._lvalue(node.lvalue)
        if node.op == "=":
            return self._assign(lvalue, node.rvalue, node)
        value = self._expr(node.rvalue)
        combined = BinOp(node.op[:-1], lvalue, value, self._arith_type(node.op[:-1], lvalue, value))
        return [self._stmt_node(ASSIGN, node, target=lvalue, value=combined)]

    def stmt_UnaryOp(self, node):
        if node.op in ("++", "--", "p++", "p--"):
            lvalue = self._lvalue(node.expr)
            one = Const(1, self._scalar("int"))
            op = "+" if "+" in node.op else "-"
            value = BinOp(op, lvalue, one, self._arith_type(op, lvalue, one))
            return [self._stmt_node(ASSIGN, node, target=lvalue, value=value)]
        self._expr(node)
        return []

    def stmt_Cast(self, node):
        self._expr(node.expr)
        return []

    def stmt_ID(self, node):
        self._expr(node)
        return []

    def stmt_Constant(self, node):
        return []

    def stmt_EmptyStatement(self, node):
        return []

    def stmt_Pragma(self, node):
        return []

    def stmt_Compound(self, node):
        return self._block(node.block_items or [])

    def stmt_FuncCall(self, node):
        if self._is_nondet(node):
            return []
        stmt = self._call_stmt(node, None)
        return [stmt] if stmt is not None else []

    def stmt_If(self, node):
        cond = self._expr(node.cond)
        then = self._body(node.iftrue)
        orelse = self._body(node.iffalse)
        return [self._stmt_node(IF, node, value=cond, body=then, orelse=orelse)]

    def _loop_cond(self, node) -> Expr:
        if node is None:
            return Const(1, self._scalar("int"))
        self._no_hoist = True
        try:
            return self._expr(node)
        finally:
            self._no_hoist = False

    def _loop_body(self, node) -> tuple:
        self._loop_depth += 1
        try:
            return self._body(node)
        finally:
            self._loop_depth -= 1

    def stmt_While(self, node):
        cond = self._loop_cond(node.cond)
        body = self._loop_body(node.stmt)
        return [self._stmt_node(WHILE, node, value=cond, body=body)]

    def stmt_For(self, node):
        init = self._stmt(node.init) if node.init is not None else []
        cond = self._loop_cond(node.cond)
        step = tuple(self._stmt(node.next)) if node.next is not None else ()
        body = self._loop_body(node.stmt)
        loop = self._stmt_node(WHILE, node, value=cond, body=body, step=step)
        return init + [loop]

    def stmt_Return(self, node):
        value = self._expr(node.expr) if node.expr is not None else None
        return [self._stmt_node(RETURN, node, value=value)]

    def stmt_Break(self, node):
        if self._loop_depth == 0:
            raise ParseError("break outside a loop", self._loc(node))
        return [self._stmt_node(BREAK, node)]

    def stmt_Continue(self, node):
        if self._loop_depth == 0:
            raise ParseError("continue outside a loop", self._loc(node))
        return [self._stmt_node(CONTINUE, node)]

    # Calls

    @staticmethod
    def _is_nondet(node) -> bool:
        return (
            isinstance(node, c_ast.FuncCall)
            and isinstance(node.name, c_ast.ID)
            and node.name.name.startswith("__VERIFIER_nondet")
        )

    def _args(self, node) -> list:
        return list(node.args.exprs) if node.args is not None else []

    def _call_stmt(self, node: c_ast.FuncCall, target: Expr | None) -> Stmt | None:
        loc = self._loc(node)
        if not isinstance(node.name, c_ast.ID):
            raise UnsupportedFeature("call through function pointer", loc)
        name = node.name.name
        args = self._args(node)

        for prefix, feature in _UNSUPPORTED_CALLS:
            if name.startswith(prefix):
                raise UnsupportedFeature(feature, loc)
        if name in _PROCESS_EXIT:
            raise UnsupportedFeature("process exit", loc)

        if name == "pthread_create":
            if target is not None:
                raise UnsupportedFeature("pthread_create result", loc)
            if len(args) != 4:
                raise ParseError("pthread_create expects 4 arguments", loc)
            handle = args[0]
            if isinstance(handle, c_ast.UnaryOp) and handle.op == "&":
                handle_lv = self._lvalue(handle.expr)
            else:
                pointer = self._expr(handle)
                handle_lv = Deref(pointer, pointer.ctype.target if pointer.ctype else None)
            entry = self._expr(args[2])
            arg = self._expr(args[3])
            return self._stmt_node(CREATE, node, target=handle_lv, entry=entry, value=arg)

        if name == "pthread_join":
            if target is not None:
                raise UnsupportedFeature("pthread_join result", loc)
            if len(args) < 1:
                raise ParseError("pthread_join expects a thread handle", loc)
            if len(args) > 1 and self._const_int(args[1]) != 0:
                raise UnsupportedFeature("pthread_join result", loc)
            return self._stmt_node(JOIN, node, value=self._expr(args[0]))

        if name in _LOCK_CALLS:
            if target is not None:
                raise UnsupportedFeature(f"{name} result", loc)
            return self._stmt_node(_LOCK_CALLS[name], node, value=self._expr(args[0]), callee=name)

        if name in TRYLOCK_FLAVORS:
            return self._stmt_node(TRYLOCK, node, target=target, value=self._expr(args[0]), callee=name)

        if name == "pthread_exit":
            self._exits.setdefault(self._function, loc)
            value = self._expr(args[0]) if args else None
            return self._stmt_node(RETURN, node, value=value)

        if name == "malloc":
            return self._stmt_node(ALLOC, node, target=target, value=self._expr(args[0]), callee=name)

        if name == "calloc":
            count, size = self._expr(args[0]), self._expr(args[1])
            product = BinOp("*", count, size, self._scalar("int"))
            return self._stmt_node(ALLOC, node, target=target, value=product, callee=name)

        if name in ("assert", "assert_nonracing"):
            value = self._expr(args[0]) if args else None
            return self._stmt_node(ASSERT, node, value=value, callee=name)

        if name in INTRINSIC_NOOPS:
            exprs = tuple(self._expr(a) for a in args)
            return self._stmt_node(CALL, node, target=target, callee=name, args=exprs)

        self._calls.append((name, loc))
        exprs = tuple(self._expr(a) for a in args)
        return self._stmt_node(CALL, node, target=target, callee=name, args=exprs)

    def _return_type(self, name: str) -> CType:
        if name in TRYLOCK_FLAVORS:
            return self._scalar("int")
        if name in ("malloc", "calloc"):
            return self._pointer(VOID)
        return self._scalar("int")

    def _hoist(self, node: c_ast.FuncCall) -> Expr:
        loc = self._loc(node)
        if self._no_hoist:
            raise UnsupportedFeature("call in loop condition", loc)
        name = node.name.name if isinstance(node.name, c_ast.ID) else None
        ctype = self._return_type(name) if name else self._scalar("int")
        temp = f"__tmp{next(self._temps)}"
        self._new_local(temp, ctype, loc)
        var = Var(temp, ctype)
        stmt = self._call_stmt(node, var)
        if stmt is not None:
            self._pending.append(stmt)
        return var

    # Expressions

    def _lvalue(self, node) -> Expr:
        expr = self._expr(node)
        if not isinstance(expr, LVALUES) or (isinstance(expr, Var) and expr.ctype is FUNCTION):
            raise ParseError("expression is not assignable", self._loc(node))
        return expr

    def _arith_type(self, op: str, left: Expr, right: Expr) -> CType:
        if op in COMPARISONS or op in ("&&", "||"):
            return self._scalar("int")
        for side in (left, right):
            if side.ctype is not None and side.ctype.kind == "array" and op in ("+", "-"):
                return self._pointer(side.ctype.target)
        if op in ("+", "-"):
            if left.ctype is not None and left.ctype.is_pointer:
                if right.ctype is not None and right.ctype.is_pointer:
                    return self._scalar("int")
                return left.ctype
            if right.ctype is not None and right.ctype.is_pointer:
                return right.ctype
        return self._scalar("int")

    def _expr(self, node) -> Expr:
        method = getattr(self, f"expr_{type(node).__name__}", None)
        if method is None:
            raise UnsupportedFeature(f"expression {type(node).__name__}", self._loc(node))
        return method(node)

    def expr_ID(self, node):
        name = node.name
        if self._function is not None and name in self._scope:
            return Var(name, self._scope[name])
        if name in self.globals:
            return Var(name, self.globals[name].ctype)
        if name in self.function_names:
            return Var(name, FUNCTION)
        raise ParseError(f"undeclared identifier {name}", self._loc(node))

    def expr_Constant(self, node):
        return Const(self._literal(node), self._scalar("int"))

    def expr_UnaryOp(self, node):
        loc = self._loc(node)
        if node.op == "sizeof":
            return Const(self._sizeof(node.expr), self._scalar("int"))
        if node.op in ("++", "--", "p++", "p--"):
            raise UnsupportedFeature("side effect in expression", loc)
        if node.op == "&":
            operand = self._expr(node.expr)
            if isinstance(operand, Var) and operand.ctype is FUNCTION:
                return AddrOf(operand, self._pointer(FUNCTION))
            if not isinstance(operand, LVALUES):
                raise ParseError("cannot take the address of this expression", loc)
            return AddrOf(operand, self._pointer(operand.ctype))
        operand = self._expr(node.expr)
        if node.op == "*":
            ctype = operand.ctype
            if ctype is None or ctype.kind not in ("address", "array"):
                raise ParseError("dereference of a non-pointer", loc)
            return Deref(operand, ctype.target)
        if node.op == "+":
            return operand
        if node.op in ("-", "!", "~"):
            return UnOp(node.op, operand, self._scalar("int"))
        raise UnsupportedFeature(f"operator {node.op}", loc)

    def expr_BinaryOp(self, node):
        left, right = self._expr(node.left), self._expr(node.right)
        return BinOp(node.op, left, right, self._arith_type(node.op, left, right))

    def expr_ArrayRef(self, node):
        base = self._expr(node.name)
        index = self._expr(node.subscript)
        ctype = base.ctype
        if ctype is None or ctype.kind not in ("array", "address"):
            raise ParseError("subscript of a non-array", self._loc(node))
        return Index(base, index, ctype.target)

    def expr_StructRef(self, node):
        base = self._expr(node.name)
        arrow = node.type == "->"
        record = base.ctype.target if arrow else base.ctype
        if record is None or record.kind != "record":
            raise ParseError("member access on a non-record", self._loc(node))
        try:
            _, ftype = record.field(node.field.name)
        except KeyError:
            raise ParseError(f"no field {node.field.name} in struct {record.name}", self._loc(node))
        return Field(base, node.field.name, arrow, ftype)

    def expr_Cast(self, node):
        to = self._ctype(node.to_type, self._loc(node))
        operand = self._expr(node.expr)
        if to is VOID:
            return operand
        return Cast(to, operand, to)

    def expr_TernaryOp(self, node):
        test = self._expr(node.cond)
        then, orelse = self._expr(node.iftrue), self._expr(node.iffalse)
        return Cond(test, then, orelse, then.ctype)

    def expr_FuncCall(self, node):
        if self._is_nondet(node):
            return Nondet(self._scalar("int"))
        return self._hoist(node)

    def expr_Assignment(self, node):
        raise UnsupportedFeature("assignment inside expression", self._loc(node))

    def expr_ExprList(self, node):
        raise UnsupportedFeature("comma expression", self._loc(node))

    # Validation

    def finish(self, machine_model: str) -> Program:
        if "main" not in self.functions:
            raise ParseError("program has no main function", Loc(self.filename, 1, 1))
        for name, loc in self._calls:
            if name not in self.functions:
                raise UnsupportedFeature(f"call to undefined function {name}", loc)

        entries = set()
        for stmt in self.stmts.values():
            if stmt.kind == CREATE:
                entry = stmt.entry.operand if isinstance(stmt.entry, AddrOf) else stmt.entry
                if isinstance(entry, Var) and entry.ctype is FUNCTION:
                    entries.add(entry.name)
        for function, loc in self._exits.items():
            if function not in entries:
                raise UnsupportedFeature("pthread_exit outside a thread entry", loc)

        return Program(
            file=self.filename,
            machine_model=machine_model,
            pointer_size=self.pointer_size,
            globals=tuple(self.globals.values()),
            functions=dict(self.functions),
            records=dict(self.records),
            stmts=dict(self.stmts),
            stmt_function=dict(self.stmt_function),
        )


_PYCPARSER_LOC = re.compile(r"(?P<file>[^\s:]+):(?P<line>\d+)(?::(?P<col>\d+))?:?\s*(?P<msg>.*)$", re.DOTALL)


def _parse_error(error: c_parser.ParseError) -> ParseError:
    """ParseError with the location pycparser reports, from its message or its coord"""
    text = str(error)
    match = _PYCPARSER_LOC.search(text)
    if match is not None:
        loc = Loc(match["file"], int(match["line"]), int(match["col"] or 0))
        return ParseError(match["msg"] or text, loc)
    coord = getattr(error, "coord", None)
    if coord is not None and coord.line:
        return ParseError(text, Loc(coord.file, coord.line, coord.column or 0))
    return ParseError(text)


def parse_program(
    source_text: str,
    machine_model: str = "lp64",
    filename: str = "<input>",
    config: AnalysisConfig | None = None,
) -> Program:
    """Parse a subset program

    Args:
        source_text: C source text
        machine_model: "ilp32" or "lp64", selects the address size
        filename: Name recorded in statement locations
        config: Analysis settings. Built from params.json when omitted

    Raises:
        ParseError: syntax outside the subset
        UnsupportedFeature: a recognized construct the analyzer does not handle
    """
    if config is None or config["machdep"] != machine_model:
        config = AnalysisConfig(machdep=machine_model)
    params = config.get_params()

    text = preprocess(source_text, filename)
    try:
        ast = c_parser.CParser().parse(text, filename)
    except c_parser.ParseError as error:
        raise _parse_error(error) from error

    translator = _Translator(filename, params["sizes"], config.pointer_size)
    translator.visit(ast)
    program = translator.finish(machine_model)
    logger.debug("parsed %s: %d functions, %d statements", filename, len(program.functions), len(program.stmts))
    return program


# Control-flow graphs

def edge_key(label) -> tuple:
    if isinstance(label, Guard):
        return (label.id, 0 if label.polarity else 1)
    return (label.id, 0)


@dataclass
class Cfg:
    function: str
    graph: nx.MultiDiGraph
    entry: int
    exit: int
    loop_heads: dict

    @property
    def nodes(self) -> list:
        return sorted(self.graph.nodes)

    @property
    def edges(self) -> list:
        return sorted(
            ((u, data["label"], v) for u, v, data in self.graph.edges(data=True)),
            key=lambda e: (e[0], edge_key(e[1])),
        )

    def out_edges(self, node) -> list:
        if node not in self.graph:
            return []
        found = [(data["label"], v) for _, v, data in self.graph.out_edges(node, data=True)]
        return sorted(found, key=lambda e: edge_key(e[0]))

    def stmt_edges(self) -> list:
        return [e for e in self.edges if isinstance(e[1], Stmt)]


class _CfgBuilder:

    def __init__(self, function: Function):
        self.function = function
        self._ids = itertools.count()
        self.entry = next(self._ids)
        self.exit = next(self._ids)
        self.edges: list = []
        self.epsilons: list = []
        self.heads: dict = {}

    def new(self) -> int:
        return next(self._ids)

    def seq(self, stmts, cur: int, loop) -> int:
        for stmt in stmts:
            cur = self.stmt(stmt, cur, loop)
        return cur

    def stmt(self, stmt: Stmt, cur: int, loop) -> int:
        if stmt.kind == RETURN:
            self.edges.append((cur, stmt, self.exit))
            return self.new()
        if stmt.kind == BREAK:
            self.edges.append((cur, stmt, loop[1]))
            return self.new()
        if stmt.kind == CONTINUE:
            self.edges.append((cur, stmt, loop[0]))
            return self.new()
        if stmt.kind == IF:
            then_node, else_node, join = self.new(), self.new(), self.new()
            self.edges.append((cur, Guard(stmt, True), then_node))
            self.edges.append((cur, Guard(stmt, False), else_node))
            self.epsilons.append((self.seq(stmt.body, then_node, loop), join))
            self.epsilons.append((self.seq(stmt.orelse, else_node, loop), join))
            return join
        if stmt.kind == WHILE:
            head, body, after, step = self.new(), self.new(), self.new(), self.new()
            self.epsilons.append((cur, head))
            self.heads[head] = stmt
            self.edges.append((head, Guard(stmt, True), body))
            self.edges.append((head, Guard(stmt, False), after))
            self.epsilons.append((self.seq(stmt.body, body, (step, after)), step))
            self.epsilons.append((self.seq(stmt.step, step, loop), head))
            return after
        nxt = self.new()
        self.edges.append((cur, stmt, nxt))
        return nxt

    def build(self) -> Cfg:
        end = self.seq(self.function.body, self.entry, None)
        self.epsilons.append((end, self.exit))

        parent = {}

        def find(n):
            parent.setdefault(n, n)
            root = n
            while parent[root] != root:
                root = parent[root]
            while parent[n] != root:
                parent[n], n = root, parent[n]
            return root

        def rank(n):
            return (n == self.exit, n == self.entry, n in self.heads, -n)

        for u, v in self.epsilons:
            ru, rv = find(u), find(v)
            if ru != rv:
                keep, drop = (ru, rv) if rank(ru) >= rank(rv) else (rv, ru)
                parent[drop] = keep

        graph = nx.MultiDiGraph()
        entry, exit_ = find(self.entry), find(self.exit)
        graph.add_node(entry)
        graph.add_node(exit_)
        for u, label, v in self.edges:
            graph.add_edge(find(u), find(v), key=edge_key(label), label=label)
        heads = {find(h): stmt for h, stmt in self.heads.items()}
        return Cfg(self.function.name, graph, entry, exit_, heads)


def build_cfg(program: Program) -> dict[str, Cfg]:
    """One control-flow graph per function, edges labelled by Stmt or Guard"""
    return {name: _CfgBuilder(function).build() for name, function in program.functions.items()}


# Rendering

def _declarator(ctype: CType, name: str) -> str:
    if ctype.kind == "address":
        if ctype.target is FUNCTION or ctype.target.kind == "function":
            return f"void *(*{name})(void *)"
        inner = f"*{name}"
        if ctype.target.kind == "array":
            inner = f"(*{name})"
        return _declarator(ctype.target, inner)
    if ctype.kind == "array":
        return _declarator(ctype.target, f"{name}[{ctype.length}]")
    return f"{_base_name(ctype)} {name}".rstrip()


def _base_name(ctype: CType) -> str:
    return {
        "int": "int",
        "atomic_int": "_Atomic int",
        "mutex": "pthread_mutex_t",
        "rwlock": "pthread_rwlock_t",
        "thread_handle": "pthread_t",
        "void": "void",
    }.get(ctype.kind, f"struct {ctype.name}")


def render_expr(expr: Expr) -> str:
    match expr:
        case Const(value=v):
            return f"({v})" if v < 0 else str(v)
        case Var(name=n):
            return n
        case Nondet():
            return "__VERIFIER_nondet_int()"
        case AddrOf(operand=o):
            return f"(&{render_expr(o)})"
        case Deref(operand=o):
            return f"(*{render_expr(o)})"
        case Index(base=b, index=i):
            return f"{render_expr(b)}[{render_expr(i)}]"
        case Field(base=b, name=n, arrow=a):
            return f"{render_expr(b)}{'->' if a else '.'}{n}"
        case BinOp(op=op, left=l, right=r):
            return f"({render_expr(l)} {op} {render_expr(r)})"
        case UnOp(op=op, operand=o):
            return f"({op}{render_expr(o)})"
        case Cast(to=t, operand=o):
            return f"(({_declarator(t, '').strip()}) {render_expr(o)})"
        case Cond(test=t, then=a, orelse=b):
            return f"({render_expr(t)} ? {render_expr(a)} : {render_expr(b)})"
    raise TypeError(f"cannot render {expr!r}")


def _handle_arg(target: Expr) -> str:
    if isinstance(target, Deref):
        return render_expr(target.operand)
    return f"&{render_expr(target)}"


def _render_simple(stmt: Stmt) -> str:
    assign = f"{render_expr(stmt.target)} = " if stmt.target is not None else ""
    match stmt.kind:
        case "assign":
            return f"{render_expr(stmt.target)} = {render_expr(stmt.value)}"
        case "call":
            args = ", ".join(render_expr(a) for a in stmt.args)
            return f"{assign}{stmt.callee}({args})"
        case "create":
            return (
                f"pthread_create({_handle_arg(stmt.target)}, 0, "
                f"{render_expr(stmt.entry)}, {render_expr(stmt.value)})"
            )
        case "join":
            return f"pthread_join({render_expr(stmt.value)}, 0)"
        case "lock" | "unlock" | "rdlock" | "wrlock" | "rwunlock":
            return f"{stmt.callee}({render_expr(stmt.value)})"
        case "trylock":
            return f"{assign}{stmt.callee}({render_expr(stmt.value)})"
        case "alloc":
            if stmt.callee == "calloc":
                size = stmt.value
                return f"{assign}calloc({render_expr(size.left)}, {render_expr(size.right)})"
            return f"{assign}malloc({render_expr(stmt.value)})"
        case "assert_nonracing":
            if stmt.value is None:
                return "assert_nonracing()"
            return f"assert({render_expr(stmt.value)})"
        case "return":
            return "return" if stmt.value is None else f"return {render_expr(stmt.value)}"
        case "break" | "continue":
            return stmt.kind
    raise ValueError(f"cannot render statement kind {stmt.kind}")


def _render_block(stmts, depth: int) -> list[str]:
    pad = "    " * depth
    lines = []
    for stmt in stmts:
        if stmt.kind == IF:
            lines.append(f"{pad}if ({render_expr(stmt.value)}) {{")
            lines.extend(_render_block(stmt.body, depth + 1))
            lines.append(f"{pad}}} else {{")
            lines.extend(_render_block(stmt.orelse, depth + 1))
            lines.append(f"{pad}}}")
        elif stmt.kind == WHILE and stmt.step:
            step = ", ".join(_render_simple(s) for s in stmt.step)
            lines.append(f"{pad}for (; {render_expr(stmt.value)}; {step}) {{")
            lines.extend(_render_block(stmt.body, depth + 1))
            lines.append(f"{pad}}}")
        elif stmt.kind == WHILE:
            lines.append(f"{pad}while ({render_expr(stmt.value)}) {{")
            lines.extend(_render_block(stmt.body, depth + 1))
            lines.append(f"{pad}}}")
        else:
            lines.append(f"{pad}{_render_simple(stmt)};")
    return lines


def render(program: Program) -> str:
    """Pretty-print a Program back into subset source text"""
    lines = ["#include <pthread.h>", ""]
    for record in program.records.values():
        lines.append(f"struct {record.name} {{")
        for fname, ftype, _ in record.fields:
            lines.append(f"    {_declarator(ftype, fname)};")
        lines.append("};")
    for var in program.globals:
        init = ""
        if var.init is not None:
            values = ", ".join(str(v) for v in var.init)
            init = f" = {{{values}}}" if var.ctype.kind in ("array", "record") else f" = {values}"
        lines.append(f"{_declarator(var.ctype, var.name)}{init};")
    for function in program.functions.values():
        formals = ", ".join(_declarator(t, n) for n, t in function.formals) or "void"
        lines.append("")
        lines.append(f"{_declarator(function.returns, function.name)}({formals}) {{")
        for name, ctype in function.locals:
            lines.append(f"    {_declarator(ctype, name)};")
        lines.extend(_render_block(function.body, 1))
        lines.append("}")
    return "\n".join(lines) + "\n"

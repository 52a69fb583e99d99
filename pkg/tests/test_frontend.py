from types import SimpleNamespace

import pytest
from pycparser import c_parser

from src.minirace.absint import global_init_state
from src.minirace.frontend import (
    ALLOC, ASSIGN, CALL, CREATE, Guard, IF, LOCK, ParseError, RETURN, Stmt, TRYLOCK,
    UnsupportedFeature, WHILE, _parse_error, build_cfg, parse_program, render,
)


def _stmt_edges(cfg):
    return [label for _, label, _ in cfg.edges if isinstance(label, Stmt)]


def _guard_edges(cfg):
    return [label for _, label, _ in cfg.edges if isinstance(label, Guard)]


def test_atomic_spellings_share_one_kind(build) -> None:
    program, _ = build(
        "_Atomic int a;\n"
        "atomic_int b;\n"
        "_Atomic(int) c;\n"
        "int main(void) { return 0; }\n"
    )
    for name in ("a", "b", "c"):
        assert program.global_var(name).ctype.kind == "atomic_int"
        assert program.global_var(name).ctype.size == 4


def test_uninitialized_global_defaults_to_zero(build) -> None:
    program, _ = build("int x;\nint main(void) { return x; }\n")
    assert program.global_var("x").init is None
    state = global_init_state(program)
    assert state.interval_of("x").is_singleton
    assert 0 in state.interval_of("x")


def test_semaphore_is_unsupported() -> None:
    source = (
        "int main(void) {\n"
        "    int s;\n"
        "    sem_wait(&s);\n"
        "    return 0;\n"
        "}\n"
    )
    with pytest.raises(UnsupportedFeature) as caught:
        parse_program(source)
    assert caught.value.feature == "semaphore"
    assert caught.value.loc.line == 3


@pytest.mark.parametrize(
    "body, feature",
    [
        ("l: x = 1; goto l;", "goto"),
        ("switch (x) { case 0: x = 1; }", "switch"),
        ("do { x = 1; } while (x);", "do-while loop"),
        ("int v[x];", "variable-length array"),
        ("exit(1);", "process exit"),
        ("pthread_exit(0);", "pthread_exit outside a thread entry"),
    ],
)
def test_recognized_constructs_outside_the_subset(body: str, feature: str) -> None:
    source = f"int main(void) {{\n    int x = 0;\n    {body}\n    return 0;\n}}\n"
    with pytest.raises(UnsupportedFeature) as caught:
        parse_program(source)
    assert caught.value.feature == feature


def test_call_in_loop_condition_is_unsupported() -> None:
    source = (
        "int f(int a) { return a; }\n"
        "int main(void) { int i = 0; while (f(i) < 3) { i = i + 1; } return 0; }\n"
    )
    with pytest.raises(UnsupportedFeature, match="call in loop condition"):
        parse_program(source)


def test_syntax_error_carries_location() -> None:
    with pytest.raises(ParseError) as caught:
        parse_program("int main(void) {\n    int x = ;\n}\n", filename="bad.c")
    assert caught.value.loc is not None
    assert caught.value.loc.file == "bad.c"
    assert caught.value.loc.line == 2


@pytest.mark.parametrize(
    "message, line, column",
    [
        ("bad.c:2:13: before: ;", 2, 13),
        ("bad.c:2: before: ;", 2, 0),
        ("At bad.c:7:1 - unexpected token", 7, 1),
    ],
)
def test_pycparser_message_formats_keep_the_location(message: str, line: int, column: int) -> None:
    error = _parse_error(c_parser.ParseError(message))
    assert (error.loc.file, error.loc.line, error.loc.column) == ("bad.c", line, column)


def test_pycparser_coord_is_used_without_a_location_in_the_message() -> None:
    raised = c_parser.ParseError("unexpected token")
    raised.coord = SimpleNamespace(file="bad.c", line=5, column=3)
    error = _parse_error(raised)
    assert error.loc == ("bad.c", 5, 3)
    assert error.message == "unexpected token"


def test_missing_main_is_a_parse_error() -> None:
    with pytest.raises(ParseError):
        parse_program("int helper(void) { return 1; }\n")


def test_address_size_depends_on_machine_model() -> None:
    source = (
        "struct node { int key; int *next; };\n"
        "int *p;\n"
        "int arr[5];\n"
        "struct node n;\n"
        "int main(void) { return 0; }\n"
    )
    small = parse_program(source, "ilp32")
    large = parse_program(source, "lp64")
    assert small.global_var("p").ctype.size == 4
    assert large.global_var("p").ctype.size == 8
    assert small.global_var("arr").ctype.size == 20
    assert large.global_var("arr").ctype.size == 20
    assert small.global_var("n").ctype.size == 8
    assert large.global_var("n").ctype.size == 12
    assert large.global_var("n").ctype.field("next") == (4, large.global_var("p").ctype)


def test_comments_and_directives_keep_line_numbers(build, at) -> None:
    program, _ = build(
        "#include <pthread.h>\n"
        "/* a comment\n"
        "   spanning lines */\n"
        "int g;\n"
        "int main(void) {\n"
        "    // set it\n"
        "    g = 1;\n"
        "    return 0;\n"
        "}\n"
    )
    assert at(program, 7).kind == ASSIGN


def test_nested_calls_are_hoisted(build) -> None:
    program, _ = build(
        "int twice(int a) { return a * 2; }\n"
        "int main(void) { int x; x = twice(3) + 1; return x; }\n"
    )
    body = program.functions["main"].body
    assert [s.kind for s in body] == [CALL, ASSIGN, RETURN]
    assert body[0].callee == "twice"
    assert body[0].target.name.startswith("__tmp")


def test_pthread_calls_become_statements(build) -> None:
    program, _ = build(
        "pthread_mutex_t m;\n"
        "void *work(void *arg) { return 0; }\n"
        "int main(void) {\n"
        "    pthread_t t;\n"
        "    int *p;\n"
        "    int r;\n"
        "    pthread_create(&t, 0, work, 0);\n"
        "    r = pthread_mutex_trylock(&m);\n"
        "    p = malloc(8);\n"
        "    return 0;\n"
        "}\n"
    )
    kinds = [s.kind for s in program.functions["main"].body]
    assert kinds == [CREATE, TRYLOCK, ALLOC, RETURN]


def test_linear_cfg_has_one_edge_per_statement(build) -> None:
    program, cfgs = build("int x;\nvoid f(void) { x = 1; return; }\nint main(void) { f(); return 0; }\n")
    cfg = cfgs["f"]
    assert len(_stmt_edges(cfg)) == 2
    assert not _guard_edges(cfg)
    assert not cfg.out_edges(cfg.exit)


def test_while_loop_has_two_guards_and_a_back_edge(build) -> None:
    program, cfgs = build("int main(void) { int x = 0; while (x < 10) x = x + 1; return x; }\n")
    cfg = cfgs["main"]
    (head,) = cfg.loop_heads
    guards = [(label.polarity, v) for label, v in cfg.out_edges(head)]
    assert sorted(p for p, _ in guards) == [False, True]
    body = next(v for p, v in guards if p)
    (label, back), = cfg.out_edges(body)
    assert label.kind == ASSIGN
    assert back == head


def test_if_else_locks_form_a_diamond(build) -> None:
    program, cfgs = build(
        "pthread_mutex_t m, n;\n"
        "int c;\n"
        "int main(void) {\n"
        "    if (c) pthread_mutex_lock(&m); else pthread_mutex_lock(&n);\n"
        "    return 0;\n"
        "}\n"
    )
    cfg = cfgs["main"]
    guards = _guard_edges(cfg)
    assert len(guards) == 2
    assert {g.polarity for g in guards} == {True, False}
    locks = [(u, v) for u, label, v in cfg.edges if isinstance(label, Stmt) and label.kind == LOCK]
    assert len(locks) == 2
    assert locks[0][1] == locks[1][1]


def test_every_statement_sits_on_exactly_one_edge(corpus_program) -> None:
    program, cfgs = corpus_program("seq_continue.c")
    seen = {}
    for cfg in cfgs.values():
        for _, label, _ in cfg.edges:
            seen[label.id] = seen.get(label.id, 0) + 1
    for stmt in program.stmts.values():
        expected = 2 if stmt.kind in (IF, WHILE) else 1
        assert seen.get(stmt.id) == expected, stmt


def test_for_loop_lowers_to_while_with_step(build) -> None:
    program, _ = build("int main(void) { int i; for (i = 0; i < 3; i++) { } return i; }\n")
    init, loop, ret = program.functions["main"].body
    assert init.kind == ASSIGN
    assert loop.kind == WHILE
    assert [s.kind for s in loop.step] == [ASSIGN]
    assert ret.kind == RETURN


@pytest.mark.parametrize(
    "name",
    [
        "racy_counter.c",
        "trylock_guard.c",
        "struct_same_field.c",
        "heap_private.c",
        "spawn_loop.c",
        "busy_wait.c",
        "function_call.c",
        "seq_for_sum.c",
        "seq_local_array.c",
        "seq_ternary.c",
        "seq_continue.c",
        "seq_pointer_walk.c",
    ],
)
def test_render_round_trip(corpus_program, name: str) -> None:
    program, _ = corpus_program(name)
    again = parse_program(render(program), program.machine_model, name)
    assert again.shape() == program.shape()

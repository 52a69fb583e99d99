import math
from pathlib import Path

import pytest

from src.minirace.absint import (
    AbsState, AbsVal, Base, BOTTOM, Cell, Context, Interval, RecursionUnsupported, STRONG, TOP, WEAK,
    analyze_thread, eval_expr, global_init_state, join_states, overlay_states, push_call, state_leq, widen_states,
)
from src.minirace.frontend import IF, RETURN, WHILE, BinOp, Const, CType, Deref, Var
from src.minirace.oracle import concrete_run


INT = CType("int", 4)
ADDRESS = CType("address", 8, target=INT)
SEQUENTIAL = sorted(p.name for p in (Path(__file__).resolve().parents[1] / "data" / "corpus").glob("seq_*.c"))


def _global(name: str, ctype: CType = INT) -> Base:
    return Base("global", name, ctype=ctype)


def _state(**intervals) -> AbsState:
    return AbsState({Cell(_global(n), 0, 4): AbsVal(Interval(*bounds)) for n, bounds in intervals.items()}, True)


def _main(program, cfgs, **kwargs):
    return analyze_thread(program, cfgs, "main", global_init_state(program), **kwargs)


# Intervals

def test_interval_arithmetic() -> None:
    assert Interval(2, 3) + Interval(1, 1) == Interval(3, 4)
    assert Interval(2, 3) - Interval(1, 5) == Interval(-3, 2)
    assert Interval(-2, 3) * Interval(4, 5) == Interval(-10, 15)
    assert Interval(-7, -7).div(Interval(2, 2)) == Interval(-3, -3)
    assert Interval(17, 17).mod(Interval(5, 5)) == Interval(2, 2)
    assert Interval(0, 10).div(Interval(0, 10)) == TOP
    assert (Interval(1, 2) + BOTTOM).is_bottom


def test_interval_lattice() -> None:
    assert Interval(0, 0).join(Interval(5, 5)) == Interval(0, 5)
    assert Interval(0, 5).meet(Interval(3, 9)) == Interval(3, 5)
    assert Interval(0, 1).meet(Interval(3, 4)).is_bottom
    assert Interval(1, 2).leq(Interval(0, 5))
    assert not Interval(0, 5).leq(Interval(1, 2))
    assert BOTTOM.leq(Interval(0, 0))


def test_interval_widening() -> None:
    assert Interval(0, 1).widen(Interval(0, 2)) == Interval(0, math.inf)
    assert Interval(0, 5).widen(Interval(0, 5)) == Interval(0, 5)
    assert Interval(0, 5).widen(Interval(-1, 5)) == Interval(-math.inf, 5)


def test_interval_comparisons() -> None:
    assert Interval(0, 3).compare("<", Interval(5, 5)) == Interval(1, 1)
    assert Interval(6, 9).compare("<", Interval(5, 5)) == Interval(0, 0)
    assert Interval(0, 9).compare("<", Interval(5, 5)) == Interval(0, 1)
    assert str(TOP) == "[-inf,+inf]"


# States

def test_join_states_examples() -> None:
    joined = join_states(_state(x=(0, 0)), _state(x=(5, 5)))
    assert joined.interval_of("x") == Interval(0, 5)

    s = _state(x=(1, 2))
    assert join_states(AbsState.unreachable(), s) == s
    assert join_states(s, AbsState.unreachable()) == s

    a, b = _global("a"), _global("b")
    p = Cell(_global("p", ADDRESS), 0, 8)
    left = AbsState({p: AbsVal.address(a)}, True)
    right = AbsState({p: AbsVal.address(b)}, True)
    assert set(join_states(left, right).env[p].bases()) == {a, b}


def test_join_is_an_upper_bound() -> None:
    a, b = _state(x=(0, 3), y=(1, 1)), _state(x=(7, 9), y=(-4, 0))
    joined = join_states(a, b)
    assert state_leq(a, joined)
    assert state_leq(b, joined)
    assert not state_leq(joined, a)


def test_widen_states_examples() -> None:
    assert widen_states(_state(x=(0, 1)), _state(x=(0, 2))).interval_of("x") == Interval(0, math.inf)
    stable = _state(x=(0, 5))
    assert widen_states(stable, stable) == stable
    assert widen_states(_state(x=(0, 5)), _state(x=(-1, 5))).interval_of("x") == Interval(-math.inf, 5)


def test_absent_local_cells_are_top() -> None:
    local = Base("local", "v", "main", ctype=INT)
    with_cell = AbsState({Cell(local, 0, 4): AbsVal(Interval(1, 1))}, True)
    assert state_leq(with_cell, AbsState({}, True))
    assert not state_leq(AbsState({}, True), with_cell)


def test_globals_missing_on_one_side_join_to_top() -> None:
    joined = join_states(_state(g=(0, 0)), AbsState({}, True))
    assert joined.interval_of("g") == TOP
    assert eval_expr(joined, Var("g", INT)).interval == TOP


def test_globals_missing_on_one_side_take_their_initializer() -> None:
    initial = _state(g=(0, 0))
    joined = join_states(_state(g=(5, 5)), AbsState({}, True), initial)
    assert joined.interval_of("g") == Interval(0, 5)
    widened = widen_states(_state(g=(0, 0)), AbsState({}, True), initial)
    assert widened.interval_of("g") == Interval(0, 0)


def test_overlay_keeps_cells_of_both_fragments() -> None:
    local = Base("local", "v", "main", ctype=INT)
    fragment = AbsState({Cell(local, 0, 4): AbsVal(Interval(3, 3))}, True)
    overlaid = overlay_states(_state(g=(5, 5)), fragment)
    assert overlaid.interval_of("g") == Interval(5, 5)
    assert overlaid.interval_of("v") == Interval(3, 3)
    assert not overlay_states(AbsState.unreachable(), fragment).reachable


def test_call_strings_keep_the_latest_calls() -> None:
    cs = push_call((), 1, "f", 2)
    cs = push_call(cs, 2, "g", 2)
    assert cs == ((1, "f"), (2, "g"))
    assert push_call(cs, 3, "h", 2) == ((2, "g"), (3, "h"))


# Expressions

def test_eval_addition() -> None:
    x = Var("x", INT)
    assert eval_expr(_state(x=(2, 3)), BinOp("+", x, Const(1), INT)).interval == Interval(3, 4)


def test_eval_dereference() -> None:
    g, p = _global("g"), _global("p", ADDRESS)
    state = AbsState({
        Cell(g, 0, 4): AbsVal(Interval(7, 7)),
        Cell(p, 0, 8): AbsVal.address(g),
    }, True)
    assert eval_expr(state, Deref(Var("p", ADDRESS), INT)).interval == Interval(7, 7)


def test_eval_division_by_possible_zero_is_top() -> None:
    x = Var("x", INT)
    assert eval_expr(_state(x=(0, 10)), BinOp("/", x, x, INT)).interval == TOP


# Thread analysis

def test_straight_line_assignments(build, at) -> None:
    program, cfgs = build(
        "int x;\n"
        "int main(void) {\n"
        "    x = 1;\n"
        "    x = x + 1;\n"
        "    return 0;\n"
        "}\n"
    )
    summary = _main(program, cfgs, mode=STRONG)
    second = Context("main", (), at(program, 4).id)
    assert summary[second].interval_of("x") == Interval(1, 1)
    assert summary.exit_state().interval_of("x") == Interval(2, 2)


def test_loop_exit_is_refined_after_widening(corpus_program, at) -> None:
    program, cfgs = corpus_program("seq_count_loop.c")
    summary = _main(program, cfgs)
    ret = Context("main", (), at(program, 7, RETURN).id)
    assert summary[ret].interval_of("x") == Interval(8, 8)
    head = Context("main", (), at(program, 4, WHILE).id)
    assert summary[head].interval_of("x") == Interval(0, 8)


@pytest.mark.parametrize("name", ["seq_count_loop.c", "seq_countdown.c", "seq_for_sum.c"])
def test_widening_bounds_loop_head_visits(corpus_program, name: str) -> None:
    program, cfgs = corpus_program(name)
    summary = _main(program, cfgs, widening_delay=3)
    assert summary.head_visits
    assert max(summary.head_visits.values()) <= 5


def test_weak_update_joins_global_stores(build, at) -> None:
    program, cfgs = build("int g;\nint main(void) {\n    g = 0;\n    return 0;\n}\n")
    init = AbsState({Cell(_global("g"), 0, 4): AbsVal(Interval(0, 5))}, True)
    weak = analyze_thread(program, cfgs, "main", init, WEAK)
    strong = analyze_thread(program, cfgs, "main", init, STRONG)
    ret = Context("main", (), at(program, 4).id)
    assert weak[ret].interval_of("g") == Interval(0, 5)
    assert strong[ret].interval_of("g") == Interval(0, 0)


@pytest.mark.parametrize("name", ["seq_branches.c", "seq_globals_init.c", "seq_pointer.c", "seq_struct.c"])
def test_weak_update_contains_strong_update(corpus_program, name: str) -> None:
    program, cfgs = corpus_program(name)
    strong = _main(program, cfgs, mode=STRONG)
    weak = _main(program, cfgs, mode=WEAK)
    for ctx, state in strong.items():
        assert state_leq(state, weak[ctx]), ctx


def test_dead_branch_is_unreachable(build, at) -> None:
    program, cfgs = build(
        "int x;\n"
        "int main(void) {\n"
        "    if (x > 0) {\n"
        "        x = 5;\n"
        "    }\n"
        "    return x;\n"
        "}\n"
    )
    summary = _main(program, cfgs)
    assert not summary[Context("main", (), at(program, 4).id)].reachable
    assert summary[Context("main", (), at(program, 3, IF).id)].reachable


def test_calls_extend_the_call_string(corpus_program, at) -> None:
    program, cfgs = corpus_program("seq_call.c")
    summary = _main(program, cfgs)
    body = at(program, 3, RETURN).id
    sites = sorted(ctx.call_string for ctx in summary.reachable_contexts if ctx.stmt == body)
    assert len(sites) == 2
    assert all(len(cs) == 1 and cs[0][1] == "twice" for cs in sites)
    values = sorted((summary[Context("main", cs, body)].interval_of("x") for cs in sites), key=lambda i: i.lo)
    assert values == [Interval(5, 5), Interval(10, 10)]


def test_recursion_is_rejected(build) -> None:
    program, cfgs = build(
        "int down(int n) { int r; r = 0; if (n > 0) { r = down(n - 1); } return r; }\n"
        "int main(void) { int v; v = down(3); return v; }\n"
    )
    with pytest.raises(RecursionUnsupported) as caught:
        _main(program, cfgs)
    assert "down" in caught.value.cycle


def _abstract_value(state: AbsState, key, ctx: Context) -> AbsVal | None:
    scope, name, offset = key
    for cell, value in state.env.items():
        base = cell.base
        if base.name != name or cell.offset != offset:
            continue
        if scope == "global" and base.kind == "global":
            return value
        if base.kind in ("local", "formal") and base.function == scope and base.call_string == ctx.call_string:
            return value
    return None


@pytest.mark.parametrize("name", SEQUENTIAL)
def test_intervals_contain_concrete_values(corpus_program, name: str) -> None:
    program, cfgs = corpus_program(name)
    summary = _main(program, cfgs)
    observations = concrete_run(program, cfgs)
    assert observations
    for ctx, values in observations:
        state = summary[ctx]
        assert state.reachable, ctx
        for key, value in values.items():
            abstract = _abstract_value(state, key, ctx)
            if abstract is None or abstract.points_to:
                continue
            assert value in abstract.interval, (ctx, key, value, str(abstract))

import pytest

from src.minirace.active_threads import compute_lifecycle, may_parallel
from src.minirace.config import OracleBounds
from src.minirace.oracle import BOUND_EXCEEDED, NO_RACE, RACE, Touch, oracle_check
from src.minirace.thread_system import solve


SMALL = ["racy_counter.c", "mutex_counter.c", "join_before_write.c", "two_writers.c", "seq_branches.c"]


# Verdicts

def test_unprotected_counter_races_on_the_two_increments(corpus_program, at) -> None:
    program, cfgs = corpus_program("racy_counter.c")
    result = oracle_check(program, cfgs)
    assert result.kind == RACE
    assert result.word == "race"
    assert result.witness == (at(program, 14).id, at(program, 7).id)


@pytest.mark.parametrize("name", ["mutex_counter.c", "join_before_write.c", "busy_wait.c", "seq_division.c"])
def test_race_free_programs(corpus_program, name: str) -> None:
    program, cfgs = corpus_program(name)
    result = oracle_check(program, cfgs)
    assert result.kind == NO_RACE
    assert result.word == "no-race"
    assert result.witness is None
    assert not result.bound_exceeded


def test_too_many_threads_exceeds_the_bound(corpus_program) -> None:
    program, cfgs = corpus_program("spawn_ten.c")
    result = oracle_check(program, cfgs)
    assert result.kind == BOUND_EXCEEDED
    assert result.word == "unknown"
    assert result.bound_exceeded


def test_long_loop_exceeds_the_iteration_bound(build) -> None:
    program, cfgs = build(
        "int main(void) {\n"
        "    int i;\n"
        "    for (i = 0; i < 20; i++) {\n"
        "    }\n"
        "    return i;\n"
        "}\n"
    )
    assert oracle_check(program, cfgs, OracleBounds(3, 4, 1000)).kind == BOUND_EXCEEDED
    assert oracle_check(program, cfgs, OracleBounds(25, 4, 1000)).kind == NO_RACE


def test_state_bound(corpus_program) -> None:
    program, cfgs = corpus_program("mutex_counter.c")
    result = oracle_check(program, cfgs, OracleBounds(8, 4, 5))
    assert result.kind == BOUND_EXCEEDED
    assert result.bound_exceeded


def test_race_found_before_the_bound_is_still_a_race(corpus_program) -> None:
    program, cfgs = corpus_program("racy_counter.c")
    assert oracle_check(program, cfgs, OracleBounds(1, 1, 1000)).kind == RACE


def test_nondet_values_drive_the_schedule(build) -> None:
    program, cfgs = build(
        "#include <pthread.h>\n"
        "int g;\n"
        "void *f(void *arg) {\n"
        "    int k = __VERIFIER_nondet_int();\n"
        "    if (k) g = 1;\n"
        "    return 0;\n"
        "}\n"
        "int main(void) {\n"
        "    pthread_t t;\n"
        "    pthread_create(&t, 0, f, 0);\n"
        "    g = 2;\n"
        "    pthread_join(t, 0);\n"
        "    return 0;\n"
        "}\n"
    )
    assert oracle_check(program, cfgs).kind == RACE
    assert oracle_check(program, cfgs, nondet_values=(0,)).kind == NO_RACE


def test_division_by_zero_is_a_trap(build, at) -> None:
    program, cfgs = build(
        "int z = 0;\n"
        "int main(void) {\n"
        "    int a;\n"
        "    a = 1 / z;\n"
        "    return a;\n"
        "}\n"
    )
    result = oracle_check(program, cfgs)
    assert result.kind == NO_RACE
    assert [trap.message for trap in result.traps] == ["division by zero"]
    assert result.traps[0].stmt_id == at(program, 4).id


# Exploration

@pytest.mark.parametrize("name", SMALL)
def test_memoization_keeps_the_verdict(corpus_program, name: str) -> None:
    program, cfgs = corpus_program(name)
    memo = oracle_check(program, cfgs, memoize=True)
    plain = oracle_check(program, cfgs, memoize=False)
    assert memo.kind == plain.kind
    assert memo.states <= plain.states


def test_exploration_is_deterministic(corpus_program) -> None:
    program, cfgs = corpus_program("two_writers.c")
    first = oracle_check(program, cfgs, stop_at_race=False)
    second = oracle_check(program, cfgs, stop_at_race=False)
    assert (first.kind, first.witness, first.states) == (second.kind, second.witness, second.states)
    assert first.coenabled == second.coenabled


def test_coenabled_statements(corpus_program, at) -> None:
    program, cfgs = corpus_program("racy_counter.c")
    result = oracle_check(program, cfgs, stop_at_race=False)
    assert (("main", at(program, 14).id), ("worker", at(program, 7).id)) in result.coenabled

    program, cfgs = corpus_program("join_before_write.c")
    result = oracle_check(program, cfgs, stop_at_race=False)
    after_join = ("main", at(program, 15).id)
    assert not any(after_join in pair for pair in result.coenabled)


@pytest.mark.parametrize("name", ["racy_counter.c", "mutex_counter.c", "create_join_order.c", "nested_create.c"])
def test_coenabled_statements_may_run_in_parallel(corpus_program, name: str) -> None:
    program, cfgs = corpus_program(name)
    table = solve(program, cfgs, "over")
    facts = compute_lifecycle(table, cfgs)
    by_stmt = {}
    for ctx, state in table.contexts():
        if state.reachable:
            by_stmt.setdefault((ctx.thread, ctx.stmt), []).append(ctx)

    result = oracle_check(program, cfgs, stop_at_race=False)
    checked = 0
    for first, second in result.coenabled:
        if first not in by_stmt or second not in by_stmt:
            continue
        checked += 1
        assert any(
            may_parallel(facts, table, c1, c2) for c1 in by_stmt[first] for c2 in by_stmt[second]
        ), (name, first, second)
    assert checked


# Footprints

@pytest.mark.parametrize(
    "first, second, conflict",
    [
        (Touch(("g", "x"), 0, 4, "write", False), Touch(("g", "x"), 0, 4, "read", False), True),
        (Touch(("g", "x"), 0, 4, "read", False), Touch(("g", "x"), 0, 4, "read", False), False),
        (Touch(("g", "x"), 0, 4, "write", True), Touch(("g", "x"), 0, 4, "write", False), False),
        (Touch(("g", "x"), 0, 4, "write", False), Touch(("g", "y"), 0, 4, "write", False), False),
        (Touch(("g", "s"), 0, 4, "write", False), Touch(("g", "s"), 4, 4, "write", False), False),
        (Touch(("g", "s"), 0, 8, "write", False), Touch(("g", "s"), 4, 4, "read", False), True),
    ],
)
def test_touch_conflicts(first: Touch, second: Touch, conflict: bool) -> None:
    assert first.conflicts(second) is conflict
    assert second.conflicts(first) is conflict

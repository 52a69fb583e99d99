import numpy as np
import pytest

from src.minirace.absint import Interval
from src.minirace.active_threads import compute_lifecycle
from src.minirace.mem_access import (
    Exclusive, READ, SHARED_MODIFIED, SHARED_READ, VIRGIN, WRITE, _accessors,
    candidate_bases, classify_bases, collect_accesses,
)
from src.minirace.thread_system import solve


def _collect(program, cfgs, strategy: str = "over"):
    table = solve(program, cfgs, strategy)
    return table, collect_accesses(table)


def _on_line(accesses, line: int, kind: str | None = None):
    return [a for a in accesses if a.loc.line == line and (kind is None or a.kind == kind)]


def _classify(program, cfgs):
    table, accesses = _collect(program, cfgs)
    return table, accesses, classify_bases(accesses, compute_lifecycle(table, cfgs), table)


def _by_name(states: dict) -> dict:
    return {base.name: state for base, state in states.items()}


# Collection

def test_global_write_is_one_access(build) -> None:
    program, cfgs = build(
        "#include <pthread.h>\n"
        "int g;\n"
        "void *f(void *arg) {\n"
        "    g = 1;\n"
        "    return 0;\n"
        "}\n"
        "int main(void) {\n"
        "    pthread_t t;\n"
        "    pthread_create(&t, 0, f, 0);\n"
        "    return 0;\n"
        "}\n"
    )
    _, accesses = _collect(program, cfgs)
    (write,) = _on_line(accesses, 4)
    assert write.kind == WRITE
    assert write.base.name == "g"
    assert write.offset == Interval(0, 0)
    assert write.thread == "f"
    assert not write.atomic


def test_indexed_write_spans_the_index_range(build) -> None:
    program, cfgs = build(
        "int a[4];\n"
        "int main(void) {\n"
        "    int i;\n"
        "    i = __VERIFIER_nondet_int();\n"
        "    if (i >= 0 && i <= 3) {\n"
        "        a[i] = 0;\n"
        "    }\n"
        "    return 0;\n"
        "}\n"
    )
    _, accesses = _collect(program, cfgs)
    (write,) = _on_line(accesses, 6, WRITE)
    assert write.base.name == "a"
    assert write.span == Interval(0, 15)
    reads = _on_line(accesses, 6, READ)
    assert [r.base.name for r in reads] == ["i"]


def test_write_through_pointer_expands_points_to(build) -> None:
    program, cfgs = build(
        "int x, y;\n"
        "int *p;\n"
        "int main(void) {\n"
        "    int c;\n"
        "    c = __VERIFIER_nondet_int();\n"
        "    if (c) p = &x; else p = &y;\n"
        "    *p = 1;\n"
        "    return 0;\n"
        "}\n"
    )
    _, accesses = _collect(program, cfgs)
    writes = _on_line(accesses, 7, WRITE)
    assert sorted(a.base.name for a in writes) == ["x", "y"]
    assert [a.base.name for a in _on_line(accesses, 7, READ)] == ["p"]


def test_unreachable_contexts_have_no_accesses(corpus_program) -> None:
    program, cfgs = corpus_program("dead_branch.c")
    table, accesses = _collect(program, cfgs)
    for access in accesses:
        assert table.state(access.context).reachable


def test_atomic_accesses_are_flagged(corpus_program) -> None:
    program, cfgs = corpus_program("busy_wait.c")
    _, accesses = _collect(program, cfgs)
    ready = [a for a in accesses if a.base.name == "ready"]
    assert ready
    assert all(a.atomic for a in ready)


# Base states

def test_single_owner_is_exclusive(corpus_program) -> None:
    program, cfgs = corpus_program("seq_for_sum.c")
    _, _, states = _classify(program, cfgs)
    assert _by_name(states)["total"] == Exclusive("main")
    assert candidate_bases(states) == set()


def test_write_before_create_then_read_is_shared_read(corpus_program) -> None:
    program, cfgs = corpus_program("write_before_create.c")
    _, _, states = _classify(program, cfgs)
    named = _by_name(states)
    assert named["config"] == SHARED_READ
    assert named["out"] == SHARED_MODIFIED


def test_two_writing_classes_are_shared_modified(corpus_program) -> None:
    program, cfgs = corpus_program("racy_counter.c")
    _, _, states = _classify(program, cfgs)
    assert _by_name(states)["counter"] == SHARED_MODIFIED
    assert {base.name for base in candidate_bases(states)} == {"counter"}


def test_atomic_only_bases_are_never_candidates(corpus_program) -> None:
    program, cfgs = corpus_program("atomic_counter.c")
    _, accesses, states = _classify(program, cfgs)
    atomic_bases = {a.base for a in accesses if a.atomic}
    assert atomic_bases
    assert not atomic_bases & candidate_bases(states)


def test_multi_instance_heap_writer_is_shared(build) -> None:
    program, cfgs = build(
        "#include <pthread.h>\n"
        "#include <stdlib.h>\n"
        "void *maker(void *arg) {\n"
        "    int *p;\n"
        "    p = (int *) malloc(sizeof(int));\n"
        "    *p = 1;\n"
        "    return 0;\n"
        "}\n"
        "int main(void) {\n"
        "    pthread_t pool[2];\n"
        "    int i;\n"
        "    for (i = 0; i < 2; i++) {\n"
        "        pthread_create(&pool[i], 0, maker, 0);\n"
        "    }\n"
        "    return 0;\n"
        "}\n"
    )
    _, _, states = _classify(program, cfgs)
    heap = [base for base in candidate_bases(states) if base.kind == "dynamic"]
    assert len(heap) == 1
    assert heap[0].weak


def test_base_state_names() -> None:
    assert str(VIRGIN) == "Virgin"
    assert str(Exclusive("f")) == "Exclusive(f)"
    assert str(SHARED_MODIFIED) == "SharedModified"


@pytest.mark.parametrize("name", ["racy_counter.c", "mutex_counter.c", "write_before_create.c", "spawn_loop.c"])
def test_classification_ignores_access_order(corpus_program, name: str) -> None:
    program, cfgs = corpus_program(name)
    table, accesses = _collect(program, cfgs)
    facts = compute_lifecycle(table, cfgs)
    expected = classify_bases(accesses, facts, table)
    rng = np.random.default_rng(7)
    for _ in range(5):
        shuffled = [accesses[k] for k in rng.permutation(len(accesses))]
        assert classify_bases(shuffled, facts, table) == expected


@pytest.mark.parametrize("name", ["racy_counter.c", "heap_shared.c", "spawn_loop.c", "struct_fields.c"])
def test_candidates_have_a_write_and_two_accessors(corpus_program, name: str) -> None:
    program, cfgs = corpus_program(name)
    table, accesses, states = _classify(program, cfgs)
    for base in candidate_bases(states):
        touching = [a for a in accesses if a.base == base and not a.atomic]
        assert any(a.kind == WRITE for a in touching)
        accessors = {who for a in touching for who in _accessors(a, table)}
        assert len(accessors) >= 2

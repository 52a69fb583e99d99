import json
from pathlib import Path

import pytest

from processing.loader import CorpusLoader
from src.minirace.active_threads import compute_lifecycle, may_parallel, must_parallel
from src.minirace.cli import report_json
from src.minirace.frontend import ASSIGN, AnalysisError, build_cfg, parse_program
from src.minirace.oracle import BOUND_EXCEEDED, NO_RACE as ORACLE_NO_RACE, RACE as ORACLE_RACE, oracle_check
from src.minirace.race_detect import NO_RACE, RACE, UNKNOWN, combined_verdict, single_strategy_verdict
from src.minirace.thread_system import solve


CORPUS = Path(__file__).resolve().parents[1] / "data" / "corpus"
ENTRIES = {entry.name: entry for entry in CorpusLoader(str(CORPUS))}
CONCURRENT = [entry.path for entry in CorpusLoader(str(CORPUS), sequential=False)]


@pytest.fixture(scope="module")
def parsed():
    """(program, cfgs) per supported corpus file, None when the frontend rejects it"""
    programs = {}
    for name, entry in ENTRIES.items():
        try:
            program = parse_program(entry.text, "lp64", name)
        except AnalysisError:
            programs[name] = None
            continue
        programs[name] = (program, build_cfg(program))
    return programs


@pytest.fixture(scope="module")
def verdicts(parsed):
    return {name: combined_verdict(*built) for name, built in parsed.items() if built is not None}


@pytest.fixture(scope="module")
def oracle(parsed, verdicts):
    return {
        name: oracle_check(*parsed[name])
        for name, verdict in verdicts.items() if verdict.unsupported_reason is None
    }


def test_corpus_is_large_enough() -> None:
    assert len(ENTRIES) >= 30
    assert len(CONCURRENT) >= 30
    assert all(entry.expected is not None for entry in ENTRIES.values())


def test_loader_splits_sequential_files() -> None:
    sequential = CorpusLoader(str(CORPUS), sequential=True).files()
    assert sequential
    assert all(Path(path).name.startswith("seq_") for path in sequential)
    assert len(sequential) + len(CONCURRENT) == len(ENTRIES)


@pytest.mark.parametrize(
    "first, expected",
    [
        ("// expect: race", "race"),
        ("  //expect:   no-race  ", "no-race"),
        ("// expect: maybe", None),
        ("int g;", None),
    ],
)
def test_expectation_header(first: str, expected) -> None:
    assert CorpusLoader.expectation(first + "\nint main(void) { return 0; }\n") == expected


def test_unsupported_header_matches_the_analyzer(parsed, verdicts) -> None:
    for name, entry in ENTRIES.items():
        rejected = parsed[name] is None or verdicts[name].unsupported_reason is not None
        assert rejected == (entry.expected == "unsupported"), name


def test_header_agrees_with_the_oracle(oracle) -> None:
    for name, result in oracle.items():
        expected = ENTRIES[name].expected
        if result.kind == BOUND_EXCEEDED:
            assert expected == "unverified", name
        else:
            assert expected == result.word, name


def test_no_verdict_contradicts_the_oracle(verdicts, oracle) -> None:
    for name, result in oracle.items():
        if result.kind == BOUND_EXCEEDED:
            continue
        verdict = verdicts[name]
        if verdict.kind == RACE:
            assert result.kind == ORACLE_RACE, name
        if verdict.kind == NO_RACE:
            assert result.kind == ORACLE_NO_RACE, name


def test_decisiveness(verdicts) -> None:
    supported = [v for v in verdicts.values() if v.unsupported_reason is None]
    decided = [v for v in supported if v.kind in (RACE, NO_RACE)]
    assert len(decided) >= 0.7 * len(supported)


def test_busy_wait_files_are_unknown(verdicts) -> None:
    assert verdicts["busy_wait.c"].kind == UNKNOWN
    waiting = [name for name, v in verdicts.items() if v.reason == "active waiting"]
    assert "busy_wait.c" in waiting
    assert all(verdicts[name].kind == UNKNOWN for name in waiting)


def test_strategies_only_make_their_own_claims(parsed, verdicts) -> None:
    for name, verdict in verdicts.items():
        if verdict.unsupported_reason is not None:
            continue
        program, cfgs = parsed[name]
        under = single_strategy_verdict(program, cfgs, "under").kind
        over = single_strategy_verdict(program, cfgs, "over").kind
        assert under in (RACE, UNKNOWN), name
        assert over in (NO_RACE, UNKNOWN), name
        if verdict.kind == RACE:
            assert over != NO_RACE, name
        if verdict.kind == NO_RACE:
            assert under != RACE, name


@pytest.mark.parametrize("name", ["racy_counter.c", "two_writers.c", "nested_create.c", "create_join_order.c"])
def test_parallelism_agrees_with_the_oracle(parsed, name: str) -> None:
    program, cfgs = parsed[name]
    table = solve(program, cfgs, "over")
    facts = compute_lifecycle(table, cfgs)
    assigns = [
        ctx for ctx, state in table.contexts()
        if state.reachable and program.stmts[ctx.stmt].kind == ASSIGN
    ]
    coenabled = oracle_check(program, cfgs, stop_at_race=False).coenabled

    for k, c1 in enumerate(assigns):
        for c2 in assigns[k + 1:]:
            pair = tuple(sorted(((c1.thread, c1.stmt), (c2.thread, c2.stmt))))
            if must_parallel(facts, table, c1, c2):
                assert pair in coenabled, (name, c1, c2)
            if not may_parallel(facts, table, c1, c2):
                assert pair not in coenabled, (name, c1, c2)


@pytest.mark.parametrize("name", ["function_call.c", "mutex_counter.c", "spawn_loop.c", "heap_shared.c"])
def test_reports_are_reproducible(parsed, name: str) -> None:
    first = json.dumps(report_json(combined_verdict(*parsed[name]), 0), indent=4)
    second = json.dumps(report_json(combined_verdict(*parsed[name]), 0), indent=4)
    assert first == second

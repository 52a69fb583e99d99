import pytest

from src.minirace.absint import analyze_thread, global_init_state
from src.minirace.config import AnalysisConfig
from src.minirace.dataflow import DataflowLimitReached, forward
from src.minirace.race_detect import UNKNOWN, combined_verdict


STRAIGHT = "int x;\nint main(void) {\n    x = 1;\n    x = 2;\n    return 0;\n}\n"


def _depth(kind, label, fact, src, dst) -> int:
    return fact + 1


def test_forward_reaches_every_node(build) -> None:
    program, cfgs = build(STRAIGHT)
    summary = analyze_thread(program, cfgs, "main", global_init_state(program))
    facts = forward(summary, 0, _depth, max)
    assert facts[summary.entry_node] == 0
    assert facts[summary.exit_node] == max(facts.values())


def test_forward_raises_at_the_visit_limit(build) -> None:
    program, cfgs = build(STRAIGHT)
    summary = analyze_thread(program, cfgs, "main", global_init_state(program))
    with pytest.raises(DataflowLimitReached) as caught:
        forward(summary, 0, _depth, max, limit=1)
    assert caught.value.feature == "dataflow limit"
    assert caught.value.thread == "main"


def test_visit_limit_gives_an_unknown_verdict(corpus_program) -> None:
    program, cfgs = corpus_program("racy_counter.c")
    verdict = combined_verdict(program, cfgs, AnalysisConfig(dataflow_visits=1))
    assert verdict.kind == UNKNOWN
    assert verdict.unsupported_reason == "dataflow limit"

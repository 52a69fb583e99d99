from pathlib import Path

import pytest

from src.minirace.config import AnalysisConfig
from src.minirace.frontend import build_cfg, parse_program


CORPUS = Path(__file__).resolve().parents[1] / "data" / "corpus"


@pytest.fixture(scope="session")
def config() -> AnalysisConfig:
    return AnalysisConfig()


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return CORPUS


@pytest.fixture
def build():
    """Parse source text into (program, cfgs)"""

    def _build(source: str, machdep: str = "lp64", filename: str = "test.c"):
        program = parse_program(source, machdep, filename)
        return program, build_cfg(program)

    return _build


@pytest.fixture
def corpus_program():
    """Parse a bundled corpus file by name into (program, cfgs)"""

    def _load(name: str):
        path = CORPUS / name
        program = parse_program(path.read_text(), "lp64", name)
        return program, build_cfg(program)

    return _load


def stmt_at(program, line: int, kind: str | None = None):
    """The first statement on a source line, optionally of one kind"""
    for stmt in sorted(program.stmts.values(), key=lambda s: s.id):
        if stmt.loc.line == line and (kind is None or stmt.kind == kind):
            return stmt
    raise LookupError(f"no statement on line {line}")


@pytest.fixture
def at():
    return stmt_at

import json
import os

import pytest

from processing.loader import CorpusLoader
from src.minirace.config import AnalysisConfig, OracleBounds
from utils import get_corpus_path, load_param_json


def test_defaults_come_from_params_json(config: AnalysisConfig) -> None:
    assert config["machdep"] == "lp64"
    assert config["strategy"] == "combined"
    assert config["call_depth"] == 2
    assert config["widening_delay"] == 3
    assert config["lockset_cap"] == 8
    assert config.oracle_bounds == OracleBounds(8, 4, 1_000_000)


def test_pointer_size_follows_machine_model() -> None:
    assert AnalysisConfig(machdep="ilp32").pointer_size == 4
    assert AnalysisConfig(machdep="lp64").pointer_size == 8


def test_get_params_size_table() -> None:
    params = AnalysisConfig(machdep="ilp32").get_params()
    assert params["machdep"] == "ilp32"
    assert params["description"] == "gcc_x86_32"
    assert params["sizes"]["int"] == 4
    assert params["sizes"]["mutex"] == 40
    assert params["sizes"]["address"] == 4


def test_none_overrides_are_ignored() -> None:
    config = AnalysisConfig(strategy=None, call_depth=None)
    assert config["strategy"] == "combined"
    assert config["call_depth"] == 2


def test_invalid_settings_are_rejected() -> None:
    with pytest.raises(ValueError):
        AnalysisConfig(machdep="ilp16")
    with pytest.raises(ValueError):
        AnalysisConfig(strategy="sideways")
    with pytest.raises(ValueError):
        AnalysisConfig(call_depth=0)
    with pytest.raises(KeyError):
        AnalysisConfig(colour="blue")


def test_oracle_bounds_parse_and_render() -> None:
    bounds = OracleBounds.parse("3, 2, 500")
    assert bounds == OracleBounds(3, 2, 500)
    assert str(bounds) == "3,2,500"
    with pytest.raises(ValueError):
        OracleBounds.parse("3,2")
    with pytest.raises(ValueError):
        OracleBounds.parse("3,0,10")


def test_with_oracle_bounds_keeps_other_settings() -> None:
    config = AnalysisConfig(strategy="under").with_oracle_bounds(OracleBounds(2, 3, 100))
    assert config["strategy"] == "under"
    assert config.oracle_bounds == OracleBounds(2, 3, 100)


def test_str_renders_a_table(config: AnalysisConfig) -> None:
    text = str(config)
    assert text.splitlines()[0] == "Analysis settings"
    assert "call_depth" in text
    assert "sizeof(address)" in text


def test_params_file_can_be_replaced(tmp_path) -> None:
    params = load_param_json()
    params["analysis"]["lockset_cap"] = 2
    path = tmp_path / "params.json"
    path.write_text(json.dumps(params))
    assert AnalysisConfig(load_param_json(str(path)))["lockset_cap"] == 2


def test_params_file_needs_every_section(tmp_path) -> None:
    path = tmp_path / "params.json"
    path.write_text(json.dumps({"analysis": {}}))
    with pytest.raises(KeyError):
        load_param_json(str(path))


def test_bundled_corpus_is_the_default() -> None:
    assert os.path.isdir(get_corpus_path())
    assert CorpusLoader().directory == get_corpus_path()

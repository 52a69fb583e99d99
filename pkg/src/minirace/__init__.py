"""Static data-race detection for a pthread subset of C"""

from .config import AnalysisConfig, OracleBounds
from .frontend import AnalysisError, ParseError, UnsupportedFeature, build_cfg, parse_program
from .oracle import oracle_check
from .race_detect import NO_RACE, RACE, UNKNOWN, Verdict, analyze

__all__ = [
    "AnalysisConfig",
    "AnalysisError",
    "NO_RACE",
    "OracleBounds",
    "ParseError",
    "RACE",
    "UNKNOWN",
    "UnsupportedFeature",
    "Verdict",
    "analyze",
    "build_cfg",
    "oracle_check",
    "parse_program",
]

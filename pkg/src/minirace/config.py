#!/usr/bin/env python3

"""Wrapper for the analysis section of params.json

Also computes the derived type-size table for the selected machine model using get_params().
"""

from collections import OrderedDict
from dataclasses import dataclass
import pprint

from utils import load_param_json


STRATEGIES = ("under", "over", "combined")


@dataclass(frozen=True)
class OracleBounds:
    loop_iterations: int = 8
    thread_instances: int = 4
    states: int = 1_000_000

    @classmethod
    def parse(cls, text: str) -> "OracleBounds":
        """Parse the ``L,T,S`` form used on the command line"""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected L,T,S oracle bounds, got {text!r}")
        loops, threads, states = (int(p) for p in parts)
        if min(loops, threads, states) <= 0:
            raise ValueError(f"oracle bounds must be positive, got {text!r}")
        return cls(loops, threads, states)

    def __str__(self):
        return f"{self.loop_iterations},{self.thread_instances},{self.states}"


class AnalysisConfig(OrderedDict):

    units = {
        "call_depth": "calls",
        "widening_delay": "visits",
        "narrowing": "iterations",
        "lockset_cap": "locksets",
        "under_rounds": "rounds",
        "over_rounds": "rounds",
        "array_cells": "elements",
        "dataflow_visits": "visits",
        "oracle_loop_bound": "iterations",
        "oracle_threads": "instances",
        "oracle_states": "states",
    }

    def __init__(self, params: dict | None = None, **overrides):
        """Initialize AnalysisConfig from params.json, then apply overrides

        Args:
            params: Parsed params.json contents. Loaded from disk when None
            overrides: Analysis keys to replace (None values are ignored)
        """
        super(AnalysisConfig, self).__init__()

        self._params = params if params is not None else load_param_json()
        self.from_params(self._params)

        for key, value in overrides.items():
            if value is None:
                continue
            if key not in self:
                raise KeyError(f"unknown analysis setting {key!r}")
            self[key] = value

        self.validate()

    def from_params(self, params: dict):
        """
        Populates the AnalysisConfig object with the analysis section of params.json
        """
        for key, value in params["analysis"].items():
            self[key] = value

    def validate(self):
        if self["machdep"] not in self._params["machine_models"]:
            raise ValueError(f"unknown machine model {self['machdep']!r}")
        if self["strategy"] not in STRATEGIES:
            raise ValueError(f"unknown strategy {self['strategy']!r}")
        if int(self["call_depth"]) < 1:
            raise ValueError("call depth must be a positive integer")

    @property
    def pointer_size(self) -> int:
        return int(self._params["machine_models"][self["machdep"]]["pointer"])

    @property
    def oracle_bounds(self) -> OracleBounds:
        return OracleBounds(
            int(self["oracle_loop_bound"]),
            int(self["oracle_threads"]),
            int(self["oracle_states"]),
        )

    def with_oracle_bounds(self, bounds: OracleBounds) -> "AnalysisConfig":
        settings = dict(self)
        settings.update(
            oracle_loop_bound=bounds.loop_iterations,
            oracle_threads=bounds.thread_instances,
            oracle_states=bounds.states,
        )
        return AnalysisConfig(self._params, **settings)

    def get_params(self):
        """
        Computes the type-size table of the selected machine model
        """
        sizes = OrderedDict(
            (kind, int(size)) for kind, size in self._params["type_sizes"].items()
        )
        sizes["address"] = self.pointer_size

        return OrderedDict(
            machdep=self["machdep"],
            description=self._params["machine_models"][self["machdep"]].get("description", ""),
            sizes=sizes,
        )

    def __str__(self):
        lines = ["Analysis settings"]
        for key, value in self.items():
            unit = self.units.get(key, "")
            lines.append(f"{key:25}: {value} {unit}".rstrip())
        for kind, size in self.get_params()["sizes"].items():
            lines.append(f"{'sizeof(' + kind + ')':25}: {size} bytes")
        return "\n".join(lines)


if __name__ == "__main__":
    config = AnalysisConfig()
    print(config)
    pprint.pprint(config.get_params())

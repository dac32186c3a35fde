"""Scenario configs, runner and run comparison."""

from .config import (ConfigError, ScenarioConfig, dump_config, load_config, parse_config,
                     serialize_config)
from .runner import (CompareReport, ScenarioOutcome, builtin_config, builtin_names, compare_runs,
                     load_run, make_initial_data, resolve_config, run_scenario)

__all__ = ["ConfigError", "ScenarioConfig", "dump_config", "load_config", "parse_config",
           "serialize_config", "CompareReport", "ScenarioOutcome", "builtin_config", "builtin_names",
           "compare_runs", "load_run", "make_initial_data", "resolve_config", "run_scenario"]

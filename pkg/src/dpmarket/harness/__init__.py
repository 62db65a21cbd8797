"""Experiment harness: configs, synthetic trials, runners, CSV/JSON output and the CLI."""

from __future__ import annotations

import time

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config
from .emit import emit
from .experiments import REFERENCE_CONVENTION, RUNNERS, Table, TrialRecord, run
from .trials import couple_correlation, make_trial


def run_experiment(config: ExperimentConfig, out_dir):
    """Run ``config.experiment``, write its tables and return ``(tables, manifest path)``."""
    start = time.perf_counter()
    tables = run(config)
    elapsed = time.perf_counter() - start
    path = emit(tables, out_dir, config, elapsed, {"reference_data": REFERENCE_CONVENTION})
    return tables, path


def run_suite(config: ExperimentConfig, out_dir, experiments=EXPERIMENTS) -> dict:
    """Every experiment in turn, each into its own subdirectory; returns wall-clock seconds per run."""
    timings = {}
    for name in experiments:
        start = time.perf_counter()
        run_experiment(config.replace(experiment=name), f"{out_dir}/{name}")
        timings[name] = time.perf_counter() - start
    return timings


__all__ = [
    "EXPERIMENTS", "ConfigError", "ExperimentConfig", "load_config", "emit", "run", "run_experiment",
    "run_suite", "RUNNERS", "Table", "TrialRecord", "couple_correlation", "make_trial",
]

"""Experiment harness: configuration, orchestration and record output."""

from entrod.harness.config import ConfigError, ExperimentSpec
from entrod.harness.runner import run, run_estimate, run_predict, run_sweep

__all__ = ["ConfigError", "ExperimentSpec", "run", "run_estimate", "run_predict", "run_sweep"]

"""Experiment configuration, scenarios, baselines, runner and CLI."""
from .config import ExperimentConfig, default_config, load_config, save_config
from .experiment import run_experiment, sweep

__all__ = ["ExperimentConfig", "default_config", "load_config", "run_experiment", "save_config", "sweep"]

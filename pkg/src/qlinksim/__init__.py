"""Discrete-event simulator for quantum link bootstrapping.

Entanglement generation over MeetInTheMiddle and SenderReceiver links,
recurrence purification driven by RuleSets, and Stokes-parameter tomography.
"""
from .errmodel import ErrorClass, GateErrorSpec, build_channel_matrix, build_memory_matrix
from .link import LinkConfig
from .ruleset import build_bootstrap_ruleset
from .simcore.config import ExperimentConfig, load_config, parse_config
from .simcore.experiment import run_bootstrap, run_experiment
from .simcore.simulation import TrialOutput, run_trial
from .tomography import LinkTomography, TomographyAccumulator

__version__ = "0.1.0"

__all__ = [
    "ErrorClass",
    "ExperimentConfig",
    "GateErrorSpec",
    "LinkConfig",
    "LinkTomography",
    "TomographyAccumulator",
    "TrialOutput",
    "build_bootstrap_ruleset",
    "build_channel_matrix",
    "build_memory_matrix",
    "load_config",
    "parse_config",
    "run_bootstrap",
    "run_experiment",
    "run_trial",
]

"""Continual evaluation of continual learners."""

from ._core import (
    ClevalError,
    WindowTracker,
    gem_project,
    oracle_check,
    oracle_wf_wp,
    parse_config,
    run_experiment,
    wc_acc,
)

__all__ = [
    "ClevalError",
    "WindowTracker",
    "gem_project",
    "oracle_check",
    "oracle_wf_wp",
    "parse_config",
    "run_experiment",
    "wc_acc",
]

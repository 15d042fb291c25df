"""RVI Q-learning for semi-Markov decision processes."""

import json

from ._core import (
    BiasFn,
    ExpectedQuantities,
    SmdpModel,
    a_star,
    check_sistr,
    cycle_canonical,
    expected_quantities,
    h_eval,
    integrate,
    is_weakly_communicating,
    is_weakly_communicating_exact,
    learn,
    load_model,
    loop_canonical,
    optimal_rate,
    qf_residual,
    random_wcom,
    save_model,
    schweitzer_rvi,
    shipped_family,
    solve_translation,
    transient_feeder,
    validate_model,
)
from . import _core

__all__ = [
    "BiasFn",
    "ExpectedQuantities",
    "SmdpModel",
    "a_star",
    "check_sistr",
    "config_hash",
    "cycle_canonical",
    "expected_quantities",
    "h_eval",
    "integrate",
    "is_weakly_communicating",
    "is_weakly_communicating_exact",
    "learn",
    "load_model",
    "loop_canonical",
    "optimal_rate",
    "qf_residual",
    "random_wcom",
    "run_command",
    "save_model",
    "schweitzer_rvi",
    "shipped_family",
    "solve_translation",
    "transient_feeder",
    "validate_model",
]


def config_hash(config):
    """Hash of a config dict, as recorded in run artifacts."""
    return _core.config_hash(json.dumps(config))


def run_command(command, config, output_root=""):
    """Run a harness command; returns (exit_code, summary dict, run directory)."""
    code, summary, run_dir = _core.run_command(command, json.dumps(config), str(output_root))
    return code, json.loads(summary), run_dir

"""Discrete-adjoint direct shooting for scalar optimal control."""

import json

from ._core import (
    BUILTIN_PROBLEMS,
    EXPERIMENTS,
    ConfigError,
    DegenerateGrid,
    DimensionError,
    DivergenceError,
    HamlabError,
    InvalidArgument,
    Problem,
    SingularMetric,
    adjoint_gradient,
    fd_gradient,
    forward_simulate,
    hamiltonian,
    hamiltonian_du,
    integrate_hamiltonianized,
    solve,
    solve_with_refinement,
    stationarity_bound,
    verify_equivalence,
)
from ._core import run_experiment_json as _run_experiment_json

__all__ = [
    "BUILTIN_PROBLEMS",
    "EXPERIMENTS",
    "ConfigError",
    "DegenerateGrid",
    "DimensionError",
    "DivergenceError",
    "HamlabError",
    "InvalidArgument",
    "Problem",
    "SingularMetric",
    "adjoint_gradient",
    "fd_gradient",
    "forward_simulate",
    "hamiltonian",
    "hamiltonian_du",
    "integrate_hamiltonianized",
    "run_experiment",
    "solve",
    "solve_with_refinement",
    "stationarity_bound",
    "verify_equivalence",
]


def run_experiment(name, config=None, include_wall_clock=True):
    """Run a harness experiment; `config` is a dict with the CLI's config keys."""
    text = json.dumps(config or {})
    return json.loads(_run_experiment_json(name, text, include_wall_clock))

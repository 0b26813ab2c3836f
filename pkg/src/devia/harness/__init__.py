from .experiments import (
    exactness_tv,
    run_clt_scaling,
    run_coupling_scaling,
    run_experiment,
    run_initial_moments,
    run_lln,
    run_rate_roundtrip,
    run_tilt_limit,
)
from .lemmas import run_lemma_suite
from .report import CriterionResult, ExperimentReport

__all__ = [
    "CriterionResult",
    "ExperimentReport",
    "exactness_tv",
    "run_clt_scaling",
    "run_coupling_scaling",
    "run_experiment",
    "run_initial_moments",
    "run_lemma_suite",
    "run_lln",
    "run_rate_roundtrip",
    "run_tilt_limit",
]

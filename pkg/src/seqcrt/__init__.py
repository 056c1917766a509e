"""Sequential conditional randomization test with Selective SeqStep+ filtering."""
from .core import Dataset, PValueRecord, ResponseKind, RngStream, Selection, SeqStepParams, rng_uniform
from .covariates import GaussianModel, HmmModel, fit_gaussian, sample_rows
from .crt import CrtConfig, CrtMode, crt_all_variables
from .harness import ExperimentConfig, run_experiment, select_on_data, timing_comparison
from .response import GroundTruth, ResponseSpec, generate_response
from .selection import Ordering, pipeline_split, pipeline_symmetric, seqstep_select
from .stats import ScoreKind, StatisticKind
from .theory import (AdversarialSpec, bound_almost_independent, bound_arbitrary, bound_exchangeable,
                     epsilon_surface, estimate_aj, lemma_opt_value, monte_carlo_fdr)

__all__ = [
    "AdversarialSpec", "CrtConfig", "CrtMode", "Dataset", "ExperimentConfig", "GaussianModel", "GroundTruth",
    "HmmModel", "Ordering", "PValueRecord", "ResponseKind", "ResponseSpec", "RngStream", "ScoreKind", "Selection",
    "SeqStepParams", "StatisticKind", "bound_almost_independent", "bound_arbitrary", "bound_exchangeable",
    "crt_all_variables", "epsilon_surface", "estimate_aj", "fit_gaussian", "generate_response", "lemma_opt_value",
    "monte_carlo_fdr", "pipeline_split", "pipeline_symmetric", "rng_uniform", "run_experiment", "sample_rows",
    "seqstep_select", "select_on_data", "timing_comparison",
]
__version__ = "0.1.0"

"""Learning probabilistic hierarchical task networks from plan traces."""
from .grammar import Grammar, GrammarError, Plan, Schema, WeightedPlan, normalize, sample_plan, sample_plans, validate
from .parser import ParseTree, enumerate_parses, plan_log_likelihood, viterbi_parse
from .structure import SHConfig, hypothesize, hypothesize_structure
from .em import EMConfig, EMReport, MonotonicityError, UnparsablePlanError, em_fit
from .rescale import (
    Cluster,
    ObservationRecord,
    Preference,
    PreferenceEnsemble,
    learn_ensemble,
    merge_clusters,
    prefer,
    reconstruct_prior,
    rescale,
)

__version__ = "0.1.0"

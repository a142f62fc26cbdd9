"""Mining VLE clickstreams for early signs of assessment failure."""

__version__ = "0.1.0"

from .bayes import BayesFailModel, TypeSuccessTable, fit_bayes, select_significant_types, type_success_table
from .datagen import CohortSpec, GroundTruth, default_spec, generate
from .discretize import Binning, EqualFrequencyDiscretizer, FixedCutpointDiscretizer, equal_frequency_bins, fixed_cutpoint_bins
from .exceptions import VleMinerError
from .features import Outcome, WeeklyAggregator, WeeklyFeatures, aggregate_weekly, label_outcomes
from .guha import AboveAverage, AssocMiner, FoundedImplication, Hypothesis, build_attribute_matrix, mine_assoc, parse_quantifier
from .ingest import Dataset, PresentationConfig, load_config, validate
from .markov import StateSpace, TransitionModel, build_sequences, fit_transitions, scenario_report, split_by_outcome

__all__ = [
    "AboveAverage", "AssocMiner", "BayesFailModel", "Binning", "CohortSpec", "Dataset",
    "EqualFrequencyDiscretizer", "FixedCutpointDiscretizer", "FoundedImplication", "GroundTruth",
    "Hypothesis", "Outcome", "PresentationConfig", "StateSpace", "TransitionModel", "TypeSuccessTable",
    "VleMinerError", "WeeklyAggregator", "WeeklyFeatures", "aggregate_weekly", "build_attribute_matrix",
    "build_sequences", "default_spec", "equal_frequency_bins", "fit_bayes", "fit_transitions",
    "fixed_cutpoint_bins", "generate", "label_outcomes", "load_config", "mine_assoc",
    "parse_quantifier", "scenario_report", "select_significant_types", "split_by_outcome",
    "type_success_table", "validate",
]

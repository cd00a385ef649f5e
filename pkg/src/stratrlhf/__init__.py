"""Strategic preference labeling: BT estimation, pessimistic median aggregation and attacks."""

from .aggregation import MedianBox, coordinate_median, median_interval, pessimistic_value
from .env import InstanceConfig, ProblemInstance, QuerySet, generate_instance, generate_queries
from .errors import CapacityError, ConfigError, InputError, NumericError, StratRLHFError
from .estimation import MleFit, confidence_radius, confidence_set, fit_mle
from .kernels import BACKEND
from .policy import ALGORITHMS, run_algorithm, welfare_report
from .preference import LabelerDataset, bt_preference_prob, sample_dataset
from .strategic import Arena, AttackConfig, evaluate_report, spsa_attack

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "Arena", "AttackConfig", "BACKEND", "CapacityError", "ConfigError", "InputError",
    "InstanceConfig", "LabelerDataset", "MedianBox", "MleFit", "NumericError", "ProblemInstance",
    "QuerySet", "StratRLHFError", "bt_preference_prob", "confidence_radius", "confidence_set",
    "coordinate_median", "evaluate_report", "fit_mle", "generate_instance", "generate_queries",
    "median_interval", "pessimistic_value", "run_algorithm", "sample_dataset", "spsa_attack",
    "welfare_report",
]

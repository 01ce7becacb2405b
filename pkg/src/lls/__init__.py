"""Linear latent structure analysis of high-dimensional categorical data."""
__version__ = "0.1.0"

from .estimator import LinearLatentStructure
from .ingest import Dataset, FrequencyTable, read_csv
from .mixing import histogram, wasserstein1_1d
from .moment_matrix import build_moment_matrix, complete_matrix, computational_rank
from .patterns import Schema
from .simulator import DiscreteMixing, GeneratorConfig, UniformIntervals, random_basis, sample
from .solver import average_full_pattern, full_pattern_expectations, solve_expectations
from .subspace import Subspace, check_identifiability, fit_subspace, principal_angles

__all__ = [
    "LinearLatentStructure", "Dataset", "FrequencyTable", "read_csv", "histogram",
    "wasserstein1_1d", "build_moment_matrix", "complete_matrix", "computational_rank",
    "Schema", "DiscreteMixing", "GeneratorConfig", "UniformIntervals", "random_basis",
    "sample", "average_full_pattern", "full_pattern_expectations", "solve_expectations",
    "Subspace", "check_identifiability", "fit_subspace", "principal_angles",
]

"""Partition-based column subset selection.

CVOD / adaptCVOD column partitioning paired with pluggable column selectors,
interpolative and CUR factorizations, and numerical checks of the associated
error bounds.
"""

from .bounds import (
    BoundReport,
    check_all,
    check_combined_bound,
    check_cur_bound,
    check_energy_bound,
    check_id_vs_energy,
    check_lemma2_bound,
    check_projection_lemma,
    check_subspace_distance,
)
from .exceptions import (
    ConvergenceError,
    CSSPError,
    DegenerateSetError,
    DimensionError,
    MatrixFormatError,
    ParameterError,
    RankDeficiencyError,
    ValidationError,
)
from .numkernel import DEFAULT_TOLERANCES, Tolerances
from .partitioner import LloydTrace, Partition, PartitionConfig, energy, run_adapt_cvod, run_cvod
from .pipeline import Algorithm, CurResult, PipelineResult, build_cur, id_error, partitioned_cssp
from .selectors import SelectorKind, SelectorSpec, select

__version__ = "0.1.0"

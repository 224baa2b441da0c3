"""Bounded-rank quantum-state tomography as PSD matrix completion."""

__version__ = "0.1.0"

from .linalg import (
    EigensolverError,
    FailureSetError,
    Inertia,
    as_density_matrix,
    as_hermitian,
    fidelity,
    inertia,
    infidelity,
    random_hermitian,
    random_rank_r_state,
    rank_with_tol,
    schur_complement,
    smallest_singular_value,
)
from .patterns import ElementPattern, PartialMatrix, band_pattern, rows_cols_pattern
from .povm import (
    EpPovm,
    MeasurementRecord,
    Povm,
    ValidationReport,
    born_probabilities,
    extract_elements,
    sample_record,
    validate_povm,
)
from .constructions import (
    BasisSet,
    basis_povm,
    build_construction,
    canonical_basis,
    computational_basis,
    example1_povm,
    example1_slice,
    example2_bases,
    flammia_povm,
    goyeneche_bases,
    pattern_of,
)
from .completion import (
    CompletionPlan,
    CompletionReport,
    Window,
    build_band_plan,
    complete_band,
    complete_extracted,
    complete_rows_cols,
    default_completer,
    solve_window,
)

from .completeness import (
    CompletenessVerdict,
    PerturbationSpace,
    ProbeInfeasibleError,
    ProbeResult,
    TracelessCheckReport,
    certify_strictness,
    check_proposition1,
    check_rank_r_complete,
    record_determined_entries,
    traceless_negativity_check,
    uniqueness_probe,
)
from .estimator import (
    EstimateReport,
    EstimatorOptions,
    project_psd_trace1,
    project_simplex,
    psd_least_squares,
    rank_r_truncation,
)
from .harness import (
    EXPERIMENT_KINDS,
    ExperimentConfig,
    ExperimentReport,
    ball_state,
    evaluate_thresholds,
    five_basis_protocol,
    refine_by_bases,
    refine_by_slices,
    run_experiment,
    run_failure_ball,
    run_iterative_refinement,
    run_noiseless_sweep,
    run_shot_sweep,
    run_strictness_separation,
)
from . import serialize

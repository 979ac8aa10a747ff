"""List-replicable and certificate-replicable estimation toolkit.

Secluded cube partitions with probe-sweep verification, rounding-based
canonical estimators for d-coin biases, replicable statistical-query
learning with a threshold-box instantiation, and a Monte Carlo harness
that measures empirical list sizes and per-certificate agreement.
"""

from .rng import derive_seed, generator
from .partitions import (
    MAX_SHIFT_DENOMINATOR,
    Partition,
    PartitionSpec,
    ProbePlan,
    SearchBudget,
    SearchResult,
    SecludedProfile,
    VerificationReport,
    Violation,
    brick_spec,
    build_partition,
    default_partition,
    halving_cascade_spec,
    load_spec,
    max_secluded_radius,
    parity_brick_spec,
    save_spec,
    search_shifts,
    staircase_spec,
    unit_grid_spec,
    verify_secludedness,
)
from .rounding import (
    CertString,
    CubeRounder,
    GridRounder,
    cert_bad_set,
    clamp_unit,
    enumerate_certs,
    grid_cert_indices,
    grid_cert_round,
    required_ell,
    scaled_list_round,
    scaled_member,
)
from .coins import (
    TRIVIAL_ID,
    CertCoinEstimator,
    CoinSample,
    EstimateOutcome,
    ListCoinEstimator,
    hoeffding_n,
    reconstruct_cert_value,
    reconstruct_list_value,
    sample_coins,
    tv_upper_bound,
)
from .sq import (
    Hypothesis,
    SQProgram,
    ThresholdLearner,
    ThresholdSampler,
    adaptive_cert_sq_learn,
    adaptive_list_sq_learn,
    batch_sq_answers,
    cert_sq_learn,
    empirical_sq_answers,
    err_unif,
    list_sq_learn,
    recommended_nu,
    sq_adaptive_cert_samples,
    sq_adaptive_list_samples,
    split_blocks,
    sq_cert_samples,
    sq_list_samples,
    threshold_answers,
    threshold_sampler,
    threshold_sq_program,
    unrestricted_nu,
    unrestricted_threshold_sq_program,
)
from .harness import (
    ExperimentConfig,
    ReplicationReport,
    adversarial_biases,
    certs_to_test,
    load_config,
    run_cert_experiment,
    run_experiment,
    run_list_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "MAX_SHIFT_DENOMINATOR",
    "TRIVIAL_ID",
    "CertCoinEstimator",
    "CertString",
    "CoinSample",
    "CubeRounder",
    "EstimateOutcome",
    "ExperimentConfig",
    "GridRounder",
    "Hypothesis",
    "ListCoinEstimator",
    "Partition",
    "PartitionSpec",
    "ProbePlan",
    "ReplicationReport",
    "SQProgram",
    "SearchBudget",
    "SearchResult",
    "SecludedProfile",
    "ThresholdLearner",
    "ThresholdSampler",
    "VerificationReport",
    "Violation",
    "adaptive_cert_sq_learn",
    "adaptive_list_sq_learn",
    "adversarial_biases",
    "batch_sq_answers",
    "brick_spec",
    "build_partition",
    "cert_bad_set",
    "cert_sq_learn",
    "certs_to_test",
    "clamp_unit",
    "default_partition",
    "derive_seed",
    "empirical_sq_answers",
    "enumerate_certs",
    "err_unif",
    "generator",
    "grid_cert_indices",
    "grid_cert_round",
    "halving_cascade_spec",
    "hoeffding_n",
    "list_sq_learn",
    "load_config",
    "load_spec",
    "max_secluded_radius",
    "parity_brick_spec",
    "reconstruct_cert_value",
    "reconstruct_list_value",
    "recommended_nu",
    "required_ell",
    "run_cert_experiment",
    "run_experiment",
    "run_list_experiment",
    "sample_coins",
    "save_spec",
    "scaled_list_round",
    "scaled_member",
    "search_shifts",
    "split_blocks",
    "sq_adaptive_cert_samples",
    "sq_adaptive_list_samples",
    "sq_cert_samples",
    "sq_list_samples",
    "staircase_spec",
    "threshold_answers",
    "threshold_sampler",
    "threshold_sq_program",
    "tv_upper_bound",
    "unit_grid_spec",
    "unrestricted_nu",
    "unrestricted_threshold_sq_program",
    "verify_secludedness",
]

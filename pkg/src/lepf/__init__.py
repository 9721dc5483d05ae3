"""Local exchange and independent-group particle filters with exact asymptotic variances."""

from .collision import (
    DEState,
    PmfTable,
    ZLawSpec,
    beta_binomial_pmf,
    de_initial,
    de_step,
    de_transitions,
    rwz_pmf,
    sample_ij_chain,
    z_mgf,
    z_pmf,
    z_pmf_ibpf,
    z_pmf_lepf_dp,
    z_pmf_lepf_mixture,
)
from .hmm import (
    FiniteHmm,
    GenericHmm,
    NormalizerUnderflowError,
    binary_toy,
    c_constant,
    check_mixing,
    exact_prediction_filter,
    gamma_normalizer,
    gaussian_toy,
    iid_toy,
    load_finite_hmm,
    log_gamma_normalizer,
    simulate_hmm,
    stoch_vol,
    updated_filter,
)
from .interaction import (
    AlphaMatrix,
    InteractionScheme,
    alpha_infinity_row,
    build_alpha,
    cmod,
    delta_metric,
    verify_assumptions,
)
from .smc import (
    InvariantViolation,
    ParticleEnsemble,
    ReplicateConfig,
    diagnostics,
    estimate_normalizer,
    estimate_prediction,
    estimate_updated,
    estimate_unnormalized,
    init_ensemble,
    replicate_rng,
    run_filter,
    run_replicates,
    step,
)
from .variance import (
    T0,
    VarianceResult,
    clt_constant,
    ratio_Rn,
    scaling_study,
    second_moment_finite_N,
    sigma2_ibpf_closed,
    sigma2_simple_model,
    sigma2_pattern_sum,
    sigma2_path_enumeration,
)

__version__ = "0.1.0"

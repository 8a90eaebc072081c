"""De-biased single-coordinate inference for sparse high-dimensional linear
regression: penalized estimation, an exactly factorized Bayesian posterior,
and a reproducible Monte Carlo harness that measures how close the two get
to the ideal Gaussian limit."""

from .debias import EstimateReport, kkt_identity_check, one_step, two_step_zz
from .diagnostics import (
    DesignDiagnostics,
    KappaConfig,
    KappaReport,
    compatibility_constant,
    diagnose,
    rec_constant_estimate,
    verify_lemma4,
)
from .experiment import (
    ExperimentConfig,
    ExperimentRecord,
    PosteriorSettings,
    record_seed,
    report,
    run_experiment,
    run_replication,
)
from .metrics import (
    CoverageReport,
    DistanceReport,
    coverage_study,
    credible_interval,
    distance_to_standard_normal,
)
from .model import (
    GeneratorSpec,
    RegressionInstance,
    derive_stream,
    generate,
    load_instance,
    save_instance,
)
from .posterior import (
    ChainConfig,
    PosteriorConfig,
    PosteriorSample,
    PosteriorSummary,
    b1star_posterior,
    enumerate_posterior_exact,
    log_prior,
    run_chain,
    summarize,
)
from .solver import (
    PenaltySpec,
    SolverOptions,
    SolverResult,
    check_cone_condition,
    check_l1_control,
    default_eta,
    solve,
)

__version__ = "0.1.0"

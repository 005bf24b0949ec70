"""Curtailed sequential testing for two correlated binary side effects.

Design a pooled two-margin stopping rule, evaluate its exact and asymptotic
operating characteristics, run it over observation streams, and draw
post-detection inferences.
"""

from .errors import (
    BivarseqError,
    DegenerateCovarianceError,
    InfeasibleCorrelationError,
    MonitorStateError,
    SequencingError,
    StreamExhaustedError,
)
from .special_functions import (
    BivariateNormalParams,
    bvn_cdf,
    bvn_rect,
    log_gamma,
    norm_cdf,
    norm_pdf,
    norm_quantile,
    reg_inc_beta,
)
from .params import JointBernoulliParams, condition_a_bounds, make_params, rho_from_p11
from .design import (
    BivariateDesign,
    MarginalDesign,
    attained_errors,
    combine,
    critical_value_for_n,
    design_marginal,
)
from .exact_engine import (
    LatticeCounts,
    StoppingPmf,
    asn_bounds,
    asn_exact,
    corner_mass_exact,
    estimator_expectation_exact,
    lattice_forward_dp,
    non_rejection_prob,
    power_exact,
    second_moment_exact,
    stopping_pmf_exact,
    variance_cv,
)
from .asymptotic_engine import (
    GutLaw,
    boundary_hit_probs,
    estimator_expectation_asymptotic,
    gut_params,
    power_asymptotic,
    stopping_pmf_asymptotic,
    terminal_count_law,
)
from .inference import (
    ConfidenceRegion,
    PostTestEstimate,
    RelativeRiskEstimate,
    confidence_region,
    ellipse_points,
    inverse_relative_risk,
    post_test_estimate,
    relative_risk,
)
from .simulator import Event, MonteCarloSummary, TestOutcome, monte_carlo, run_test, sample_stream
from .cli_monitor import MonitorState, monitor_step, state_load, state_save

__version__ = "0.1.0"

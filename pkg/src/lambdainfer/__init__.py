"""Bayesian nonparametric inference of multiple-merger coalescent measures
from serial genetic samples."""

from .bounds import MomentConstraint, constraints_from_samples, evaluate_functional, extremize, kingman_test
from .exceptions import (
    CapacityError,
    DataFormatError,
    DomainError,
    InfeasibleConstraints,
    LambdaInferError,
    NumericalError,
)
from .genealogy import (
    Genealogy,
    SamplingSchedule,
    TimeSeriesData,
    genealogy_to_data,
    simulate_dataset,
    simulate_serial_coalescent,
)
from .likelihood import (
    LikelihoodEstimate,
    estimate_likelihood,
    exact_likelihood,
    surrogate_likelihood,
    tune_particles,
)
from .mcmc import ChainConfig, ChainResult, credible_interval, propose, run_chain
from .measures import (
    LambdaMeasure,
    beta_coalescent,
    bolthausen_sznitman,
    durrett_schweinsberg,
    eldon_wakeley,
    expected_limiting_posterior,
    kingman,
    moment,
    polynomial_moment,
    star,
    stationary_density_two_allele,
    total_merger_rate,
)
from .moments import (
    DiscreteMeasure,
    MomentSequence,
    QuadratureRule,
    canonical_representative,
    cms_envelope,
    gauss_quadrature,
    interlaced_pair,
    is_completely_monotonic,
    recurrence_coefficients,
    tv_distance,
)
from .mutation import BinaryLociModel, GeneralMutationModel, MutationModel, parent_independent
from .prior import (
    PriorParams,
    PriorSpec,
    log_prior_density,
    params_to_moments,
    sample_prior,
    truncation_error_bound,
)

__version__ = "0.1.0"

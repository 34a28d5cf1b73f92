"""Multi-target tracking with Rao-Blackwellized Monte Carlo data
association and particle MCMC parameter estimation.

The filter samples discrete measurement-to-target assignments while
tracking target states in closed form with Kalman moments; two MCMC
samplers (marginal Metropolis-Hastings and Metropolis-within-Gibbs with a
conditional filter pass) extend it to joint inference over static model
parameters. A scenario simulator and the usual tracking diagnostics
(OSPA, split-chain PSRF, Kolmogorov distance, ESS) round out the package.
"""

from .association import (
    AssocHistorySummary,
    AssocPriorConfig,
    apply_deaths,
    assoc_prior,
    clutter_loglik,
    history_log_prior,
    new_target_prob,
)
from .diagnostics import (
    WeightedIntDist,
    convergence_curve,
    ess,
    kolmogorov,
    mean_ospa_over_trace,
    num_targets_dist,
    ospa,
    pooled_num_targets_dist,
    psrf,
)
from .filter import (
    DegenerateFilterError,
    FilterConfig,
    ImportanceTable,
    Particle,
    ParticleSet,
    assoc_loglik,
    conditional_rbmcda,
    eval_importance,
    final_target_means,
    rbmcda_filter,
    rbmcda_step,
    resample,
)
from .gaussians import (
    GaussianMoments,
    KalmanCallCounter,
    SingularCovarianceError,
    SingularInnovationError,
    gaussian_logpdf,
    kf_predict,
    kf_update,
)
from .oumodel import (
    ModelParams,
    ObservationStats,
    PARAM_NAMES,
    ou_birth_density,
    ou_discretize,
    ou_measurement,
    steady_state_var,
)
from .pmcmc import (
    PriorSpec,
    ProposalState,
    Trace,
    adapt,
    pgibbs,
    pmmh,
    prior_logpdf,
    propose,
    refresh_associations,
)
from .simulate import (
    GenerationFailedError,
    Scenario,
    ScenarioConfig,
    scenario_from_csv,
    scenario_to_csv,
    simulate_scenario,
)

__version__ = "0.1.0"

"""Hard random quadratic instances, query-counted first-order solvers, and
numerical checks of their closed-form spectral, overlap, and information
asymptotics."""

from .instances import (
    Instance,
    InstanceParams,
    build_instance,
    cond_target,
    gamma,
    lambda_for_kappa,
    sample_goe,
    sample_plant,
    trial_rng,
)
from .oracle import QuerySession, open_session, potential, potential_trajectory, tau_schedule
from .solvers import (
    SolverResult,
    conjugate_gradient,
    gradient_descent,
    heavy_ball,
    nesterov,
    plant_estimate,
    query_complexity_curve,
)
from .spectral import spectral_report, stieltjes_q, stieltjes_s
from .identities import overlap_decomposition, overlap_prediction
from .replica import overlap_asymptote, posterior_cross_mc, q_star_closed, q_star_numeric

__version__ = "0.1.0"

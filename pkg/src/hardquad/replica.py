"""Replica-symmetric overlap asymptotics and a small-dimension posterior oracle.

For a rank-one deformation at signal-to-noise rho with Gaussian prior mean
scale mu, the variational free energy

    F(q; rho, mu) = (rho*q/2) * ((1 + mu^2) - q/2) - log(1 + q*rho)/2

has a closed-form maximizer q_star whose square is the large-d limit of the
posterior cross term |E[u u' | observations]|_F^2.  The Monte-Carlo oracle
estimates that cross term directly at small d by self-normalized importance
sampling against the prior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SubThresholdError

__all__ = [
    "free_energy",
    "q_star_closed",
    "q_star_numeric",
    "overlap_asymptote",
    "overlap_asymptote_factored",
    "rho_mu_from",
    "ConditionalPlant",
    "conditional_plant",
    "CrossEstimate",
    "posterior_cross_mc",
    "prior_cross_exact",
    "replica_table",
]


def free_energy(q: float, rho: float, mu: float) -> float:
    """Variational free energy (rho*q/2)*((1+mu^2) - q/2) - log(1+q*rho)/2."""
    if q < 0:
        raise DomainError(f"order parameter must be >= 0, got {q}")
    if rho <= 0:
        raise DomainError(f"signal-to-noise must be > 0, got {rho}")
    return (rho * q / 2.0) * ((1.0 + mu * mu) - q / 2.0) - 0.5 * math.log1p(q * rho)


def q_star_closed(rho: float, mu: float) -> float:
    """Positive root of the stationarity equation (1 + q*rho)((1+mu^2) - q) = 1.

    Equals ((1+mu^2-1/rho) + sqrt((1+mu^2-1/rho)^2 + 4*mu^2/rho))/2; for mu = 0
    this is 1 - 1/rho above threshold and 0 at or below rho = 1.
    """
    if rho <= 0:
        raise DomainError(f"signal-to-noise must be > 0, got {rho}")
    if mu == 0.0 and rho <= 1.0:
        return 0.0
    a = 1.0 + mu * mu - 1.0 / rho
    return 0.5 * (a + math.sqrt(a * a + 4.0 * mu * mu / rho))


def q_star_numeric(rho: float, mu: float, tol: float = 1e-10) -> float:
    """Golden-section maximization of the free energy over [0, 4*(1+mu^2)].

    Independent cross-check of the closed form; no derivative information used.
    Runs in extended precision because a comparison-based maximizer cannot
    localize a smooth maximum better than sqrt(machine eps) of its own floats.
    """
    if rho <= 0:
        raise DomainError(f"signal-to-noise must be > 0, got {rho}")
    ld = np.longdouble
    rho_l, mu_l = ld(rho), ld(mu)
    c = ld(1.0) + mu_l * mu_l

    def f(q):
        return (rho_l * q / 2) * (c - q / 2) - np.log1p(q * rho_l) / 2

    lo, hi = ld(0.0), 4 * c
    inv_phi = (np.sqrt(ld(5.0)) - 1) / 2
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = f(x1)
    return float((lo + hi) / 2)


def overlap_asymptote(lam: float, tau0: float) -> float:
    """Large-d cap 1 - 1/lam^2 + tau0 + sqrt(tau0)/lam on the best expected overlap."""
    if not (1.0 < lam <= 2.0):
        raise DomainError(f"deformation must lie in (1, 2], got {lam}")
    if tau0 < 0:
        raise DomainError(f"warm-start correlation must be >= 0, got {tau0}")
    return 1.0 - 1.0 / lam**2 + tau0 + math.sqrt(tau0) / lam


def overlap_asymptote_factored(lam: float) -> tuple[float, float]:
    """At tau0 = (lam-1)^2 the cap factors as (lam-1)*((lam+1)/lam^2 + (lam-1) + 1/lam).

    Returns (value, (9/2)*(lam-1)) and verifies value <= (9/2)*(lam-1).
    """
    if not (1.0 < lam <= 2.0):
        raise DomainError(f"deformation must lie in (1, 2], got {lam}")
    value = (lam - 1.0) * ((lam + 1.0) / lam**2 + (lam - 1.0) + 1.0 / lam)
    cap = 4.5 * (lam - 1.0)
    plain = overlap_asymptote(lam, (lam - 1.0) ** 2)
    if abs(value - plain) > 1e-12 * max(1.0, abs(plain)):
        raise AssertionError(f"factored form {value} disagrees with {plain}")
    if value > cap * (1.0 + 1e-12):
        raise AssertionError(f"factored cap {value} exceeds (9/2)(lam-1) = {cap}")
    return value, cap


def rho_mu_from(lam: float, tau0: float) -> tuple[float, float]:
    """Conditional-model parameters rho = (lam/(1+tau0))^2, mu = sqrt(tau0).

    Raises when rho <= 1: the conditioned deformation falls at or below the
    detection threshold and the closed-form maximizer degenerates.
    """
    if lam <= 1.0 or tau0 < 0.0:
        raise DomainError("need lam > 1 and tau0 >= 0")
    rho = (lam / (1.0 + tau0)) ** 2
    if rho <= 1.0:
        raise SubThresholdError(
            f"conditioned signal-to-noise rho = {rho} <= 1 for lam={lam}, tau0={tau0}"
        )
    return rho, math.sqrt(tau0)


@dataclass(frozen=True)
class ConditionalPlant:
    """Gaussian conjugacy of the plant given the warm-started linear term.

    Conditioned on b, the plant is N(mean_scale * b, variance * I) with
    mean_scale = sqrt(tau0)/(1+tau0) and variance = 1/(d*(1+tau0)).
    """

    mean_scale: float
    variance: float


def conditional_plant(tau0: float, b: np.ndarray) -> ConditionalPlant:
    if tau0 < 0:
        raise DomainError(f"warm-start correlation must be >= 0, got {tau0}")
    d = len(b)
    return ConditionalPlant(mean_scale=math.sqrt(tau0) / (1.0 + tau0),
                            variance=1.0 / (d * (1.0 + tau0)))


@dataclass
class CrossEstimate:
    """Self-normalized importance-sampling estimate of the posterior cross term."""

    estimate: float
    stderr: float
    ess_min: float
    per_instance: list[float]
    ess_per_instance: list[float]
    unreliable: bool


def prior_cross_exact(d: int, mu: float) -> float:
    """|E[u u']|_F^2 under the prior alone: ((1+mu^2)^2 + (d-1)*mu^4)/d.

    This is the exact value of the cross term at zero signal-to-noise, used to
    anchor the Monte-Carlo normalization.
    """
    return ((1.0 + mu * mu) ** 2 + (d - 1) * mu**4) / d


def _log_likelihood_weights(U: np.ndarray, M: np.ndarray, rho: float) -> np.ndarray:
    """Gaussian log-likelihood of symmetric observations M given candidate plants.

    Rows of U are candidate plants u; the model is M = W + sqrt(rho)*u*u' with
    noise variances 1/d off-diagonal and 2/d on the diagonal.  Terms constant
    in u are dropped (self-normalization removes them).
    """
    n, d = U.shape
    sq = U * U
    q2 = sq.sum(axis=1)
    s4 = (sq * sq).sum(axis=1)
    um = np.einsum("nd,nd->n", U @ M, U)
    diag_m = np.diag(M)
    diag_dot = sq @ diag_m
    off_dot = 0.5 * (um - diag_dot)
    off_sq = 0.5 * (q2 * q2 - s4)
    sr = math.sqrt(rho)
    ll_off = -0.5 * d * (-2.0 * sr * off_dot + rho * off_sq)
    ll_diag = -0.25 * d * (-2.0 * sr * diag_dot + rho * s4)
    return ll_off + ll_diag


def posterior_cross_mc(d: int, rho: float, mu: float, n_samples: int,
                       n_instances: int, rng: np.random.Generator) -> CrossEstimate:
    """Monte-Carlo estimate of E |E[u u' | M]|_F^2 in the rank-one model.

    For each instance draw M = W + sqrt(rho)*u*u' with u_i ~ N(mu/sqrt(d), 1/d)
    and W a GOE draw (1/d off-diagonal, 2/d diagonal variances), then estimate
    the posterior mean of u u' by self-normalized importance sampling with the
    prior as proposal.  Instances with effective sample size below 50 mark the
    result unreliable (it is still returned).
    """
    if d > 12:
        raise DomainError(f"posterior oracle is variance-guarded to d <= 12, got {d}")
    if n_samples < 10_000:
        raise DomainError(f"need at least 1e4 proposals, got {n_samples}")
    if rho < 0:
        raise DomainError(f"signal-to-noise must be >= 0, got {rho}")
    per, esses = [], []
    root_d = math.sqrt(d)
    for _ in range(n_instances):
        u_true = mu / root_d + rng.standard_normal(d) / root_d
        g = rng.standard_normal((d, d))
        W = (g + g.T) / math.sqrt(2.0 * d)
        M = W + math.sqrt(rho) * np.outer(u_true, u_true)
        U = mu / root_d + rng.standard_normal((n_samples, d)) / root_d
        if rho == 0.0:
            logw = np.zeros(n_samples)
        else:
            logw = _log_likelihood_weights(U, M, rho)
        logw -= logw.max()
        w = np.exp(logw)
        w /= w.sum()
        esses.append(float(1.0 / np.sum(w * w)))
        post_mean = (U * w[:, None]).T @ U
        per.append(float(np.sum(post_mean * post_mean)))
    per_arr = np.asarray(per)
    stderr = float(per_arr.std(ddof=1) / math.sqrt(n_instances)) if n_instances > 1 else 0.0
    return CrossEstimate(
        estimate=float(per_arr.mean()), stderr=stderr,
        ess_min=float(min(esses)), per_instance=per, ess_per_instance=esses,
        unreliable=bool(min(esses) < 50.0),
    )


def replica_table(lams, tau0_policy: str = "gap_squared"):
    """Closed-form replica rows for a deformation grid.

    ``tau0_policy`` is either 'gap_squared' (tau0 = (lam-1)^2) or 'zero'.
    Returns dict rows with keys (lambda, tau0, rho, mu, q_star,
    overlap_asymptote, bound_9_2).
    """
    rows = []
    for lam in lams:
        if tau0_policy == "gap_squared":
            tau0 = (lam - 1.0) ** 2
        elif tau0_policy == "zero":
            tau0 = 0.0
        else:
            raise DomainError(f"unknown tau0 policy {tau0_policy!r}")
        rho, mu = rho_mu_from(lam, tau0)
        rows.append({
            "lambda": lam,
            "tau0": tau0,
            "rho": rho,
            "mu": mu,
            "q_star": q_star_closed(rho, mu),
            "overlap_asymptote": overlap_asymptote(lam, tau0),
            "bound_9_2": 4.5 * (lam - 1.0),
        })
    return rows

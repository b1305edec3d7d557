"""First-order methods driven strictly through the query oracle.

Every solver starts at x0 = 0, touches the matrix only via ``session.query``
(each call counted against the budget, including the Lanczos queries used to
estimate the extreme eigenvalues for step sizes), and is evaluated afterwards
against the instance ground truth on the harness side.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExhaustedError, DivergenceError, DomainError, PreconditionError
from .oracle import QuerySession

__all__ = [
    "SolverResult",
    "estimate_extreme_eigenvalues",
    "gradient_descent",
    "nesterov",
    "heavy_ball",
    "conjugate_gradient",
    "plant_estimate",
    "query_complexity_curve",
]

#: iterate norm blowup factor (relative to |b|/lam_min scale) treated as divergence
_DIVERGE_FACTOR = 1e8

#: default number of queries spent estimating (lam_min, lam_max)
EIG_EST_QUERIES = 10


@dataclass
class SolverResult:
    """Estimate with query accounting and ground-truth evaluation.

    ``history`` holds (queries_used, rel_err) pairs, starting at (0, 1.0) for
    the origin start.  ``overlap`` is the squared cosine between the estimate
    direction and the plant.
    """

    method: str
    x_hat: np.ndarray
    queries_used: int
    rel_err: float
    f_gap: float
    overlap: float
    history: list[tuple[int, float]]
    truncated: bool = False
    lam_est: tuple[float, float] | None = None
    session: QuerySession | None = field(default=None, repr=False, compare=False)

    def to_json(self, with_history: bool = True) -> str:
        payload = {
            "method": self.method,
            "queries_used": self.queries_used,
            "rel_err": self.rel_err,
            "f_gap": self.f_gap,
            "overlap": self.overlap,
            "truncated": self.truncated,
            "lam_est": list(self.lam_est) if self.lam_est else None,
        }
        if with_history:
            payload["history"] = [[q, r] for q, r in self.history]
        return json.dumps(payload)

    def to_csv_row(self) -> str:
        return ",".join([
            self.method, str(self.queries_used), f"{self.rel_err:.17g}",
            f"{self.f_gap:.17g}", f"{self.overlap:.17g}", str(int(self.truncated)),
        ])


def solver_csv_header() -> str:
    return "method,queries_used,rel_err,f_gap,overlap,truncated"


def _evaluate(session: QuerySession, method: str, iterates: list[tuple[int, np.ndarray]],
              truncated: bool, lam_est=None, evaluate: bool = True) -> SolverResult:
    """Ground-truth evaluation; uses exactly one uncounted product for the f-gap.

    With ``evaluate=False`` (information-accounting runs on possibly indefinite
    draws) the ground truth is never touched and the error fields are NaN.
    """
    queries, x_hat = iterates[-1]
    if not evaluate:
        return SolverResult(
            method=method, x_hat=x_hat, queries_used=queries, rel_err=math.nan,
            f_gap=math.nan, overlap=math.nan,
            history=[(q, math.nan) for q, _ in iterates], truncated=truncated,
            lam_est=lam_est, session=session,
        )
    inst = session._instance
    x_star = inst.x_star
    norm_star = np.linalg.norm(x_star)
    u = inst.u
    history = [(q, float(np.linalg.norm(x - x_star) / norm_star)) for q, x in iterates]
    delta = x_hat - x_star
    f_gap = 0.5 * float(delta @ session.eval_matvec(delta))
    nx = np.linalg.norm(x_hat)
    overlap = float(x_hat @ u) ** 2 / nx**2 if nx > 0 else 0.0
    return SolverResult(
        method=method, x_hat=x_hat, queries_used=queries, rel_err=history[-1][1],
        f_gap=f_gap, overlap=overlap, history=history, truncated=truncated,
        lam_est=lam_est, session=session,
    )


def estimate_extreme_eigenvalues(session: QuerySession,
                                 n_queries: int = EIG_EST_QUERIES,
                                 rng: np.random.Generator | None = None):
    """Lanczos estimate of (lam_min, lam_max) through counted oracle queries.

    Runs at most ``n_queries`` Lanczos steps with full reorthogonalization and
    returns the extreme Ritz values.  Early breakdown (Krylov space exhausted)
    returns the exact extremes of the captured invariant subspace.
    """
    if n_queries < 1:
        raise DomainError("need at least one query to estimate eigenvalues")
    if rng is None:
        rng = np.random.default_rng(0)
    d = session.d
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    basis = [v]
    alphas, betas = [], []
    for j in range(min(n_queries, session.remaining_budget, d)):
        w = session.query(basis[j])
        alphas.append(float(basis[j] @ w))
        for q in basis:
            w -= (q @ w) * q
        for q in basis:
            w -= (q @ w) * q
        beta = np.linalg.norm(w)
        if beta < 1e-12:
            break
        betas.append(float(beta))
        basis.append(w / beta)
    tri = np.diag(alphas)
    for i, beta in enumerate(betas[: len(alphas) - 1]):
        tri[i, i + 1] = tri[i + 1, i] = beta
    ritz = np.linalg.eigvalsh(tri)
    return float(ritz[0]), float(ritz[-1])


def _check_finite(x: np.ndarray, scale: float, method: str) -> None:
    n = np.linalg.norm(x)
    if not np.isfinite(n) or n > _DIVERGE_FACTOR * scale:
        raise DivergenceError(f"{method} iterates diverged (|x| = {n:.3e})")


def _prepare_rates(session: QuerySession, lam_bounds, steps):
    """Resolve (lam_min, lam_max): use overrides or spend counted Lanczos queries."""
    if lam_bounds is not None:
        lmin, lmax = lam_bounds
    else:
        n_est = min(EIG_EST_QUERIES, session.remaining_budget)
        if n_est == 0:
            raise BudgetExhaustedError("no budget left for eigenvalue estimation")
        lmin, lmax = estimate_extreme_eigenvalues(session, n_est)
    if lmax <= 0 or lmin <= 0:
        raise DomainError(f"estimated spectrum [{lmin}, {lmax}] is not positive")
    return lmin, lmax


def gradient_descent(session: QuerySession, steps: int,
                     step: float | None = None, rtol: float = 0.0,
                     evaluate: bool = True) -> SolverResult:
    """Fixed-step descent x <- x - step*(A x - b), default step 2/(lmax+lmin).

    With no explicit ``step``, the extreme eigenvalues are estimated through
    counted queries first.  Stops at the residual tolerance, the step count, or
    budget exhaustion (flagged truncated).
    """
    lam_est = None
    if step is None:
        lmin, lmax = _prepare_rates(session, None, steps)
        step = 2.0 / (lmax + lmin)
        lam_est = (lmin, lmax)
    d = session.d
    x = np.zeros(d)
    scale = np.linalg.norm(session.b) * max(1.0, 1.0 / lam_est[0] if lam_est else 1.0)
    iterates = [(session.T_used, x.copy())]
    truncated = False
    b = session.b
    for _ in range(steps):
        if session.remaining_budget == 0:
            truncated = True
            break
        grad = session.query(x) - b
        x = x - step * grad
        _check_finite(x, scale + 1.0 / max(step, 1e-30), "gradient_descent")
        iterates.append((session.T_used, x.copy()))
        if rtol > 0 and np.linalg.norm(grad) <= rtol * np.linalg.norm(b):
            break
    return _evaluate(session, "gd", iterates, truncated, lam_est, evaluate)


def nesterov(session: QuerySession, steps: int, lam_bounds=None,
             rtol: float = 0.0, evaluate: bool = True) -> SolverResult:
    """Accelerated descent with constant momentum for strongly convex quadratics.

    y-iterates query the gradient; momentum (sqrt(k)-1)/(sqrt(k)+1) from the
    estimated condition number k.  A grossly underestimated lam_max makes the
    iteration blow up, which raises ``DivergenceError``.
    """
    lmin, lmax = _prepare_rates(session, lam_bounds, steps)
    kappa = lmax / lmin
    momentum = (math.sqrt(kappa) - 1.0) / (math.sqrt(kappa) + 1.0)
    d = session.d
    b = session.b
    x = np.zeros(d)
    y = np.zeros(d)
    scale = np.linalg.norm(b) / lmin
    iterates = [(session.T_used, x.copy())]
    truncated = False
    for _ in range(steps):
        if session.remaining_budget == 0:
            truncated = True
            break
        grad = session.query(y) - b
        x_next = y - grad / lmax
        y = x_next + momentum * (x_next - x)
        x = x_next
        _check_finite(x, scale, "nesterov")
        iterates.append((session.T_used, x.copy()))
        if rtol > 0 and np.linalg.norm(grad) <= rtol * np.linalg.norm(b):
            break
    return _evaluate(session, "nesterov", iterates, truncated, (lmin, lmax), evaluate)


def heavy_ball(session: QuerySession, steps: int, lam_bounds=None,
               rtol: float = 0.0, evaluate: bool = True) -> SolverResult:
    """Polyak momentum: x <- x - a*grad + m*(x - x_prev) with the classical tuning."""
    lmin, lmax = _prepare_rates(session, lam_bounds, steps)
    sl, sm = math.sqrt(lmax), math.sqrt(lmin)
    alpha = 4.0 / (sl + sm) ** 2
    momentum = ((sl - sm) / (sl + sm)) ** 2
    d = session.d
    b = session.b
    x_prev = np.zeros(d)
    x = np.zeros(d)
    scale = np.linalg.norm(b) / lmin
    iterates = [(session.T_used, x.copy())]
    truncated = False
    for _ in range(steps):
        if session.remaining_budget == 0:
            truncated = True
            break
        grad = session.query(x) - b
        x_next = x - alpha * grad + momentum * (x - x_prev)
        x_prev, x = x, x_next
        _check_finite(x, scale, "heavy_ball")
        iterates.append((session.T_used, x.copy()))
        if rtol > 0 and np.linalg.norm(grad) <= rtol * np.linalg.norm(b):
            break
    return _evaluate(session, "heavy_ball", iterates, truncated, (lmin, lmax), evaluate)


def conjugate_gradient(session: QuerySession, steps: int,
                       rtol: float = 0.0, evaluate: bool = True) -> SolverResult:
    """Standard CG on A x = b from x0 = 0; one query per iteration.

    Stops at the residual tolerance or the budget; a nonpositive curvature
    p'Ap signals a non-PD (degenerate) matrix and raises.
    """
    d = session.d
    b = session.b
    x = np.zeros(d)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    norm_b = math.sqrt(rr)
    iterates = [(session.T_used, x.copy())]
    truncated = False
    for _ in range(steps):
        if rtol > 0 and math.sqrt(rr) <= rtol * norm_b:
            break
        if rr == 0.0:
            break
        if session.remaining_budget == 0:
            truncated = True
            break
        w = session.query(p)
        curv = float(p @ w)
        if curv <= 0.0:
            raise DivergenceError(
                f"conjugate gradient breakdown: p'Ap = {curv:.3e} <= 0 (matrix not PD)"
            )
        alpha = rr / curv
        x = x + alpha * p
        r = r - alpha * w
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        iterates.append((session.T_used, x.copy()))
    return _evaluate(session, "cg", iterates, truncated, None, evaluate)


def plant_estimate(result: SolverResult) -> np.ndarray:
    """Normalize the solver output and register it with its session.

    The normalized direction is recorded as one extra tracked direction so the
    information accounting covers the estimate itself.
    """
    nx = np.linalg.norm(result.x_hat)
    if nx == 0.0:
        raise DomainError("zero estimate has no direction")
    u_hat = result.x_hat / nx
    if result.session is not None:
        result.session.register_estimate(u_hat)
    return u_hat


def query_complexity_curve(solver, instance, thresholds, budget: int,
                           **solver_kwargs) -> list[tuple[float, int | None]]:
    """First query count at which rel_err <= threshold, per threshold.

    ``thresholds`` must be decreasing in (0, 1]; entries not reached within the
    budget map to None.  The solver runs once on a fresh session.
    """
    thresholds = list(thresholds)
    if any(t2 >= t1 for t1, t2 in zip(thresholds, thresholds[1:])):
        raise PreconditionError("thresholds must be strictly decreasing")
    if any(not (0.0 < t <= 1.0) for t in thresholds):
        raise PreconditionError("thresholds must lie in (0, 1]")
    from .oracle import open_session

    session = open_session(instance, budget)
    result = solver(session, steps=budget, **solver_kwargs)
    history = result.history
    if history[0][0] > 0:
        # the origin start needs no queries even when estimation queries ran first
        history = [(0, 1.0)] + history
    out = []
    for thr in thresholds:
        hit = next((q for q, err in history if err <= thr), None)
        out.append((thr, hit))
    return out

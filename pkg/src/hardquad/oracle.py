"""Matrix-vector query oracle with budget accounting and information tracking.

A session reveals the linear term b up front and thereafter answers queries
v -> A v exactly, counting every call against a budget.  Alongside the raw
log it maintains an orthonormal basis V of the query directions (modified
Gram-Schmidt with one reorthogonalization pass); repeated or dependent
queries still consume budget but do not extend the basis.

Everything the solver must not see (the plant u, the ground truth x_star)
stays on the evaluation side: the potential Phi(V; u) = |V'u|^2 measures how
much of the plant the queries have pinned down, and the tau schedule bounds
how fast it is allowed to grow.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExhaustedError, DomainError
from .instances import Instance

__all__ = [
    "QuerySession",
    "TauSchedule",
    "open_session",
    "potential",
    "potential_trajectory",
    "tau_schedule",
    "recursion_gap_check",
    "recursion_gap_terms",
    "small_ball_bound",
    "likelihood_exponent",
    "export_trace",
]

#: relative norm below which an orthogonalized query direction is dropped
GS_DROP_TOL = 1e-10


class QuerySession:
    """Budgeted oracle view of one instance: b is revealed, A answers products."""

    def __init__(self, instance: Instance, budget: int):
        if budget < 0:
            raise DomainError(f"budget must be >= 0, got {budget}")
        self._instance = instance
        self.budget = int(budget)
        self.T_used = 0
        self.eval_calls = 0
        self.raw_log: list[tuple[np.ndarray, np.ndarray]] = []
        self._columns: list[np.ndarray] = []
        self._basis_size_after: list[int] = []
        self._estimate_registered = False
        b = instance.b.copy()
        b.setflags(write=False)
        self._b = b

    @property
    def b(self) -> np.ndarray:
        return self._b

    @property
    def d(self) -> int:
        return self._instance.d

    @property
    def remaining_budget(self) -> int:
        return self.budget - self.T_used

    @property
    def basis_size(self) -> int:
        return len(self._columns)

    def basis(self) -> np.ndarray:
        """Current orthonormal d x k basis of the query span (copy)."""
        if not self._columns:
            return np.zeros((self.d, 0))
        return np.column_stack(self._columns)

    def query(self, v: np.ndarray) -> np.ndarray:
        """Answer A @ v, log it, and extend the orthonormal basis if v adds rank."""
        if self.T_used >= self.budget:
            raise BudgetExhaustedError(
                f"budget of {self.budget} queries exhausted"
            )
        v = np.asarray(v, dtype=float)
        if v.shape != (self.d,):
            raise DomainError(f"query must be a vector of length {self.d}")
        if not np.all(np.isfinite(v)):
            raise DomainError("query contains non-finite entries")
        w = self._instance.A @ v
        self.T_used += 1
        self.raw_log.append((v.copy(), w.copy()))
        self._extend_basis(v)
        self._basis_size_after.append(len(self._columns))
        return w

    def register_estimate(self, x_hat: np.ndarray) -> None:
        """Record the final estimate direction as one more tracked direction.

        Does not consume budget and answers nothing; it only extends the basis
        used for information accounting, mirroring the convention that the
        estimate may as well have been the last query.
        """
        x_hat = np.asarray(x_hat, dtype=float)
        if x_hat.shape != (self.d,) or not np.all(np.isfinite(x_hat)):
            raise DomainError("estimate must be a finite vector of session dimension")
        self._extend_basis(x_hat)
        self._estimate_registered = True

    @property
    def estimate_registered(self) -> bool:
        return self._estimate_registered

    def eval_matvec(self, v: np.ndarray) -> np.ndarray:
        """Uncounted product for harness-side evaluation only (never solvers)."""
        self.eval_calls += 1
        return self._instance.A @ v

    def _extend_basis(self, v: np.ndarray) -> None:
        norm_v = np.linalg.norm(v)
        if norm_v == 0.0:
            return
        r = v.copy()
        for _ in range(2):  # one reorthogonalization pass
            for c in self._columns:
                r -= (c @ r) * c
        norm_r = np.linalg.norm(r)
        if norm_r <= GS_DROP_TOL * norm_v:
            return
        self._columns.append(r / norm_r)

    def phi_after_each_query(self, u: np.ndarray) -> list[float]:
        """Potential value after each counted query (and the registered estimate)."""
        coeffs = [float(c @ u) ** 2 for c in self._columns]
        prefix = np.concatenate([[0.0], np.cumsum(coeffs)])
        out = [float(prefix[k]) for k in self._basis_size_after]
        if self._estimate_registered:
            out.append(float(prefix[len(self._columns)]))
        return out


def open_session(instance: Instance, budget: int) -> QuerySession:
    """Start a query session: A hidden behind products, b revealed, counter zeroed."""
    return QuerySession(instance, budget)


def potential(session_or_V, u: np.ndarray) -> float:
    """Squared norm of the projection of u onto the orthonormalized query span."""
    if isinstance(session_or_V, QuerySession):
        V = session_or_V.basis()
    else:
        V = np.asarray(session_or_V, dtype=float)
        if V.ndim != 2:
            raise DomainError("expected a d x k orthonormal matrix")
    if V.shape[1] == 0:
        return 0.0
    if V.shape[0] != len(u):
        raise DomainError(f"dimension mismatch: basis {V.shape[0]} vs vector {len(u)}")
    proj = V.T @ u
    return float(proj @ proj)


def potential_trajectory(session: QuerySession, u: np.ndarray) -> list[float]:
    """Phi after each query, appending the registered estimate direction if any."""
    if len(u) != session.d:
        raise DomainError("dimension mismatch between session and plant")
    return session.phi_after_each_query(np.asarray(u, dtype=float))


@dataclass
class TauSchedule:
    """Geometric threshold recursion bounding potential growth per query round.

    taus[0] is the warm-start correlation and each step applies
    tau_{k+1} = 2*lam^2/(d*(lam-1)) * log(1/delta) + lam^5 * (tau_k + tau0).
    ``cap_geometric`` = 2*tau0*sum_{j=1..T} lam^{5j}; ``cap_simplified`` =
    2*e*tau0*T, valid whenever T <= 1/(5*(lam-1)).
    """

    lam: float
    tau0: float
    d: int
    delta: float
    T: int
    taus: list[float]
    valid: bool
    log_term: float
    cap_geometric: float
    cap_simplified: float
    simplified_cap_applies: bool

    def to_dict(self) -> dict:
        return {
            "lam": self.lam, "tau0": self.tau0, "d": self.d, "delta": self.delta,
            "T": self.T, "taus": list(self.taus), "valid": self.valid,
            "log_term": self.log_term, "cap_geometric": self.cap_geometric,
            "cap_simplified": self.cap_simplified,
            "simplified_cap_applies": self.simplified_cap_applies,
        }


def default_delta(lam: float, tau0: float, d: int) -> float:
    """Per-round failure probability exp(-d*lam^2*tau0*(lam-1))."""
    return math.exp(-d * lam * lam * tau0 * (lam - 1.0))


def tau_schedule(lam: float, tau0: float, d: int, delta: float | None = None,
                 T: int = 10) -> TauSchedule:
    """Threshold schedule tau_0..tau_{T+1} with its geometric and simplified caps.

    The schedule is always produced; ``valid`` flags whether
    tau0 >= lam^2/(d*(lam-1)^3), the regime in which the per-round gap
    inequality is guaranteed.
    """
    if not (1.0 < lam <= 1.5):
        raise DomainError(f"deformation must lie in (1, 1.5], got {lam}")
    if tau0 < 0 or d < 2 or T < 0:
        raise DomainError("tau0 must be >= 0, d >= 2, T >= 0")
    if delta is None:
        delta = default_delta(lam, tau0, d)
    if not (0.0 < delta < 1.0):
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    log_term = 2.0 * lam * lam / (d * (lam - 1.0)) * math.log(1.0 / delta)
    lam5 = lam**5
    taus = [tau0]
    for _ in range(T + 1):
        taus.append(log_term + lam5 * (taus[-1] + tau0))
    valid = tau0 >= lam * lam / (d * (lam - 1.0) ** 3)
    powers = lam5 ** np.arange(1, T + 1)
    cap_geometric = 2.0 * tau0 * float(np.sum(powers))
    cap_simplified = 2.0 * math.e * tau0 * T
    applies = T <= 1.0 / (5.0 * (lam - 1.0))
    return TauSchedule(
        lam=lam, tau0=tau0, d=d, delta=delta, T=T, taus=taus, valid=valid,
        log_term=log_term, cap_geometric=cap_geometric,
        cap_simplified=cap_simplified, simplified_cap_applies=applies,
    )


def recursion_gap_terms(d: int, taus, lam: float) -> np.ndarray:
    """Per-round truth values of (sqrt(d*tau_{k+1}) - sqrt(2k+2))^2 >= d*tau_{k+1}/lam.

    A round also fails when d*tau_{k+1} < 2k+2, where the deviation bound the
    inequality feeds is vacuous.
    """
    taus = np.asarray(taus, dtype=float)
    out = []
    for k in range(len(taus) - 1):
        dt = d * taus[k + 1]
        floor = 2.0 * k + 2.0
        if dt < floor:
            out.append(False)
            continue
        out.append((math.sqrt(dt) - math.sqrt(floor)) ** 2 >= dt / lam)
    return np.asarray(out, dtype=bool)


def recursion_gap_check(schedule: TauSchedule) -> np.ndarray:
    """Evaluate the per-round gap inequality along a produced schedule."""
    return recursion_gap_terms(schedule.d, schedule.taus, schedule.lam)


def small_ball_bound(d: int, k: int, tau: float) -> float:
    """Tail bound exp(-(sqrt(d*tau) - sqrt(2(k+1)))^2 / 2) for the projection mass.

    For any orthonormal V with k+1 columns and u with i.i.d. N(0, 1/d) entries,
    Pr[|V'u|^2 >= tau] is at most this value, provided d*tau >= 2(k+1).
    """
    if d < 1 or k < 0 or tau < 0:
        raise DomainError("need d >= 1, k >= 0, tau >= 0")
    dt = d * tau
    floor = 2.0 * (k + 1.0)
    if dt < floor:
        raise DomainError(f"d*tau = {dt} below 2(k+1) = {floor}: bound is vacuous")
    return math.exp(-0.5 * (math.sqrt(dt) - math.sqrt(floor)) ** 2)


def likelihood_exponent(eta: float, eps: float, lam: float, tau_k: float,
                        tau0: float) -> float:
    """Dimension-normalized exponent (1+eps)*eta*(1+eta)*lam^2*(tau_k + tau0)/2.

    Diagnostic for the power-divergence of the query transcript between the
    planted and null models when the accumulated potential is at most tau_k.
    """
    if eta < 0 or eps < 0:
        raise DomainError("eta and eps must be >= 0")
    return (1.0 + eps) * eta * (1.0 + eta) * lam * lam * (tau_k + tau0) / 2.0


def export_trace(session: QuerySession, u: np.ndarray, path) -> None:
    """Write one JSON record per query: {index, phi, residual}."""
    phis = potential_trajectory(session, u)
    b = session.b
    with open(path, "w") as fh:
        for i, (_, w) in enumerate(session.raw_log):
            rec = {"index": i, "phi": phis[i], "residual": float(np.linalg.norm(w - b))}
            fh.write(json.dumps(rec) + "\n")

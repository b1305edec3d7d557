"""Semicircle Stieltjes transform, resolvent traces, and eigenvalue-event checks.

Closed forms live on (2, inf):

    s(a) = (a - sqrt(a^2 - 4)) / 2        (Stieltjes transform of the semicircle)
    q(a) = -s'(a) = s(a) / sqrt(a^2 - 4)  (its negative derivative)

Empirical counterparts are normalized resolvent traces (1/d) tr (a*I - W)^{-p}
computed through a full symmetric eigendecomposition, independent of any
solver-under-test machinery.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import DomainError, PreconditionError, ResolventPoleError
from .instances import Instance

__all__ = [
    "StieltjesPoint",
    "SpectralReport",
    "TransferResult",
    "stieltjes_s",
    "stieltjes_q",
    "stielt_bounds",
    "normalized_trace_resolvent",
    "spectral_report",
    "concave_derivative_transfer",
    "DERIVATIVE_LIPSCHITZ_C",
]

#: default constant in the (lam-1)^{-3} Lipschitz bound on q'(a) near gamma(lam)
DERIVATIVE_LIPSCHITZ_C = 8.0


def _check_above_edge(a: float) -> None:
    if not a > 2.0:
        raise DomainError(f"evaluation point must exceed the spectral edge 2, got {a}")


def stieltjes_s(a: float) -> float:
    """Stieltjes transform (a - sqrt(a^2 - 4))/2 of the semicircle law, a > 2."""
    _check_above_edge(a)
    return (a - math.sqrt(a * a - 4.0)) / 2.0


def stieltjes_q(a: float) -> float:
    """Negative derivative of the Stieltjes transform: s(a)/sqrt(a^2 - 4), a > 2."""
    _check_above_edge(a)
    return stieltjes_s(a) / math.sqrt(a * a - 4.0)


@dataclass(frozen=True)
class StieltjesPoint:
    """Evaluation point a > 2 with transform value s(a) and derivative magnitude q(a)."""

    a: float
    s: float
    q: float

    @classmethod
    def at(cls, a: float) -> "StieltjesPoint":
        return cls(a=a, s=stieltjes_s(a), q=stieltjes_q(a))


def stielt_bounds(lam: float) -> dict:
    """Closed-form quantities at gamma(lam) together with their deterministic caps.

    Returns ``qs2`` = q(g)/s(g)^2, ``one_minus_ls`` = 1 - lam*s(g) (equal to
    (lam-1)*(sqrt(lam^2+1) - lam)), and ``sqrt_disc`` = sqrt(g^2 - 4) (equal to
    2*(lam-1)*sqrt(1 + 1/lam^2)).  Verifies qs2 <= 3/(2(lam-1)) and
    one_minus_ls <= lam - 1 before returning.
    """
    if not (1.0 < lam <= 2.0):
        raise DomainError(f"deformation must lie in (1, 2], got {lam}")
    g = 2.0 * (lam + 1.0 / lam) - 2.0
    s = stieltjes_s(g)
    q = stieltjes_q(g)
    qs2 = q / (s * s)
    one_minus_ls = 1.0 - lam * s
    sqrt_disc = math.sqrt(g * g - 4.0)
    tol = 1e-9
    if qs2 > 1.5 / (lam - 1.0) * (1.0 + tol):
        raise AssertionError(f"q/s^2 = {qs2} exceeds 3/(2(lam-1)) = {1.5 / (lam - 1)}")
    if one_minus_ls > (lam - 1.0) * (1.0 + tol):
        raise AssertionError(f"1 - lam*s = {one_minus_ls} exceeds lam-1 = {lam - 1}")
    return {"qs2": qs2, "one_minus_ls": one_minus_ls, "sqrt_disc": sqrt_disc}


def normalized_trace_resolvent(W: np.ndarray, gam: float, power: int,
                               eigenvalues: np.ndarray | None = None) -> float:
    """(1/d) * sum_i (gam - lam_i(W))^{-power} via symmetric eigendecomposition.

    ``eigenvalues`` can carry a precomputed spectrum to amortize the eigensolve
    across several evaluation points or powers.
    """
    if power not in (1, 2):
        raise DomainError(f"power must be 1 or 2, got {power}")
    if eigenvalues is None:
        eigenvalues = np.linalg.eigvalsh(W)
    top = float(np.max(eigenvalues))
    if gam <= top:
        raise ResolventPoleError(
            f"evaluation point {gam} is inside the spectrum (max eigenvalue {top})"
        )
    gaps = gam - eigenvalues
    return float(np.mean(gaps ** (-power)))


@dataclass
class SpectralReport:
    """Eigenvalue summary of one instance plus resolvent traces of its noise."""

    lam_max_A: float
    lam_min_A: float
    cond_A: float
    lam1_M: float
    norm_W: float
    nu: float
    event_EA_holds: bool
    trace_res1: float
    trace_res2: float

    def to_json(self) -> str:
        payload = asdict(self)
        payload["event_EA_holds"] = bool(payload["event_EA_holds"])
        return json.dumps(payload)


def spectral_report(instance: Instance, nu: float) -> SpectralReport:
    """Full symmetric eigensolve of A (and of W) with the two-sided eigenvalue event.

    The event holds iff (lam-1)^2/(lam*nu) <= lam_min(A) and
    lam_max(A) <= nu*2*(lam + 1/lam).
    """
    if not nu > 1.0:
        raise DomainError(f"slack factor nu must exceed 1, got {nu}")
    lam = instance.params.lam
    g = instance.gamma
    try:
        eigs_A = np.linalg.eigvalsh(instance.A)
        eigs_W = np.linalg.eigvalsh(instance.W)
    except np.linalg.LinAlgError as exc:
        raise ResolventPoleError(
            f"eigensolve failed (d={instance.d}, lam={lam}): {exc}"
        ) from exc
    lam_min_A = float(eigs_A[0])
    lam_max_A = float(eigs_A[-1])
    cond_A = lam_max_A / lam_min_A if lam_min_A > 0 else math.inf
    lam1_M = g - lam_min_A
    norm_W = float(max(abs(eigs_W[0]), abs(eigs_W[-1])))
    lower = (lam - 1.0) ** 2 / (lam * nu)
    upper = nu * 2.0 * (lam + 1.0 / lam)
    event = (lam_min_A >= lower) and (lam_max_A <= upper)
    top_W = float(eigs_W[-1])
    if g > top_W:
        gaps = g - eigs_W
        tr1 = float(np.mean(1.0 / gaps))
        tr2 = float(np.mean(1.0 / gaps**2))
    else:
        tr1 = tr2 = math.nan
    return SpectralReport(
        lam_max_A=lam_max_A, lam_min_A=lam_min_A, cond_A=cond_A, lam1_M=lam1_M,
        norm_W=norm_W, nu=nu, event_EA_holds=event, trace_res1=tr1, trace_res2=tr2,
    )


@dataclass(frozen=True)
class TransferResult:
    bound: float
    ok: bool
    deviation: float


def concave_derivative_transfer(f_vals, g_deriv: float, L: float, eps: float,
                                t: float | None = None) -> TransferResult:
    """Derivative transfer for a concave approximant sampled at {x-t, x, x+t}.

    If a differentiable f with L-Lipschitz derivative is within eps of a concave
    differentiable g at the three points x-t, x, x+t with t = sqrt(2*eps/L),
    then |f'(x) - g'(x)| <= 2*sqrt(2*L*eps).  Here ``f_vals`` are the three
    sampled values of f and ``g_deriv`` is the candidate derivative; ``ok``
    reports whether the central difference of f deviates from ``g_deriv`` by at
    most the bound.
    """
    if L <= 0 or eps <= 0:
        raise DomainError("Lipschitz constant and tolerance must be positive")
    f_vals = np.asarray(f_vals, dtype=float)
    if f_vals.shape != (3,):
        raise PreconditionError("expected exactly three samples at {x-t, x, x+t}")
    t_star = math.sqrt(2.0 * eps / L)
    if t is None:
        t = t_star
    elif not math.isclose(t, t_star, rel_tol=1e-9, abs_tol=0.0):
        raise PreconditionError(
            f"sample spacing t={t} inconsistent with sqrt(2*eps/L)={t_star}"
        )
    central = (f_vals[2] - f_vals[0]) / (2.0 * t)
    bound = 2.0 * math.sqrt(2.0 * L * eps)
    deviation = abs(central - g_deriv)
    return TransferResult(bound=bound, ok=bool(deviation <= bound), deviation=deviation)

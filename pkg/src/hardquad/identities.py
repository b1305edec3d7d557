"""Sherman-Morrison decompositions and the closed-form plant overlap of x_star.

The rank-one update A = (gamma*I - W) - lam*u*u' admits exact resolvent
identities through the denominator 1 - lam*u'(gamma*I - W)^{-1}u.  Combining
them with the semicircle closed forms yields a deterministic prediction for
the squared cosine between the exact minimizer and the plant:

    <x_star/|x_star|, u>^2  ->  tau0 / ( s(g)^{-2} q(g) (tau0 + (1 - lam*s(g))^2) )
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, fields

import numpy as np
import scipy.linalg

from .errors import DomainError, RankOneSingularityError, ResolventPoleError
from .instances import Instance
from .spectral import stieltjes_q, stieltjes_s

__all__ = [
    "OverlapDecomposition",
    "sherman_morrison_inverse",
    "second_order_identity_check",
    "overlap_prediction",
    "overlap_decomposition",
    "overlap_csv_header",
]


def sherman_morrison_inverse(Binv: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Inverse of (B + x y') given Binv = B^{-1}.

    Returns Binv - (Binv x)(y' Binv) / (1 + y' Binv x), raising when the
    rank-one denominator is numerically zero.
    """
    Bx = Binv @ x
    yB = y @ Binv
    denom = 1.0 + float(y @ Bx)
    if abs(denom) < 1e-12:
        raise RankOneSingularityError(f"rank-one denominator {denom:.3e} is numerically zero")
    return Binv - np.outer(Bx, yB) / denom


@dataclass
class SecondOrderCheck:
    lhs: float
    rhs: float
    rel_err: float


def _sym_solve(mat: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """Direct symmetric solve; the identities only need invertibility, not PD."""
    try:
        return scipy.linalg.solve(mat, rhs, assume_a="sym", check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise ResolventPoleError(f"{what} is numerically singular: {exc}") from exc


def second_order_identity_check(W: np.ndarray, gam: float, lam: float,
                                u: np.ndarray) -> SecondOrderCheck:
    """Exact identity u'A^{-2}u = u'(gam*I - W)^{-2}u / denom^2, A = gam*I - W - lam*u*u'.

    Both sides are computed by direct factorized solves; the relative error is
    floating-point only.
    """
    d = len(u)
    R = gam * np.eye(d) - W
    A = R - lam * np.outer(u, u)
    s_u = _sym_solve(R, u, "shifted noise matrix")
    a_u = _sym_solve(A, u, "objective matrix")
    denom = 1.0 - lam * float(u @ s_u)
    lhs = float(a_u @ a_u)
    rhs = float(s_u @ s_u) / denom**2
    rel = abs(lhs - rhs) / abs(rhs)
    return SecondOrderCheck(lhs=lhs, rhs=rhs, rel_err=rel)


def overlap_prediction(lam: float, tau0: float) -> float:
    """Deterministic limit of <x_star/|x_star|, u>^2 for given (lam, tau0)."""
    if not (1.0 < lam <= 2.0):
        raise DomainError(f"deformation must lie in (1, 2], got {lam}")
    if tau0 < 0.0:
        raise DomainError(f"warm-start correlation must be >= 0, got {tau0}")
    if tau0 == 0.0:
        return 0.0
    g = 2.0 * (lam + 1.0 / lam) - 2.0
    s = stieltjes_s(g)
    q = stieltjes_q(g)
    return tau0 / (q / s**2 * (tau0 + (1.0 - lam * s) ** 2))


@dataclass
class OverlapDecomposition:
    """Resolvent quadratic/bilinear forms of one instance and the overlap pair.

    ``empirical`` is the realized squared cosine <x_star/|x_star|, u>^2;
    ``predicted`` is the closed-form limit.  Cross terms uR1z, uR2z shrink with
    dimension; uR1u concentrates on the normalized resolvent trace.
    """

    denom: float
    uR1u: float
    uR2u: float
    zR1z: float
    zR2z: float
    uR1z: float
    uR2z: float
    predicted: float
    empirical: float

    def to_csv_row(self) -> str:
        buf = io.StringIO()
        vals = [getattr(self, f.name) for f in fields(self)]
        buf.write(",".join(f"{v:.17g}" for v in vals))
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({f.name: getattr(self, f.name) for f in fields(self)})


def overlap_csv_header() -> str:
    return ",".join(f.name for f in fields(OverlapDecomposition))


def overlap_decomposition(instance: Instance) -> OverlapDecomposition:
    """All resolvent forms of one instance by direct solves, plus both overlaps."""
    params = instance.params
    R = params.gamma * np.eye(instance.d) - instance.W
    rhs = np.column_stack([instance.u, instance.z])
    sols = _sym_solve(R, rhs, "shifted noise matrix")
    s_u, s_z = sols[:, 0], sols[:, 1]
    u, z = instance.u, instance.z
    uR1u = float(u @ s_u)
    denom = 1.0 - params.lam * uR1u
    x = instance.x_star
    empirical = float(x @ u) ** 2 / float(x @ x)
    return OverlapDecomposition(
        denom=denom,
        uR1u=uR1u,
        uR2u=float(s_u @ s_u),
        zR1z=float(z @ s_z),
        zR2z=float(s_z @ s_z),
        uR1z=float(u @ s_z),
        uR2z=float(s_u @ s_z),
        predicted=overlap_prediction(params.lam, params.tau0),
        empirical=empirical,
    )

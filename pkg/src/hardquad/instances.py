"""Random rank-one deformed Wigner instances with known ground truth.

An instance is a strongly convex quadratic f(x) = x'Ax/2 - b'x whose matrix
A = gamma(lam)*I - (W + lam*u*u') hides a planted unit-scale direction u, and
whose linear term b = sqrt(tau0)*u + z is warm-started toward the plant.
The exact minimizer x_star = A^{-1} b is computed by a direct factorization,
never by a query-counted method.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DegenerateInstanceError, DomainError, InvalidDimensionError

__all__ = [
    "InstanceParams",
    "Instance",
    "gamma",
    "cond_target",
    "lambda_for_kappa",
    "trial_rng",
    "sample_goe",
    "sample_plant",
    "build_instance",
    "objective",
    "dump_instance",
    "load_instance",
]

#: relative residual demanded of the ground-truth solve
SOLVE_RTOL = 1e-8

_UINT64_MAX = 2**64 - 1


def gamma(lam: float) -> float:
    """Spectral shift 2*(lam + 1/lam) - 2 placed above the deformed spectrum."""
    if lam <= 1.0:
        raise DomainError(f"deformation must exceed 1, got {lam}")
    return 2.0 * (lam + 1.0 / lam) - 2.0


def cond_target(lam: float) -> float:
    """Limiting condition number 2*(lam^2 + 1)/(lam - 1)^2 of the objective matrix."""
    if lam <= 1.0:
        raise DomainError(f"deformation must exceed 1, got {lam}")
    return 2.0 * (lam * lam + 1.0) / (lam - 1.0) ** 2


def lambda_for_kappa(kappa: float) -> float:
    """Invert kappa = 2*cond_target(lam) for lam in (1, 1.5] by bisection.

    The map lam -> 2*cond_target(lam) is a decreasing bijection from (1, 1.5]
    onto [52, inf), so the inverse exists exactly for kappa >= 52.
    """
    if kappa < 52.0:
        raise DomainError(f"kappa must be >= 52 (the value at lam=1.5), got {kappa}")
    lo, hi = 1.0 + 1e-15, 1.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 2.0 * cond_target(mid) > kappa:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10 * max(1.0, lo - 1.0):
            break
    return 0.5 * (lo + hi)


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    """Independent per-trial stream from a counter-mixed 64-bit master seed.

    Uses the Philox counter-based generator keyed by SeedSequence so that
    (master_seed, trial_index) -> stream is reproducible and trials can run
    in any order, serial or parallel, with identical draws.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed) & _UINT64_MAX,
                                spawn_key=(int(trial_index),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class InstanceParams:
    """Parameters (d, lam, tau0, seed) governing one random instance draw.

    ``paper_regime=True`` additionally enforces tau0 <= (lam-1)^2, the range
    in which the warm start stays weaker than the spectral gap.
    """

    d: int
    lam: float
    tau0: float
    seed: int
    paper_regime: bool = False

    def __post_init__(self):
        if self.d < 2:
            raise InvalidDimensionError(f"dimension must be >= 2, got {self.d}")
        if not (1.0 < self.lam <= 2.0):
            raise DomainError(f"deformation must lie in (1, 2], got {self.lam}")
        if self.tau0 < 0.0:
            raise DomainError(f"warm-start correlation must be >= 0, got {self.tau0}")
        if self.paper_regime and self.tau0 > (self.lam - 1.0) ** 2 * (1.0 + 1e-12):
            raise DomainError(
                f"tau0={self.tau0} exceeds (lam-1)^2={(self.lam - 1.0) ** 2} "
                "in paper-regime validation"
            )
        if not (0 <= int(self.seed) <= _UINT64_MAX):
            raise DomainError("seed must fit in an unsigned 64-bit integer")

    @property
    def gamma(self) -> float:
        return gamma(self.lam)

    def to_dict(self) -> dict:
        return {"d": self.d, "lam": self.lam, "tau0": self.tau0,
                "seed": self.seed, "paper_regime": self.paper_regime}


def sample_goe(d: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a GOE matrix normalized so the spectrum converges to [-2, 2].

    Off-diagonal entries are N(0, 1/d), mirrored; diagonal entries N(0, 2/d).
    """
    if d < 2:
        raise InvalidDimensionError(f"dimension must be >= 2, got {d}")
    g = rng.standard_normal((d, d))
    return (g + g.T) / np.sqrt(2.0 * d)


def sample_plant(d: int, rng: np.random.Generator) -> np.ndarray:
    """Draw the plant u with i.i.d. N(0, 1/d) entries (unit norm in expectation)."""
    if d < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {d}")
    return rng.standard_normal(d) / np.sqrt(d)


@dataclass
class Instance:
    """One sampled problem: noise W, plant u, linear term b = sqrt(tau0)*u + z.

    Immutable by convention after construction; safe to share read-only across
    parallel trials.  ``x_star`` is solved lazily by a dense symmetric
    factorization with one step of iterative refinement.
    """

    params: InstanceParams
    W: np.ndarray
    u: np.ndarray
    z: np.ndarray
    b: np.ndarray
    M: np.ndarray
    A: np.ndarray
    _x_star: np.ndarray | None = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def gamma(self) -> float:
        return self.params.gamma

    @property
    def x_star(self) -> np.ndarray:
        if self._x_star is None:
            self._x_star = _solve_spd(self.A, self.b, seed=self.params.seed)
        return self._x_star

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.A @ v


def _solve_spd(A: np.ndarray, b: np.ndarray, seed=None) -> np.ndarray:
    """Cholesky solve with one refinement step; rejects numerically singular A."""
    try:
        c, low = scipy.linalg.cho_factor(A, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise DegenerateInstanceError(
            f"objective matrix is not numerically positive definite: {exc}", seed=seed
        ) from exc
    x = scipy.linalg.cho_solve((c, low), b, check_finite=False)
    r = b - A @ x
    x = x + scipy.linalg.cho_solve((c, low), r, check_finite=False)
    resid = np.linalg.norm(b - A @ x) / np.linalg.norm(b)
    if not np.isfinite(resid) or resid > SOLVE_RTOL:
        raise DegenerateInstanceError(
            f"ground-truth solve residual {resid:.3e} exceeds {SOLVE_RTOL:.0e} "
            "(matrix effectively singular)", seed=seed,
        )
    return x


def build_instance(params: InstanceParams, rng: np.random.Generator | None = None,
                   solve: bool = False) -> Instance:
    """Assemble an instance from ``params``; identical params give identical draws.

    Draw order is fixed (W, then u, then z).  Pass ``solve=True`` to force the
    ground-truth solve eagerly; otherwise it happens on first ``x_star`` access.
    Degenerate draws raise instead of being silently retried; the harness owns
    the resample policy.
    """
    if rng is None:
        rng = trial_rng(params.seed, 0)
    d = params.d
    W = sample_goe(d, rng)
    u = sample_plant(d, rng)
    z = sample_plant(d, rng)
    b = np.sqrt(params.tau0) * u + z
    M = W + params.lam * np.outer(u, u)
    A = params.gamma * np.eye(d) - M
    inst = Instance(params=params, W=W, u=u, z=z, b=b, M=M, A=A)
    if solve:
        _ = inst.x_star
    return inst


def objective(instance: Instance, x: np.ndarray) -> float:
    """Quadratic objective value f(x) = x'Ax/2 - b'x."""
    return 0.5 * float(x @ (instance.A @ x)) - float(instance.b @ x)


def dump_instance(instance: Instance, path, full_matrices: bool = False) -> None:
    """Write an instance as JSON: {params, u, z, b, seed}.

    Matrices are reconstructed from the seed on load; ``full_matrices=True``
    additionally embeds W flattened row-major for seed-free round trips.
    """
    payload = {
        "schema": "hardquad-instance-v1",
        "params": instance.params.to_dict(),
        "seed": instance.params.seed,
        "u": instance.u.tolist(),
        "z": instance.z.tolist(),
        "b": instance.b.tolist(),
    }
    if full_matrices:
        payload["W_rowmajor"] = instance.W.ravel(order="C").tolist()
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_instance(path) -> Instance:
    """Rebuild an instance dumped by :func:`dump_instance`."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("schema") != "hardquad-instance-v1":
        raise ValueError(f"unrecognized instance schema in {path}")
    params = InstanceParams(**payload["params"])
    if "W_rowmajor" in payload:
        d = params.d
        W = np.asarray(payload["W_rowmajor"], dtype=float).reshape(d, d)
        u = np.asarray(payload["u"], dtype=float)
        z = np.asarray(payload["z"], dtype=float)
        b = np.asarray(payload["b"], dtype=float)
        M = W + params.lam * np.outer(u, u)
        A = params.gamma * np.eye(d) - M
        return Instance(params=params, W=W, u=u, z=z, b=b, M=M, A=A)
    inst = build_instance(params)
    for name in ("u", "z", "b"):
        stored = np.asarray(payload[name], dtype=float)
        if not np.array_equal(stored, getattr(inst, name)):
            raise ValueError(f"stored vector {name!r} does not match the seeded draw")
    return inst

"""Experiment orchestration: trial execution, summaries, and serialization.

One trial = one (grid point, trial index) pair.  Trials are deterministic
functions of (master_seed, grid index, trial index), so serial and parallel
execution produce identical record sets.  Degenerate draws are resampled up to
three times with each resample logged; a third failure marks the trial failed
and the run continues.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DegenerateInstanceError, DomainError, PreconditionError
from .identities import overlap_decomposition
from .instances import InstanceParams, build_instance, trial_rng
from .oracle import open_session, potential_trajectory
from .solvers import conjugate_gradient, gradient_descent, heavy_ball, nesterov, plant_estimate
from .spectral import spectral_report

__all__ = [
    "SCHEMA_VERSION",
    "GridPoint",
    "ExperimentConfig",
    "TrialRecord",
    "ClaimVerdict",
    "run_trial",
    "run_sweep",
    "summarize",
    "emit",
    "env_threads",
]

SCHEMA_VERSION = "v1"

MAX_RESAMPLES = 3

_SOLVERS = {
    "gd": gradient_descent,
    "nesterov": nesterov,
    "heavy_ball": heavy_ball,
    "cg": conjugate_gradient,
}


@dataclass(frozen=True)
class GridPoint:
    """One experiment cell: dimension, deformation (or condition target), warm start."""

    d: int
    lam: float
    tau0: float
    budget: int = 0
    solvers: tuple[str, ...] = ()
    with_spectral: bool = False
    with_overlap: bool = False
    nu: float = math.sqrt(2.0)

    def validate(self) -> None:
        InstanceParams(d=self.d, lam=self.lam, tau0=self.tau0, seed=0)
        for name in self.solvers:
            if name not in _SOLVERS:
                raise DomainError(f"unknown solver {name!r}; choose from {sorted(_SOLVERS)}")
        if self.budget < 0:
            raise DomainError("budget must be >= 0")


@dataclass
class ExperimentConfig:
    """Validated sweep description: grid x trials, seeded and reproducible."""

    grid: list[GridPoint]
    trials: int
    master_seed: int
    out_dir: str = "out"
    threads: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError("need at least one trial per grid point")
        if not self.grid:
            raise DomainError("grid must be nonempty")
        for gp in self.grid:
            gp.validate()

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        grid = [GridPoint(**{**g, "solvers": tuple(g.get("solvers", ()))})
                for g in raw["grid"]]
        return cls(grid=grid, trials=int(raw["trials"]),
                   master_seed=int(raw["master_seed"]),
                   out_dir=raw.get("out_dir", "out"),
                   threads=int(raw.get("threads", 1)))


@dataclass
class TrialRecord:
    """Flat per-trial record; one CSV row."""

    schema: str
    grid_index: int
    trial_index: int
    seed: int
    d: int
    lam: float
    tau0: float
    failed: bool = False
    fail_reason: str = ""
    resamples: int = 0
    fields: dict = field(default_factory=dict)

    def flat(self) -> dict:
        out = {
            "schema": self.schema,
            "grid_index": self.grid_index,
            "trial_index": self.trial_index,
            "seed": self.seed,
            "d": self.d,
            "lam": self.lam,
            "tau0": self.tau0,
            "failed": int(self.failed),
            "fail_reason": self.fail_reason,
            "resamples": self.resamples,
        }
        out.update(self.fields)
        return out


def _mix_seed(master_seed: int, grid_index: int, trial_index: int, attempt: int) -> int:
    ss = np.random.SeedSequence(entropy=master_seed,
                                spawn_key=(grid_index, trial_index, attempt))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_trial(config: ExperimentConfig, grid_index: int, trial_index: int,
              instance_factory=build_instance, log=None) -> TrialRecord:
    """Execute one trial deterministically; resample degenerate draws up to 3 times."""
    gp = config.grid[grid_index]
    record = TrialRecord(
        schema=SCHEMA_VERSION, grid_index=grid_index, trial_index=trial_index,
        seed=0, d=gp.d, lam=gp.lam, tau0=gp.tau0,
    )
    last_error = None
    for attempt in range(MAX_RESAMPLES):
        seed = _mix_seed(config.master_seed, grid_index, trial_index, attempt)
        record.seed = seed
        record.resamples = attempt
        params = InstanceParams(d=gp.d, lam=gp.lam, tau0=gp.tau0, seed=seed)
        try:
            instance = instance_factory(params, trial_rng(seed, 0))
            _fill_record(record, gp, instance)
            return record
        except DegenerateInstanceError as exc:
            last_error = exc
            if log is not None:
                log(f"grid {grid_index} trial {trial_index} attempt {attempt}: "
                    f"degenerate draw (seed {seed}): {exc}")
            continue
    record.failed = True
    record.fail_reason = f"degenerate after {MAX_RESAMPLES} attempts: {last_error}"
    return record


def _fill_record(record: TrialRecord, gp: GridPoint, instance) -> None:
    f = record.fields
    if gp.with_spectral:
        rep = spectral_report(instance, gp.nu)
        f.update({
            "lam_max_A": rep.lam_max_A, "lam_min_A": rep.lam_min_A,
            "cond_A": rep.cond_A, "lam1_M": rep.lam1_M, "norm_W": rep.norm_W,
            "event_EA_holds": int(rep.event_EA_holds),
            "trace_res1": rep.trace_res1, "trace_res2": rep.trace_res2,
        })
    if gp.with_overlap:
        dec = overlap_decomposition(instance)
        f.update({
            "denom": dec.denom, "uR1u": dec.uR1u, "uR2u": dec.uR2u,
            "zR1z": dec.zR1z, "zR2z": dec.zR2z, "uR1z": dec.uR1z,
            "uR2z": dec.uR2z, "overlap_predicted": dec.predicted,
            "overlap_empirical": dec.empirical,
        })
    for name in gp.solvers:
        session = open_session(instance, gp.budget)
        result = _SOLVERS[name](session, steps=gp.budget)
        plant_estimate(result)
        phis = potential_trajectory(session, instance.u)
        f.update({
            f"{name}_queries": result.queries_used,
            f"{name}_rel_err": result.rel_err,
            f"{name}_f_gap": result.f_gap,
            f"{name}_overlap": result.overlap,
            f"{name}_truncated": int(result.truncated),
            f"{name}_phi_final": phis[-1] if phis else 0.0,
        })


def run_sweep(config: ExperimentConfig, instance_factory=build_instance,
              log=None) -> list[TrialRecord]:
    """All (grid point, trial) pairs; order-normalized regardless of threading."""
    jobs = [(g, t) for g in range(len(config.grid)) for t in range(config.trials)]
    threads = max(1, config.threads)
    if threads == 1:
        records = [run_trial(config, g, t, instance_factory, log) for g, t in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(
                lambda job: run_trial(config, job[0], job[1], instance_factory, log),
                jobs,
            ))
    records.sort(key=lambda r: (r.grid_index, r.trial_index))
    return records


@dataclass
class ClaimVerdict:
    """Statistical verdict for one claim over a set of trials."""

    claim_id: str
    n_trials: int
    n_success: int
    frequency: float
    required_frequency: float
    passed: bool
    inconclusive: bool
    margin: float
    quantiles: dict
    details: str = ""

    def line(self) -> str:
        status = ("INCONCLUSIVE" if self.inconclusive
                  else ("PASS" if self.passed else "FAIL"))
        return (f"[{status}] {self.claim_id}: {self.n_success}/{self.n_trials} "
                f"(freq {self.frequency:.3f}, need {self.required_frequency:.3f})"
                + (f" -- {self.details}" if self.details else ""))

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(values, claim_id: str, required_frequency: float,
              min_trials: int, predicate=None, details: str = "") -> ClaimVerdict:
    """Success-frequency verdict with quantiles and exact counts.

    ``values`` is either a boolean success sequence or raw values plus a
    ``predicate``.  Fewer than ``min_trials`` observations is inconclusive,
    never a pass.
    """
    values = list(values)
    if predicate is not None:
        successes = [bool(predicate(v)) for v in values]
        numeric = [v for v in values if isinstance(v, (int, float))]
    else:
        successes = [bool(v) for v in values]
        numeric = []
    n = len(successes)
    k = sum(successes)
    freq = k / n if n else 0.0
    quantiles = {}
    if numeric:
        qs = np.percentile(np.asarray(numeric, dtype=float), [10, 50, 90])
        quantiles = {"q10": float(qs[0]), "q50": float(qs[1]), "q90": float(qs[2])}
    inconclusive = n < min_trials
    passed = (not inconclusive) and freq >= required_frequency
    return ClaimVerdict(
        claim_id=claim_id, n_trials=n, n_success=k, frequency=freq,
        required_frequency=required_frequency, passed=passed,
        inconclusive=inconclusive, margin=freq - required_frequency,
        quantiles=quantiles, details=details,
    )


def _csv_escape(value) -> str:
    s = str(value)
    if "," in s or '"' in s or "\n" in s:
        s = '"' + s.replace('"', '""') + '"'
    return s


def emit(records: list[TrialRecord], out_dir, formats=("csv", "json"),
         stamp: bool = True) -> dict:
    """Write records as CSV (stable column order) and/or JSON; returns paths.

    The CSV carries a single leading comment line with a timestamp; everything
    after it is the diffable body and is byte-reproducible for a fixed config.
    """
    if not records:
        raise PreconditionError("refusing to emit an empty record set")
    os.makedirs(out_dir, exist_ok=True)
    flats = [r.flat() for r in records]
    columns = list(flats[0].keys())
    for fl in flats[1:]:
        for key in fl:
            if key not in columns:
                columns.append(key)
    paths = {}
    if "csv" in formats:
        path = os.path.join(out_dir, "records.csv")
        with open(path, "w") as fh:
            if stamp:
                fh.write(f"# generated_at={time.strftime('%Y-%m-%dT%H:%M:%S%z')}\n")
            fh.write(",".join(columns) + "\n")
            for fl in flats:
                row = [_csv_escape(_fmt(fl.get(c, ""))) for c in columns]
                fh.write(",".join(row) + "\n")
        paths["csv"] = path
    if "json" in formats:
        path = os.path.join(out_dir, "records.json")
        with open(path, "w") as fh:
            json.dump({"schema": SCHEMA_VERSION, "records": flats}, fh, indent=1)
        paths["json"] = path
    return paths


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def diffable_csv_body(path) -> bytes:
    """CSV bytes with the leading timestamp comment lines stripped."""
    with open(path, "rb") as fh:
        lines = fh.readlines()
    return b"".join(line for line in lines if not line.startswith(b"#"))


def env_threads(default: int = 1) -> int:
    """Parallelism override from HARDQUAD_THREADS, else ``default``."""
    raw = os.environ.get("HARDQUAD_THREADS", "")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default

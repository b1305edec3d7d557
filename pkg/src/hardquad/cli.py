"""Command-line interface.

    hardquad <subcommand> [--config path.json] [--out dir] [--seed N]
             [--trials N] [--threads N] ...

Values in a JSON config file override the corresponding flags.  The
HARDQUAD_THREADS environment variable overrides the parallelism default.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import acceptance, identities, instances, oracle, replica, solvers, spectral
from .harness import ExperimentConfig, GridPoint, emit, env_threads, run_sweep


def _add_instance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=int, default=500)
    p.add_argument("--lam", type=float, default=None,
                   help="deformation parameter in (1, 2]")
    p.add_argument("--kappa", type=float, default=None,
                   help="target condition number (sets lam when given)")
    p.add_argument("--tau0", type=float, default=None,
                   help="warm-start correlation; default (lam-1)^2")
    p.add_argument("--seed", type=int, default=0)


def _resolve_params(args) -> instances.InstanceParams:
    lam = args.lam
    if args.kappa is not None:
        lam = instances.lambda_for_kappa(args.kappa)
    if lam is None:
        lam = 1.25
    tau0 = args.tau0 if args.tau0 is not None else (lam - 1.0) ** 2
    return instances.InstanceParams(d=args.d, lam=lam, tau0=tau0, seed=args.seed)


def _load_config_overrides(args) -> dict:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            return json.load(fh)
    return {}


def cmd_gen(args) -> int:
    params = _resolve_params(args)
    inst = instances.build_instance(params, solve=args.solve)
    out = args.out or "instance.json"
    instances.dump_instance(inst, out, full_matrices=args.full_matrices)
    print(f"wrote {out} (d={params.d}, lam={params.lam:.6f}, tau0={params.tau0:.6g}, "
          f"seed={params.seed})")
    return 0


def cmd_spectral(args) -> int:
    params = _resolve_params(args)
    inst = instances.build_instance(params)
    report = spectral.spectral_report(inst, nu=args.nu)
    print(report.to_json())
    return 0


def cmd_overlap(args) -> int:
    params = _resolve_params(args)
    inst = instances.build_instance(params)
    dec = identities.overlap_decomposition(inst)
    if args.csv:
        print(identities.overlap_csv_header())
        print(dec.to_csv_row())
    else:
        print(dec.to_json())
    return 0


_SOLVER_FNS = {
    "cg": solvers.conjugate_gradient,
    "gd": solvers.gradient_descent,
    "nesterov": solvers.nesterov,
    "heavy_ball": solvers.heavy_ball,
}


def cmd_solve(args) -> int:
    params = _resolve_params(args)
    inst = instances.build_instance(params)
    session = oracle.open_session(inst, budget=args.budget)
    result = _SOLVER_FNS[args.solver](session, steps=args.budget)
    solvers.plant_estimate(result)
    print(result.to_json(with_history=args.history))
    return 0


def cmd_potential(args) -> int:
    params = _resolve_params(args)
    inst = instances.build_instance(params)
    session = oracle.open_session(inst, budget=args.budget)
    _SOLVER_FNS[args.solver](session, steps=args.budget, evaluate=False)
    out = args.out or "trace.jsonl"
    oracle.export_trace(session, inst.u, out)
    phis = oracle.potential_trajectory(session, inst.u)
    print(f"wrote {out}; final phi = {phis[-1] if phis else 0.0:.6g}")
    return 0


def cmd_sweep(args) -> int:
    overrides = _load_config_overrides(args)
    if overrides:
        config = ExperimentConfig(
            grid=[GridPoint(**{**g, "solvers": tuple(g.get("solvers", ()))})
                  for g in overrides["grid"]],
            trials=int(overrides.get("trials", args.trials)),
            master_seed=int(overrides.get("master_seed", args.seed)),
            out_dir=overrides.get("out_dir", args.out or "out"),
            threads=int(overrides.get("threads", args.threads)),
        )
    else:
        lam = instances.lambda_for_kappa(args.kappa) if args.kappa else (args.lam or 1.25)
        tau0 = args.tau0 if args.tau0 is not None else (lam - 1.0) ** 2
        gp = GridPoint(d=args.d, lam=lam, tau0=tau0, budget=args.budget,
                       solvers=tuple(args.solvers.split(",")) if args.solvers else (),
                       with_spectral=args.with_spectral, with_overlap=args.with_overlap)
        config = ExperimentConfig(grid=[gp], trials=args.trials,
                                  master_seed=args.seed,
                                  out_dir=args.out or "out", threads=args.threads)
    records = run_sweep(config, log=lambda msg: print(msg, file=sys.stderr))
    paths = emit(records, config.out_dir)
    failed = sum(r.failed for r in records)
    print(f"{len(records)} records ({failed} failed) -> {paths}")
    return 0


def cmd_replica(args) -> int:
    lams = np.linspace(args.lam_min, args.lam_max, args.points)
    rows = replica.replica_table(lams, tau0_policy=args.tau0_policy)
    cols = ["lambda", "tau0", "rho", "mu", "q_star", "overlap_asymptote", "bound_9_2"]
    lines = [",".join(cols)]
    lines += [",".join(f"{row[c]:.12g}" for c in cols) for row in rows]
    text = "\n".join(lines)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def cmd_mmse_mc(args) -> int:
    rng = instances.trial_rng(args.seed, 0)
    est = replica.posterior_cross_mc(args.d, args.rho, args.mu, args.samples,
                                     args.instances, rng)
    payload = {
        "d": args.d, "rho": args.rho, "mu": args.mu,
        "estimate": est.estimate, "stderr": est.stderr,
        "ess_min": est.ess_min, "unreliable": est.unreliable,
        "prior_exact": replica.prior_cross_exact(args.d, args.mu),
    }
    if args.rho > 1:
        payload["q_star_sq"] = replica.q_star_closed(args.rho, args.mu) ** 2
    print(json.dumps(payload, indent=1))
    return 0


def cmd_verify(args) -> int:
    out_dir = args.out or "verify-out"
    results = acceptance.run_all(master_seed=args.seed, out_dir=out_dir)
    n_fail = sum(not r.passed for r in results)
    print(f"\n{len(results) - n_fail}/{len(results)} criteria passed; "
          f"report in {os.path.join(out_dir, 'acceptance.txt')}")
    return 1 if n_fail else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hardquad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample an instance and dump it as JSON")
    _add_instance_flags(p)
    p.add_argument("--out", default=None)
    p.add_argument("--full-matrices", action="store_true")
    p.add_argument("--solve", action="store_true",
                   help="force the ground-truth solve eagerly")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("spectral", help="eigenvalue report of one instance")
    _add_instance_flags(p)
    p.add_argument("--nu", type=float, default=math.sqrt(2.0))
    p.set_defaults(fn=cmd_spectral)

    p = sub.add_parser("overlap", help="resolvent decomposition and plant overlap")
    _add_instance_flags(p)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(fn=cmd_overlap)

    p = sub.add_parser("solve", help="run one solver through the query oracle")
    _add_instance_flags(p)
    p.add_argument("--solver", choices=sorted(_SOLVER_FNS), default="cg")
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--history", action="store_true")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("potential", help="export the per-query information trace")
    _add_instance_flags(p)
    p.add_argument("--solver", choices=sorted(_SOLVER_FNS), default="cg")
    p.add_argument("--budget", type=int, default=50)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_potential)

    p = sub.add_parser("sweep", help="grid of trials -> records.csv/json")
    _add_instance_flags(p)
    p.add_argument("--config", default=None, help="JSON config overriding flags")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--solvers", default="cg",
                   help="comma-separated subset of cg,gd,nesterov,heavy_ball")
    p.add_argument("--with-spectral", action="store_true")
    p.add_argument("--with-overlap", action="store_true")
    p.add_argument("--threads", type=int, default=env_threads(1))
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("replica", help="closed-form replica table as CSV")
    p.add_argument("--lam-min", type=float, default=1.05)
    p.add_argument("--lam-max", type=float, default=2.0)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--tau0-policy", choices=["gap_squared", "zero"],
                   default="gap_squared")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_replica)

    p = sub.add_parser("mmse-mc", help="posterior cross-term Monte Carlo")
    p.add_argument("--d", type=int, default=6)
    p.add_argument("--rho", type=float, default=4.0)
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_mmse_mc)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--seed", type=int, default=acceptance.DEFAULT_MASTER_SEED)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

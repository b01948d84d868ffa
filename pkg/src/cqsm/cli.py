"""Command-line entry point.

Subcommands: ``run`` (multi-seed experiment), ``solve-lq`` (closed-form
coefficients and optimal parameters), ``check-martingale`` (orthogonality
diagnostic of the analytic optimum), ``sample-actions`` (sampler moments
against the Boltzmann target).  Exit codes: 0 success, 1 config error,
2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .experiment import (
    estimate_discounted_return,
    load_config,
    run_experiment,
    running_avg_reward,
)
from .lq_analytic import coefficient_residuals, k_to_optimal_params, optimal_score, q_star, solve_lq
from .martingale import constant_test, orthogonality_residual
from .online import AlgoConfig
from .samplers import langevin_chain, make_linear_schedule, ddpm_sample
from .sde import NoiseSource


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqsm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a multi-seed learning experiment")
    run.add_argument("--config", required=True, help="config or manifest file")
    run.add_argument("--seeds", type=int, default=None, help="override run.n_seeds")
    run.add_argument("--out", default=None, help="override run.output_dir")
    run.add_argument("--parallel", type=int, default=1, help="seeds run concurrently")

    solve = sub.add_parser("solve-lq", help="print the closed-form solution")
    solve.add_argument("--config", required=True)

    mart = sub.add_parser("check-martingale", help="orthogonality z-test of the analytic optimum")
    mart.add_argument("--config", required=True)
    mart.add_argument("--traj", type=int, default=200)
    mart.add_argument("--dt", type=float, default=0.01)
    mart.add_argument("--horizon", type=float, default=50.0)
    mart.add_argument("--seed", type=int, default=0)
    mart.add_argument("--offset", type=float, default=0.0,
                      help="constant added to the tested value function")

    samp = sub.add_parser("sample-actions", help="draw actions at a fixed state")
    samp.add_argument("--config", required=True)
    samp.add_argument("--sampler", choices=["langevin", "ddpm"], default="langevin")
    samp.add_argument("--n", type=int, default=20000)
    samp.add_argument("--x", type=float, default=0.0)
    samp.add_argument("--seed", type=int, default=0)
    samp.add_argument("--out", default=None, help="optional CSV of the samples")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seeds is not None:
        cfg = replace(cfg, n_seeds=args.seeds)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    cfg.validate()
    summary = run_experiment(cfg, parallel=args.parallel)
    print(f"seeds: {' '.join(str(s) for s in summary.seeds)}")
    if summary.failed_seeds:
        print(f"failed seeds: {' '.join(str(s) for s in summary.failed_seeds)}")
    print("final mean theta: " + " ".join("%.6g" % t for t in summary.theta_mean[-1]))
    print("final mean v:     " + " ".join("%.6g" % t for t in summary.v_mean[-1]))
    print("final mean running avg reward: %.6g" % summary.avg_reward_mean[-1])
    print(f"wrote {cfg.output_dir}/summary.csv and per-seed CSVs")
    return 0


def _cmd_solve(args) -> int:
    cfg = load_config(args.config)
    k = solve_lq(cfg.lq)
    theta, v = k_to_optimal_params(k, cfg.lq.lam)
    residuals = coefficient_residuals(k, cfg.lq)
    names = ["k0", "k1", "k2", "k3", "k4", "k5"]
    for name, value in zip(names, k.as_array()):
        print(f"{name} = {value:.8g}")
    print("theta_star = " + " ".join("%.8g" % t for t in theta))
    print("v_star     = " + " ".join("%.8g" % t for t in v))
    print("max |residual| = %.3g" % np.max(np.abs(residuals)))
    print("csv:")
    print("name,value")
    for name, value in zip(names, k.as_array()):
        print("%s,%.8g" % (name, value))
    for i, value in enumerate(theta):
        print("theta%d,%.8g" % (i, value))
    for i, value in enumerate(v):
        print("v%d,%.8g" % (i, value))
    return 0


def _cmd_martingale(args) -> int:
    cfg = load_config(args.config)
    p = cfg.lq
    k = solve_lq(p)
    offset = args.offset
    qfun = lambda x, a: q_star(k, x, a) + offset
    score = lambda x, a: optimal_score(k, p.lam, x, a)
    diag_cfg = AlgoConfig(dt=args.dt, n_steps=int(round(args.horizon / args.dt)),
                          beta=p.beta, lam=p.lam, seed=args.seed)
    report = orthogonality_residual(qfun, score, constant_test(), p, diag_cfg, args.traj)
    print(f"estimate      = {report.estimate:.6g}")
    print(f"std_error     = {report.std_error:.6g}")
    print(f"trajectories  = {report.n_trajectories}")
    print(f"z_score       = {report.z_score:.4g}")
    print("csv:")
    print("estimate,std_error,n_trajectories,z_score")
    print("%.9g,%.9g,%d,%.9g" % (report.estimate, report.std_error,
                                 report.n_trajectories, report.z_score))
    return 0


def _cmd_sample(args) -> int:
    cfg = load_config(args.config)
    p = cfg.lq
    k = solve_lq(p)
    score = lambda x, a: optimal_score(k, p.lam, x, a)
    noise = NoiseSource(args.seed)
    if args.sampler == "langevin":
        samples = langevin_chain(score, args.x, 0.0, cfg.algo.langevin_dt,
                                 cfg.algo.langevin_steps, args.n, 10, noise)
    else:
        schedule = make_linear_schedule(cfg.algo.ddpm_steps, cfg.algo.ddpm_beta_start,
                                        cfg.algo.ddpm_beta_end)
        samples = np.array([ddpm_sample(score, args.x, schedule, noise)
                            for _ in range(args.n)])
    target_mean = -(k.k3 + k.k4 * args.x) / k.k2
    target_var = -p.lam / k.k2
    print(f"sampler        = {args.sampler}")
    print(f"samples        = {args.n}")
    print(f"empirical mean = {samples.mean():.6g}   (target {target_mean:.6g})")
    print(f"empirical var  = {samples.var(ddof=1):.6g}   (target {target_var:.6g})")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("a\n")
            fh.writelines("%.9g\n" % s for s in samples)
        print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "solve-lq": _cmd_solve,
        "check-martingale": _cmd_martingale,
        "sample-actions": _cmd_sample,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

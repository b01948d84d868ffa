"""Batch experiment runner: config files, multi-seed orchestration, CSV output.

Configs are flat key-value text with dotted section prefixes::

    lq.A = -1.0
    algo.dt = 0.1
    run.n_seeds = 5

Unknown keys are errors; omitted keys fall back to the bundled reference LQ
instance (the repo's canonical benchmark).  Every run writes per-seed learning
records, a cross-seed summary, and a manifest that reproduces the run
byte-identically when fed back through ``--config``.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._version import __version__
from .lq import LqParams, lq_dynamics, lq_reward_fn
from .online import AlgoConfig, DivergenceError, LearningRecord, run_cqsm
from .policy import psi_v
from .sde import simulate_batch


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


_LQ_DEFAULTS = {
    "A": -1.0, "B": 0.0, "C": 0.0, "D": 1.0,
    "M": 2.0, "N": 2.0, "R": 1.0, "P": 1.0, "Pp": 2.0,
    "beta": 1.0, "lambda": 0.1,
}
_ALGO_TYPES = {
    "dt": float, "n_steps": int, "alpha_theta": float, "alpha_v": float,
    "beta": float, "lambda": float, "seed": int, "sampler": str,
    "record_every": int, "x0": float, "a0": float,
    "langevin_dt": float, "langevin_steps": int,
    "ddpm_steps": int, "ddpm_beta_start": float, "ddpm_beta_end": float,
}
_RUN_TYPES = {
    "n_seeds": int, "base_seed": int, "theta0_mode": str, "v0_mode": str,
    "theta0": "vector", "v0": "vector", "output_dir": str,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One multi-seed experiment: environment, algorithm, and run-level knobs."""

    lq: LqParams
    algo: AlgoConfig
    n_seeds: int = 5
    base_seed: int = 0
    theta0_mode: str = "zeros"
    v0_mode: str = "uniform01"
    theta0: tuple | None = None
    v0: tuple | None = None
    output_dir: str = "runs"

    def validate(self) -> None:
        if self.n_seeds < 1:
            raise ConfigError("run.n_seeds must be at least 1")
        if self.theta0_mode not in ("zeros", "explicit"):
            raise ConfigError("run.theta0_mode must be 'zeros' or 'explicit'")
        if self.v0_mode not in ("uniform01", "explicit"):
            raise ConfigError("run.v0_mode must be 'uniform01' or 'explicit'")
        if self.theta0_mode == "explicit" and (self.theta0 is None or len(self.theta0) != 6):
            raise ConfigError("explicit theta0 needs run.theta0 with 6 comma-separated values")
        if self.v0_mode == "explicit" and (self.v0 is None or len(self.v0) != 3):
            raise ConfigError("explicit v0 needs run.v0 with 3 comma-separated values")
        try:
            self.algo.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _coerce(key: str, raw: str, kind):
    try:
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        if kind == "vector":
            return tuple(float(part) for part in raw.split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat key-value config text; '#' lines and blanks are ignored."""
    lq_vals = dict(_LQ_DEFAULTS)
    algo_vals: dict = {}
    run_vals: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if "." not in key:
            raise ConfigError(f"line {lineno}: key {key!r} lacks a section prefix")
        section, _, name = key.partition(".")
        if section == "lq":
            if name not in _LQ_DEFAULTS:
                raise ConfigError(f"line {lineno}: unknown key lq.{name}")
            lq_vals[name] = _coerce(key, raw, float)
        elif section == "algo":
            if name not in _ALGO_TYPES:
                raise ConfigError(f"line {lineno}: unknown key algo.{name}")
            algo_vals[name] = _coerce(key, raw, _ALGO_TYPES[name])
        elif section == "run":
            if name not in _RUN_TYPES:
                raise ConfigError(f"line {lineno}: unknown key run.{name}")
            run_vals[name] = _coerce(key, raw, _RUN_TYPES[name])
        else:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")

    try:
        lq = LqParams(A=lq_vals["A"], B=lq_vals["B"], C=lq_vals["C"], D=lq_vals["D"],
                      M=lq_vals["M"], N=lq_vals["N"], R=lq_vals["R"], P=lq_vals["P"],
                      Pp=lq_vals["Pp"], beta=lq_vals["beta"], lam=lq_vals["lambda"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    # the learner's discount and regularization mirror the environment unless
    # explicitly overridden
    algo_vals.setdefault("beta", lq.beta)
    algo_vals.setdefault("lambda", lq.lam)
    algo_vals["lam"] = algo_vals.pop("lambda")
    algo = AlgoConfig(**algo_vals)

    cfg = ExperimentConfig(lq=lq, algo=algo, **run_vals)
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical text form of a config (stable ordering, round-trippable)."""
    lines = []
    lq = cfg.lq
    for name in sorted(_LQ_DEFAULTS):
        attr = "lam" if name == "lambda" else name
        lines.append(f"lq.{name} = {getattr(lq, attr)!r}")
    for name in sorted(_ALGO_TYPES):
        attr = "lam" if name == "lambda" else name
        value = getattr(cfg.algo, attr)
        rendered = value if isinstance(value, str) else repr(value)
        lines.append(f"algo.{name} = {rendered}")
    for name in sorted(_RUN_TYPES):
        value = getattr(cfg, name)
        if value is None:
            continue
        if name in ("theta0", "v0"):
            value = ",".join(repr(part) for part in value)
            lines.append(f"run.{name} = {value}")
        elif isinstance(value, str):
            lines.append(f"run.{name} = {value}")
        else:
            lines.append(f"run.{name} = {value!r}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical config text, excluding the output directory."""
    basis = "\n".join(line for line in format_config(cfg).splitlines()
                      if not line.startswith("run.output_dir"))
    return hashlib.sha256(basis.encode("utf-8")).hexdigest()


def running_avg_reward(reward_rates, dt: float) -> np.ndarray:
    """Cumulative time average: avg[k] = sum_{i<=k} r_i dt / ((k+1) dt)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    rates = np.asarray(reward_rates, dtype=float)
    if rates.size == 0:
        return np.empty(0)
    steps = np.arange(1, len(rates) + 1)
    return np.cumsum(rates * dt) / (steps * dt)


@dataclass(frozen=True)
class RunSummary:
    """Cross-seed aggregates of one experiment.

    Standard deviations are sample standard deviations across successful
    seeds (zero when fewer than two succeeded); the CSV emits mean and
    mean +/- 2 std bands.
    """

    seeds: tuple
    failed_seeds: tuple
    record_steps: np.ndarray
    record_times: np.ndarray
    theta_mean: np.ndarray
    theta_std: np.ndarray
    v_mean: np.ndarray
    v_std: np.ndarray
    reward_mean: np.ndarray
    reward_std: np.ndarray
    avg_reward_mean: np.ndarray
    avg_reward_std: np.ndarray
    final_thetas: np.ndarray
    final_vs: np.ndarray
    final_avg_rewards: np.ndarray


def _initial_params(cfg: ExperimentConfig, seed: int):
    if cfg.theta0_mode == "zeros":
        theta0 = np.zeros(6)
    else:
        theta0 = np.asarray(cfg.theta0, dtype=float)
    if cfg.v0_mode == "uniform01":
        v0 = np.random.default_rng((seed, 1)).uniform(0.0, 1.0, 3)
    else:
        v0 = np.asarray(cfg.v0, dtype=float)
    return theta0, v0


def _run_seed(args):
    cfg, seed = args
    algo = replace(cfg.algo, seed=seed)
    theta0, v0 = _initial_params(cfg, seed)
    try:
        return seed, run_cqsm(algo, cfg.lq, theta0, v0), None
    except DivergenceError as exc:
        return seed, None, str(exc)


def _fmt(value: float) -> str:
    return "%.9g" % value


def write_record_csv(record: LearningRecord, path) -> None:
    """Per-seed learning record CSV (schema shared by online and offline runs)."""
    header = ("step,t," + ",".join(f"theta{i}" for i in range(6)) + ","
              + ",".join(f"v{i}" for i in range(3)) + ",reward_rate,running_avg_reward")
    lines = [header]
    for i in range(len(record.steps)):
        row = [str(int(record.steps[i])), _fmt(record.times[i])]
        row += [_fmt(t) for t in record.thetas[i]]
        row += [_fmt(t) for t in record.vs[i]]
        row += [_fmt(record.reward_rates[i]), _fmt(record.running_avg[i])]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _band_columns(name: str):
    return [f"{name}_mean", f"{name}_lo", f"{name}_hi"]


def write_summary_csv(summary: RunSummary, path) -> None:
    """Cross-seed summary with mean and mean +/- 2 std per column."""
    names = [f"theta{i}" for i in range(6)] + [f"v{i}" for i in range(3)]
    names += ["reward_rate", "running_avg_reward"]
    header = "step,t," + ",".join(",".join(_band_columns(n)) for n in names)
    means = np.column_stack([summary.theta_mean, summary.v_mean,
                             summary.reward_mean[:, None], summary.avg_reward_mean[:, None]])
    stds = np.column_stack([summary.theta_std, summary.v_std,
                            summary.reward_std[:, None], summary.avg_reward_std[:, None]])
    lines = [header]
    for i in range(len(summary.record_steps)):
        row = [str(int(summary.record_steps[i])), _fmt(summary.record_times[i])]
        for j in range(means.shape[1]):
            m, s = means[i, j], stds[i, j]
            row += [_fmt(m), _fmt(m - 2 * s), _fmt(m + 2 * s)]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig, parallel: int = 1) -> RunSummary:
    """Run n_seeds independent learning runs and write CSVs plus a manifest.

    Seeds are base_seed..base_seed + n_seeds - 1.  A diverged seed is recorded
    as failed rather than aborting the experiment.  Output is deterministic:
    rerunning the same config (or its manifest) reproduces every CSV byte for
    byte.
    """
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(range(cfg.base_seed, cfg.base_seed + cfg.n_seeds))
    jobs = [(cfg, seed) for seed in seeds]

    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_seed, jobs))
    else:
        results = [_run_seed(job) for job in jobs]

    records = {}
    failures = {}
    for seed, record, error in results:
        if record is None:
            failures[seed] = error
        else:
            records[seed] = record
            write_record_csv(record, out / f"seed_{seed}.csv")

    if not records:
        raise DivergenceError("every seed diverged: " + "; ".join(failures.values()))

    ok_seeds = sorted(records)
    first = records[ok_seeds[0]]
    thetas = np.stack([records[s].thetas for s in ok_seeds])
    vs = np.stack([records[s].vs for s in ok_seeds])
    rates = np.stack([records[s].reward_rates for s in ok_seeds])
    avgs = np.stack([records[s].running_avg for s in ok_seeds])

    def _std(stack):
        if stack.shape[0] < 2:
            return np.zeros(stack.shape[1:])
        return stack.std(axis=0, ddof=1)

    summary = RunSummary(
        seeds=tuple(seeds),
        failed_seeds=tuple(sorted(failures)),
        record_steps=first.steps,
        record_times=first.times,
        theta_mean=thetas.mean(axis=0),
        theta_std=_std(thetas),
        v_mean=vs.mean(axis=0),
        v_std=_std(vs),
        reward_mean=rates.mean(axis=0),
        reward_std=_std(rates),
        avg_reward_mean=avgs.mean(axis=0),
        avg_reward_std=_std(avgs),
        final_thetas=thetas[:, -1, :],
        final_vs=vs[:, -1, :],
        final_avg_rewards=avgs[:, -1],
    )
    write_summary_csv(summary, out / "summary.csv")

    manifest = [
        "# cqsm run manifest",
        f"# version: {__version__}",
        f"# config_sha256: {config_hash(cfg)}",
        "# seeds: " + " ".join(str(s) for s in seeds),
        "# failed_seeds: " + " ".join(str(s) for s in sorted(failures)),
        format_config(cfg).rstrip("\n"),
    ]
    with open(out / "manifest.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(manifest) + "\n")
    return summary


def estimate_discounted_return(p: LqParams, score, cfg: AlgoConfig, n_traj: int):
    """Monte Carlo discounted net return from (cfg.x0, cfg.a0) under a score.

    Left-endpoint sum of e^{-beta t} (r - lam/2 Psi^2) dt over cfg.n_steps
    steps, averaged over n_traj trajectories.  Returns (estimate, std error).
    Equal cfg.seed values reuse the same noise, enabling common-random-number
    comparisons between scores.
    """
    batch = simulate_batch(lq_dynamics(p, score), lq_reward_fn(p), cfg.x0, cfg.a0,
                           cfg.dt, cfg.n_steps, n_traj, cfg.seed)
    w = np.exp(-p.beta * batch.times[:-1])[:, None]
    psi = score(batch.states[:-1], batch.actions[:-1])
    returns = (w * (batch.reward_rates - 0.5 * p.lam * psi ** 2) * batch.dt).sum(axis=0)
    return float(returns.mean()), float(returns.std(ddof=1) / np.sqrt(n_traj))


def optimal_policy_running_avg(p: LqParams, v_star, cfg: AlgoConfig, seeds) -> np.ndarray:
    """Final running-average reward of the frozen score psi_v(v_star) per seed.

    Baseline companion to a learning run: same horizon, same step, same seeds,
    but no parameter updates.
    """
    score = lambda x, a: psi_v(v_star, x, a)
    finals = []
    for seed in seeds:
        batch = simulate_batch(lq_dynamics(p, score), lq_reward_fn(p), cfg.x0, cfg.a0,
                               cfg.dt, cfg.n_steps, 1, seed)
        finals.append(running_avg_reward(batch.reward_rates[:, 0], cfg.dt)[-1])
    return np.asarray(finals)

"""Online actor-critic Q-score matching.

Each iteration observes one environment transition, forms the one-step
temporal difference of the discounted value model, updates the critic along
the model's parameter gradient, and nudges the score toward the critic's
scaled action gradient.  Actions are produced by the configured sampler: a
denoising chain, a Langevin chain, or by carrying the action forward
continuously through its own SDE ("direct_sde").
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .lq import LqParams, env_step, lq_reward
from .policy import grad_a_q, grad_theta_q, grad_v_psi, psi_v, q_theta
from .samplers import ddpm_sample, langevin_sample, make_linear_schedule
from .sde import NoiseSource, SimulationError

SAMPLERS = ("direct_sde", "langevin", "ddpm")
DIVERGENCE_LIMIT = 1e6


class DivergenceError(SimulationError):
    """Learned parameters left the finite range during an update."""


@dataclass(frozen=True)
class AlgoConfig:
    """Hyperparameters of one learning run.

    The horizon is n_steps * dt.  ``sampler`` selects how actions are drawn:
    "direct_sde" evolves the action by its own SDE alongside the state,
    "langevin" re-equilibrates a Langevin chain at each new state (warm-started
    from the previous action), "ddpm" denoises a fresh Gaussian draw each step.
    ``record_every`` thins the recorded time series.
    """

    dt: float = 0.1
    n_steps: int = 100_000
    alpha_theta: float = 0.01
    alpha_v: float = 0.01
    beta: float = 1.0
    lam: float = 0.1
    seed: int = 0
    sampler: str = "direct_sde"
    record_every: int = 100
    x0: float = 0.0
    a0: float = 0.0
    langevin_dt: float = 0.01
    langevin_steps: int = 2000
    ddpm_steps: int = 20
    ddpm_beta_start: float = 1e-3
    ddpm_beta_end: float = 0.19

    def validate(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        if self.alpha_theta < 0 or self.alpha_v < 0:
            raise ValueError("learning rates must be nonnegative")
        if self.beta <= 0 or self.lam <= 0:
            raise ValueError("beta and lam must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}; choose from {SAMPLERS}")
        if self.langevin_dt <= 0 or self.langevin_steps < 1:
            raise ValueError("langevin_dt must be positive and langevin_steps >= 1")
        if self.ddpm_steps < 1:
            raise ValueError("ddpm_steps must be at least 1")
        if not (0 < self.ddpm_beta_start <= self.ddpm_beta_end < 1):
            raise ValueError("need 0 < ddpm_beta_start <= ddpm_beta_end < 1")

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt


@dataclass(frozen=True)
class LearnState:
    """Loop state of one online run after ``step`` completed iterations."""

    theta: np.ndarray
    v: np.ndarray
    x: float
    a: float
    step: int
    cumulative_reward: float


@dataclass(frozen=True)
class LearningRecord:
    """Thinned time series of one learning run.

    ``reward_rates[i]`` is the rate of the transition completed at the
    recorded step (the rate at the initial pair for step 0);
    ``running_avg[i]`` is the cumulative time average of reward over all
    completed transitions (0 at step 0).
    """

    steps: np.ndarray
    times: np.ndarray
    thetas: np.ndarray
    vs: np.ndarray
    reward_rates: np.ndarray
    running_avg: np.ndarray
    seed: int

    @property
    def final_theta(self) -> np.ndarray:
        return self.thetas[-1]

    @property
    def final_v(self) -> np.ndarray:
        return self.vs[-1]

    @property
    def final_running_avg(self) -> float:
        return float(self.running_avg[-1])


def lr_schedule(t: float) -> float:
    """Learning-rate decay 1 / max(1, sqrt(log t)), clamped to 1 for t <= e.

    The logarithm is floored at zero so the schedule extends continuously
    to t < 1.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t <= 1.0:
        return 1.0
    return 1.0 / max(1.0, math.sqrt(math.log(t)))


def td_delta(theta, v, x, a, x_next, a_next, r, dt, beta, lam) -> float:
    """One-step temporal difference of the discounted value model.

    delta = Q(x', a') - Q(x, a) + r dt - (lam/2) Psi(x, a)^2 dt - beta Q(x, a) dt
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    q_here = q_theta(theta, x, a)
    psi = psi_v(v, x, a)
    return (q_theta(theta, x_next, a_next) - q_here + r * dt
            - 0.5 * lam * psi * psi * dt - beta * q_here * dt)


@lru_cache(maxsize=8)
def _ddpm_schedule(t_steps: int, beta_start: float, beta_end: float):
    return make_linear_schedule(t_steps, beta_start, beta_end)


def initial_action(cfg: AlgoConfig, v, x: float, noise: NoiseSource) -> float:
    """Draw the first action at state x according to the configured sampler.

    For "direct_sde" there is no fresh-sampling mechanism, so the configured
    initial action cfg.a0 is used.
    """
    if cfg.sampler == "direct_sde":
        return cfg.a0
    score = lambda xx, aa: psi_v(v, xx, aa)
    if cfg.sampler == "ddpm":
        schedule = _ddpm_schedule(cfg.ddpm_steps, cfg.ddpm_beta_start, cfg.ddpm_beta_end)
        return ddpm_sample(score, x, schedule, noise)
    return langevin_sample(score, x, cfg.a0, cfg.langevin_dt, cfg.langevin_steps, noise)


def _next_action(cfg: AlgoConfig, v, x: float, a: float, x_next: float,
                 noise: NoiseSource) -> float:
    if cfg.sampler == "direct_sde":
        # Euler-Maruyama step of the action SDE, evaluated at the pre-step pair
        return a + psi_v(v, x, a) * cfg.dt + math.sqrt(2.0 * cfg.dt) * noise.normal()
    score = lambda xx, aa: psi_v(v, xx, aa)
    if cfg.sampler == "ddpm":
        schedule = _ddpm_schedule(cfg.ddpm_steps, cfg.ddpm_beta_start, cfg.ddpm_beta_end)
        return ddpm_sample(score, x_next, schedule, noise)
    # re-sample from scratch at the new state; the fixed start also bounds how
    # far one environment step can carry the action while the score is still
    # poorly fitted
    return langevin_sample(score, x_next, cfg.a0, cfg.langevin_dt, cfg.langevin_steps, noise)


def cqsm_step(state: LearnState, cfg: AlgoConfig, env, noise: NoiseSource) -> LearnState:
    """One loop iteration: transition, TD, critic and actor updates.

    ``env`` maps (x, a) to (x', reward rate).  The new action at x' is drawn
    by the configured sampler (the state noise is drawn first inside ``env``,
    then the action noise).  The transition pair (x', a') becomes the next
    iterate's (x, a), so each action is sampled once and reused.
    """
    theta, v, x, a = state.theta, state.v, state.x, state.a
    x_next, r = env(x, a)
    a_next = _next_action(cfg, v, x, a, x_next, noise)

    delta = td_delta(theta, v, x, a, x_next, a_next, r, cfg.dt, cfg.beta, cfg.lam)
    lr = lr_schedule(state.step * cfg.dt)
    d_theta = grad_theta_q(theta, x, a) * delta
    d_v = (grad_a_q(theta, x, a) / cfg.lam - psi_v(v, x, a)) * grad_v_psi(v, x, a)
    theta_next = theta + lr * cfg.alpha_theta * d_theta
    v_next = v + lr * cfg.alpha_v * d_v

    finite = np.all(np.isfinite(theta_next)) and np.all(np.isfinite(v_next))
    if not finite or max(np.max(np.abs(theta_next)), np.max(np.abs(v_next))) > DIVERGENCE_LIMIT:
        raise DivergenceError(
            f"parameters diverged at step {state.step} (last delta {delta:.6g})"
        )
    return LearnState(theta_next, v_next, x_next, a_next, state.step + 1,
                      state.cumulative_reward + r * cfg.dt)


def run_cqsm(cfg: AlgoConfig, p: LqParams, theta0, v0) -> LearningRecord:
    """Run the online loop for cfg.n_steps iterations and record thinned series.

    The run is a pure function of (cfg, p, theta0, v0); equal seeds reproduce
    identical records.  Records are kept at step 0, every cfg.record_every-th
    step, and the final step.
    """
    cfg.validate()
    theta = np.array(theta0, dtype=float, copy=True)
    v = np.array(v0, dtype=float, copy=True)
    if theta.shape != (6,) or v.shape != (3,):
        raise ValueError("theta0 must have 6 entries and v0 must have 3")

    noise = NoiseSource(cfg.seed)
    env = lambda x, a: env_step(p, x, a, cfg.dt, noise)
    a_start = initial_action(cfg, v, cfg.x0, noise)
    state = LearnState(theta, v, cfg.x0, float(a_start), 0, 0.0)

    steps = [0]
    thetas = [state.theta.copy()]
    vs = [state.v.copy()]
    rates = [float(lq_reward(p, state.x, state.a))]
    avgs = [0.0]

    for k in range(cfg.n_steps):
        prev_cum = state.cumulative_reward
        try:
            state = cqsm_step(state, cfg, env, noise)
        except SimulationError as exc:
            raise type(exc)(f"run with seed {cfg.seed}: {exc}") from exc
        done = state.step
        if done % cfg.record_every == 0 or done == cfg.n_steps:
            steps.append(done)
            thetas.append(state.theta.copy())
            vs.append(state.v.copy())
            rates.append((state.cumulative_reward - prev_cum) / cfg.dt)
            avgs.append(state.cumulative_reward / (done * cfg.dt))

    steps_arr = np.asarray(steps, dtype=int)
    return LearningRecord(
        steps=steps_arr,
        times=steps_arr * cfg.dt,
        thetas=np.asarray(thetas),
        vs=np.asarray(vs),
        reward_rates=np.asarray(rates),
        running_avg=np.asarray(avgs),
        seed=cfg.seed,
    )

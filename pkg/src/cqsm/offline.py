"""Episodic offline Q-score matching via the martingale loss.

One episode is a truncated rollout under the current score.  For every grid
point the discounted return-to-go gap

    G_k = -w_k Q(x_k, a_k) + sum_{i>=k} w_i (r_i - lam/2 Psi_i^2) dt

(with w_k = exp(-beta t_k)) measures how far the value model is from the
realized discounted net reward; one full-episode gradient step moves theta
along sum_k (dQ/dtheta)_k G_k dt and v along the accumulated score
sensitivities weighted by the same gaps.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .lq import LqParams, lq_dynamics, lq_reward_fn
from .online import AlgoConfig, DivergenceError, LearningRecord, initial_action, lr_schedule
from .policy import psi_v, q_theta
from .sde import NoiseSource, Trajectory, simulate_from


@dataclass(frozen=True)
class Episode:
    """One truncated rollout plus its discount weights exp(-beta * times)."""

    trajectory: Trajectory
    discount_weights: np.ndarray

    @property
    def n_transitions(self) -> int:
        return len(self.trajectory.reward_rates)


def make_episode(traj: Trajectory, beta: float) -> Episode:
    """Attach discount weights to a rollout (beta = 0 gives the undiscounted case)."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return Episode(traj, np.exp(-beta * traj.times))


def rollout_episode(p: LqParams, v, cfg: AlgoConfig, noise: NoiseSource) -> Episode:
    """Simulate one on-policy episode of cfg.n_steps transitions.

    The initial action at cfg.x0 comes from the configured sampler; within the
    episode the action evolves continuously through its own SDE.
    """
    a0 = initial_action(cfg, v, cfg.x0, noise)
    score = lambda x, a: psi_v(v, x, a)
    traj = simulate_from(lq_dynamics(p, score), lq_reward_fn(p), cfg.x0, a0,
                         cfg.dt, cfg.n_steps, noise)
    return make_episode(traj, cfg.beta)


def return_gaps(discount, reward_rates, q_values, psi_values, dt: float,
                lam: float) -> np.ndarray:
    """Return-to-go gaps G_k for k = 0..K-1 given precomputed value/score arrays.

    ``discount``, ``q_values`` and ``psi_values`` cover all K+1 grid points;
    ``reward_rates`` the K transitions.  Works on single trajectories (1-d)
    and batches (2-d, one column per trajectory); the inner suffix sums are
    accumulated in O(K).
    """
    w = np.asarray(discount, dtype=float)
    shape = (-1,) + (1,) * (np.ndim(q_values) - 1)
    w = w.reshape(shape)
    flow = w[:-1] * (reward_rates - 0.5 * lam * np.asarray(psi_values)[:-1] ** 2) * dt
    suffix = np.flip(np.cumsum(np.flip(flow, axis=0), axis=0), axis=0)
    return suffix - w[:-1] * np.asarray(q_values)[:-1]


def _episode_gaps(ep: Episode, theta, v, lam: float) -> np.ndarray:
    traj = ep.trajectory
    q_vals = q_theta(theta, traj.states, traj.actions)
    psi_vals = psi_v(v, traj.states, traj.actions)
    return return_gaps(ep.discount_weights, traj.reward_rates, q_vals, psi_vals,
                       traj.dt, lam)


def episode_return_to_go(ep: Episode, theta, v, lam: float, k: int) -> float:
    """The gap G_k at grid index k (0 <= k < number of transitions)."""
    if not 0 <= k < ep.n_transitions:
        raise IndexError(f"k={k} outside the episode's {ep.n_transitions} transitions")
    return float(_episode_gaps(ep, theta, v, lam)[k])


def offline_update(ep: Episode, theta, v, cfg: AlgoConfig, episode_index: int):
    """One full-episode gradient step; returns (theta', v').

    ``episode_index`` is the 1-based episode counter feeding the learning-rate
    schedule.  A zero-length episode leaves the parameters unchanged.
    """
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    K = ep.n_transitions
    if K == 0:
        return theta.copy(), v.copy()
    traj = ep.trajectory
    dt = traj.dt
    xs = traj.states[:-1]
    as_ = traj.actions[:-1]
    gaps = _episode_gaps(ep, theta, v, cfg.lam)

    # critic: sum_k (dQ/dtheta)(x_k, a_k) G_k dt
    grads = np.stack([0.5 * xs * xs, xs, 0.5 * as_ * as_, as_, xs * as_,
                      np.ones_like(xs)], axis=1)
    d_theta = dt * grads.T @ gaps

    # actor: sum_k [sum_{i>=k} lam Psi_i (dPsi/dv)_i dt] G_k dt
    psi_vals = psi_v(v, xs, as_)
    sens = np.stack([-np.exp(v[0]) * as_, xs, np.ones_like(xs)], axis=1)
    inner = cfg.lam * psi_vals[:, None] * sens * dt
    suffix = np.flip(np.cumsum(np.flip(inner, axis=0), axis=0), axis=0)
    d_v = dt * (suffix * gaps[:, None]).sum(axis=0)

    lr = lr_schedule(float(episode_index))
    theta_next = theta + lr * cfg.alpha_theta * d_theta
    v_next = v + lr * cfg.alpha_v * d_v
    if not (np.all(np.isfinite(theta_next)) and np.all(np.isfinite(v_next))):
        raise DivergenceError(f"offline update diverged at episode {episode_index}")
    return theta_next, v_next


def score_gradient_residual(theta, v, lam: float, ep: Episode) -> np.ndarray:
    """Discounted integral of (grad_a Q - lam Psi) dPsi/dv along the episode.

    Vanishes identically when the score reproduces the value model's scaled
    action gradient; otherwise its sign points back toward that fit.
    """
    traj = ep.trajectory
    K = ep.n_transitions
    if K == 0:
        return np.zeros(3)
    xs = traj.states[:-1]
    as_ = traj.actions[:-1]
    w = ep.discount_weights[:-1]
    gap = (theta[2] * as_ + theta[3] + theta[4] * xs) - lam * psi_v(v, xs, as_)
    sens = np.stack([-np.exp(v[0]) * as_, xs, np.ones_like(xs)], axis=1)
    return traj.dt * ((w * gap)[:, None] * sens).sum(axis=0)


def run_offline(cfg: AlgoConfig, p: LqParams, theta0, v0, n_episodes: int) -> LearningRecord:
    """Train over ``n_episodes`` episodes of cfg.n_steps transitions each.

    The critic takes the full-episode gap-weighted step of
    :func:`offline_update`; the score moves along the discounted
    score-gradient integral of :func:`score_gradient_residual`, whose
    stationary point is the exact fit of the critic's scaled action gradient.
    (The gap-weighted score rule drifts away from that fit when started far
    from it, so it is not used for training.)

    Episode seeds derive deterministically from cfg.seed.  The returned record
    uses the episode index as the step column; the reward-rate column holds
    each recorded episode's mean reward rate and the running average is the
    time average over all completed episodes.
    """
    cfg.validate()
    if n_episodes < 0:
        raise ValueError("n_episodes must be nonnegative")
    theta = np.array(theta0, dtype=float, copy=True)
    v = np.array(v0, dtype=float, copy=True)
    critic_cfg = replace(cfg, alpha_v=0.0)
    master = np.random.default_rng(cfg.seed)
    episode_time = cfg.n_steps * cfg.dt

    steps = [0]
    thetas = [theta.copy()]
    vs = [v.copy()]
    rates = [0.0]
    avgs = [0.0]
    total_reward = 0.0

    for j in range(1, n_episodes + 1):
        noise = NoiseSource(int(master.integers(2 ** 63)))
        ep = rollout_episode(p, v, cfg, noise)
        theta, _ = offline_update(ep, theta, v, critic_cfg, j)
        v = v + lr_schedule(float(j)) * cfg.alpha_v * score_gradient_residual(theta, v, cfg.lam, ep)
        if not np.all(np.isfinite(v)):
            raise DivergenceError(f"offline score update diverged at episode {j}")
        total_reward += float(ep.trajectory.reward_rates.sum()) * cfg.dt
        if j % cfg.record_every == 0 or j == n_episodes:
            steps.append(j)
            thetas.append(theta.copy())
            vs.append(v.copy())
            rates.append(float(ep.trajectory.reward_rates.mean()))
            avgs.append(total_reward / (j * episode_time))

    steps_arr = np.asarray(steps, dtype=int)
    return LearningRecord(
        steps=steps_arr,
        times=steps_arr * episode_time,
        thetas=np.asarray(thetas),
        vs=np.asarray(vs),
        reward_rates=np.asarray(rates),
        running_avg=np.asarray(avgs),
        seed=cfg.seed,
    )

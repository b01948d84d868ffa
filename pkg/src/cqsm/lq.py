"""Scalar linear-quadratic control environment.

Linear state drift A x + B a with state noise amplitude C x + D a, a quadratic
reward, and action noise fixed at sqrt(2) so that the stationary action law at
a frozen state is the Boltzmann distribution of the value function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sde import DynamicsSpec, NoiseSource, SimulationError

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class LqParams:
    """The eleven scalars defining one LQ problem instance.

    A, B, C, D are the dynamics coefficients; M, N, R, P, Pp the reward
    coefficients (Pp multiplies the action's linear term); beta the discount
    rate and lam the score regularization weight.  Construction enforces
    N > 0, M >= 0, beta > 0, lam > 0 and beta > 2A + C^2 (a discount rate
    large enough to keep the discounted quadratic objective finite).
    """

    A: float
    B: float
    C: float
    D: float
    M: float
    N: float
    R: float
    P: float
    Pp: float
    beta: float
    lam: float

    def __post_init__(self):
        if not self.N > 0:
            raise ValueError("N must be positive")
        if self.M < 0:
            raise ValueError("M must be nonnegative")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.beta > 2 * self.A + self.C ** 2:
            raise ValueError(
                "discount rate too small: beta must exceed 2*A + C^2 "
                f"(beta={self.beta}, 2*A + C^2={2 * self.A + self.C ** 2})"
            )


def lq_reward(p: LqParams, x, a):
    """Instantaneous reward rate -(M/2 x^2 + R x a + N/2 a^2 + P x + Pp a)."""
    return -(0.5 * p.M * x * x + p.R * x * a + 0.5 * p.N * a * a + p.P * x + p.Pp * a)


def env_step(p: LqParams, x: float, a: float, dt: float, noise: NoiseSource):
    """Advance the state one Euler-Maruyama step and return (x', reward rate).

    x' = x + (A x + B a) dt + (C x + D a) sqrt(dt) z with z standard normal.
    The returned reward is the instantaneous rate (the caller multiplies by dt
    where a per-step contribution is needed).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    z = noise.normal()
    x_next = x + (p.A * x + p.B * a) * dt + (p.C * x + p.D * a) * math.sqrt(dt) * z
    if not math.isfinite(x_next):
        raise SimulationError(f"environment fault: non-finite state from x={x}, a={a}")
    return x_next, lq_reward(p, x, a)


def lq_dynamics(p: LqParams, score) -> DynamicsSpec:
    """Joint state-action dynamics for this instance under a given score.

    Action noise amplitude is sqrt(2); the callables broadcast over arrays so
    the same dynamics drive both scalar and batched simulation.
    """
    return DynamicsSpec(
        state_drift=lambda x, a: p.A * x + p.B * a,
        state_diffusion=lambda x, a: p.C * x + p.D * a,
        action_score=score,
        action_diffusion=lambda x, a: SQRT2,
    )


def lq_reward_fn(p: LqParams):
    """Reward closure for use with the simulators."""
    return lambda x, a: lq_reward(p, x, a)

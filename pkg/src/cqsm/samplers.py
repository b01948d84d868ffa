"""Action samplers for a frozen state.

Two ways to draw an action from the Boltzmann-like law induced by a score:
an (unadjusted) Langevin chain  da = score(x, a) dt + sqrt(2) dB  run at fixed
x, and a denoising reverse chain driven by the same score under a discrete
noise schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sde import NoiseSource, SimulationError

SQRT2 = math.sqrt(2.0)
DDPM_EPS = 1e-12  # floor for 1 - alpha_bar in the reverse-chain divisor


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variances of a denoising chain and their derived products.

    alphas[t] = 1 - betas[t]; alpha_bars[t] is the running product of alphas,
    strictly decreasing with every entry in (0, 1].
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        if betas.ndim != 1 or len(betas) < 1:
            raise ValueError("betas must be a non-empty 1-d array")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ValueError("betas must lie strictly inside (0, 1)")
        if not np.allclose(self.alphas, 1.0 - betas, rtol=0, atol=1e-15):
            raise ValueError("alphas must equal 1 - betas")
        if not np.allclose(self.alpha_bars, np.cumprod(self.alphas), rtol=1e-12, atol=0):
            raise ValueError("alpha_bars must be the running product of alphas")
        if np.any(np.diff(self.alpha_bars) >= 0):
            raise ValueError("alpha_bars must be strictly decreasing")

    @classmethod
    def from_betas(cls, betas) -> "NoiseSchedule":
        betas = np.asarray(betas, dtype=float)
        alphas = 1.0 - betas
        return cls(betas, alphas, np.cumprod(alphas))

    @property
    def n_steps(self) -> int:
        return len(self.betas)


def make_linear_schedule(t_steps: int, beta_start: float = 1e-3,
                         beta_end: float = 0.19) -> NoiseSchedule:
    """Linearly interpolated schedule of ``t_steps`` variances."""
    if t_steps < 1:
        raise ValueError("t_steps must be at least 1")
    if not (0 < beta_start <= beta_end < 1):
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    if t_steps == 1:
        betas = np.array([beta_start])
    else:
        betas = np.linspace(beta_start, beta_end, t_steps)
    return NoiseSchedule.from_betas(betas)


def ddpm_sample(score, x: float, schedule: NoiseSchedule, noise: NoiseSource) -> float:
    """Draw one action by running the reverse denoising chain at fixed x.

    Starts from a ~ N(0, 1) and iterates, for t = T..1,

        a <- (a + (1 - alpha_t) / sqrt(1 - alpha_bar_t) * score(x, a)) / sqrt(alpha_t)
             + sqrt(beta_t) * z

    with fresh z ~ N(0, 1) each step and the divisor floored at 1e-12.  The
    environment state stays frozen while the chain runs.
    """
    a = float(noise.normal())
    for t in range(schedule.n_steps - 1, -1, -1):
        alpha = schedule.alphas[t]
        coef = (1.0 - alpha) / math.sqrt(max(1.0 - schedule.alpha_bars[t], DDPM_EPS))
        a = (a + coef * score(x, a)) / math.sqrt(alpha) + math.sqrt(schedule.betas[t]) * noise.normal()
        if not math.isfinite(a):
            raise SimulationError(f"sampler fault: non-finite action at reverse step {t}")
    return a


def langevin_sample(score, x: float, a0: float, dt: float, n_steps: int,
                    noise: NoiseSource) -> float:
    """Final iterate of a Langevin chain da = score(x, a) dt + sqrt(2) dB.

    For a concave quadratic value function the chain's stationary law is the
    Gaussian with mode at the value maximizer; the default step size 0.01 with
    a burn-in of about 2000 steps and thinning 10 keeps successive retained
    samples weakly correlated.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    a = float(a0)
    root = math.sqrt(2.0 * dt)
    for k in range(n_steps):
        a = a + score(x, a) * dt + root * noise.normal()
        if not math.isfinite(a):
            raise SimulationError(f"sampler fault: non-finite action at step {k}")
    return a


def langevin_chain(score, x: float, a0: float, dt: float, n_burn: int,
                   n_samples: int, thin: int, noise: NoiseSource) -> np.ndarray:
    """Thinned samples from one Langevin chain after a burn-in."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_samples < 1 or thin < 1 or n_burn < 0:
        raise ValueError("need n_samples >= 1, thin >= 1, n_burn >= 0")
    a = float(a0)
    root = math.sqrt(2.0 * dt)
    for _ in range(n_burn):
        a = a + score(x, a) * dt + root * noise.normal()
    out = np.empty(n_samples)
    for i in range(n_samples):
        for _ in range(thin):
            a = a + score(x, a) * dt + root * noise.normal()
        if not math.isfinite(a):
            raise SimulationError("sampler fault: non-finite action in chain")
        out[i] = a
    return out


def langevin_batch(score, x: float, a0: np.ndarray, dt: float, n_steps: int,
                   noise: NoiseSource) -> np.ndarray:
    """Advance many independent Langevin chains in lockstep; returns final iterates."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    a = np.array(a0, dtype=float, copy=True)
    root = math.sqrt(2.0 * dt)
    for _ in range(n_steps):
        a = a + score(x, a) * dt + root * noise.normal(a.shape)
    if not np.all(np.isfinite(a)):
        raise SimulationError("sampler fault: non-finite action in batch")
    return a

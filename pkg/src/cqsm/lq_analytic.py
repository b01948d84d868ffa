"""Closed-form quadratic value function for the scalar LQ problem.

The concave quadratic Q(x, a) = k0 x^2/2 + k1 x + k2 a^2/2 + k3 a + k4 x a + k5
solves the stationary dynamic-programming equation of the discounted problem.
Matching coefficients yields six polynomial equations; after expressing k0 and
k2 through k4 they collapse to one scalar equation in the cross coefficient k4,
which is solved by a bracketed scan refined with a bisection/secant hybrid.
The remaining coefficients follow by back-substitution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .lq import LqParams, lq_reward
from .policy import score_params_from_q

K4_SCAN_LO = -50.0
K4_SCAN_HI = 50.0
K4_SCAN_STEP = 0.25
ROOT_TOL = 1e-12
RESIDUAL_TOL = 1e-10
CONCAVITY_TOL = 1e-10


class SolveError(RuntimeError):
    """No concave quadratic solution was found for the given parameters."""


@dataclass(frozen=True)
class KCoefficients:
    """Coefficients of Q(x, a) = k0 x^2/2 + k1 x + k2 a^2/2 + k3 a + k4 x a + k5.

    For a valid value function k2 < 0 always, and away from degenerate reward
    configurations Q is strictly concave: k0 < 0 and k0 k2 - k4^2 > 0.
    """

    k0: float
    k1: float
    k2: float
    k3: float
    k4: float
    k5: float

    def as_array(self) -> np.ndarray:
        return np.array([self.k0, self.k1, self.k2, self.k3, self.k4, self.k5])


def coefficient_residuals(k: KCoefficients, p: LqParams) -> np.ndarray:
    """Left-hand sides of the six coefficient-matching equations.

    Order: x^2, x, a^2, a, xa, constant.  All six vanish at a true solution.
    """
    lam, beta = p.lam, p.beta
    r_x2 = 0.5 * beta * k.k0 - p.A * k.k0 - k.k4 ** 2 / (2 * lam) - 0.5 * p.C ** 2 * k.k0 + 0.5 * p.M
    r_x = beta * k.k1 - p.A * k.k1 - k.k3 * k.k4 / lam + p.P
    r_a2 = 0.5 * beta * k.k2 - k.k4 * p.B - k.k2 ** 2 / (2 * lam) - 0.5 * k.k0 * p.D ** 2 + 0.5 * p.N
    r_a = beta * k.k3 - p.B * k.k1 - k.k2 * k.k3 / lam + p.Pp
    r_xa = beta * k.k4 - k.k0 * p.B - k.k4 * p.A - k.k2 * k.k4 / lam - k.k0 * p.C * p.D + p.R
    r_cons = beta * k.k5 - k.k2 - k.k3 ** 2 / (2 * lam)
    return np.array([r_x2, r_x, r_a2, r_a, r_xa, r_cons])


def q_star(k: KCoefficients, x, a):
    """Evaluate the quadratic value function."""
    return 0.5 * k.k0 * x * x + k.k1 * x + 0.5 * k.k2 * a * a + k.k3 * a + k.k4 * x * a + k.k5


def optimal_score(k: KCoefficients, lam: float, x, a):
    """Optimal action drift: the action gradient of Q scaled by 1/lam."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return (k.k2 * a + k.k3 + k.k4 * x) / lam


def hjb_residual(k: KCoefficients, p: LqParams, x, a):
    """Pointwise residual of the stationary dynamic-programming equation.

    beta Q - Q_x (A x + B a) - Q_a^2 / (2 lam) - (C x + D a)^2 Q_xx / 2
    - sigma_a^2 Q_aa / 2 - r(x, a) with sigma_a^2 = 2; zero everywhere at a
    true solution.
    """
    q_x = k.k0 * x + k.k1 + k.k4 * a
    q_a = k.k2 * a + k.k3 + k.k4 * x
    sigma_x = p.C * x + p.D * a
    return (p.beta * q_star(k, x, a)
            - q_x * (p.A * x + p.B * a)
            - q_a * q_a / (2 * p.lam)
            - 0.5 * sigma_x * sigma_x * k.k0
            - k.k2
            - lq_reward(p, x, a))


def k_to_optimal_params(k: KCoefficients, lam: float):
    """Map analytic coefficients to the learnable parameterizations.

    Returns (theta, v) with theta_i = k_i and v the score parameters
    (log(-k2/lam), k4/lam, k3/lam).  Requires k2 < 0.
    """
    theta = k.as_array()
    return theta, score_params_from_q(theta, lam)


# -- scalar solve in k4 ------------------------------------------------------

def _k0_of(k4: float, p: LqParams) -> float:
    return (k4 * k4 / p.lam - p.M) / (p.beta - 2 * p.A - p.C ** 2)


def _radicand(k4: float, p: LqParams) -> float:
    # source term of the a^2 equation once k0 is eliminated
    shift = p.B * k4 + 0.5 * p.D ** 2 * _k0_of(k4, p)
    return 0.25 * p.beta ** 2 + (p.N - 2 * shift) / p.lam


def _cross_equation(k4: float, p: LqParams):
    """Residual of the xa equation as a function of k4 alone; None off-domain."""
    rad = _radicand(k4, p)
    if rad < 0:
        return None
    k0 = _k0_of(k4, p)
    k2 = 0.5 * p.beta * p.lam - p.lam * math.sqrt(rad)
    return p.beta * k4 - k0 * p.B - k4 * p.A - k2 * k4 / p.lam - k0 * p.C * p.D + p.R


def _scan_points(p: LqParams) -> np.ndarray:
    pts = list(np.arange(K4_SCAN_LO, K4_SCAN_HI + 0.5 * K4_SCAN_STEP, K4_SCAN_STEP))
    # include the boundary of the region where the k2 square root is real:
    # the radicand is a quadratic (or linear) polynomial in k4
    den = p.lam * (p.beta - 2 * p.A - p.C ** 2)
    c2 = -p.D ** 2 / (p.lam * den)
    c1 = -2 * p.B / p.lam
    c0 = 0.25 * p.beta ** 2 + p.N / p.lam + p.D ** 2 * p.M / den
    if c2 != 0.0:
        disc = c1 * c1 - 4 * c2 * c0
        if disc >= 0:
            root = math.sqrt(disc)
            pts += [(-c1 - root) / (2 * c2), (-c1 + root) / (2 * c2)]
    elif c1 != 0.0:
        pts.append(-c0 / c1)
    pts = [t for t in pts if K4_SCAN_LO <= t <= K4_SCAN_HI]
    return np.unique(np.asarray(pts, dtype=float))


def _refine_root(f, lo: float, hi: float, flo: float, fhi: float) -> float:
    """Bracketed hybrid of secant (Illinois-damped) and bisection steps."""
    side = 0
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        denom = fhi - flo
        if denom != 0 and math.isfinite(denom):
            mid = hi - fhi * (hi - lo) / denom
        if not (lo < mid < hi) or not math.isfinite(mid):
            mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm is None:
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            if fm is None:
                break
        if abs(fm) < ROOT_TOL:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = mid, fm
            if side == 1:
                flo *= 0.5
            side = 1
        if hi - lo < 1e-15 * max(1.0, abs(lo), abs(hi)):
            break
    return mid


def _back_substitute(k4: float, p: LqParams):
    rad = _radicand(k4, p)
    if rad < 0:
        return None
    k0 = _k0_of(k4, p)
    k2 = 0.5 * p.beta * p.lam - p.lam * math.sqrt(rad)
    bma = p.beta - p.A
    den = bma * (p.beta - p.B * k4 / (p.lam * bma) - k2 / p.lam)
    if abs(den) < 1e-12:
        return None
    k3 = -(p.B * p.P + p.Pp * bma) / den
    k1 = k3 * k4 / (p.lam * bma) - p.P / bma
    k5 = (2 * p.lam * k2 + k3 * k3) / (2 * p.lam * p.beta)
    return KCoefficients(k0, k1, k2, k3, k4, k5)


def _concavity_ok(k: KCoefficients) -> bool:
    # the boundary case k0 = k4 = 0 (pure noise cost, no state coupling in the
    # reward) is admitted; interior solutions are strictly concave
    return (k.k2 < 0
            and k.k0 <= CONCAVITY_TOL
            and k.k0 * k.k2 - k.k4 ** 2 >= -CONCAVITY_TOL)


def solve_lq(p: LqParams) -> KCoefficients:
    """Solve the coefficient system and return the concave quadratic solution.

    Scans k4 over [-50, 50], brackets sign changes of the xa equation, refines
    each root to residual < 1e-12, back-substitutes the other coefficients,
    and keeps candidates whose full residual vector is < 1e-10 and whose
    Hessian is (semi)negative definite.  Convex companion roots are discarded;
    if several concave candidates remain the most concave one is returned and
    a multiplicity warning is emitted.
    """
    f = lambda t: _cross_equation(t, p)
    grid = _scan_points(p)
    values = [f(t) for t in grid]

    roots: list[float] = []
    for i in range(len(grid) - 1):
        flo, fhi = values[i], values[i + 1]
        if flo is None or fhi is None:
            continue
        if flo == 0.0:
            roots.append(float(grid[i]))
            continue
        if flo * fhi < 0:
            roots.append(_refine_root(f, float(grid[i]), float(grid[i + 1]), flo, fhi))
    if values and values[-1] == 0.0:
        roots.append(float(grid[-1]))

    candidates: list[KCoefficients] = []
    for k4 in roots:
        if any(abs(k4 - c.k4) < 1e-9 for c in candidates):
            continue
        k = _back_substitute(k4, p)
        if k is None:
            continue
        if np.max(np.abs(coefficient_residuals(k, p))) >= RESIDUAL_TOL:
            continue
        if not _concavity_ok(k):
            continue
        candidates.append(k)

    if not candidates:
        raise SolveError(
            "no concave quadratic solution found in the scanned k4 range; "
            "the parameters may not admit a well-posed value function"
        )
    if len(candidates) > 1:
        warnings.warn(
            f"{len(candidates)} concave solutions found; returning the most concave",
            stacklevel=2,
        )
    return max(candidates, key=lambda k: k.k0 * k.k2 - k.k4 ** 2)

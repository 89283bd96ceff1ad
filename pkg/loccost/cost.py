"""Analytic entanglement costs of the four-round controlled-phase protocol."""
import logging
import math
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import optimize

from .errors import ConvergenceError, InvariantViolation, ParameterRangeError
from .gates import check_alpha, check_theta, u_tilde_theta
from .tensor import binary_entropy

logger = logging.getLogger(__name__)

MAX_BISECTIONS = 200
BRACKET_LOW = 1e-6


class CostProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    theta: float
    alpha_theta: float
    p_theta: float
    h_theta: float
    E_theta: float


class TradeoffReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    theta: float
    lower_bound_two_round: float
    upper_bound_four_round: float
    separation: bool
    theta_max: float


class AlphaSearch(BaseModel):
    model_config = ConfigDict(frozen=True)

    theta: float
    alpha_opt: float
    E_opt: float


def _one_minus_cos_product(alpha: float, theta: float) -> float:
    # 1 - cos(theta)cos(alpha) written without cancellation near zero
    a = 2.0 * math.sin(theta / 2) ** 2
    b = 2.0 * math.sin(alpha / 2) ** 2
    return a + b - a * b


def success_prob(alpha: float, theta: float) -> float:
    """p(alpha, theta) = sin^2(alpha) / (2 (1 - cos(theta) cos(alpha)))."""
    denom = _one_minus_cos_product(alpha, theta)
    if denom <= 0.0:
        raise ParameterRangeError(f"success probability is singular at alpha={alpha}, theta={theta}")
    return min(max(math.sin(alpha) ** 2 / (2.0 * denom), 0.0), 1.0)


def residual_angle(alpha: float, theta: float) -> float:
    """Magnitude theta' with tan(theta'/2) = tan^2(alpha/2) / tan(theta/2)."""
    return 2.0 * math.atan2(math.tan(alpha / 2) ** 2, math.tan(theta / 2))


def avg_cost(alpha: float, theta: float) -> float:
    """Expected ebits 1 - p(alpha, theta) + h(cos^2(alpha/2))."""
    return 1.0 - success_prob(alpha, theta) + binary_entropy(math.cos(alpha / 2) ** 2)


def e_theta(theta: float) -> CostProfile:
    theta = check_theta(theta)
    alpha = math.sqrt(theta)
    p = success_prob(alpha, theta)
    h = binary_entropy(math.cos(alpha / 2) ** 2)
    return CostProfile(theta=theta, alpha_theta=alpha, p_theta=p, h_theta=h, E_theta=1.0 - p + h)


def _e(theta: float) -> float:
    return e_theta(theta).E_theta


def theta_max_solve(tolerance: float = 1e-10) -> float:
    """Largest theta* <= pi/2 with E_theta < 1 below it, by bisection."""
    if tolerance <= 0:
        raise ParameterRangeError("tolerance must be positive")
    hi = math.pi / 2
    if _e(hi) < 1.0:
        return hi
    lo = BRACKET_LOW
    if _e(lo) >= 1.0:
        raise InvariantViolation(f"E_theta >= 1 already at theta={lo}")
    for _ in range(MAX_BISECTIONS):
        if 1.0 - _e(lo) <= tolerance:
            break
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            logger.warning("bisection hit float resolution at theta=%.17g", lo)
            break
        if _e(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    else:
        raise ConvergenceError(f"theta_max bisection did not reach tolerance {tolerance:g}")
    below = np.linspace(BRACKET_LOW, lo, 257)
    if any(_e(t) >= 1.0 for t in below):
        raise InvariantViolation("E_theta crosses 1 below the bisection root")
    logger.debug("theta_max=%.15g E=%.15g", lo, _e(lo))
    return lo


def tradeoff_report(theta: float) -> TradeoffReport:
    from .markov import markov_cost

    profile = e_theta(theta)
    lower = markov_cost(u_tilde_theta(profile.theta).dagger())
    return TradeoffReport(
        theta=profile.theta,
        lower_bound_two_round=lower,
        upper_bound_four_round=profile.E_theta,
        separation=lower > profile.E_theta,
        theta_max=theta_max_solve(),
    )


def best_alpha(theta: float) -> AlphaSearch:
    """Minimize the expected cost over alpha; an extension beyond alpha = sqrt(theta)."""
    theta = check_theta(theta)
    res = optimize.minimize_scalar(lambda a: avg_cost(a, theta), bounds=(1e-9, math.pi),
                                   method="bounded", options={"xatol": 1e-10})
    alpha = check_alpha(float(res.x))
    return AlphaSearch(theta=theta, alpha_opt=alpha, E_opt=avg_cost(alpha, theta))


def cost_curve(thetas: Sequence[float]) -> list[CostProfile]:
    return [e_theta(t) for t in thetas]


def continuity_constant(thetas: Sequence[float]) -> float:
    """Largest finite-difference slope |dE/dtheta| over a sorted grid."""
    grid = sorted(thetas)
    values = [_e(t) for t in grid]
    slopes = [abs(b - a) / (y - x) for (x, a), (y, b) in zip(zip(grid, values), zip(grid[1:], values[1:])) if y > x]
    return max(slopes, default=0.0)


def theta_grid(start: float, stop: float, count: int, log: bool = True) -> list[float]:
    if count < 1 or start <= 0 or stop < start or (count > 1 and stop == start):
        raise ParameterRangeError(f"invalid theta grid {start}..{stop} x{count}")
    if count == 1:
        return [start]
    points = np.geomspace(start, stop, count) if log else np.linspace(start, stop, count)
    return [float(t) for t in points]

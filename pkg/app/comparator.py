"""
Offline comparators: the best fixed decision in hindsight for the summed global objective.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app import config
from app.errors import ComputationError, ValidationError
from app.feasible_sets import MAXIMIZE, MINIMIZE, FeasibleSet
from app.objectives import LocalObjective, QuadraticLoss, combine
from app.schedule import CONVEX, MODES

logger = logging.getLogger(__name__)

CLOSED_FORM = "closed_form"
PROJECTED_GRADIENT = "projected_gradient"
OFFLINE_FRANK_WOLFE = "offline_frank_wolfe"


@dataclass(frozen=True)
class ComparatorResult:
    x_star: np.ndarray
    value: float
    method: str
    iterations: int
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "x_star": [float(v) for v in self.x_star],
            "value": self.value,
            "method": self.method,
            "iterations": self.iterations,
            "tolerance": self.tolerance,
        }


def global_objectives(functions: Sequence[Sequence[LocalObjective]]) -> list:
    """F_t = (1/n) sum_i f_t^i for each time step."""
    out = []
    for row in functions:
        if not row:
            raise ValidationError("Every time step needs at least one agent function")
        out.append(combine(row, [1.0 / len(row)] * len(row)))
    return out


def summed_objective(functions: Sequence[Sequence[LocalObjective]]) -> LocalObjective:
    """sum_t F_t as a single objective (merged in closed form when the family allows it)."""
    terms = [f for row in functions for f in row]
    weights = [1.0 / len(row) for row in functions for _ in row]
    if not terms:
        raise ValidationError("Comparator needs at least one function")
    return combine(terms, weights)


def _projected_gradient(total: LocalObjective, feasible: FeasibleSet, smoothness: float, tol: float):
    step = 1.0 / smoothness
    x = feasible.lmo(np.zeros(feasible.d), MINIMIZE)
    for it in range(1, config.OFFLINE_PGD_MAX_ITER + 1):
        grad = total.gradient(x)
        if not np.isfinite(grad).all():
            raise ComputationError(f"Non-finite comparator gradient at iteration {it}")
        nxt = feasible.project(x - step * grad)
        mapping = float(np.linalg.norm(x - nxt)) / step
        x = nxt
        if mapping <= tol:
            return x, it, mapping
    raise ComputationError(
        f"Projected gradient did not reach gradient-mapping norm {tol:g} in {config.OFFLINE_PGD_MAX_ITER} iterations"
    )


def _offline_frank_wolfe(total: LocalObjective, feasible: FeasibleSet, steps: int):
    x = np.zeros(feasible.d)
    gap = 0.0
    for _ in range(steps):
        grad = total.gradient(x)
        if not np.isfinite(grad).all():
            raise ComputationError("Non-finite gradient in offline Frank-Wolfe")
        v = feasible.lmo(grad, MAXIMIZE)
        gap = float(grad @ (v - x))
        x = x + v / steps
    return x, gap


def offline_comparator(
    functions: Sequence[Sequence[LocalObjective]],
    feasible: FeasibleSet,
    mode: str,
    tol: float = config.OFFLINE_PGD_TOL,
    smoothness: Optional[float] = None,
    steps: int = config.OFFLINE_FW_STEPS,
) -> ComparatorResult:
    """Minimizer (convex) or offline Frank-Wolfe point (submodular) of sum_t F_t over the set."""
    if mode not in MODES:
        raise ValidationError(f"Unknown mode: {mode}")
    total = summed_objective(functions)

    if mode == CONVEX:
        if isinstance(total, QuadraticLoss) and total.scale > 0:
            x_star = feasible.project(total.b)
            method, iterations, achieved = CLOSED_FORM, 0, 0.0
        else:
            if smoothness is None:
                raise ValidationError("Projected gradient needs the smoothness of the summed objective")
            x_star, iterations, achieved = _projected_gradient(total, feasible, smoothness, tol)
            method = PROJECTED_GRADIENT
    else:
        x_star, achieved = _offline_frank_wolfe(total, feasible, steps)
        method, iterations = OFFLINE_FRANK_WOLFE, steps

    if not feasible.contains(x_star, config.MEMBERSHIP_TOL):
        raise ComputationError(f"Comparator point {x_star} is not feasible")
    value = total.value(x_star)
    logger.info("Comparator (%s): value=%.6g after %d iterations", method, value, iterations)
    return ComparatorResult(x_star=x_star, value=float(value), method=method, iterations=iterations,
                            tolerance=float(achieved))

"""
Per-agent banks of online linear optimization oracles (FTPL and projected OGD).
"""
import logging
import math
import threading
from typing import Optional, Sequence

import numpy as np

from app.errors import ValidationError
from app.feasible_sets import MAXIMIZE, MINIMIZE, SENSES, FeasibleSet

logger = logging.getLogger(__name__)

ORACLE_KINDS = ("ftpl", "ogd")

# stream tag separating oracle perturbations from other random draws
ORACLE_STREAM = 101


def perturbation_scale(G0: float, d: int) -> float:
    """Automatic uniform-perturbation width: one block of per-coordinate feedback, G0 / sqrt(d)."""
    if d < 1:
        raise ValidationError(f"Dimension must be positive, got {d}")
    if G0 < 0:
        raise ValidationError(f"Gradient bound must be nonnegative, got {G0}")
    return float(G0 / math.sqrt(d))


class OracleBank:
    """K oracles for each of n agents, addressed by (agent i, step k), both 1-based."""

    def __init__(
        self,
        n: int,
        K: int,
        d: int,
        sense: str,
        kind: str = "ftpl",
        scale: float = 0.0,
        seed: int = 0,
    ):
        if sense not in SENSES:
            raise ValidationError(f"Unknown oracle sense: {sense}")
        if kind not in ORACLE_KINDS:
            raise ValidationError(f"Unknown oracle kind: {kind}")
        if scale < 0:
            raise ValidationError(f"Perturbation scale must be nonnegative, got {scale}")
        self.n = n
        self.K = K
        self.d = d
        self.sense = sense
        self.kind = kind
        self.scale = float(scale)
        self.seed = seed
        self.accumulated_cost = np.zeros((n, K, d))
        self.feedback_count = np.zeros((n, K), dtype=int)
        # OGD iterates; None until first decision
        self._ogd_point: Optional[np.ndarray] = None
        self._ogd_lock = threading.Lock()

    def _check(self, i: int, k: int) -> None:
        if not 1 <= i <= self.n:
            raise ValidationError(f"Agent index {i} outside [1, {self.n}]")
        if not 1 <= k <= self.K:
            raise ValidationError(f"Oracle step {k} outside [1, {self.K}]")

    def reset(self) -> None:
        self.accumulated_cost[:] = 0.0
        self.feedback_count[:] = 0
        self._ogd_point = None

    def decide(self, i: int, k: int, q: int, feasible: FeasibleSet) -> np.ndarray:
        """Output of oracle (i, k) at block q."""
        self._check(i, k)
        if self.kind == "ogd":
            return self._ogd_decide(i, k, feasible)

        acc = self.accumulated_cost[i - 1, k - 1]
        if self.scale > 0:
            rng = np.random.default_rng([self.seed, ORACLE_STREAM, i, k, q])
            z = rng.uniform(0.0, self.scale, size=self.d)
        else:
            z = np.zeros(self.d)
        if self.sense == MAXIMIZE:
            return feasible.lmo(acc - z, MAXIMIZE)
        return feasible.lmo(acc + z, MINIMIZE)

    def feedback(self, i: int, k: int, a, feasible: Optional[FeasibleSet] = None) -> None:
        """Feed the linear cost <a, .> observed by oracle (i, k)."""
        self._check(i, k)
        a = np.asarray(a, dtype=float)
        if a.shape != (self.d,):
            raise ValidationError(f"Feedback vector has shape {a.shape}, expected ({self.d},)")
        if not np.isfinite(a).all():
            raise ValidationError(f"Non-finite feedback for oracle ({i}, {k})")
        self.accumulated_cost[i - 1, k - 1] += a
        self.feedback_count[i - 1, k - 1] += 1
        if self.kind == "ogd":
            self._ogd_step(i, k, a, feasible)

    def _ogd_decide(self, i: int, k: int, feasible: FeasibleSet) -> np.ndarray:
        with self._ogd_lock:
            if self._ogd_point is None:
                start = feasible.lmo(np.zeros(self.d), self.sense)
                self._ogd_point = np.tile(start, (self.n, self.K, 1))
        return self._ogd_point[i - 1, k - 1].copy()

    def _ogd_step(self, i: int, k: int, a: np.ndarray, feasible: Optional[FeasibleSet]) -> None:
        if feasible is None:
            raise ValidationError("OGD feedback needs the feasible set for its projection")
        if self._ogd_point is None:
            self._ogd_decide(i, k, feasible)
        step = 1.0 / math.sqrt(self.feedback_count[i - 1, k - 1])
        sign = -1.0 if self.sense == MINIMIZE else 1.0
        point = self._ogd_point[i - 1, k - 1] + sign * step * a
        self._ogd_point[i - 1, k - 1] = feasible.project(point)


def oracle_decide(bank: OracleBank, i: int, k: int, q: int, feasible: FeasibleSet) -> np.ndarray:
    return bank.decide(i, k, q, feasible)


def oracle_feedback(bank: OracleBank, i: int, k: int, a, feasible: Optional[FeasibleSet] = None) -> None:
    bank.feedback(i, k, a, feasible)


def oracle_regret(
    cost_vectors: Sequence[np.ndarray],
    decisions: Sequence[np.ndarray],
    feasible: FeasibleSet,
    sense: str = MINIMIZE,
) -> float:
    """Regret of a decision sequence against the best fixed vertex in hindsight."""
    if len(cost_vectors) != len(decisions):
        raise ValidationError("Cost and decision sequences differ in length")
    costs = np.asarray(cost_vectors, dtype=float).reshape(len(cost_vectors), -1)
    plays = np.asarray(decisions, dtype=float).reshape(len(decisions), -1)
    if costs.shape[1] != feasible.d or plays.shape[1] != feasible.d:
        raise ValidationError(f"Vectors must have dimension {feasible.d}")
    realized = float(np.einsum("qd,qd->", costs, plays))
    total = costs.sum(axis=0)
    values = [float(total @ v) for v in feasible.vertices()]
    if sense == MINIMIZE:
        return realized - min(values)
    return max(values) - realized

"""
Block schedules: horizon decomposition (Q, K, L) and step-size / averaging-rate rules.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

from app.errors import ValidationError

logger = logging.getLogger(__name__)

CONVEX = "convex_min"
SUBMODULAR = "submod_max"
BANDIT = "bandit_submod"
MODES = (CONVEX, SUBMODULAR, BANDIT)


@dataclass(frozen=True)
class ScheduleOverrides:
    Q: Optional[int] = None
    K: Optional[int] = None
    L: Optional[int] = None
    rho_offset: Optional[float] = None
    delta: Optional[float] = None


@dataclass(frozen=True)
class Schedule:
    """Decomposition of the horizon into Q blocks of K (full information) or L (bandit) steps."""
    mode: str
    T: int
    Q: int
    K: int
    L: int
    rho_offset: float
    delta: float = 0.0
    truncated: int = 0
    adjustments: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def block_length(self) -> int:
        return self.L

    @property
    def effective_T(self) -> int:
        return self.Q * self.L

    def eta(self, k: int) -> float:
        if self.mode == CONVEX:
            return 1.0 / k
        return 1.0 / self.K

    def rho(self, k: int) -> float:
        if self.mode == BANDIT or k <= self.K // 2:
            value = 2.0 / (k + self.rho_offset) ** (2.0 / 3.0)
        else:
            value = 1.5 / (self.K - k + 2) ** (2.0 / 3.0)
        return min(1.0, value)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["adjustments"] = list(self.adjustments)
        out["effective_T"] = self.effective_T
        return out


def _nearest(value: float) -> int:
    return int(math.floor(value + 0.5))


def default_delta(T: int, d: int, r: float) -> float:
    """Bandit smoothing radius delta = r / (sqrt(d) + 2) * T^(-1/9)."""
    return r / (math.sqrt(d) + 2.0) * T ** (-1.0 / 9.0)


def make_schedule(
    T: int,
    mode: str,
    overrides: Optional[ScheduleOverrides] = None,
    d: Optional[int] = None,
    r: Optional[float] = None,
) -> Schedule:
    """Derive the default schedule for a horizon T, applying any overrides."""
    if mode not in MODES:
        raise ValidationError(f"Unknown mode: {mode}")
    if T < 4:
        raise ValidationError(f"Horizon T={T} is too small (need T >= 4)")
    ov = overrides or ScheduleOverrides()
    adjustments = []

    if mode == BANDIT:
        Q = ov.Q if ov.Q is not None else _nearest(T ** (2.0 / 9.0))
        L = ov.L if ov.L is not None else T // Q
        if ov.K is not None:
            K = ov.K
        else:
            target = _nearest(T ** (2.0 / 3.0))
            K = min(target, L // 2)
            if K < target:
                adjustments.append(f"K clamped from {target} to {K} so that L >= 2K")
                logger.info("Bandit schedule: K clamped from %d to %d (L=%d)", target, K, L)
        if K < 1 or K >= L or L < 2 * K:
            raise ValidationError(f"Bandit schedule needs 1 <= K < L and L >= 2K, got K={K}, L={L}")
        if ov.delta is not None:
            delta = ov.delta
        else:
            if d is None or r is None:
                raise ValidationError("Bandit schedule needs d and r to derive delta")
            delta = default_delta(T, d, r)
        offset = ov.rho_offset if ov.rho_offset is not None else 2.0
    else:
        if ov.Q is not None:
            Q = ov.Q
            K = ov.K if ov.K is not None else T // Q
        elif ov.K is not None:
            K = ov.K
            Q = T // K
        else:
            Q = _nearest(T ** 0.4)
            K = T // Q
            if K < 2:
                raise ValidationError(f"Horizon T={T} yields K={K}; need K >= 2")
        if K < 1 or Q < 1:
            raise ValidationError(f"Schedule needs Q, K >= 1, got Q={Q}, K={K}")
        L = K
        delta = 0.0
        offset = ov.rho_offset if ov.rho_offset is not None else 3.0

    if Q < 1 or Q * L > T:
        raise ValidationError(f"Schedule Q={Q}, block length {L} does not fit the horizon T={T}")
    truncated = T - Q * L
    if truncated:
        adjustments.append(f"{truncated} surplus time steps truncated")
        logger.info("Schedule truncates %d of %d time steps (Q=%d, block length %d)", truncated, T, Q, L)

    schedule = Schedule(
        mode=mode, T=T, Q=Q, K=K, L=L, rho_offset=float(offset), delta=float(delta),
        truncated=truncated, adjustments=tuple(adjustments),
    )
    logger.info("Schedule %s: T=%d Q=%d K=%d L=%d delta=%g", mode, T, Q, K, L, delta)
    return schedule

"""
Regret-bound constants and bound curves for the three guarantees (convex, submodular, bandit).
"""
import math
from dataclasses import asdict, dataclass
from typing import Optional

from app import config
from app.errors import ValidationError

E = math.e


@dataclass(frozen=True)
class TheoryConstants:
    V_d: float
    sigma1_sq: float
    N: float
    M0: float
    M1: float
    M2: float
    M: float
    P_n_lambda2: float
    Z: float
    interior_distance: float
    T: int
    C: float
    bound_convex: float
    bound_submodular: float
    bound_bandit: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["C_label"] = "symbolic"
        return out


def _spread(lambda2: float) -> float:
    # 1 / (1/lambda2 - 1), with the limit 0 at lambda2 = 0
    return 0.0 if lambda2 == 0 else lambda2 / (1.0 - lambda2)


def theory_constants(
    n: int,
    lambda2: float,
    k0: int,
    G: float,
    G0: float,
    sigma0: float,
    B: float,
    D: float,
    d: int,
    delta: float,
    r: float,
    C: float = config.DEFAULT_ORACLE_C,
    T: int = 1,
    R: Optional[float] = None,
    beta: float = 0.0,
) -> TheoryConstants:
    """Plug-in constants of the regret guarantees and the bound values at horizon T."""
    if not 0.0 <= lambda2 < 1.0:
        raise ValidationError(f"lambda2 must lie in [0, 1), got {lambda2}")
    if n < 1 or d < 1 or k0 < 1 or T < 1:
        raise ValidationError("n, d, k0 and T must be positive")
    if r <= 0:
        raise ValidationError(f"r must be positive, got {r}")
    R = D if R is None else R
    s = _spread(lambda2)
    growth = max(lambda2 * (1.0 + 2.0 / (1.0 - lambda2)), 2.0)

    V = 2.0 * n * G * (s + 1.0)
    sigma1_sq = 4.0 * n * (((G + G0) * s) ** 2 + 2.0 * sigma0 ** 2)
    N = k0 * n * G * growth
    M0 = 4.0 * (V ** 2 + sigma1_sq) + 128.0 * V ** 2
    M1 = max(5.0 ** (2.0 / 3.0) * (V + 2.0 / 4.0 ** (2.0 / 3.0) * G0) ** 2, M0)
    M2 = 2.55 * (V ** 2 + sigma1_sq) + 28.0 * V ** 2 / 3.0
    M = max(M1, M2)

    P = k0 * n * B * growth + 4.0 ** (1.0 / 3.0) * math.sqrt(
        24.0 * n ** 2 * (s + 1.0) ** 2 + 8.0 * n * (s ** 2 + 2.0)
    )
    scale = G * r / (math.sqrt(d) + 2.0)
    discrepancy = math.sqrt(d) * (R / E + 1.0) + R / r
    Z = (1.0 - 1.0 / E) * discrepancy * scale + (2.0 - 1.0 / E) * scale + 2.0 * beta + C

    bound_convex = (
        (G * D + 2.0 * beta * D ** 2) * T ** 0.4
        + (C + 6.0 * D * (N + math.sqrt(M))) * T ** 0.8
        + 0.6 * beta * D ** 2 * T ** 0.4 * math.log(T)
    )
    bound_submodular = 1.5 * beta * D ** 2 * T ** 0.4 + (C + 3.0 * D * (N + math.sqrt(M))) * T ** 0.8
    bound_bandit = (
        Z * T ** (8.0 / 9.0)
        + beta * D ** 2 / 2.0 * T ** (1.0 / 9.0)
        + 1.5 * D * d * (math.sqrt(d) + 2.0) / r * P * T ** (2.0 / 9.0)
        + beta * D ** 2 * T ** (1.0 / 3.0)
    )

    return TheoryConstants(
        V_d=V, sigma1_sq=sigma1_sq, N=N, M0=M0, M1=M1, M2=M2, M=M, P_n_lambda2=P, Z=Z,
        interior_distance=discrepancy * delta, T=T, C=C,
        bound_convex=bound_convex, bound_submodular=bound_submodular, bound_bandit=bound_bandit,
    )

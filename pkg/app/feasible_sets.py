"""
Constraint regions with linear optimization oracles, projections and the bandit delta-interior.
"""
import itertools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy.optimize import brentq

from app import config
from app.errors import ValidationError

logger = logging.getLogger(__name__)

MINIMIZE = "minimize"
MAXIMIZE = "maximize"
SENSES = (MINIMIZE, MAXIMIZE)


@dataclass(frozen=True)
class Geometry:
    """Diameter D, radius R and inscribed-ball parameter r of a set."""
    D: float
    R: float
    r: float


def _check_sense(sense: str) -> None:
    if sense not in SENSES:
        raise ValidationError(f"Unknown optimization sense: {sense}")


class FeasibleSet(ABC):
    """Compact convex subset of [0,1]^d."""

    d: int
    r: float

    def _vector(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValidationError(f"Expected a vector of dimension {self.d}, got shape {x.shape}")
        return x

    @property
    @abstractmethod
    def down_closed(self) -> bool:
        ...

    @property
    @abstractmethod
    def geometry(self) -> Geometry:
        ...

    @abstractmethod
    def lmo(self, direction, sense: str = MINIMIZE) -> np.ndarray:
        """Vertex optimizing <direction, .> in the given sense."""

    @abstractmethod
    def contains(self, x, tol: float = config.MEMBERSHIP_TOL) -> bool:
        ...

    @abstractmethod
    def project(self, x) -> np.ndarray:
        """Euclidean projection onto the set."""

    @abstractmethod
    def vertices(self) -> Iterator[np.ndarray]:
        """All vertices, in lexicographic order of their 0/1 pattern."""

    def describe(self) -> dict:
        return {"variant": type(self).__name__, "d": self.d}


class BoxSet(FeasibleSet):
    """Axis-aligned box lo <= x <= hi inside [0,1]^d."""

    def __init__(self, lo, hi, r: Optional[float] = None):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValidationError("Box bounds must be vectors of equal dimension")
        if (lo > hi).any():
            raise ValidationError("Box lower bound exceeds upper bound")
        if (lo < 0).any() or (hi > 1).any():
            raise ValidationError("Box bounds must lie within [0, 1]")
        self.lo = lo
        self.hi = hi
        self.d = lo.shape[0]
        self.r = 0.5 / math.sqrt(self.d) if r is None else float(r)

    @classmethod
    def unit(cls, d: int, r: Optional[float] = None) -> "BoxSet":
        return cls(np.zeros(d), np.ones(d), r=r)

    @property
    def down_closed(self) -> bool:
        return bool((self.lo == 0).all())

    @property
    def geometry(self) -> Geometry:
        D = float(np.linalg.norm(self.hi - self.lo))
        R = float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))
        return Geometry(D=D, R=R, r=self.r)

    def lmo(self, direction, sense: str = MINIMIZE) -> np.ndarray:
        _check_sense(sense)
        c = self._vector(direction)
        if sense == MAXIMIZE:
            c = -c
        # ties (c_j == 0) go to the lower bound
        return np.where(c < 0, self.hi, self.lo)

    def contains(self, x, tol: float = config.MEMBERSHIP_TOL) -> bool:
        x = self._vector(x)
        return bool((x >= self.lo - tol).all() and (x <= self.hi + tol).all())

    def project(self, x) -> np.ndarray:
        return np.clip(self._vector(x), self.lo, self.hi)

    def vertices(self) -> Iterator[np.ndarray]:
        for bits in itertools.product((0, 1), repeat=self.d):
            mask = np.array(bits, dtype=bool)
            yield np.where(mask, self.hi, self.lo)

    def describe(self) -> dict:
        return {"variant": "box", "d": self.d, "lo": self.lo.tolist(), "hi": self.hi.tolist(), "r": self.r}


class CardinalitySet(FeasibleSet):
    """{x in [0,1]^d : sum(x) <= k} (relation 'le') or sum(x) = k (relation 'eq')."""

    def __init__(self, d: int, k: int, relation: str = "le", r: Optional[float] = None):
        if relation not in ("le", "eq"):
            raise ValidationError(f"Cardinality relation must be 'le' or 'eq', got {relation}")
        if not 1 <= k <= d:
            raise ValidationError(f"Cardinality budget must lie in [1, {d}], got {k}")
        self.d = int(d)
        self.k = int(k)
        self.relation = relation
        self.r = 0.5 / math.sqrt(self.d) if r is None else float(r)

    @property
    def down_closed(self) -> bool:
        return self.relation == "le"

    @property
    def geometry(self) -> Geometry:
        if self.relation == "le":
            D = math.sqrt(min(2 * self.k, self.d))
        else:
            D = math.sqrt(2 * min(self.k, self.d - self.k))
        return Geometry(D=D, R=math.sqrt(self.k), r=self.r)

    def lmo(self, direction, sense: str = MINIMIZE) -> np.ndarray:
        _check_sense(sense)
        c = self._vector(direction)
        if sense == MINIMIZE:
            c = -c
        order = np.argsort(-c, kind="stable")[: self.k]
        if self.relation == "le":
            order = order[c[order] > 0]
        v = np.zeros(self.d)
        v[order] = 1.0
        return v

    def contains(self, x, tol: float = config.MEMBERSHIP_TOL) -> bool:
        x = self._vector(x)
        if (x < -tol).any() or (x > 1 + tol).any():
            return False
        total = x.sum()
        if self.relation == "le":
            return bool(total <= self.k + tol)
        return bool(abs(total - self.k) <= tol)

    def project(self, x) -> np.ndarray:
        x = self._vector(x)
        clipped = np.clip(x, 0.0, 1.0)
        if self.relation == "le" and clipped.sum() <= self.k + config.STOCHASTIC_TOL:
            return clipped

        def excess(tau: float) -> float:
            return float(np.clip(x - tau, 0.0, 1.0).sum() - self.k)

        lo, hi = float(x.min()) - 1.0, float(x.max())
        tau = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        return np.clip(x - tau, 0.0, 1.0)

    def vertices(self) -> Iterator[np.ndarray]:
        for bits in itertools.product((0, 1), repeat=self.d):
            ones = sum(bits)
            if ones > self.k or (self.relation == "eq" and ones != self.k):
                continue
            yield np.array(bits, dtype=float)

    def describe(self) -> dict:
        return {"variant": "cardinality", "d": self.d, "k": self.k, "relation": self.relation, "r": self.r}


class DeltaInterior(FeasibleSet):
    """Shrunken set (1 - alpha) * base + delta * 1 used for bandit exploration."""

    def __init__(self, base: FeasibleSet, delta: float, r: float):
        self.base = base
        self.d = base.d
        self.delta = float(delta)
        self.r = float(r)
        self.alpha = (math.sqrt(self.d) + 1.0) * self.delta / self.r
        self.lower_bound = np.full(self.d, self.delta)
        R = base.geometry.R
        self.distance_bound = (math.sqrt(self.d) * (R / math.e + 1.0) + R / self.r) * self.delta

    @property
    def down_closed(self) -> bool:
        return False

    @property
    def geometry(self) -> Geometry:
        g = self.base.geometry
        return Geometry(D=(1 - self.alpha) * g.D, R=(1 - self.alpha) * g.R + self.delta * math.sqrt(self.d), r=self.r)

    def embed(self, y) -> np.ndarray:
        """Map a point of the base set into the interior."""
        return (1.0 - self.alpha) * np.asarray(y, dtype=float) + self.lower_bound

    def lmo(self, direction, sense: str = MINIMIZE) -> np.ndarray:
        return self.embed(self.base.lmo(direction, sense))

    def contains(self, x, tol: float = config.MEMBERSHIP_TOL) -> bool:
        x = self._vector(x)
        return self.base.contains((x - self.lower_bound) / (1.0 - self.alpha), tol)

    def project(self, x) -> np.ndarray:
        y = self.base.project((self._vector(x) - self.lower_bound) / (1.0 - self.alpha))
        return self.embed(y)

    def vertices(self) -> Iterator[np.ndarray]:
        for v in self.base.vertices():
            yield self.embed(v)

    def describe(self) -> dict:
        return {
            "variant": "delta_interior",
            "base": self.base.describe(),
            "delta": self.delta,
            "alpha": self.alpha,
            "distance_bound": self.distance_bound,
        }


def lmo(feasible: FeasibleSet, direction, sense: str = MINIMIZE) -> np.ndarray:
    return feasible.lmo(direction, sense)


def membership(feasible: FeasibleSet, x, tol: float = config.MEMBERSHIP_TOL) -> bool:
    return feasible.contains(x, tol)


def project(feasible: FeasibleSet, x) -> np.ndarray:
    return feasible.project(x)


def shrink_delta_interior(feasible: FeasibleSet, delta: float, r: float) -> DeltaInterior:
    """Build the delta-interior of a down-closed set; requires alpha < 1."""
    if not feasible.down_closed:
        raise ValidationError("The delta-interior needs a down-closed set (cardinality 'le' or box with lo = 0)")
    if delta <= 0 or r <= 0:
        raise ValidationError(f"delta and r must be positive, got delta={delta}, r={r}")
    interior = DeltaInterior(feasible, delta, r)
    if interior.alpha >= 1.0:
        raise ValidationError(
            f"alpha=(sqrt(d)+1)*delta/r={interior.alpha:.6f} is not below 1; delta={delta} too large for r={r}"
        )
    logger.debug("delta-interior: delta=%g alpha=%g distance_bound=%g", delta, interior.alpha, interior.distance_bound)
    return interior


def build_feasible_set(variant: str, d: int, k: Optional[int] = None, relation: str = "le",
                       lo=None, hi=None, r: Optional[float] = None) -> FeasibleSet:
    """Construct a set from its configuration fields."""
    if variant == "box":
        lo = np.zeros(d) if lo is None else np.broadcast_to(np.asarray(lo, dtype=float), (d,)).copy()
        hi = np.ones(d) if hi is None else np.broadcast_to(np.asarray(hi, dtype=float), (d,)).copy()
        return BoxSet(lo, hi, r=r)
    if variant == "cardinality":
        if k is None:
            raise ValidationError("Cardinality set needs a budget k")
        return CardinalitySet(d, k, relation, r=r)
    raise ValidationError(f"Unknown feasible-set variant: {variant}")

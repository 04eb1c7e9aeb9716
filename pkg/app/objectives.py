"""
Objective functions: quadratic losses, facility-location set functions and their multilinear extensions.
"""
import itertools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterable, Optional, Sequence, Union

import numpy as np

from app.errors import ValidationError

logger = logging.getLogger(__name__)

MAX_ENUMERATION_DIM = 20
# subsets evaluated per vectorized chunk
_CHUNK = 4096


@dataclass(frozen=True)
class ObjectiveProfile:
    """Regularity constants of an objective family."""
    G: float
    beta: float
    G0: float
    sigma0: float
    B: float

    def __post_init__(self):
        for name in ("G", "beta", "G0", "sigma0", "B"):
            if getattr(self, name) < 0:
                raise ValidationError(f"Profile constant {name} must be nonnegative")
        if self.G > self.G0 + 1e-12:
            raise ValidationError(f"Profile needs G <= G0, got G={self.G}, G0={self.G0}")


class LocalObjective(ABC):
    """A differentiable function f: [0,1]^d -> R seen by one agent at one time step."""

    d: int

    @abstractmethod
    def value(self, x) -> float:
        ...

    @abstractmethod
    def gradient(self, x) -> np.ndarray:
        ...

    def stochastic_gradient(self, x, rng: np.random.Generator) -> np.ndarray:
        return self.gradient(x)

    def value_batch(self, xs) -> np.ndarray:
        return np.array([self.value(x) for x in np.atleast_2d(xs)])


# ---------------------------------------------------------------------------
# Quadratic losses (convex mode)
# ---------------------------------------------------------------------------


class QuadraticLoss(LocalObjective):
    """f(x) = scale * ||x - b||^2 + offset with optional Gaussian gradient noise."""

    def __init__(self, b, noise_sigma: float = 0.0, scale: float = 1.0, offset: float = 0.0):
        self.b = np.asarray(b, dtype=float)
        self.d = self.b.shape[0]
        self.noise_sigma = float(noise_sigma)
        self.scale = float(scale)
        self.offset = float(offset)

    def value(self, x) -> float:
        diff = np.asarray(x, dtype=float) - self.b
        return float(self.scale * (diff @ diff) + self.offset)

    def value_batch(self, xs) -> np.ndarray:
        diff = np.atleast_2d(np.asarray(xs, dtype=float)) - self.b
        return self.scale * np.einsum("pd,pd->p", diff, diff) + self.offset

    def gradient(self, x) -> np.ndarray:
        return 2.0 * self.scale * (np.asarray(x, dtype=float) - self.b)

    def stochastic_gradient(self, x, rng: np.random.Generator) -> np.ndarray:
        grad = self.gradient(x)
        if self.noise_sigma > 0:
            grad = grad + rng.normal(0.0, self.noise_sigma, size=self.d)
        return grad

    @staticmethod
    def merge(terms: Sequence["QuadraticLoss"], weights: Sequence[float]) -> "QuadraticLoss":
        """Weighted sum of quadratics as one quadratic: sum w ||x-b||^2 = W ||x-b_bar||^2 + c."""
        w = np.asarray(weights, dtype=float)
        bs = np.stack([t.b * t.scale for t in terms])
        scales = np.array([t.scale for t in terms])
        weight_scale = float(w @ scales)
        b_bar = (w @ bs) / weight_scale
        const = float(sum(wi * (t.scale * (t.b @ t.b) + t.offset) for wi, t in zip(w, terms)))
        const -= weight_scale * float(b_bar @ b_bar)
        return QuadraticLoss(b_bar, scale=weight_scale, offset=const)


def quadratic_eval(b, x, noise_sigma: float = 0.0, seed: int = 0):
    """(value, gradient, stochastic gradient) of ||x - b||^2."""
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    if b.shape != x.shape:
        raise ValidationError(f"Dimension mismatch: b {b.shape} vs x {x.shape}")
    loss = QuadraticLoss(b, noise_sigma)
    rng = np.random.default_rng(seed)
    return loss.value(x), loss.gradient(x), loss.stochastic_gradient(x, rng)


# ---------------------------------------------------------------------------
# Set functions
# ---------------------------------------------------------------------------


def _as_mask(S: Iterable[int], d: int) -> np.ndarray:
    mask = np.zeros(d, dtype=bool)
    for j in S:
        if not 0 <= j < d:
            raise ValidationError(f"Element {j} outside ground set of size {d}")
        mask[j] = True
    return mask


def all_masks(d: int) -> np.ndarray:
    """All 2^d subsets as boolean rows; row index bits follow coordinate order."""
    if d > MAX_ENUMERATION_DIM:
        raise ValidationError(f"Enumeration over 2^{d} subsets is too large (max d={MAX_ENUMERATION_DIM})")
    return np.array(list(itertools.product((False, True), repeat=d)), dtype=bool).reshape(-1, d)


class SetFunction(ABC):
    """Set function on the ground set {0, ..., d-1}."""

    d: int
    _table: Optional[np.ndarray] = None

    @abstractmethod
    def values(self, masks: np.ndarray) -> np.ndarray:
        """Values of every subset given as boolean rows of shape (m, d)."""

    def value(self, S: Iterable[int]) -> float:
        return float(self.values(_as_mask(S, self.d)[None, :])[0])

    def subset_table(self) -> np.ndarray:
        """Values of all 2^d subsets in all_masks order (cached)."""
        if self._table is None:
            masks = all_masks(self.d)
            self._table = np.concatenate(
                [self.values(masks[i:i + _CHUNK]) for i in range(0, len(masks), _CHUNK)]
            )
        return self._table


class TableSetFunction(SetFunction):
    """Set function given by a table {frozenset: value} or a callable on frozensets."""

    def __init__(self, d: int, rule: Union[Dict[FrozenSet[int], float], Callable[[FrozenSet[int]], float]]):
        self.d = d
        self._rule = rule

    def _eval(self, S: FrozenSet[int]) -> float:
        if callable(self._rule):
            return float(self._rule(S))
        return float(self._rule.get(S, 0.0))

    def values(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(masks)
        return np.array([self._eval(frozenset(np.flatnonzero(row).tolist())) for row in masks])


class FacilityLocation(SetFunction):
    """f(S) = sum_u w_u max_{m in S} r(u, m), with f(empty) = 0 and missing ratings as 0."""

    def __init__(self, ratings, weights=None):
        ratings = np.asarray(ratings, dtype=float)
        if ratings.ndim != 2:
            raise ValidationError("Ratings must be a users x movies matrix")
        if ratings.shape[0] == 0:
            raise ValidationError("Facility location needs at least one user")
        if (ratings < 0).any():
            raise ValidationError("Ratings must be nonnegative")
        self.ratings = ratings
        self.d = ratings.shape[1]
        n_users = ratings.shape[0]
        self.weights = np.full(n_users, 1.0 / n_users) if weights is None else np.asarray(weights, dtype=float)
        self._order = np.argsort(-ratings, axis=1, kind="stable")
        self._sorted = np.take_along_axis(ratings, self._order, axis=1)

    @classmethod
    def merge(cls, parts: Sequence["FacilityLocation"], weights: Sequence[float]) -> "FacilityLocation":
        """sum_p weights[p] * parts[p] as a single facility objective."""
        ratings = np.concatenate([p.ratings for p in parts])
        user_weights = np.concatenate([w * p.weights for p, w in zip(parts, weights)])
        return cls(ratings, user_weights)

    @property
    def max_rating(self) -> float:
        return float(self.ratings.max(initial=0.0))

    def values(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(masks)
        out = np.empty(masks.shape[0])
        step = max(1, _CHUNK * 64 // max(1, self.ratings.size))
        for start in range(0, masks.shape[0], step):
            chunk = masks[start:start + step]
            best = np.where(chunk[:, None, :], self.ratings[None, :, :], 0.0).max(axis=2)
            out[start:start + step] = best @ self.weights
        return out

    def _probabilities(self, xs: np.ndarray):
        # xs (p, d) -> sorted coordinates and "nothing better chosen" products, (p, U, d)
        xs_sorted = xs[:, self._order]
        miss = np.cumprod(1.0 - xs_sorted, axis=2)
        before = np.concatenate([np.ones(miss.shape[:2] + (1,)), miss[:, :, :-1]], axis=2)
        return xs_sorted, before

    def multilinear_values(self, xs) -> np.ndarray:
        """Closed-form multilinear extension at each row of xs."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        xs_sorted, before = self._probabilities(xs)
        per_user = (self._sorted[None] * xs_sorted * before).sum(axis=2)
        return per_user @ self.weights

    def multilinear_gradient(self, x) -> np.ndarray:
        """Closed-form gradient of the multilinear extension."""
        x = np.asarray(x, dtype=float)
        xs_sorted, before = self._probabilities(x[None, :])
        xs_sorted, before = xs_sorted[0], before[0]
        tail = np.zeros_like(xs_sorted)
        for j in range(self.d - 2, -1, -1):
            nxt = xs_sorted[:, j + 1]
            tail[:, j] = self._sorted[:, j + 1] * nxt + (1.0 - nxt) * tail[:, j + 1]
        per_user_sorted = before * (self._sorted - tail)
        per_user = np.zeros_like(per_user_sorted)
        np.put_along_axis(per_user, self._order, per_user_sorted, axis=1)
        return self.weights @ per_user


def facility_value(obj: FacilityLocation, S: Iterable[int]) -> float:
    """Facility-location value of a movie subset."""
    return obj.value(S)


# ---------------------------------------------------------------------------
# Multilinear extensions
# ---------------------------------------------------------------------------


def _subset_probabilities(masks: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.where(masks, x, 1.0 - x).prod(axis=1)


def multilinear_value_exact(obj: "MultilinearObjective", x) -> float:
    """F(x) = sum_S f(S) prod_{j in S} x_j prod_{l not in S} (1 - x_l), by enumeration."""
    base = obj.base if isinstance(obj, MultilinearObjective) else obj
    x = np.asarray(x, dtype=float)
    if x.shape != (base.d,):
        raise ValidationError(f"Expected a vector of dimension {base.d}")
    masks = all_masks(base.d)
    return float(base.subset_table() @ _subset_probabilities(masks, x))


def multilinear_grad_exact(obj: "MultilinearObjective", x) -> np.ndarray:
    """dF/dx_j = F(x | x_j = 1) - F(x | x_j = 0), by enumeration."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for j in range(x.shape[0]):
        hi, lo = x.copy(), x.copy()
        hi[j], lo[j] = 1.0, 0.0
        grad[j] = multilinear_value_exact(obj, hi) - multilinear_value_exact(obj, lo)
    return grad


def _sampled_marginals(base: SetFunction, x: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    draws = rng.random((m, base.d)) < x
    grad = np.empty(base.d)
    for j in range(base.d):
        with_j = draws.copy()
        with_j[:, j] = True
        without_j = draws.copy()
        without_j[:, j] = False
        grad[j] = float(np.mean(base.values(with_j) - base.values(without_j)))
    return grad


def multilinear_grad_sampled(obj: "MultilinearObjective", x, m: int, seed: int = 0) -> np.ndarray:
    """Unbiased marginal-gain estimate of the multilinear gradient from m shared draws."""
    if m < 1:
        raise ValidationError("Sampled gradient needs at least one draw")
    x = np.asarray(x, dtype=float)
    if (x < 0).any() or (x > 1).any():
        raise ValidationError("Sampled gradient needs x in [0, 1]^d")
    base = obj.base if isinstance(obj, MultilinearObjective) else obj
    return _sampled_marginals(base, x, m, np.random.default_rng(seed))


class MultilinearObjective(LocalObjective):
    """Multilinear extension of a set function, with sampled stochastic gradients."""

    def __init__(self, base: SetFunction, samples: int = 1):
        if samples < 1:
            raise ValidationError("Sample count must be positive")
        self.base = base
        self.d = base.d
        self.samples = samples

    @property
    def closed_form(self) -> bool:
        return isinstance(self.base, FacilityLocation)

    def value(self, x) -> float:
        if self.closed_form:
            return float(self.base.multilinear_values(x)[0])
        return multilinear_value_exact(self, x)

    def value_batch(self, xs) -> np.ndarray:
        if self.closed_form:
            return self.base.multilinear_values(xs)
        return super().value_batch(xs)

    def gradient(self, x) -> np.ndarray:
        if self.closed_form:
            return self.base.multilinear_gradient(x)
        return multilinear_grad_exact(self, x)

    def stochastic_gradient(self, x, rng: np.random.Generator) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return _sampled_marginals(self.base, x, self.samples, rng)


class SumObjective(LocalObjective):
    """Weighted sum of local objectives of the same dimension."""

    def __init__(self, terms: Sequence[LocalObjective], weights: Optional[Sequence[float]] = None):
        if not terms:
            raise ValidationError("A sum objective needs at least one term")
        self.terms = list(terms)
        self.d = self.terms[0].d
        self.weights = np.ones(len(self.terms)) if weights is None else np.asarray(weights, dtype=float)

    def value(self, x) -> float:
        return float(sum(w * t.value(x) for w, t in zip(self.weights, self.terms)))

    def value_batch(self, xs) -> np.ndarray:
        return sum(w * t.value_batch(xs) for w, t in zip(self.weights, self.terms))

    def gradient(self, x) -> np.ndarray:
        return sum(w * t.gradient(x) for w, t in zip(self.weights, self.terms))


def combine(terms: Sequence[LocalObjective], weights: Optional[Sequence[float]] = None) -> LocalObjective:
    """Collapse a weighted sum into one objective of the same family when possible."""
    weights = [1.0] * len(terms) if weights is None else list(weights)
    if terms and all(isinstance(t, QuadraticLoss) for t in terms):
        return QuadraticLoss.merge(terms, weights)
    if terms and all(isinstance(t, MultilinearObjective) and t.closed_form for t in terms):
        merged = FacilityLocation.merge([t.base for t in terms], weights)
        return MultilinearObjective(merged, samples=terms[0].samples)
    return SumObjective(terms, weights)


# ---------------------------------------------------------------------------
# DR property and profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DRReport:
    violations: int
    max_gap: float
    trials: int


def dr_check_sample(obj: MultilinearObjective, trials: int, seed: int = 0) -> DRReport:
    """Count coordinates where grad F(x)_j < grad F(y)_j - 1e-9 for sampled x <= y."""
    rng = np.random.default_rng(seed)
    violations = 0
    max_gap = 0.0
    for _ in range(trials):
        x = rng.random(obj.d)
        y = x + (1.0 - x) * rng.random(obj.d)
        gap = multilinear_grad_exact(obj, y) - multilinear_grad_exact(obj, x)
        violations += int((gap > 1e-9).sum())
        max_gap = max(max_gap, float(gap.max()))
    return DRReport(violations=violations, max_gap=max_gap, trials=trials)


def profile_for_quadratics(bs: np.ndarray, radius: float, noise_sigma: float = 0.0) -> ObjectiveProfile:
    """Constants of ||x - b||^2 over a set of radius R."""
    bs = np.atleast_2d(bs)
    reach = float(np.linalg.norm(bs, axis=1).max()) + radius
    d = bs.shape[1]
    G = 2.0 * reach
    sigma0 = noise_sigma * math.sqrt(d)
    return ObjectiveProfile(G=G, beta=2.0, G0=G + 3.0 * sigma0, sigma0=sigma0, B=reach ** 2)


def profile_for_facility(max_rating: float, d: int, samples: int = 1) -> ObjectiveProfile:
    """Constants of facility-location multilinear extensions with ratings <= max_rating."""
    G = max_rating * math.sqrt(d)
    return ObjectiveProfile(
        G=G,
        beta=max_rating * d,
        G0=G,
        sigma0=G / math.sqrt(samples),
        B=max_rating,
    )

import itertools

import numpy as np
import pytest

from app.comparator import (
    CLOSED_FORM,
    OFFLINE_FRANK_WOLFE,
    PROJECTED_GRADIENT,
    global_objectives,
    offline_comparator,
)
from app.errors import ValidationError
from app.feasible_sets import BoxSet, CardinalitySet
from app.objectives import FacilityLocation, MultilinearObjective, QuadraticLoss, TableSetFunction
from app.schedule import CONVEX, SUBMODULAR
from conftest import LinearLoss


def test_quadratic_closed_form():
    functions = [[QuadraticLoss([0.2, 1.0])], [QuadraticLoss([0.6, 1.6])]]
    result = offline_comparator(functions, BoxSet.unit(2), CONVEX)
    assert result.method == CLOSED_FORM
    assert np.allclose(result.x_star, [0.4, 1.0])
    assert result.value == pytest.approx(0.44)
    assert result.to_dict()["x_star"] == pytest.approx([0.4, 1.0])


def test_agents_are_averaged_per_step():
    functions = [[QuadraticLoss([0.0, 0.0]), QuadraticLoss([0.8, 0.4])]]
    result = offline_comparator(functions, BoxSet.unit(2), CONVEX)
    assert np.allclose(result.x_star, [0.4, 0.2])
    objectives = global_objectives(functions)
    assert objectives[0].value(result.x_star) == pytest.approx(result.value)


def test_projected_gradient_for_other_families():
    functions = [[QuadraticLoss([0.5, 0.5]), LinearLoss([0.2, -0.4])]]
    with pytest.raises(ValidationError, match="smoothness"):
        offline_comparator(functions, BoxSet.unit(2), CONVEX)
    result = offline_comparator(functions, BoxSet.unit(2), CONVEX, smoothness=1.0)
    assert result.method == PROJECTED_GRADIENT
    assert np.allclose(result.x_star, [0.4, 0.7], atol=1e-8)
    assert result.tolerance <= 1e-8


def test_constant_objective():
    functions = [[LinearLoss([0.0, 0.0], offset=3.0)] for _ in range(2)]
    result = offline_comparator(functions, BoxSet.unit(2), CONVEX, smoothness=1.0)
    assert result.value == pytest.approx(6.0)
    assert result.iterations == 1


def test_offline_frank_wolfe_on_toy_table():
    table = TableSetFunction(2, {frozenset({0}): 1.0, frozenset({1}): 2.0, frozenset({0, 1}): 2.0})
    result = offline_comparator([[MultilinearObjective(table)]], CardinalitySet(2, 1), SUBMODULAR)
    assert result.method == OFFLINE_FRANK_WOLFE
    assert np.allclose(result.x_star, [0.0, 1.0])
    assert result.value == pytest.approx(2.0)


def test_offline_frank_wolfe_quality():
    rng = np.random.default_rng(0)
    d, k = 6, 2
    functions = []
    for _ in range(3):
        ratings = np.where(rng.random((5, d)) < 0.5, rng.integers(1, 6, size=(5, d)), 0).astype(float)
        functions.append([MultilinearObjective(FacilityLocation(ratings))])
    result = offline_comparator(functions, CardinalitySet(d, k), SUBMODULAR)
    best = max(
        sum(row[0].base.value(S) for row in functions)
        for size in range(k + 1)
        for S in itertools.combinations(range(d), size)
    )
    assert result.value >= (1 - 1 / np.e - 0.02) * best


def test_unknown_mode():
    with pytest.raises(ValidationError):
        offline_comparator([[QuadraticLoss([0.0])]], BoxSet.unit(1), "minimax")

import math

import numpy as np
import pytest

from app.errors import ValidationError
from app.feasible_sets import (
    MAXIMIZE,
    MINIMIZE,
    BoxSet,
    CardinalitySet,
    build_feasible_set,
    lmo,
    membership,
    project,
    shrink_delta_interior,
)


def test_box_lmo_and_tie_break():
    box = BoxSet.unit(3)
    assert lmo(box, [1.0, -1.0, 0.0], MINIMIZE).tolist() == [0.0, 1.0, 0.0]
    assert lmo(box, [1.0, -1.0, 0.0], MAXIMIZE).tolist() == [1.0, 0.0, 0.0]
    assert lmo(box, [-3.0, -1.0, -2.0], MINIMIZE).tolist() == [1.0, 1.0, 1.0]


def test_cardinality_lmo():
    le = CardinalitySet(4, 2, "le")
    eq = CardinalitySet(4, 2, "eq")
    c = [3.0, -1.0, 2.0, 5.0]
    assert le.lmo(c, MAXIMIZE).tolist() == [1.0, 0.0, 0.0, 1.0]
    assert le.lmo(c, MINIMIZE).tolist() == [0.0, 1.0, 0.0, 0.0]
    assert eq.lmo(c, MINIMIZE).tolist() == [0.0, 1.0, 1.0, 0.0]


def test_cardinality_tie_breaks():
    assert CardinalitySet(3, 2, "le").lmo(np.zeros(3), MAXIMIZE).tolist() == [0.0, 0.0, 0.0]
    assert CardinalitySet(4, 2, "eq").lmo(np.zeros(4), MAXIMIZE).tolist() == [1.0, 1.0, 0.0, 0.0]


def test_lmo_is_optimal_over_vertices():
    rng = np.random.default_rng(3)
    for feasible in (BoxSet.unit(4), CardinalitySet(5, 2, "le"), CardinalitySet(5, 3, "eq")):
        for _ in range(20):
            c = rng.normal(size=feasible.d)
            best = min(float(c @ v) for v in feasible.vertices())
            assert float(c @ feasible.lmo(c, MINIMIZE)) == pytest.approx(best, abs=1e-12)
            worst = max(float(c @ v) for v in feasible.vertices())
            assert float(c @ feasible.lmo(c, MAXIMIZE)) == pytest.approx(worst, abs=1e-12)


def test_unknown_sense():
    with pytest.raises(ValidationError):
        BoxSet.unit(2).lmo([1.0, 0.0], "sideways")


def test_membership():
    card = CardinalitySet(3, 1, "le")
    assert membership(card, [0.5, 0.5, 0.0])
    assert not membership(card, [0.6, 0.5, 0.0])
    assert membership(card, [0.5, 0.5 + 1e-10, 0.0])
    assert not membership(BoxSet.unit(2), [1.1, 0.0])
    with pytest.raises(ValidationError):
        membership(card, [0.0, 0.0])


def test_cardinality_projection():
    card = CardinalitySet(3, 1, "le")
    assert np.allclose(project(card, [0.9, 0.9, 0.9]), 1 / 3, atol=1e-12)
    assert np.allclose(project(card, [0.2, 0.3, -0.4]), [0.2, 0.3, 0.0])
    assert np.allclose(project(CardinalitySet(2, 1, "eq"), [0.0, 0.0]), [0.5, 0.5], atol=1e-12)


def test_projection_lands_in_set():
    rng = np.random.default_rng(5)
    card = CardinalitySet(6, 2, "le")
    for _ in range(50):
        y = card.project(rng.normal(scale=2.0, size=6))
        assert card.contains(y)


def test_box_projection_is_clip():
    box = BoxSet(np.array([0.1, 0.0]), np.array([0.5, 1.0]))
    assert project(box, [0.0, 2.0]).tolist() == [0.1, 1.0]
    assert not box.down_closed


def test_geometry():
    g = CardinalitySet(10, 3, "le").geometry
    assert g.D == pytest.approx(math.sqrt(6))
    assert g.R == pytest.approx(math.sqrt(3))
    assert g.r == pytest.approx(0.5 / math.sqrt(10))
    assert BoxSet.unit(4).geometry.D == pytest.approx(2.0)


def test_delta_interior():
    box = BoxSet.unit(4)
    interior = shrink_delta_interior(box, 0.01, box.r)
    assert interior.alpha == pytest.approx(3 * 0.01 / 0.25)
    assert interior.lower_bound.tolist() == [0.01] * 4
    assert interior.contains(interior.lower_bound)
    assert interior.distance_bound == pytest.approx((2 * (2 / math.e + 1) + 2 / 0.25) * 0.01)
    rng = np.random.default_rng(0)
    for v in interior.vertices():
        for _ in range(10):
            u = rng.normal(size=4)
            u /= np.linalg.norm(u)
            assert box.contains(v + interior.delta * u)


def test_delta_interior_of_cardinality_keeps_balls_inside():
    card = CardinalitySet(10, 3, "le")
    interior = shrink_delta_interior(card, 0.005, card.r)
    rng = np.random.default_rng(1)
    for _ in range(200):
        c = rng.normal(size=10)
        v = interior.lmo(c, MAXIMIZE)
        assert interior.contains(v)
        u = rng.normal(size=10)
        u /= np.linalg.norm(u)
        assert card.contains(v + interior.delta * u)


def test_shrink_rejects_bad_inputs():
    with pytest.raises(ValidationError, match="down-closed"):
        shrink_delta_interior(CardinalitySet(3, 1, "eq"), 0.01, 0.1)
    with pytest.raises(ValidationError, match="alpha"):
        shrink_delta_interior(BoxSet.unit(4), 1.0, 0.25)
    with pytest.raises(ValidationError):
        shrink_delta_interior(BoxSet.unit(4), 0.0, 0.25)


def test_build_feasible_set():
    box = build_feasible_set("box", 3, lo=0.0, hi=[1.0, 0.5, 1.0])
    assert box.hi.tolist() == [1.0, 0.5, 1.0]
    card = build_feasible_set("cardinality", 5, k=2)
    assert card.down_closed
    with pytest.raises(ValidationError):
        build_feasible_set("cardinality", 5)
    with pytest.raises(ValidationError):
        build_feasible_set("simplex", 5)
    with pytest.raises(ValidationError):
        CardinalitySet(3, 4)

import math

import pytest

from app.errors import ValidationError
from app.schedule import BANDIT, CONVEX, SUBMODULAR, Schedule, ScheduleOverrides, default_delta, make_schedule


def test_full_information_schedule():
    s = make_schedule(1024, CONVEX)
    assert (s.Q, s.K, s.L) == (16, 64, 64)
    assert s.effective_T == 1024
    assert s.truncated == 0
    assert s.adjustments == ()


def test_surplus_steps_are_truncated():
    s = make_schedule(1000, SUBMODULAR)
    assert (s.Q, s.K) == (16, 62)
    assert s.effective_T == 992
    assert s.truncated == 8
    assert "8 surplus time steps truncated" in s.adjustments


def test_bandit_schedule():
    s = make_schedule(512, BANDIT, d=10, r=0.5 / math.sqrt(10))
    assert (s.Q, s.L, s.K) == (4, 128, 64)
    assert s.block_length == 128
    assert s.delta == pytest.approx(default_delta(512, 10, 0.5 / math.sqrt(10)))
    assert s.delta == pytest.approx(0.5 / math.sqrt(10) / (math.sqrt(10) + 2) / 2)


def test_bandit_clamp_is_recorded():
    s = make_schedule(100, BANDIT, ScheduleOverrides(delta=0.01))
    assert (s.Q, s.L, s.K) == (3, 33, 16)
    assert any("clamped from 22 to 16" in a for a in s.adjustments)
    assert s.delta == 0.01


def test_bandit_needs_geometry_for_delta():
    with pytest.raises(ValidationError, match="delta"):
        make_schedule(512, BANDIT)


def test_overrides():
    s = make_schedule(102, SUBMODULAR, ScheduleOverrides(Q=6, K=17))
    assert (s.Q, s.K, s.L, s.truncated) == (6, 17, 17, 0)
    s = make_schedule(64, CONVEX, ScheduleOverrides(K=10))
    assert (s.Q, s.K) == (6, 10)
    with pytest.raises(ValidationError):
        make_schedule(64, CONVEX, ScheduleOverrides(Q=8, K=10))
    with pytest.raises(ValidationError):
        make_schedule(64, BANDIT, ScheduleOverrides(Q=2, L=10, K=6, delta=0.01))


def test_rejects_tiny_horizon_and_unknown_mode():
    with pytest.raises(ValidationError):
        make_schedule(3, CONVEX)
    with pytest.raises(ValidationError):
        make_schedule(64, "online_lp")


def test_step_sizes():
    convex = make_schedule(1024, CONVEX)
    assert convex.eta(1) == 1.0
    assert convex.eta(4) == pytest.approx(0.25)
    submod = make_schedule(1024, SUBMODULAR)
    assert submod.eta(1) == submod.eta(30) == pytest.approx(1 / 64)


def test_averaging_rates():
    s = make_schedule(1024, CONVEX)
    assert s.rho(1) == pytest.approx(2 / 4 ** (2 / 3))
    assert s.rho(32) == pytest.approx(2 / 35 ** (2 / 3))
    assert s.rho(33) == pytest.approx(1.5 / 33 ** (2 / 3))
    assert s.rho(64) == pytest.approx(1.5 / 2 ** (2 / 3))
    b = make_schedule(512, BANDIT, ScheduleOverrides(delta=0.01))
    assert b.rho(1) == pytest.approx(2 / 3 ** (2 / 3))
    assert b.rho(64) == pytest.approx(2 / 66 ** (2 / 3))
    for k in range(1, 65):
        assert 0 < s.rho(k) <= 1


def test_rho_is_capped():
    s = Schedule(mode=CONVEX, T=8, Q=2, K=4, L=4, rho_offset=0.0)
    assert s.rho(1) == 1.0


def test_to_dict():
    out = make_schedule(100, BANDIT, ScheduleOverrides(delta=0.01)).to_dict()
    assert out["effective_T"] == 99
    assert isinstance(out["adjustments"], list)
    assert out["mode"] == BANDIT

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from app.errors import ValidationError
from app.experiment import config_from_dict, load_config, run_experiment, run_sweep, validate_config
from db.database import RunLedger


def test_smoke_run_writes_artifacts(smoke_config):
    result = run_experiment(config_from_dict(smoke_config))
    assert (result.schedule.Q, result.schedule.K, result.schedule.effective_T) == (5, 12, 60)
    out = Path(smoke_config["output_dir"])
    lines = (out / "results.csv").read_text().splitlines()
    assert len(lines) == 1 + 60 * 3
    assert lines[0] == "t,block,agent,played_value,cum_value,comparator_cum,regret,ratio"

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["effective_T"] == 60
    assert manifest["gradient_queries"] == 3 * 12 * 5
    assert manifest["value_queries"] == 0
    assert manifest["messages"] == [2 * 12 * 5, 4 * 12 * 5, 2 * 12 * 5]
    assert manifest["spectral"]["k0"] == 5
    assert "4 surplus time steps truncated" in manifest["schedule"]["adjustments"]

    constants = json.loads((out / "constants.json").read_text())
    assert constants["C_label"] == "symbolic"
    assert constants["T"] == 60


def test_runs_are_reproducible(smoke_config, tmp_path):
    first = dict(smoke_config, output_dir=str(tmp_path / "a"))
    second = dict(smoke_config, output_dir=str(tmp_path / "b"))
    run_experiment(config_from_dict(first))
    run_experiment(config_from_dict(second))
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_convex_plays_stay_feasible(smoke_config):
    result = run_experiment(config_from_dict(smoke_config))
    played = np.concatenate([t.played for t in result.traces])
    assert played.min() >= -1e-9 and played.max() <= 1 + 1e-9
    assert result.comparator.method == "closed_form"


def test_facility_run(facility_config):
    result = run_experiment(config_from_dict(facility_config))
    assert result.schedule.effective_T == 15
    assert result.comparator.value > 0
    assert np.isfinite(result.final_ratio)
    for trace in result.traces:
        for point in trace.played.reshape(-1, 6):
            assert point.sum() <= 2 + 1e-9
            assert point.min() >= -1e-9 and point.max() <= 1 + 1e-9


def test_ledger_records_runs(smoke_config, tmp_path):
    ledger = RunLedger(str(tmp_path / "db" / "ledger.db"))
    result = run_experiment(config_from_dict(smoke_config), ledger=ledger)
    runs = ledger.get_all_runs()
    assert len(runs) == 1
    run = runs[0]
    assert run["name"] == "smoke"
    assert run["effective_T"] == 60
    assert run["mean_objective"] == pytest.approx(result.report.mean_objective)
    assert [o["agent"] for o in run["outcomes"]] == [1, 2, 3]


def test_sweep(facility_config, tmp_path):
    cfg = config_from_dict(facility_config)
    path = run_sweep(cfg, graphs=["complete", "line"], budgets=[1, 2], seeds=[0])
    with open(path, newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 4
    assert [(r["graph"], r["k"]) for r in rows] == [("complete", "1"), ("complete", "2"), ("line", "1"), ("line", "2")]
    assert (Path(facility_config["output_dir"]) / "line_k2_s0" / "results.csv").is_file()


def test_unknown_and_missing_keys():
    with pytest.raises(ValidationError) as err:
        config_from_dict({"name": "x", "mode": "convex_min", "graph": {"kind": "line", "degree": 3}, "colour": 1})
    problems = err.value.problems
    assert any("colour" in p for p in problems)
    assert any("degree" in p for p in problems)
    assert any("T" in p and "agents" in p for p in problems)


def test_validation_collects_every_problem(smoke_config):
    bad = dict(smoke_config, T=2, agents=0, objective={"kind": "facility"})
    with pytest.raises(ValidationError) as err:
        validate_config(config_from_dict(bad))
    text = " ".join(err.value.problems)
    assert "T must be" in text
    assert "agents must be" in text
    assert "Facility location belongs" in text


def test_missing_ratings_file(facility_config):
    facility_config["objective"]["ratings_path"] = "/nonexistent/ratings.dat"
    with pytest.raises(ValidationError, match="Ratings file not found"):
        run_experiment(config_from_dict(facility_config))


def test_submodular_mode_needs_down_closed_set(facility_config):
    facility_config["feasible_set"]["relation"] = "eq"
    with pytest.raises(ValidationError, match="down-closed"):
        validate_config(config_from_dict(facility_config))


def test_load_config_resolves_ratings_path(write_config, facility_config, tmp_path):
    facility_config["objective"]["ratings_path"] = "ratings.dat"
    cfg = load_config(write_config(facility_config))
    assert cfg.objective.ratings_path == str(tmp_path / "ratings.dat")
    with pytest.raises(ValidationError, match="not found"):
        load_config(str(tmp_path / "absent.yaml"))


def test_facility_run_from_ratings_file(write_config, facility_config, tmp_path):
    rng = np.random.default_rng(0)
    lines = []
    for user in range(1, 81):
        for movie in range(1, 9):
            if rng.random() < 0.5:
                lines.append(f"{user}::{movie}::{int(rng.integers(1, 6))}::0")
    (tmp_path / "ratings.dat").write_text("\n".join(lines) + "\n")
    facility_config["objective"]["ratings_path"] = "ratings.dat"
    result = run_experiment(load_config(write_config(facility_config)))
    assert result.report.played_values.shape == (15, 2)


@pytest.mark.slow
def test_bandit_config_end_to_end(tmp_path):
    cfg = load_config(str(Path(__file__).resolve().parent.parent / "configs" / "bandit.yaml"))
    cfg.output_dir = str(tmp_path / "bandit")
    cfg.ledger = False
    result = run_experiment(cfg)
    assert result.schedule.effective_T == 512
    manifest = json.loads((tmp_path / "bandit" / "manifest.json").read_text())
    assert manifest["value_queries"] == 4 * 512
    assert manifest["gradient_queries"] == 0
    for trace in result.traces:
        points = trace.played.reshape(-1, 10)
        assert (points.sum(axis=1) <= 3 + 1e-9).all()


def _quadratic_config(tmp_path, T: int, seed: int) -> dict:
    return {
        "name": f"quadratic-{T}-{seed}",
        "mode": "convex_min",
        "T": T,
        "agents": 4,
        "graph": {"kind": "complete"},
        "feasible_set": {"variant": "box", "d": 4},
        "objective": {"kind": "quadratic", "noise_sigma": 0.1},
        "seeds": {"graph": 0, "data": seed, "algorithm": seed},
        "output_dir": str(tmp_path / f"quadratic-{T}-{seed}"),
        "ledger": False,
    }


def _facility_config(tmp_path, graph: str, agents: int, seed: int) -> dict:
    return {
        "name": f"facility-{graph}-{agents}-{seed}",
        "mode": "submod_max",
        "T": 1024,
        "agents": agents,
        "graph": {"kind": graph},
        "feasible_set": {"variant": "cardinality", "d": 20, "k": 5},
        "objective": {"kind": "facility", "batch_users": max(10, agents)},
        "seeds": {"graph": 0, "data": seed, "algorithm": seed},
        "output_dir": str(tmp_path / f"facility-{graph}-{agents}-{seed}"),
        "ledger": False,
    }


@pytest.mark.slow
def test_convex_regret_is_sublinear(tmp_path):
    horizons, regrets = [], []
    for T in (256, 1024, 4096):
        finals = []
        for seed in range(5):
            result = run_experiment(config_from_dict(_quadratic_config(tmp_path, T, seed)))
            finals.append(result.report.final_regret.mean())
        horizons.append(result.schedule.effective_T)
        regrets.append(float(np.mean(finals)))
    assert all(r > 0 for r in regrets)
    per_step = [r / h for r, h in zip(regrets, horizons)]
    assert per_step[0] > per_step[1] > per_step[2]
    slope = np.polyfit(np.log(horizons), np.log(regrets), 1)[0]
    assert slope <= 0.95


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(3))
def test_submodular_ratio_approaches_one(tmp_path, seed):
    result = run_experiment(config_from_dict(_facility_config(tmp_path, "complete", 10, seed)))
    ratio = result.report.ratio.mean(axis=1)
    T = result.schedule.effective_T
    assert ratio[-1] >= 0.75
    assert ratio[-(T // 4):].mean() >= ratio[T // 4 - 1]
    assert result.traces[-1].final_decisions.sum(axis=1).mean() >= 4.5


@pytest.mark.slow
def test_line_graph_does_not_beat_complete_graph(tmp_path):
    scores = {}
    for graph in ("line", "complete"):
        scores[graph] = np.mean([
            run_experiment(config_from_dict(_facility_config(tmp_path, graph, 16, seed))).report.mean_objective
            for seed in range(5)
        ])
    assert scores["line"] <= scores["complete"]


@pytest.mark.slow
def test_bandit_regret_per_step_shrinks_with_horizon(tmp_path):
    base = load_config(str(Path(__file__).resolve().parent.parent / "configs" / "bandit.yaml"))
    per_step = {}
    for T in (128, 512):
        values = []
        for seed in range(5):
            cfg = config_from_dict({
                **base.to_dict(), "T": T, "ledger": False,
                "seeds": {"graph": 0, "data": seed, "algorithm": seed},
                "output_dir": str(tmp_path / f"bandit-{T}-{seed}"),
            })
            result = run_experiment(cfg)
            n, effective_T = cfg.agents, result.schedule.effective_T
            assert sum(trace.value_queries for trace in result.traces) == n * effective_T
            points = np.concatenate([trace.played for trace in result.traces]).reshape(-1, 10)
            assert points.min() >= -1e-9 and points.max() <= 1 + 1e-9
            assert (points.sum(axis=1) <= 3 + 1e-9).all()
            regret = result.report.final_regret
            assert np.isfinite(regret).all()
            values.append(float(regret.mean()) / effective_T)
        per_step[T] = np.mean(values)
    assert per_step[512] < per_step[128]

import os
import sys

import numpy as np
import pytest
import yaml

# Add project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from app.objectives import LocalObjective
from app.topology import build_graph, metropolis_weights


class LinearLoss(LocalObjective):
    """f(x) = <c, x> + offset."""

    def __init__(self, c, offset: float = 0.0):
        self.c = np.asarray(c, dtype=float)
        self.d = self.c.shape[0]
        self.offset = offset

    def value(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float) + self.offset)

    def gradient(self, x) -> np.ndarray:
        return self.c.copy()


@pytest.fixture
def line3():
    g = build_graph("line", 3)
    return g, metropolis_weights(g)


@pytest.fixture
def write_config(tmp_path):
    """Write a config mapping as YAML and return its path."""

    def _write(data: dict, name: str = "config.yaml") -> str:
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data), encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def smoke_config(tmp_path):
    return {
        "name": "smoke",
        "mode": "convex_min",
        "T": 64,
        "agents": 3,
        "graph": {"kind": "line"},
        "feasible_set": {"variant": "box", "d": 4},
        "objective": {"kind": "quadratic", "b_low": 0.0, "b_high": 1.5, "noise_sigma": 0.1},
        "seeds": {"graph": 0, "data": 1, "algorithm": 2},
        "output_dir": str(tmp_path / "out"),
        "ledger": False,
    }


@pytest.fixture
def facility_config(tmp_path):
    return {
        "name": "facility-small",
        "mode": "submod_max",
        "T": 16,
        "agents": 2,
        "graph": {"kind": "complete"},
        "feasible_set": {"variant": "cardinality", "d": 6, "k": 2},
        "objective": {"kind": "facility", "batch_users": 4, "samples": 2},
        "output_dir": str(tmp_path / "facility"),
        "ledger": False,
    }

"""
Regret and ratio curves plus atomic emission of results.csv and JSON artifacts.
"""
import csv
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np

from app.comparator import ComparatorResult
from app.engine import BlockTrace
from app.errors import ValidationError
from app.objectives import LocalObjective
from app.schedule import CONVEX, Schedule

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["t", "block", "agent", "played_value", "cum_value", "comparator_cum", "regret", "ratio"]
APPROXIMATION = 1.0 - 1.0 / math.e


@dataclass
class RegretReport:
    """Per-agent curves over the effective horizon."""
    mode: str
    effective_T: int
    block_length: int
    schedule: dict
    played_values: np.ndarray      # (T, n) F_t(x_t^i)
    comparator_values: np.ndarray  # (T,) F_t(x*)
    cum_values: np.ndarray         # (T, n)
    comparator_cum: np.ndarray     # (T,)
    regret: np.ndarray             # (T, n)
    ratio: np.ndarray              # (T, n), NaN where the comparator sum is 0

    @property
    def n(self) -> int:
        return self.played_values.shape[1]

    @property
    def final_regret(self) -> np.ndarray:
        return self.regret[-1]

    @property
    def mean_objective(self) -> float:
        return float(self.played_values.mean())

    @property
    def block_averages(self) -> np.ndarray:
        """Mean played value per block and agent, shape (Q, n)."""
        Q = self.effective_T // self.block_length
        return self.played_values.reshape(Q, self.block_length, self.n).mean(axis=1)

    def summary(self) -> dict:
        final_ratio = self.ratio[-1]
        return {
            "mode": self.mode,
            "effective_T": self.effective_T,
            "mean_objective": self.mean_objective,
            "final_regret": [float(v) for v in self.final_regret],
            "final_ratio": [None if np.isnan(v) else float(v) for v in final_ratio],
            "comparator_total": float(self.comparator_cum[-1]),
        }


def regret_report(
    traces: Sequence[BlockTrace],
    objectives: Sequence[LocalObjective],
    comparator: ComparatorResult,
    schedule: Schedule,
) -> RegretReport:
    """Regret of every agent's plays on the global objectives F_t against the comparator."""
    if not traces:
        raise ValidationError("Regret report needs at least one block")
    played = np.concatenate([t.played for t in traces], axis=0)
    if played.shape[0] != len(objectives):
        raise ValidationError(f"{played.shape[0]} played time steps but {len(objectives)} objectives")
    if played.shape[0] != schedule.effective_T:
        raise ValidationError(f"Plays cover {played.shape[0]} time steps, schedule expects {schedule.effective_T}")

    played_values = np.stack([f.value_batch(played[t]) for t, f in enumerate(objectives)])
    comparator_values = np.array([f.value(comparator.x_star) for f in objectives])
    cum = np.cumsum(played_values, axis=0)
    comp_cum = np.cumsum(comparator_values)

    if schedule.mode == CONVEX:
        regret = cum - comp_cum[:, None]
    else:
        regret = APPROXIMATION * comp_cum[:, None] - cum
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(comp_cum[:, None] != 0, cum / comp_cum[:, None], np.nan)

    return RegretReport(
        mode=schedule.mode,
        effective_T=schedule.effective_T,
        block_length=schedule.block_length,
        schedule=schedule.to_dict(),
        played_values=played_values,
        comparator_values=comparator_values,
        cum_values=cum,
        comparator_cum=comp_cum,
        regret=regret,
        ratio=ratio,
    )


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _atomic_write(path: Path, writer) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            writer(handle)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results_csv(report: RegretReport, path) -> Path:
    path = Path(path)

    def emit(handle):
        out = csv.writer(handle, lineterminator="\n")
        out.writerow(RESULT_COLUMNS)
        for t in range(report.effective_T):
            block = t // report.block_length + 1
            for i in range(report.n):
                out.writerow([
                    t + 1, block, i + 1,
                    _fmt(report.played_values[t, i]),
                    _fmt(report.cum_values[t, i]),
                    _fmt(report.comparator_cum[t]),
                    _fmt(report.regret[t, i]),
                    _fmt(report.ratio[t, i]),
                ])

    _atomic_write(path, emit)
    logger.info("Wrote %s", path)
    return path


def write_json(payload: dict, path) -> Path:
    path = Path(path)
    _atomic_write(path, lambda handle: json.dump(payload, handle, indent=2, sort_keys=True, default=_jsonable))
    logger.info("Wrote %s", path)
    return path


def write_rows_csv(rows: List[dict], columns: Sequence[str], path) -> Path:
    """Plain CSV of dict rows in a fixed column order."""
    path = Path(path)

    def emit(handle):
        out = csv.DictWriter(handle, fieldnames=list(columns), lineterminator="\n")
        out.writeheader()
        for row in rows:
            out.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()})

    _atomic_write(path, emit)
    logger.info("Wrote %s", path)
    return path


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Cannot serialize {type(value).__name__}")

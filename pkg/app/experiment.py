"""
Experiment configuration, validation and end-to-end orchestration.
"""
import dataclasses
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import yaml

from app import config
from app.comparator import ComparatorResult, global_objectives, offline_comparator
from app.engine import EXACT, STOCHASTIC, BlockTrace, run_engine
from app.errors import ComputationError, SimulatorError, ValidationError
from app.feasible_sets import MAXIMIZE, MINIMIZE, FeasibleSet, build_feasible_set
from app.objectives import (
    FacilityLocation,
    MultilinearObjective,
    ObjectiveProfile,
    QuadraticLoss,
    profile_for_facility,
    profile_for_quadratics,
)
from app.oracles import ORACLE_KINDS, OracleBank, perturbation_scale
from app.ratings import build_table, partition_users, read_ratings_file, synthetic_table
from app.reporting import RegretReport, regret_report, write_json, write_results_csv, write_rows_csv
from app.schedule import CONVEX, MODES, Schedule, ScheduleOverrides, make_schedule
from app.theory import TheoryConstants, theory_constants
from app.topology import (
    GRAPH_KINDS,
    Graph,
    SpectralProfile,
    build_graph,
    check_mixing_matrix,
    grid_shape,
    metropolis_weights,
    spectral_profile,
)

logger = logging.getLogger(__name__)

OBJECTIVE_KINDS = ("quadratic", "facility")
SWEEP_COLUMNS = ["graph", "n", "k", "seed", "mean_objective", "final_ratio"]


@dataclass
class GraphSpec:
    kind: str = "complete"
    p: Optional[float] = None


@dataclass
class SetSpec:
    variant: str = "box"
    d: int = 2
    k: Optional[int] = None
    relation: str = "le"
    lo: Any = None
    hi: Any = None
    r: Optional[float] = None


@dataclass
class ObjectiveSpec:
    """Quadratic losses ||x - b||^2 with b uniform in [b_low, b_high]^d, or facility location on ratings."""
    kind: str = "quadratic"
    gradient: str = STOCHASTIC
    b_low: float = 0.0
    b_high: float = 1.0
    noise_sigma: float = 0.0
    ratings_path: Optional[str] = None
    batch_users: Optional[int] = None
    density: float = 0.3
    samples: int = 1


@dataclass
class OracleSpec:
    kind: str = "ftpl"
    scale: Optional[float] = None


@dataclass
class SeedSpec:
    graph: int = 0
    data: int = 0
    algorithm: int = 0


@dataclass
class ExperimentConfig:
    name: str
    mode: str
    T: int
    agents: int
    graph: GraphSpec = field(default_factory=GraphSpec)
    feasible_set: SetSpec = field(default_factory=SetSpec)
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    oracle: OracleSpec = field(default_factory=OracleSpec)
    schedule: ScheduleOverrides = field(default_factory=ScheduleOverrides)
    seeds: SeedSpec = field(default_factory=SeedSpec)
    theory_C: float = config.DEFAULT_ORACLE_C
    output_dir: Optional[str] = None
    workers: int = config.WORKERS
    ledger: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir) if self.output_dir else Path(config.OUTPUT_ROOT) / self.name


_SECTIONS = {
    "graph": GraphSpec,
    "feasible_set": SetSpec,
    "objective": ObjectiveSpec,
    "oracle": OracleSpec,
    "schedule": ScheduleOverrides,
    "seeds": SeedSpec,
}


def _section(cls, data: Any, name: str, problems: List[str]):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        problems.append(f"'{name}' must be a mapping")
        return cls()
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        problems.append(f"Unknown keys in '{name}': {', '.join(unknown)}")
    return cls(**{k: v for k, v in data.items() if k in known})


def config_from_dict(data: Dict[str, Any], base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Map a parsed YAML document onto an ExperimentConfig."""
    if not isinstance(data, dict):
        raise ValidationError("Experiment config must be a mapping")
    problems: List[str] = []
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        problems.append(f"Unknown top-level keys: {', '.join(unknown)}")
    missing = [key for key in ("name", "mode", "T", "agents") if key not in data]
    if missing:
        problems.append(f"Missing required keys: {', '.join(missing)}")
    sections = {name: _section(cls, data.get(name), name, problems) for name, cls in _SECTIONS.items()}
    if problems:
        raise ValidationError("Invalid experiment config", problems)

    scalars = {k: v for k, v in data.items() if k in top and k not in _SECTIONS}
    cfg = ExperimentConfig(**scalars, **sections)
    path = cfg.objective.ratings_path
    if path and base_dir is not None and not Path(path).is_absolute():
        cfg.objective.ratings_path = str(base_dir / path)
    return cfg


def load_config(path: str) -> ExperimentConfig:
    """Read an experiment config from a YAML file."""
    source = Path(path)
    if not source.is_file():
        raise ValidationError(f"Config file not found: {path}")
    try:
        with source.open(encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except yaml.YAMLError as e:
        raise ValidationError(f"Config {path} is not valid YAML: {e}")
    return config_from_dict(data, base_dir=source.parent)


def _set_problems(spec: SetSpec, mode: str) -> List[str]:
    problems = []
    if not isinstance(spec.d, int) or spec.d < 1:
        problems.append(f"feasible_set.d must be a positive integer, got {spec.d}")
        return problems
    if spec.variant == "cardinality":
        if spec.k is None or not 1 <= spec.k <= spec.d:
            problems.append(f"feasible_set.k must lie in [1, d={spec.d}], got {spec.k}")
        if spec.relation not in ("le", "eq"):
            problems.append(f"feasible_set.relation must be 'le' or 'eq', got {spec.relation}")
        if mode != CONVEX and spec.relation != "le":
            problems.append("Submodular and bandit modes need a down-closed set (cardinality 'le')")
    elif spec.variant == "box":
        bounds = []
        for name, value, default in (("lo", spec.lo, 0.0), ("hi", spec.hi, 1.0)):
            arr = np.asarray(default if value is None else value, dtype=float)
            if arr.ndim > 1 or arr.size not in (1, spec.d):
                problems.append(f"feasible_set.{name} must be a scalar or a vector of length {spec.d}")
            else:
                bounds.append(np.broadcast_to(arr.reshape(-1), (spec.d,)))
        if len(bounds) == 2 and mode != CONVEX and (bounds[0] != 0).any():
            problems.append("Submodular and bandit modes need a down-closed box (lo = 0)")
    else:
        problems.append(f"Unknown feasible_set.variant: {spec.variant}")
    if spec.r is not None and spec.r <= 0:
        problems.append(f"feasible_set.r must be positive, got {spec.r}")
    return problems


def validate_config(cfg: ExperimentConfig) -> None:
    """Check every cross-field constraint; raise one ValidationError listing all problems."""
    problems: List[str] = []
    if cfg.mode not in MODES:
        problems.append(f"mode must be one of {', '.join(MODES)}, got {cfg.mode}")
    if not isinstance(cfg.T, int) or cfg.T < 4:
        problems.append(f"T must be an integer >= 4, got {cfg.T}")
    if not isinstance(cfg.agents, int) or cfg.agents < 1:
        problems.append(f"agents must be a positive integer, got {cfg.agents}")
    if cfg.workers < 1:
        problems.append(f"workers must be at least 1, got {cfg.workers}")

    if cfg.graph.kind not in GRAPH_KINDS:
        problems.append(f"graph.kind must be one of {', '.join(GRAPH_KINDS)}, got {cfg.graph.kind}")
    elif cfg.graph.kind == "erdos_renyi" and cfg.graph.p is not None and not 0 < cfg.graph.p <= 1:
        problems.append(f"graph.p must lie in (0, 1], got {cfg.graph.p}")
    elif cfg.graph.kind == "grid" and isinstance(cfg.agents, int) and cfg.agents > 1:
        try:
            grid_shape(cfg.agents)
        except ValidationError as e:
            problems.append(str(e))

    problems.extend(_set_problems(cfg.feasible_set, cfg.mode))

    obj = cfg.objective
    if obj.kind not in OBJECTIVE_KINDS:
        problems.append(f"objective.kind must be one of {', '.join(OBJECTIVE_KINDS)}, got {obj.kind}")
    elif obj.kind == "quadratic" and cfg.mode != CONVEX:
        problems.append("Quadratic losses belong to the convex_min mode")
    elif obj.kind == "facility":
        if cfg.mode == CONVEX:
            problems.append("Facility location belongs to the submod_max and bandit_submod modes")
        if obj.batch_users is None or obj.batch_users < cfg.agents:
            problems.append(f"objective.batch_users must be at least agents={cfg.agents}, got {obj.batch_users}")
        if obj.ratings_path and not Path(obj.ratings_path).is_file():
            problems.append(f"Ratings file not found: {obj.ratings_path}")
        if obj.samples < 1:
            problems.append(f"objective.samples must be positive, got {obj.samples}")
        if not 0 < obj.density <= 1:
            problems.append(f"objective.density must lie in (0, 1], got {obj.density}")
    if obj.gradient not in (EXACT, STOCHASTIC):
        problems.append(f"objective.gradient must be '{EXACT}' or '{STOCHASTIC}', got {obj.gradient}")
    if obj.noise_sigma < 0:
        problems.append(f"objective.noise_sigma must be nonnegative, got {obj.noise_sigma}")
    if obj.b_low > obj.b_high:
        problems.append("objective.b_low exceeds objective.b_high")

    if cfg.oracle.kind not in ORACLE_KINDS:
        problems.append(f"oracle.kind must be one of {', '.join(ORACLE_KINDS)}, got {cfg.oracle.kind}")
    elif cfg.oracle.kind == "ogd" and cfg.mode != CONVEX:
        problems.append("The OGD oracle is only available in convex_min mode")
    if cfg.oracle.scale is not None and cfg.oracle.scale < 0:
        problems.append(f"oracle.scale must be nonnegative, got {cfg.oracle.scale}")

    if not problems:
        try:
            make_schedule(cfg.T, cfg.mode, cfg.schedule, d=cfg.feasible_set.d, r=build_set(cfg).r)
        except ValidationError as e:
            problems.append(str(e))
    if problems:
        raise ValidationError(f"Config '{cfg.name}' is invalid", problems)


def build_set(cfg: ExperimentConfig) -> FeasibleSet:
    spec = cfg.feasible_set
    return build_feasible_set(spec.variant, spec.d, k=spec.k, relation=spec.relation, lo=spec.lo, hi=spec.hi, r=spec.r)


def build_topology(cfg: ExperimentConfig):
    """Graph, mixing matrix and spectral profile of a config."""
    params = {} if cfg.graph.p is None else {"p": cfg.graph.p}
    graph = build_graph(cfg.graph.kind, cfg.agents, params, seed=cfg.seeds.graph)
    w = metropolis_weights(graph)
    problems = check_mixing_matrix(w, graph)
    if problems:
        raise ComputationError("Mixing matrix failed its checks: " + "; ".join(problems))
    return graph, w, spectral_profile(w)


def build_functions(cfg: ExperimentConfig, steps: int, feasible: FeasibleSet):
    """Per time step, per agent local objectives and the profile of their family."""
    obj = cfg.objective
    n, d = cfg.agents, cfg.feasible_set.d
    if obj.kind == "quadratic":
        rng = np.random.default_rng(cfg.seeds.data)
        bs = rng.uniform(obj.b_low, obj.b_high, size=(steps, n, d))
        functions = [[QuadraticLoss(bs[t, i], obj.noise_sigma) for i in range(n)] for t in range(steps)]
        profile = profile_for_quadratics(bs.reshape(-1, d), feasible.geometry.R, obj.noise_sigma)
        return functions, profile

    if obj.ratings_path:
        table = build_table(read_ratings_file(obj.ratings_path), d)
        if table.d < d:
            raise ValidationError(f"{obj.ratings_path} rates only {table.d} movies, need d={d}")
    else:
        table = synthetic_table(obj.batch_users * steps, d, obj.density, seed=cfg.seeds.data)
    batches = partition_users(table, obj.batch_users, steps, n, seed=cfg.seeds.data)
    functions = [
        [MultilinearObjective(FacilityLocation(batch.matrix()), samples=obj.samples) for batch in row]
        for row in batches
    ]
    max_rating = max(f.base.max_rating for row in functions for f in row)
    return functions, profile_for_facility(max_rating, d, obj.samples)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    graph: Graph
    spectral: SpectralProfile
    schedule: Schedule
    traces: List[BlockTrace]
    comparator: ComparatorResult
    report: RegretReport
    constants: TheoryConstants
    output_dir: Path

    @property
    def final_ratio(self) -> float:
        """Final ratio averaged over agents."""
        ratios = self.report.ratio[-1]
        if np.isnan(ratios).all():
            return float("nan")
        return float(np.nanmean(ratios))


def _manifest(result: ExperimentResult, feasible: FeasibleSet, profile: ObjectiveProfile, oracle_scale: float) -> dict:
    traces = result.traces
    return {
        "config": result.config.to_dict(),
        "seeds": asdict(result.config.seeds),
        "schedule": result.schedule.to_dict(),
        "effective_T": result.schedule.effective_T,
        "graph": {"kind": result.graph.kind, "n": result.graph.n, "edges": len(result.graph.edges),
                  "params": dict(result.graph.params)},
        "spectral": asdict(result.spectral),
        "feasible_set": feasible.describe(),
        "profile": asdict(profile),
        "oracle_scale": oracle_scale,
        "comparator": result.comparator.to_dict(),
        "summary": result.report.summary(),
        "gradient_queries": int(sum(t.gradient_queries for t in traces)),
        "value_queries": int(sum(t.value_queries for t in traces)),
        "messages": [int(v) for v in sum(t.messages for t in traces)],
        "profile_violations": int(sum(t.profile_violations for t in traces)),
    }


def run_experiment(cfg: ExperimentConfig, ledger=None) -> ExperimentResult:
    """Build every component, run all blocks, compare, report and write the run artifacts."""
    validate_config(cfg)
    logger.info("Run '%s' started: mode=%s T=%d n=%d graph=%s", cfg.name, cfg.mode, cfg.T, cfg.agents, cfg.graph.kind)
    try:
        graph, w, spectral = build_topology(cfg)
        feasible = build_set(cfg)
        schedule = make_schedule(cfg.T, cfg.mode, cfg.schedule, d=feasible.d, r=feasible.r)
        functions, profile = build_functions(cfg, schedule.effective_T, feasible)

        geometry = feasible.geometry
        sense = MINIMIZE if cfg.mode == CONVEX else MAXIMIZE
        scale = cfg.oracle.scale
        if scale is None:
            scale = perturbation_scale(profile.G0, feasible.d)
        oracles = OracleBank(cfg.agents, schedule.K, feasible.d, sense, cfg.oracle.kind, scale, cfg.seeds.algorithm)

        traces = run_engine(functions, oracles, w, schedule, feasible, cfg.seeds.algorithm,
                            cfg.objective.gradient, cfg.workers, profile)
        comparator = offline_comparator(functions, feasible, cfg.mode,
                                        smoothness=profile.beta * schedule.effective_T)
        report = regret_report(traces, global_objectives(functions), comparator, schedule)
        constants = theory_constants(
            n=cfg.agents, lambda2=spectral.lambda2, k0=spectral.k0, G=profile.G, G0=profile.G0,
            sigma0=profile.sigma0, B=profile.B, D=geometry.D, d=feasible.d, delta=schedule.delta,
            r=feasible.r, C=cfg.theory_C, T=schedule.effective_T, R=geometry.R, beta=profile.beta,
        )
    except SimulatorError as e:
        raise type(e)(f"Run '{cfg.name}': {e}") from e

    out = cfg.resolved_output_dir
    result = ExperimentResult(cfg, graph, spectral, schedule, traces, comparator, report, constants, out)
    write_results_csv(report, out / "results.csv")
    write_json(_manifest(result, feasible, profile, scale), out / "manifest.json")
    write_json(constants.to_dict(), out / "constants.json")

    if ledger is not None:
        ledger.record_run(
            name=cfg.name, mode=cfg.mode, graph_kind=cfg.graph.kind, n=cfg.agents, T=cfg.T,
            effective_T=schedule.effective_T, seed=cfg.seeds.algorithm, output_dir=str(out),
            mean_objective=report.mean_objective, comparator_value=comparator.value,
            outcomes=[
                (i + 1, float(report.final_regret[i]), float(report.ratio[-1, i]))
                for i in range(report.n)
            ],
        )
    logger.info("Run '%s' finished: mean objective %.6g, comparator %.6g", cfg.name,
                report.mean_objective, comparator.value)
    return result


def run_sweep(
    cfg: ExperimentConfig,
    graphs: Optional[Sequence[str]] = None,
    budgets: Optional[Sequence[Optional[int]]] = None,
    seeds: Optional[Sequence[int]] = None,
    ledger=None,
) -> Path:
    """Repeat a run over graph kinds, cardinality budgets and algorithm seeds; writes sweep.csv."""
    graphs = list(graphs or [cfg.graph.kind])
    budgets = list(budgets or [cfg.feasible_set.k])
    seeds = list(seeds or [cfg.seeds.algorithm])
    root = cfg.resolved_output_dir
    rows = []
    for kind in graphs:
        for k in budgets:
            for seed in seeds:
                tag = f"{kind}_k{k}_s{seed}"
                run_cfg = dataclasses.replace(
                    cfg,
                    name=f"{cfg.name}-{tag}",
                    graph=dataclasses.replace(cfg.graph, kind=kind),
                    feasible_set=dataclasses.replace(cfg.feasible_set, k=k),
                    seeds=dataclasses.replace(cfg.seeds, algorithm=seed),
                    output_dir=str(root / tag),
                )
                result = run_experiment(run_cfg, ledger=ledger)
                rows.append({
                    "graph": kind,
                    "n": cfg.agents,
                    "k": "" if k is None else k,
                    "seed": seed,
                    "mean_objective": result.report.mean_objective,
                    "final_ratio": result.final_ratio,
                })
    return write_rows_csv(rows, SWEEP_COLUMNS, root / "sweep.csv")

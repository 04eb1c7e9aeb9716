"""
Decentralized online Frank-Wolfe: full-information blocks (convex and DR-submodular) and bandit blocks.
"""
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from app import config
from app.errors import ComputationError, ValidationError
from app.feasible_sets import MINIMIZE, DeltaInterior, FeasibleSet, shrink_delta_interior
from app.objectives import LocalObjective, ObjectiveProfile
from app.oracles import OracleBank
from app.schedule import BANDIT, CONVEX, Schedule
from app.topology import MixingMatrix, gossip_round

logger = logging.getLogger(__name__)

# stream tags keep the random draws of different purposes independent
PERMUTATION_STREAM = 201
GRADIENT_STREAM = 202
SPHERE_STREAM = 203

EXACT = "exact"
STOCHASTIC = "stochastic"


@dataclass
class AgentState:
    """Local variables of one agent inside a block."""
    x: np.ndarray
    y: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    g_tilde: Optional[np.ndarray] = None
    d_tilde: Optional[np.ndarray] = None
    a_tilde: Optional[np.ndarray] = None
    stored_iterates: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def start(cls, x0: np.ndarray) -> "AgentState":
        x0 = np.array(x0, dtype=float)
        return cls(x=x0, a_tilde=np.zeros_like(x0), stored_iterates=[x0.copy()])


@dataclass
class BlockTrace:
    """Everything one block played, observed and exchanged."""
    q: int
    played: np.ndarray            # (slots, n, d)
    observed: np.ndarray          # (slots, n) local function values at the plays
    iterates: np.ndarray          # (K+1, n, d), x_{q,1..K+1}
    directions: np.ndarray        # (K, n, d), oracle outputs v_{q,k}
    local_gradients: np.ndarray   # (K, n, d), gradient (or one-point estimate) at iterate k
    tracked: np.ndarray           # (K, n, d), g~_{q,k}
    mixed: np.ndarray             # (K, n, d), d~_{q,k}
    averaged: np.ndarray          # (K, n, d), a~_{q,k}
    permutation: np.ndarray       # sigma_q, 0-based: iterate s uses function/slot permutation[s]
    consensus_deviation: np.ndarray  # (K, n), ||x^i_{q,k} - mean_j x^j_{q,k}||
    gradient_queries: int = 0
    value_queries: int = 0
    messages: Optional[np.ndarray] = None  # (n,) vector sends per agent
    profile_violations: int = 0

    @property
    def final_decisions(self) -> np.ndarray:
        return self.iterates[-1]

    def diagnostics(self) -> dict:
        return {
            "q": self.q,
            "consensus_deviation": float(self.consensus_deviation.mean()),
            "mixed_norm": float(np.linalg.norm(self.mixed, axis=2).mean()),
            "averaged_norm": float(np.linalg.norm(self.averaged, axis=2).mean()),
        }


def fw_update(y, v, eta: float, mode: str) -> np.ndarray:
    """Convex: (1 - eta) y + eta v. Submodular and bandit: y + eta v."""
    if not 0.0 < eta <= 1.0:
        raise ValidationError(f"Step size must lie in (0, 1], got {eta}")
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    if mode == CONVEX:
        return (1.0 - eta) * y + eta * v
    return y + eta * v


def permute_block(count: int, q: int, seed: int) -> np.ndarray:
    """Block permutation sigma_q shared by all agents; entry s is sigma_q(s+1) - 1."""
    if count < 1:
        raise ValidationError("Permutation size must be positive")
    rng = np.random.default_rng([seed, PERMUTATION_STREAM, q])
    return rng.permutation(count)


def invert_permutation(perm: np.ndarray) -> np.ndarray:
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(len(perm))
    return inverse


def sample_unit_sphere(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the unit sphere S^{d-1} (normalized isotropic Gaussian)."""
    if d < 1:
        raise ValidationError("Sphere dimension must be positive")
    while True:
        g = rng.standard_normal(d)
        norm = np.linalg.norm(g)
        if norm > 0:
            return g / norm


def one_point_gradient(fvalue: float, u, d: int, delta: float) -> np.ndarray:
    """(d / delta) * f(x + delta u) * u."""
    if delta <= 0:
        raise ValidationError(f"Smoothing radius must be positive, got {delta}")
    return (d / delta) * float(fvalue) * np.asarray(u, dtype=float)


def _degrees(w: MixingMatrix) -> np.ndarray:
    off = w.entries.copy()
    np.fill_diagonal(off, 0.0)
    return (off > 0).sum(axis=1)


def _map_agents(fn: Callable[[int], object], n: int, workers: int) -> list:
    # fn takes the 1-based agent index; results come back in agent order
    if workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(1, n + 1)))
    return [fn(i) for i in range(1, n + 1)]


class _BlockRunner:
    """Shared machinery of the full-information and bandit blocks."""

    def __init__(
        self,
        agents: List[AgentState],
        functions: Sequence[Sequence[LocalObjective]],
        oracles: OracleBank,
        w: MixingMatrix,
        schedule: Schedule,
        q: int,
        seed: int,
        workers: int = 1,
        profile: Optional[ObjectiveProfile] = None,
    ):
        self.agents = agents
        self.functions = functions
        self.oracles = oracles
        self.w = w
        self.schedule = schedule
        self.q = q
        self.seed = seed
        self.workers = workers
        self.profile = profile
        self.n = w.n
        self.K = schedule.K
        self.degrees = _degrees(w)
        self.messages = np.zeros(self.n, dtype=int)
        self.gradient_queries = 0
        self.value_queries = 0
        self.profile_violations = 0
        self._lock = threading.Lock()
        if len(agents) != self.n:
            raise ValidationError(f"Expected {self.n} agents, got {len(agents)}")
        if len(functions) != schedule.block_length:
            raise ValidationError(
                f"Block {q} needs {schedule.block_length} time steps of functions, got {len(functions)}"
            )
        for t, row in enumerate(functions):
            if len(row) != self.n:
                raise ValidationError(f"Time step {t} of block {q} has {len(row)} functions for {self.n} agents")

    def _exchange(self, vectors: List[np.ndarray]) -> List[np.ndarray]:
        # every agent sends its vector to each neighbor once
        self.messages += self.degrees
        return gossip_round(vectors, self.w)

    def frank_wolfe_steps(self, oracle_set: FeasibleSet, member_set: FeasibleSet):
        """K Frank-Wolfe steps; returns stacked iterates, oracle outputs and consensus deviations."""
        directions = []
        deviations = []
        for k in range(1, self.K + 1):
            xs = [a.x for a in self.agents]
            stacked = np.stack(xs)
            deviations.append(np.linalg.norm(stacked - stacked.mean(axis=0), axis=1))
            vs = _map_agents(lambda i: self.oracles.decide(i, k, self.q, oracle_set), self.n, self.workers)
            ys = self._exchange(xs)
            eta = self.schedule.eta(k)
            for i, agent in enumerate(self.agents):
                agent.v = vs[i]
                agent.y = ys[i]
                agent.x = fw_update(ys[i], vs[i], eta, self.schedule.mode)
                if not member_set.contains(agent.x, config.MEMBERSHIP_TOL):
                    raise ComputationError(
                        f"Iterate x^{i + 1}_({self.q},{k + 1}) left the feasible set: {agent.x}"
                    )
                agent.stored_iterates.append(agent.x.copy())
            directions.append(np.stack(vs))
        iterates = np.stack([np.stack(a.stored_iterates) for a in self.agents], axis=1)
        return iterates, np.stack(directions), np.stack(deviations)

    def _check_gradient(self, grad: np.ndarray, i: int, s: int) -> np.ndarray:
        if not np.isfinite(grad).all():
            raise ComputationError(f"Non-finite gradient for agent {i} at iterate {s} of block {self.q}")
        with self._lock:
            self.gradient_queries += 1
            if self.profile is not None and np.linalg.norm(grad) > self.profile.G0 + 1e-9:
                self.profile_violations += 1
        return grad

    def track_and_feed(self, estimate: Callable[[int, int], np.ndarray], oracle_set: FeasibleSet):
        """Gradient tracking, variance reduction and oracle feedback over k = 1..K."""
        local, tracked, mixed, averaged = [], [], [], []
        h_prev = _map_agents(lambda i: estimate(i, 1), self.n, self.workers)
        for i, agent in enumerate(self.agents):
            agent.g_tilde = h_prev[i]
        for k in range(1, self.K + 1):
            gs = [a.g_tilde for a in self.agents]
            ds = self._exchange(gs)
            h_next = None
            if k < self.K:
                h_next = _map_agents(lambda i: estimate(i, k + 1), self.n, self.workers)
            rho = self.schedule.rho(k)
            for i, agent in enumerate(self.agents):
                agent.d_tilde = ds[i]
                agent.a_tilde = (1.0 - rho) * agent.a_tilde + rho * ds[i]
                self.oracles.feedback(i + 1, k, agent.a_tilde, oracle_set)
            local.append(np.stack(h_prev))
            tracked.append(np.stack(gs))
            mixed.append(np.stack(ds))
            averaged.append(np.stack([a.a_tilde for a in self.agents]))
            if h_next is not None:
                for i, agent in enumerate(self.agents):
                    agent.g_tilde = h_next[i] - h_prev[i] + ds[i]
                h_prev = h_next
        return np.stack(local), np.stack(tracked), np.stack(mixed), np.stack(averaged)

    def check_budget(self, expected_queries: int, kind: str, queries: int) -> None:
        if queries != expected_queries:
            raise ComputationError(f"Block {self.q}: {queries} {kind} queries, expected {expected_queries}")
        expected_messages = 2 * self.K * self.degrees
        if not np.array_equal(self.messages, expected_messages):
            raise ComputationError(f"Block {self.q}: message counts {self.messages} differ from {expected_messages}")


def initial_point(feasible: FeasibleSet, mode: str) -> np.ndarray:
    """Convex mode starts at the tie-break vertex; submodular mode at the origin."""
    if mode == CONVEX:
        return feasible.lmo(np.zeros(feasible.d), MINIMIZE)
    if isinstance(feasible, DeltaInterior):
        return feasible.lower_bound.copy()
    return np.zeros(feasible.d)


def run_block_fullinfo(
    agents: List[AgentState],
    functions: Sequence[Sequence[LocalObjective]],
    oracles: OracleBank,
    w: MixingMatrix,
    schedule: Schedule,
    q: int,
    seed: int,
    feasible: FeasibleSet,
    gradient_access: str = STOCHASTIC,
    workers: int = 1,
    profile: Optional[ObjectiveProfile] = None,
) -> BlockTrace:
    """One block of decentralized Frank-Wolfe with full (stochastic) gradient access."""
    if schedule.mode == BANDIT:
        raise ValidationError("Use run_block_bandit for the bandit mode")
    runner = _BlockRunner(agents, functions, oracles, w, schedule, q, seed, workers, profile)
    x0 = initial_point(feasible, schedule.mode)
    for idx in range(runner.n):
        agents[idx] = AgentState.start(x0)
    runner.agents = agents

    iterates, directions, deviations = runner.frank_wolfe_steps(feasible, feasible)
    final = iterates[-1]

    slots = schedule.block_length
    played = np.broadcast_to(final, (slots,) + final.shape).copy()
    observed = np.array([[functions[t][i].value(final[i]) for i in range(runner.n)] for t in range(slots)])

    sigma = permute_block(runner.K, q, seed)

    def estimate(i: int, s: int) -> np.ndarray:
        f = functions[sigma[s - 1]][i - 1]
        x = agents[i - 1].stored_iterates[s - 1]
        if gradient_access == EXACT:
            grad = f.gradient(x)
        else:
            grad = f.stochastic_gradient(x, np.random.default_rng([seed, GRADIENT_STREAM, i, q, s]))
        return runner._check_gradient(np.asarray(grad, dtype=float), i, s)

    local, tracked, mixed, averaged = runner.track_and_feed(estimate, feasible)
    runner.check_budget(runner.n * runner.K, "gradient", runner.gradient_queries)

    return BlockTrace(
        q=q, played=played, observed=observed, iterates=iterates, directions=directions,
        local_gradients=local, tracked=tracked, mixed=mixed, averaged=averaged, permutation=sigma,
        consensus_deviation=deviations, gradient_queries=runner.gradient_queries,
        value_queries=0, messages=runner.messages.copy(), profile_violations=runner.profile_violations,
    )


def run_block_bandit(
    agents: List[AgentState],
    functions: Sequence[Sequence[LocalObjective]],
    oracles: OracleBank,
    w: MixingMatrix,
    schedule: Schedule,
    interior: DeltaInterior,
    q: int,
    seed: int,
    workers: int = 1,
) -> BlockTrace:
    """One bandit block: K exploration plays, L - K exploitation plays."""
    if schedule.mode != BANDIT:
        raise ValidationError("run_block_bandit needs a bandit schedule")
    K, L = schedule.K, schedule.L
    if not (K < L and L >= 2 * K):
        raise ValidationError(f"Bandit block needs K < L and L >= 2K, got K={K}, L={L}")
    base = interior.base
    runner = _BlockRunner(agents, functions, oracles, w, schedule, q, seed, workers)
    n, d, delta = runner.n, interior.d, interior.delta
    for idx in range(n):
        agents[idx] = AgentState.start(interior.lower_bound)
    runner.agents = agents

    iterates, directions, deviations = runner.frank_wolfe_steps(interior, base)
    final = iterates[-1]

    sigma = permute_block(L, q, seed)
    rank = invert_permutation(sigma)
    spheres = np.stack([
        np.stack([
            sample_unit_sphere(d, np.random.default_rng([seed, SPHERE_STREAM, i, q, s]))
            for i in range(1, n + 1)
        ])
        for s in range(1, K + 1)
    ])

    played = np.empty((L, n, d))
    observed = np.empty((L, n))
    surrogates = np.empty((K, n, d))
    for t in range(L):
        s = rank[t] + 1
        for i in range(n):
            if s <= K:
                point = iterates[s - 1, i] + delta * spheres[s - 1, i]
                if not base.contains(point, config.MEMBERSHIP_TOL):
                    raise ComputationError(
                        f"Exploration point of agent {i + 1} in block {q} left the feasible set "
                        f"(delta={delta:g}, alpha={interior.alpha:g}, r={interior.r:g}): {point}"
                    )
            else:
                point = final[i]
            value = functions[t][i].value(point)
            runner.value_queries += 1
            played[t, i] = point
            observed[t, i] = value
            if s <= K:
                surrogates[s - 1, i] = one_point_gradient(value, spheres[s - 1, i], d, delta)

    def estimate(i: int, s: int) -> np.ndarray:
        return surrogates[s - 1, i - 1]

    local, tracked, mixed, averaged = runner.track_and_feed(estimate, interior)
    runner.check_budget(n * L, "function-value", runner.value_queries)

    return BlockTrace(
        q=q, played=played, observed=observed, iterates=iterates, directions=directions,
        local_gradients=local, tracked=tracked, mixed=mixed, averaged=averaged, permutation=sigma,
        consensus_deviation=deviations, gradient_queries=0, value_queries=runner.value_queries,
        messages=runner.messages.copy(),
    )


def run_engine(
    functions: Sequence[Sequence[LocalObjective]],
    oracles: OracleBank,
    w: MixingMatrix,
    schedule: Schedule,
    feasible: FeasibleSet,
    seed: int,
    gradient_access: str = STOCHASTIC,
    workers: int = 1,
    profile: Optional[ObjectiveProfile] = None,
) -> List[BlockTrace]:
    """Run all Q blocks over the first effective_T time steps of the function sequence."""
    if len(functions) < schedule.effective_T:
        raise ValidationError(f"Need {schedule.effective_T} time steps of functions, got {len(functions)}")
    agents = [AgentState.start(np.zeros(feasible.d)) for _ in range(w.n)]
    interior = None
    if schedule.mode == BANDIT:
        interior = shrink_delta_interior(feasible, schedule.delta, feasible.r)

    traces = []
    L = schedule.block_length
    for q in range(1, schedule.Q + 1):
        block = functions[(q - 1) * L:q * L]
        if interior is not None:
            trace = run_block_bandit(agents, block, oracles, w, schedule, interior, q, seed, workers)
        else:
            trace = run_block_fullinfo(
                agents, block, oracles, w, schedule, q, seed, feasible, gradient_access, workers, profile
            )
        logger.debug("block %(q)d: consensus=%(consensus_deviation).3e |d~|=%(mixed_norm).3e "
                     "|a~|=%(averaged_norm).3e", trace.diagnostics())
        traces.append(trace)

    violations = sum(t.profile_violations for t in traces)
    if violations:
        logger.warning("%d stochastic gradients exceeded the profile bound G0", violations)
    return traces

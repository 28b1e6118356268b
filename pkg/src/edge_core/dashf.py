# edge_core/dashf.py

"""
Dinkelbach driver: maximize V/(ω_t·T + ω_e·E) by repeatedly maximizing
V − y·(ω_t·T + ω_e·E) with alternating association and resource steps, then
resetting y to the ratio reached. The baselines reuse the same loop with
simpler steps.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config_settings import DASHF_MAX_OUTER, DEFAULT_EPSILON, MONOTONE_TOL, RUCAA_SEED_OFFSET
from constants import DEFAULT_SEED, Algorithm
from edge_core import association, resources
from edge_core.errors import EdgeCoreError
from edge_core.model import (
    Allocation,
    CostBreakdown,
    Scenario,
    Violation,
    allocation_scr,
    check_feasibility,
    evaluate,
    scr,
)
from edge_core.scenario import RngSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TraceRow:
    iter: int
    y: float
    scr: float
    obj_part1: float
    obj_part2: float
    T_total: float
    E_total: float
    V: float
    wall_ms: float
    part2_trace: Tuple[float, ...] = ()

    def as_dict(self) -> Dict[str, float]:
        return {
            "iter": self.iter, "y": self.y, "scr": self.scr,
            "obj_part1": self.obj_part1, "obj_part2": self.obj_part2,
            "T_total": self.T_total, "E_total": self.E_total, "V": self.V,
            "wall_ms": self.wall_ms,
        }


@dataclass
class RunTrace:
    """Row 0 is the initial allocation; row i is the state after outer iteration i."""
    algorithm: str
    rows: List[TraceRow] = field(default_factory=list)
    monotone: bool = True

    def ys(self) -> List[float]:
        return [r.y for r in self.rows]

    def scrs(self) -> List[float]:
        return [r.scr for r in self.rows]

    @property
    def iterations(self) -> int:
        return len(self.rows) - 1


@dataclass(frozen=True, eq=False)
class Solution:
    algorithm: str
    allocation: Allocation
    scr: float
    breakdown: CostBreakdown
    converged: bool
    iterations: int
    violations: Tuple[Violation, ...] = ()
    message: str = ""

    @property
    def feasible(self) -> bool:
        return not self.violations


# ─────────────────────────────────────────────────────────────────────────────
# Starting points
# ─────────────────────────────────────────────────────────────────────────────

def cyclic_association(n_users: int, n_servers: int) -> np.ndarray:
    x = np.zeros((n_users, n_servers))
    x[np.arange(n_users), np.arange(n_users) % n_servers] = 1.0
    return x


def greedy_association(n_users: int, n_servers: int) -> np.ndarray:
    """Users in index order join the least-loaded server, ties to the lowest index."""
    x = np.zeros((n_users, n_servers))
    load = np.zeros(n_servers, dtype=int)
    for n in range(n_users):
        m = int(np.argmin(load))
        x[n, m] = 1.0
        load[m] += 1
    return x


def random_association(n_users: int, n_servers: int, rng: np.random.Generator) -> np.ndarray:
    x = np.zeros((n_users, n_servers))
    x[np.arange(n_users), rng.integers(0, n_servers, size=n_users)] = 1.0
    return x


def _with_implied_T(scn: Scenario, a: Allocation) -> Allocation:
    return a.replace(T=evaluate(scn, a).T_total)


def initialize(scn: Scenario) -> Allocation:
    """Cyclic association, every cap split N ways, user caps in full, phi = 0.5."""
    N, M = scn.N, scn.M
    ones = np.ones((N, M))
    a = Allocation(
        x=cyclic_association(N, M),
        phi=np.full(N, 0.5),
        b=ones * scn.b_max / N,
        p_u=scn.p_max_n,
        p_s=ones * scn.p_max_m / N,
        f_u=scn.F_max_n,
        f_s=ones * scn.F_max_m / N,
        T=0.0,
    )
    return _with_implied_T(scn, a)


def problem_size(n_users: int, n_servers: int) -> Dict[str, int]:
    """Variable and constraint counts of the two alternating blocks."""
    N, M = n_users, n_servers
    return {
        "part1_variables": N * (M + 1) + 1,
        "part1_constraints": N * (2 * M + 2) + 3 * M,
        "part2_variables": N * (3 * M + 2) + 1,
        "part2_constraints": N * (M + 2) + 3 * M,
    }


# ─────────────────────────────────────────────────────────────────────────────
# Steps
# ─────────────────────────────────────────────────────────────────────────────

Part1Fn = Callable[[Allocation, float], Tuple[Allocation, float]]
Part2Fn = Callable[[Allocation, float], Tuple[Allocation, float, List[float]]]

# Failures inside one outer iteration that leave the previous iterate usable
STEP_ERRORS = (EdgeCoreError, np.linalg.LinAlgError, FloatingPointError)


def _direct(scn: Scenario, a: Allocation, y: float) -> float:
    return resources.direct_objective(a, scn, a.x, a.phi, y)


def association_step(scn: Scenario, relax: bool) -> Part1Fn:
    """Part 1 as a loop step: SDR rounding when `relax`, otherwise the split refit of the incumbent."""
    def step(a: Allocation, y: float):
        res = association.solve_part1(scn, a, y, relax=relax)
        return res.allocation, -res.objective
    return step


def _uniform_association_step(scn: Scenario) -> Part1Fn:
    """Association chosen against cap/N resource tables, then split by connected count."""
    def step(a: Allocation, y: float):
        incumbent = association.solve_part1(scn, a, y, relax=False)
        best, best_obj = incumbent.allocation, -incumbent.objective
        uniform = initialize(scn).replace(x=a.x, phi=a.phi, T=a.T)
        proposal = association.solve_part1(scn, uniform, y)
        if proposal.switched:
            candidate = resources.equal_split(scn, proposal.allocation.x, proposal.allocation.phi)
            refit = association.solve_part1(scn, candidate, y, relax=False)
            if -refit.objective > best_obj:
                best, best_obj = refit.allocation, -refit.objective
        return best, best_obj
    return step


def resource_step(scn: Scenario, pool: Sequence[Allocation] = ()) -> Part2Fn:
    """
    Part 2 from several starts: the incumbent, the equal split of its
    association and every pooled allocation with the same association.
    The best direct objective wins.
    """
    def step(a: Allocation, y: float):
        starts = [a, resources.equal_split(scn, a.x, a.phi)]
        starts += [p.replace(x=a.x, phi=a.phi) for p in pool if np.array_equal(p.x, a.x)]
        best = None
        for k, start in enumerate(starts):
            res = resources.solve_part2(scn, a.x, a.phi, y, start)
            logger.debug(f"🔍 Resource start {k}: objective {res.objective:.9e}")
            if best is None or res.objective > best.objective:
                best = res
        return best.allocation, best.objective, best.trace
    return step


def _fixed_resources_step(scn: Scenario) -> Part2Fn:
    def step(a: Allocation, y: float):
        obj = _direct(scn, a, y)
        return a, obj, [obj]
    return step


# ─────────────────────────────────────────────────────────────────────────────
# Dinkelbach loop
# ─────────────────────────────────────────────────────────────────────────────

def _finish(algorithm: str, scn: Scenario, a: Allocation, converged: bool, iterations: int,
            message: str = "") -> Solution:
    bd = evaluate(scn, a)
    violations = tuple(check_feasibility(scn, a))
    if violations:
        logger.error(f"❌ {algorithm}: returned allocation violates {len(violations)} constraints: {violations[0]}")
    return Solution(algorithm=algorithm, allocation=a, scr=scr(bd, scn.omega_t, scn.omega_e), breakdown=bd,
                    converged=converged, iterations=iterations, violations=violations, message=message)


def _warm_restart(scn: Scenario, pending: List[Allocation], y: float) -> Optional[Tuple[Allocation, float]]:
    """Best pending warm start with a ratio above y, removed from the list."""
    scored = [(allocation_scr(scn, w), k) for k, w in enumerate(pending)]
    better = [(s, k) for s, k in scored if s > y]
    if not better:
        return None
    s, k = max(better)
    return pending.pop(k), s


def dinkelbach_loop(algorithm: str, scn: Scenario, start: Allocation, part1: Part1Fn, part2: Part2Fn,
                    epsilon: float, max_outer: int,
                    warm_starts: Sequence[Allocation] = ()) -> Tuple[Solution, RunTrace]:
    """
    Alternate part1 and part2 at fixed y, then reset y to the ratio reached.
    Stops when y grows by at most epsilon (relative) and no warm start has a
    better ratio; otherwise the loop continues from that warm start. The best
    allocation seen is returned.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    trace = RunTrace(algorithm=algorithm)
    a = _with_implied_T(scn, start)
    bd = evaluate(scn, a)
    y = scr(bd, scn.omega_t, scn.omega_e)
    trace.rows.append(TraceRow(0, y, y, math.nan, math.nan, bd.T_total, bd.E_total, bd.V, 0.0))
    best_a, best_y = a, y
    pending = [_with_implied_T(scn, w) for w in warm_starts]
    converged = False
    message = ""
    logger.info(f"🚀 {algorithm}: N={scn.N}, M={scn.M}, initial SCR {y:.6e}")

    for it in range(1, max_outer + 1):
        t0 = time.perf_counter()
        try:
            a1, obj1 = part1(a, y)
            a2, obj2, inner = part2(a1, y)
        except STEP_ERRORS as e:
            message = f"iteration {it} failed: {type(e).__name__}: {e}"
            logger.error(f"❌ {algorithm}: {message}; keeping the best consistent iterate")
            break
        bd = evaluate(scn, a2)
        y_new = scr(bd, scn.omega_t, scn.omega_e)
        wall_ms = (time.perf_counter() - t0) * 1000.0
        trace.rows.append(TraceRow(it, y_new, y_new, obj1, obj2, bd.T_total, bd.E_total, bd.V, wall_ms, tuple(inner)))
        logger.info(f"🔄 {algorithm} iteration {it}: SCR {y_new:.6e} (Part 1 {obj1:.4e}, Part 2 {obj2:.4e}, "
                    f"{wall_ms:.0f} ms)")

        if y_new < y * (1.0 - MONOTONE_TOL):
            trace.monotone = False
            logger.warning(f"⚠️ {algorithm}: SCR decreased {y:.9e} -> {y_new:.9e} at iteration {it}")
        if y_new > best_y:
            best_a, best_y = a2, y_new

        done = y_new / y - 1.0 <= epsilon
        a, y = a2, y_new
        if done:
            restart = _warm_restart(scn, pending, y)
            if restart is None:
                converged = True
                break
            a, y = restart
            logger.info(f"🔄 {algorithm}: stationary at SCR {y_new:.6e}, continuing from a warm start with SCR {y:.6e}")
            if y > best_y:
                best_a, best_y = a, y

    if not converged and not message:
        message = f"no convergence within {max_outer} iterations"
        logger.warning(f"⚠️ {algorithm}: {message}")
    leftover = _warm_restart(scn, pending, best_y)
    if leftover is not None:
        best_a, best_y = leftover
    solution = _finish(algorithm, scn, best_a, converged, trace.iterations, message)
    logger.info(f"📊 {algorithm}: SCR {solution.scr:.6e} after {trace.iterations} iterations "
                f"(T={solution.breakdown.T_total:.4e} s, E={solution.breakdown.E_total:.4e} J)")
    return solution, trace


# ─────────────────────────────────────────────────────────────────────────────
# Algorithms
# ─────────────────────────────────────────────────────────────────────────────

def coordinate_pass(scn: Scenario, epsilon: float = DEFAULT_EPSILON,
                    max_outer: int = DASHF_MAX_OUTER) -> Tuple[Solution, RunTrace]:
    """Greedy association with equal shares, then split refits and resource steps only."""
    x = greedy_association(scn.N, scn.M)
    return dinkelbach_loop(f"{Algorithm.DASHF.value}:warm", scn, resources.equal_split(scn, x),
                           association_step(scn, relax=False), resource_step(scn), epsilon, max_outer)


def run(scn: Scenario, epsilon: float = DEFAULT_EPSILON, max_outer: int = DASHF_MAX_OUTER) -> Tuple[Solution, RunTrace]:
    """
    DASHF from the cap/N initial allocation. A coordinate pass supplies a warm
    start: its resources seed the resource step whenever the associations
    agree, and the loop continues from it if it stalls below its ratio.
    """
    warm, _ = coordinate_pass(scn, epsilon, max_outer)
    pool = [warm.allocation]
    return dinkelbach_loop(Algorithm.DASHF.value, scn, initialize(scn),
                           association_step(scn, relax=True), resource_step(scn, pool), epsilon, max_outer,
                           warm_starts=pool)


def run_rucaa(scn: Scenario, epsilon: float = DEFAULT_EPSILON, max_outer: int = DASHF_MAX_OUTER,
              seed: Optional[int] = None) -> Tuple[Solution, RunTrace]:
    base = seed if seed is not None else (scn.seed if scn.seed is not None else DEFAULT_SEED)
    rng = RngSpec(base + RUCAA_SEED_OFFSET).generator()
    x = random_association(scn.N, scn.M, rng)
    return dinkelbach_loop(Algorithm.RUCAA.value, scn, resources.equal_split(scn, x),
                           association_step(scn, relax=False), _fixed_resources_step(scn), epsilon, max_outer)


def run_gucaa(scn: Scenario, epsilon: float = DEFAULT_EPSILON, max_outer: int = DASHF_MAX_OUTER) -> Tuple[Solution, RunTrace]:
    x = greedy_association(scn.N, scn.M)
    return dinkelbach_loop(Algorithm.GUCAA.value, scn, resources.equal_split(scn, x),
                           association_step(scn, relax=False), _fixed_resources_step(scn), epsilon, max_outer)


def run_aauco(scn: Scenario, epsilon: float = DEFAULT_EPSILON, max_outer: int = DASHF_MAX_OUTER) -> Tuple[Solution, RunTrace]:
    x = cyclic_association(scn.N, scn.M)
    return dinkelbach_loop(Algorithm.AAUCO.value, scn, resources.equal_split(scn, x),
                           _uniform_association_step(scn), _fixed_resources_step(scn), epsilon, max_outer)


def run_gucro(scn: Scenario, epsilon: float = DEFAULT_EPSILON, max_outer: int = DASHF_MAX_OUTER) -> Tuple[Solution, RunTrace]:
    x = greedy_association(scn.N, scn.M)
    return dinkelbach_loop(Algorithm.GUCRO.value, scn, resources.equal_split(scn, x),
                           association_step(scn, relax=False), resource_step(scn), epsilon, max_outer)


def run_algorithm(name: str, scn: Scenario, epsilon: float = DEFAULT_EPSILON,
                  max_outer: int = DASHF_MAX_OUTER) -> Tuple[Solution, RunTrace]:
    """Dispatch by CLI label; shared by the command handlers and the worker pool."""
    algorithm = Algorithm(name)
    if algorithm is Algorithm.DASHF:
        return run(scn, epsilon, max_outer)
    if algorithm is Algorithm.RUCAA:
        return run_rucaa(scn, epsilon, max_outer)
    if algorithm is Algorithm.GUCAA:
        return run_gucaa(scn, epsilon, max_outer)
    if algorithm is Algorithm.AAUCO:
        return run_aauco(scn, epsilon, max_outer)
    if algorithm is Algorithm.GUCRO:
        return run_gucro(scn, epsilon, max_outer)
    from edge_core.oracle import exhaustive_association_search
    return exhaustive_association_search(scn, epsilon=epsilon, max_outer=max_outer)

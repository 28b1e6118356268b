# edge_core/oracle.py

"""
Brute-force references for the solvers. The cost model is re-derived here
from scalar formulas with the math module so that oracle-versus-solver
comparisons do not share evaluation code with edge_core.model.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from config_settings import (
    DASHF_MAX_OUTER,
    DEFAULT_EPSILON,
    FEASIBILITY_TOL,
    ORACLE_MAX_ASSOCIATIONS,
    ORACLE_MAX_GRID_POINTS,
    ORACLE_MAX_JOINT_ASSOCIATIONS,
)
from constants import Algorithm
from edge_core import dashf, resources
from edge_core.errors import InfeasibleProblemError, OracleRefusedError
from edge_core.model import Allocation, Scenario

logger = logging.getLogger(__name__)


# ─────────────────────────────────────────────────────────────────────────────
# Scalar cost model
# ─────────────────────────────────────────────────────────────────────────────

def scalar_rate(b: float, p: float, g: float, sigma2: float) -> float:
    if b == 0 or p == 0:
        return 0.0
    return b * math.log2(1.0 + g * p / (sigma2 * b))


def _ratio(num: float, den: float) -> float:
    if num == 0:
        return 0.0
    return num / den if den > 0 else math.inf


def pair_phases(scn: Scenario, a: Allocation, n: int, m: int) -> Tuple[List[float], List[float]]:
    """([T1..T4], [E1..E4]) of one pair from the scalar formulas."""
    u, s = scn.users[n], scn.servers[m]
    x = float(a.x[n, m])
    phi = float(a.phi[n])
    b, p_u, p_s = float(a.b[n, m]), float(a.p_u[n]), float(a.p_s[n, m])
    f_u, f_s = float(a.f_u[n]), float(a.f_s[n, m])
    g = float(scn.g[n, m])
    bits = u.d * scn.omega_b

    r_up = scalar_rate(b, p_u, g, scn.sigma2)
    r_dn = scalar_rate(b, p_s, g, scn.sigma2)
    T1 = _ratio(u.t * phi * u.d * u.e, f_u)
    T2 = _ratio(x * phi * bits, r_up)
    T3 = _ratio(u.t * (1.0 - phi) * x * u.d * s.e, f_s)
    T4 = _ratio(x * (1.0 - phi) * bits, r_dn)
    E1 = x * u.e * u.kappa * phi * u.d * u.t * f_u ** 2
    E2 = p_u * T2 if p_u else 0.0
    E3 = s.e * s.kappa * x * (1.0 - phi) * u.d * u.t * f_s ** 2
    E4 = p_s * T4 if p_s else 0.0
    return [T1, T2, T3, T4], [E1, E2, E3, E4]


def scalar_score(scn: Scenario, a: Allocation, n: int, m: int) -> float:
    s = scn.servers[m]
    share = a.p_s[n, m] / s.p_max + a.f_s[n, m] / s.F_max + a.b[n, m] / s.b_max
    return scn.varpi1 * math.log(1.0 + scn.varpi2 * share)


def scalar_cost(scn: Scenario, a: Allocation) -> Dict[str, float]:
    """V, T_total and E_total summed pair by pair."""
    V = 0.0
    T_total = 0.0
    E_total = 0.0
    for n in range(scn.N):
        for m in range(scn.M):
            delays, energies = pair_phases(scn, a, n, m)
            T_total = max(T_total, sum(delays))
            E_total += sum(energies)
            V += a.x[n, m] * scalar_score(scn, a, n, m)
    return {"V": V, "T_total": T_total, "E_total": E_total}


def scalar_scr(scn: Scenario, a: Allocation) -> float:
    c = scalar_cost(scn, a)
    return c["V"] / (scn.omega_t * c["T_total"] + scn.omega_e * c["E_total"])


def scalar_dinkelbach(scn: Scenario, a: Allocation, y: float) -> float:
    """V − y·(ω_t·T_total + ω_e·E_total) with T the implied maximum delay."""
    c = scalar_cost(scn, a)
    return c["V"] - y * (scn.omega_t * c["T_total"] + scn.omega_e * c["E_total"])


def scalar_caps_ok(scn: Scenario, a: Allocation, tol: float = FEASIBILITY_TOL) -> bool:
    for m, s in enumerate(scn.servers):
        for table, cap in ((a.b, s.b_max), (a.p_s, s.p_max), (a.f_s, s.F_max)):
            if sum(a.x[n, m] * table[n, m] for n in range(scn.N)) > cap * (1.0 + tol):
                return False
    for n, u in enumerate(scn.users):
        if a.p_u[n] > u.p_max * (1.0 + tol) or a.f_u[n] > u.F_max * (1.0 + tol):
            return False
    tables = (a.b, a.p_u, a.p_s, a.f_u, a.f_s)
    return all(np.all(np.asarray(t) >= 0) for t in tables)


# ─────────────────────────────────────────────────────────────────────────────
# Association enumeration
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class OracleAssociation:
    x: np.ndarray
    phi: np.ndarray
    objective: float         # minimized association-block objective (negated Dinkelbach value)
    evaluated: int


def _one_hot(servers: Sequence[int], n_servers: int) -> np.ndarray:
    x = np.zeros((len(servers), n_servers))
    x[np.arange(len(servers)), list(servers)] = 1.0
    return x


def _affine_in_phi(scn: Scenario, a: Allocation, n: int, m: int):
    """Slopes and intercepts in phi_n of the pair's energy, delay and local delay."""
    at = {}
    for value in (0.0, 1.0):
        phi = np.array(a.phi, dtype=float)
        phi[n] = value
        delays, energies = pair_phases(scn, a.replace(phi=phi), n, m)
        at[value] = (sum(energies), sum(delays), delays[0])
    return [(at[1.0][k] - at[0.0][k], at[0.0][k]) for k in range(3)]


def _phi_lp(scn: Scenario, a: Allocation, y: float) -> Tuple[np.ndarray, float]:
    N = scn.N
    servers = np.argmax(a.x, axis=1)
    cost = np.zeros(N + 1)
    cost[-1] = y * scn.omega_t
    const = -sum(scalar_score(scn, a, n, int(servers[n])) for n in range(N))
    rows, rhs = [], []
    for n in range(N):
        (e_s, e_0), (d_s, d_0), (l_s, _) = _affine_in_phi(scn, a, n, int(servers[n]))
        cost[n] = y * scn.omega_e * e_s
        const += y * scn.omega_e * e_0
        for slope, intercept in ((d_s, d_0), (l_s, 0.0)):
            row = np.zeros(N + 1)
            row[n] = slope
            row[-1] = -1.0
            rows.append(row)
            rhs.append(-intercept)
    res = linprog(cost, A_ub=np.array(rows), b_ub=np.array(rhs),
                  bounds=[(0.0, 1.0)] * N + [(0.0, None)], method="highs")
    if res.status != 0:
        raise InfeasibleProblemError(f"oracle split LP failed: {res.message}")
    phi = np.clip(res.x[:N], 0.0, 1.0)
    return phi, -scalar_dinkelbach(scn, a.replace(phi=phi), y)


def _phi_grid(scn: Scenario, a: Allocation, y: float, phi_grid: Sequence[float]) -> Tuple[np.ndarray, float]:
    best_phi, best = None, math.inf
    for combo in itertools.product(phi_grid, repeat=scn.N):
        phi = np.array(combo, dtype=float)
        value = -scalar_dinkelbach(scn, a.replace(phi=phi), y)
        if value < best:
            best_phi, best = phi, value
    return best_phi, best


def brute_force_association(scn: Scenario, fixed: Allocation, y: float,
                            phi_grid: Optional[Sequence[float]] = None) -> OracleAssociation:
    """
    Global minimum of the association-block objective over every association
    that respects the fixed caps. The split is solved exactly by LP, or over
    the product of `phi_grid` when one is given.
    """
    total = scn.M ** scn.N
    if total > ORACLE_MAX_ASSOCIATIONS:
        raise OracleRefusedError(f"{total} associations exceed the oracle limit of {ORACLE_MAX_ASSOCIATIONS}")
    if phi_grid is not None and len(phi_grid) ** scn.N * total > ORACLE_MAX_GRID_POINTS:
        raise OracleRefusedError("split grid too large for enumeration")

    best: Optional[OracleAssociation] = None
    evaluated = 0
    for servers in itertools.product(range(scn.M), repeat=scn.N):
        candidate = fixed.replace(x=_one_hot(servers, scn.M))
        if not scalar_caps_ok(scn, candidate):
            continue
        evaluated += 1
        if phi_grid is None:
            phi, value = _phi_lp(scn, candidate, y)
        else:
            phi, value = _phi_grid(scn, candidate, y, phi_grid)
        if best is None or value < best.objective:
            best = OracleAssociation(candidate.x, phi, value, 0)
    if best is None:
        raise InfeasibleProblemError("no association respects the fixed resource caps")
    return OracleAssociation(best.x, best.phi, best.objective, evaluated)


# ─────────────────────────────────────────────────────────────────────────────
# Resource grid
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class GridSpec:
    """
    Axes of a resource grid: group name -> (low, high, steps). A value is
    applied to the connected entry of every user; other groups stay at the
    base allocation.
    """
    axes: Dict[str, Tuple[float, float, int]] = field(default_factory=dict)

    def __post_init__(self):
        for name, (lo, hi, steps) in self.axes.items():
            if name not in resources.GROUPS:
                raise ValueError(f"unknown grid axis {name!r}")
            if steps < 2 or not hi >= lo:
                raise ValueError(f"grid axis {name!r} needs steps >= 2 and high >= low")

    @property
    def points(self) -> int:
        return math.prod(steps for _, _, steps in self.axes.values())

    def values(self, name: str) -> np.ndarray:
        lo, hi, steps = self.axes[name]
        return np.linspace(lo, hi, steps)


@dataclass(frozen=True, eq=False)
class GridResult:
    allocation: Optional[Allocation]     # None when no grid point is feasible
    objective: float
    evaluated: int
    feasible: int

    @property
    def empty(self) -> bool:
        return self.allocation is None


def _apply(base: Allocation, name: str, value: float) -> Allocation:
    servers = np.argmax(base.x, axis=1)
    rows = np.arange(base.N)
    if name in ("p_u", "f_u"):
        return base.replace(**{name: np.full(base.N, value)})
    table = np.array(getattr(base, name), dtype=float)
    table[rows, servers] = value
    return base.replace(**{name: table})


def grid_resource_search(scn: Scenario, x: np.ndarray, phi: np.ndarray, y: float, grid: GridSpec,
                         base: Allocation) -> GridResult:
    """Best direct resource-block objective over the feasible points of `grid` (T implied)."""
    if grid.points > ORACLE_MAX_GRID_POINTS:
        raise OracleRefusedError(f"{grid.points} grid points exceed the oracle limit of {ORACLE_MAX_GRID_POINTS}")
    base = base.replace(x=np.asarray(x, dtype=float), phi=np.asarray(phi, dtype=float))
    names = list(grid.axes)
    best_a, best = None, -math.inf
    feasible = 0
    for combo in itertools.product(*(grid.values(name) for name in names)):
        a = base
        for name, value in zip(names, combo):
            a = _apply(a, name, float(value))
        if not scalar_caps_ok(scn, a):
            continue
        value = scalar_dinkelbach(scn, a, y)
        if not math.isfinite(value):
            continue
        feasible += 1
        if value > best:
            best_a, best = a, value
    if best_a is None:
        logger.info(f"🔍 Resource grid of {grid.points} points has no feasible point")
        return GridResult(None, -math.inf, grid.points, 0)
    T = scalar_cost(scn, best_a)["T_total"]
    return GridResult(best_a.replace(T=T), best, grid.points, feasible)


def finite_diff_grad(f: Callable[[np.ndarray], float], point: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences with step h·max(1, |x_i|) per coordinate."""
    point = np.asarray(point, dtype=float)
    grad = np.zeros_like(point)
    for i in range(point.size):
        step = h * max(1.0, abs(point[i]))
        up = point.copy()
        down = point.copy()
        up[i] += step
        down[i] -= step
        grad[i] = (f(up) - f(down)) / (2.0 * step)
    return grad


# ─────────────────────────────────────────────────────────────────────────────
# Joint search (CLI `oracle` algorithm)
# ─────────────────────────────────────────────────────────────────────────────

def exhaustive_association_search(scn: Scenario, epsilon: float = DEFAULT_EPSILON,
                                  max_outer: int = DASHF_MAX_OUTER):
    """
    Every association, each with the split refitted and resources optimized
    in a Dinkelbach loop; the association with the highest ratio wins.
    """
    total = scn.M ** scn.N
    if total > ORACLE_MAX_JOINT_ASSOCIATIONS:
        raise OracleRefusedError(
            f"oracle enumerates {scn.M}^{scn.N} = {total} associations, limit is {ORACLE_MAX_JOINT_ASSOCIATIONS}; "
            f"use a smaller scenario"
        )
    best = None
    for k, servers in enumerate(itertools.product(range(scn.M), repeat=scn.N), start=1):
        x = _one_hot(servers, scn.M)
        solution, trace = dashf.dinkelbach_loop(
            Algorithm.ORACLE.value, scn, resources.equal_split(scn, x),
            dashf.association_step(scn, relax=False), dashf.resource_step(scn), epsilon, max_outer,
        )
        logger.debug(f"🔍 Oracle association {k}/{total} {servers}: SCR {solution.scr:.6e}")
        if solution.feasible and (best is None or solution.scr > best[0].scr):
            best = (solution, trace)
    if best is None:
        raise InfeasibleProblemError("no association produced a feasible allocation")
    logger.info(f"📊 Oracle: best SCR {best[0].scr:.6e} over {total} associations")
    return best

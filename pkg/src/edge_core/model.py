# edge_core/model.py

"""
Physical and cost model of collaborative adapter training over edge servers.

Every user n trains a fraction phi_n of its adapter locally, uploads it to its
server m, the server trains the rest and sends the adapter back. Delays and
energies of those four phases, the service score each server grants, and the
service-cost ratio (SCR) are computed here as pure numpy functions.
"""

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np

from config_settings import FEASIBILITY_TOL
from constants import ViolationCode
from edge_core.errors import InvalidScenarioError, UndefinedRatioError

logger = logging.getLogger(__name__)

LN2 = float(np.log(2.0))


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


# ─────────────────────────────────────────────────────────────────────────────
# Domain types
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class UserProfile:
    """A mobile user: adapter size, training work and device limits."""
    position: Tuple[float, float]
    d: float          # adapter parameters
    t: float          # FLOPs per parameter per epoch
    e: float          # local epochs
    F_max: float      # effective GPU speed (FLOP/s)
    p_max: float      # transmit power cap (W)
    kappa: float      # switched capacitance

    def __post_init__(self):
        for name in ("d", "t", "F_max", "p_max", "kappa"):
            if not getattr(self, name) > 0:
                raise InvalidScenarioError(f"user {name} must be strictly positive, got {getattr(self, name)}")
        if not self.e >= 1:
            raise InvalidScenarioError(f"user epochs must be >= 1, got {self.e}")


@dataclass(frozen=True)
class ServerProfile:
    """An edge server: shared bandwidth, power and GPU budgets."""
    position: Tuple[float, float]
    b_max: float
    p_max: float
    F_max: float
    e: float
    kappa: float

    def __post_init__(self):
        for name in ("b_max", "p_max", "F_max", "kappa"):
            if not getattr(self, name) > 0:
                raise InvalidScenarioError(f"server {name} must be strictly positive, got {getattr(self, name)}")
        if not self.e >= 1:
            raise InvalidScenarioError(f"server epochs must be >= 1, got {self.e}")


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable problem instance. `g` is the N×M linear channel power gain."""
    users: Tuple[UserProfile, ...]
    servers: Tuple[ServerProfile, ...]
    g: np.ndarray
    sigma2: float
    omega_t: float
    omega_e: float
    varpi1: float
    varpi2: float
    omega_b: float
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "servers", tuple(self.servers))
        if len(self.users) < 1 or len(self.servers) < 1:
            raise InvalidScenarioError("a scenario needs at least one user and one server")
        g = _readonly(self.g)
        if g.shape != (len(self.users), len(self.servers)):
            raise InvalidScenarioError(f"channel gain shape {g.shape} does not match N×M = {len(self.users)}×{len(self.servers)}")
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise InvalidScenarioError("channel gains must be finite and strictly positive")
        object.__setattr__(self, "g", g)
        if not self.sigma2 > 0:
            raise InvalidScenarioError(f"noise density must be strictly positive, got {self.sigma2}")
        for name in ("omega_t", "omega_e", "varpi1", "varpi2", "omega_b"):
            if not getattr(self, name) > 0:
                raise InvalidScenarioError(f"{name} must be strictly positive, got {getattr(self, name)}")

    @property
    def N(self) -> int:
        return len(self.users)

    @property
    def M(self) -> int:
        return len(self.servers)

    # per-user vectors
    @cached_property
    def d(self) -> np.ndarray:
        return _readonly([u.d for u in self.users])

    @cached_property
    def t(self) -> np.ndarray:
        return _readonly([u.t for u in self.users])

    @cached_property
    def e_n(self) -> np.ndarray:
        return _readonly([u.e for u in self.users])

    @cached_property
    def F_max_n(self) -> np.ndarray:
        return _readonly([u.F_max for u in self.users])

    @cached_property
    def p_max_n(self) -> np.ndarray:
        return _readonly([u.p_max for u in self.users])

    @cached_property
    def kappa_n(self) -> np.ndarray:
        return _readonly([u.kappa for u in self.users])

    # per-server vectors
    @cached_property
    def b_max(self) -> np.ndarray:
        return _readonly([s.b_max for s in self.servers])

    @cached_property
    def p_max_m(self) -> np.ndarray:
        return _readonly([s.p_max for s in self.servers])

    @cached_property
    def F_max_m(self) -> np.ndarray:
        return _readonly([s.F_max for s in self.servers])

    @cached_property
    def e_m(self) -> np.ndarray:
        return _readonly([s.e for s in self.servers])

    @cached_property
    def kappa_m(self) -> np.ndarray:
        return _readonly([s.kappa for s in self.servers])

    @cached_property
    def snr_per_watt(self) -> np.ndarray:
        """g/σ² per pair; the rate is b·log2(1 + k·p/b) with this k."""
        return _readonly(self.g / self.sigma2)

    def with_weights(self, omega_t: float, omega_e: float) -> "Scenario":
        return replace(self, omega_t=omega_t, omega_e=omega_e)

    def with_bandwidth(self, b_max: float) -> "Scenario":
        servers = tuple(replace(s, b_max=b_max) for s in self.servers)
        return replace(self, servers=servers)


@dataclass(frozen=True, eq=False)
class Allocation:
    """
    Full decision vector. Resource tables are N×M; entries of unconnected
    pairs are standby shares (every cost and score term is x-weighted, so
    they only matter as the price of a reassignment in the association step).
    """
    x: np.ndarray
    phi: np.ndarray
    b: np.ndarray
    p_u: np.ndarray
    p_s: np.ndarray
    f_u: np.ndarray
    f_s: np.ndarray
    T: float

    def __post_init__(self):
        x = _readonly(self.x)
        if x.ndim != 2:
            raise ValueError(f"association must be N×M, got shape {x.shape}")
        n, m = x.shape
        shapes = {"phi": (n,), "b": (n, m), "p_u": (n,), "p_s": (n, m), "f_u": (n,), "f_s": (n, m)}
        object.__setattr__(self, "x", x)
        for name, shape in shapes.items():
            arr = _readonly(getattr(self, name))
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "T", float(self.T))

    @property
    def N(self) -> int:
        return self.x.shape[0]

    @property
    def M(self) -> int:
        return self.x.shape[1]

    def servers_of(self) -> np.ndarray:
        """Index of the connected server of every user."""
        return np.argmax(self.x, axis=1)

    def load(self) -> np.ndarray:
        """Number of users connected to each server."""
        return np.rint(self.x.sum(axis=0)).astype(int)

    def replace(self, **changes) -> "Allocation":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class CostBreakdown:
    T1: np.ndarray
    T2: np.ndarray
    T3: np.ndarray
    T4: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    E3: np.ndarray
    E4: np.ndarray
    v: np.ndarray      # service score table (before x weighting)
    T_total: float
    E_total: float
    V: float

    @property
    def pair_delay(self) -> np.ndarray:
        return self.T1 + self.T2 + self.T3 + self.T4

    @property
    def pair_energy(self) -> np.ndarray:
        return self.E1 + self.E2 + self.E3 + self.E4


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    where: Tuple[int, ...]
    excess: float

    def __str__(self) -> str:
        return f"{self.code.value} at {self.where}: {self.code.description}, excess {self.excess:.3e}"


# ─────────────────────────────────────────────────────────────────────────────
# Link rate and its derivatives
# ─────────────────────────────────────────────────────────────────────────────

def _rate(b, p, k):
    """Unchecked b·log2(1 + k·p/b), zero on the b = 0 or p = 0 boundary."""
    b = np.asarray(b, dtype=float)
    p = np.asarray(p, dtype=float)
    active = (b > 0) & (p > 0)
    safe_b = np.where(active, b, 1.0)
    return np.where(active, safe_b * np.log1p(k * p / safe_b) / LN2, 0.0)


def _check_link(g, sigma2) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if np.any(g <= 0) or not sigma2 > 0:
        raise InvalidScenarioError("channel gain and noise density must be strictly positive")
    return g


def link_rate(b, p, g, sigma2):
    """
    Shannon rate of an FDMA link in bit/s.

    Args:
        b: Bandwidth in Hz (>= 0)
        p: Transmit power in W (>= 0)
        g: Linear channel power gain (> 0)
        sigma2: Noise power spectral density in W/Hz (> 0)

    Returns:
        b·log2(1 + g·p/(σ²·b)); zero when b = 0 or p = 0. Scalars in, float out.
    """
    g = _check_link(g, sigma2)
    if np.any(np.asarray(b) < 0) or np.any(np.asarray(p) < 0):
        raise ValueError("bandwidth and power must be nonnegative")
    rate = _rate(b, p, g / sigma2)
    return float(rate) if np.ndim(rate) == 0 else rate


def link_rate_grad(b, p, g, sigma2):
    """(∂r/∂b, ∂r/∂p) for b > 0."""
    k = _check_link(g, sigma2) / sigma2
    b = np.asarray(b, dtype=float)
    s = k * np.asarray(p, dtype=float) / b
    dr_db = (np.log1p(s) - s / (1.0 + s)) / LN2
    dr_dp = k / ((1.0 + s) * LN2)
    return dr_db, dr_dp


def link_rate_hessian(b, p, g, sigma2):
    """(∂²r/∂b², ∂²r/∂b∂p, ∂²r/∂p²) for b > 0; a rank-one negative semidefinite form."""
    k = _check_link(g, sigma2) / sigma2
    b = np.asarray(b, dtype=float)
    s = k * np.asarray(p, dtype=float) / b
    scale = 1.0 / (b * (1.0 + s) ** 2 * LN2)
    return -s * s * scale, k * s * scale, -k * k * scale


# ─────────────────────────────────────────────────────────────────────────────
# Phase delays and energies
# ─────────────────────────────────────────────────────────────────────────────

def _safe_div(num, den):
    """num/den with 0/anything = 0 and positive/0 = inf (infeasible pair)."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = num / den
    return np.where(num == 0, 0.0, np.where(den > 0, q, np.inf))


def _times(p, T):
    p = np.asarray(p, dtype=float)
    with np.errstate(invalid="ignore"):
        return np.where(p == 0, 0.0, p * T)


def _phase_tables(scn: Scenario, a: Allocation):
    n, m = scn.N, scn.M
    x = a.x
    phi = a.phi[:, None]
    work = (scn.t * scn.d)[:, None]            # FLOPs for the whole adapter, one epoch
    bits = (scn.d * scn.omega_b)[:, None]
    k = scn.snr_per_watt

    r_up = _rate(a.b, a.p_u[:, None], k)
    r_dn = _rate(a.b, a.p_s, k)

    T1 = np.broadcast_to(_safe_div(phi * work * scn.e_n[:, None], a.f_u[:, None]), (n, m)).copy()
    T2 = _safe_div(x * phi * bits, r_up)
    T3 = _safe_div(x * (1.0 - phi) * work * scn.e_m[None, :], a.f_s)
    T4 = _safe_div(x * (1.0 - phi) * bits, r_dn)

    E1 = x * (scn.e_n * scn.kappa_n)[:, None] * phi * work * (a.f_u ** 2)[:, None]
    E2 = _times(a.p_u[:, None], T2)
    E3 = (scn.e_m * scn.kappa_m)[None, :] * x * (1.0 - phi) * work * a.f_s ** 2
    E4 = _times(a.p_s, T4)
    return (T1, T2, T3, T4), (E1, E2, E3, E4)


def phase_delay_tables(scn: Scenario, a: Allocation) -> Tuple[np.ndarray, ...]:
    return _phase_tables(scn, a)[0]


def phase_energy_tables(scn: Scenario, a: Allocation) -> Tuple[np.ndarray, ...]:
    return _phase_tables(scn, a)[1]


def phase_delays(scn: Scenario, a: Allocation, n: int, m: int) -> Tuple[float, float, float, float]:
    """(T1, T2, T3, T4) of pair (n, m) in seconds; inf marks an infeasible pair."""
    return tuple(float(T[n, m]) for T in phase_delay_tables(scn, a))


def phase_energies(scn: Scenario, a: Allocation, n: int, m: int) -> Tuple[float, float, float, float]:
    """(E1, E2, E3, E4) of pair (n, m) in joules; local energy E1 is booked on the connected pair."""
    return tuple(float(E[n, m]) for E in phase_energy_tables(scn, a))


# ─────────────────────────────────────────────────────────────────────────────
# Service score, aggregation and SCR
# ─────────────────────────────────────────────────────────────────────────────

def _service_table(scn: Scenario, p_s, f_s, b) -> np.ndarray:
    share = p_s / scn.p_max_m + f_s / scn.F_max_m + b / scn.b_max
    return scn.varpi1 * np.log1p(scn.varpi2 * share)


def service_score(p_s, f_s, b, p_max_m, F_max_m, b_max, varpi1, varpi2):
    """ϖ1·ln(1 + ϖ2·(p_s/p_max + f_s/F_max + b/b_max)) for arguments within their caps."""
    for value, cap, name in ((p_s, p_max_m, "p_s"), (f_s, F_max_m, "f_s"), (b, b_max, "b")):
        value = np.asarray(value, dtype=float)
        if np.any(value < 0) or np.any(value > np.asarray(cap) * (1.0 + FEASIBILITY_TOL)):
            raise ValueError(f"{name} outside [0, cap]")
    share = np.asarray(p_s) / p_max_m + np.asarray(f_s) / F_max_m + np.asarray(b) / b_max
    score = varpi1 * np.log1p(varpi2 * share)
    return float(score) if np.ndim(score) == 0 else score


def evaluate(scn: Scenario, a: Allocation) -> CostBreakdown:
    (T1, T2, T3, T4), (E1, E2, E3, E4) = _phase_tables(scn, a)
    v = _service_table(scn, a.p_s, a.f_s, a.b)
    pair = T1 + T2 + T3 + T4
    return CostBreakdown(
        T1=T1, T2=T2, T3=T3, T4=T4,
        E1=E1, E2=E2, E3=E3, E4=E4,
        v=v,
        T_total=float(np.max(pair)),
        E_total=float(np.sum(E1) + np.sum(E2) + np.sum(E3) + np.sum(E4)),
        V=float(np.sum(a.x * v)),
    )


def scr(breakdown: CostBreakdown, omega_t: float, omega_e: float) -> float:
    """Service-cost ratio V / (ω_t·T_total + ω_e·E_total)."""
    denominator = omega_t * breakdown.T_total + omega_e * breakdown.E_total
    if not denominator > 0:
        raise UndefinedRatioError(f"cost is {denominator}, the service-cost ratio is undefined")
    return breakdown.V / denominator


def allocation_scr(scn: Scenario, a: Allocation) -> float:
    return scr(evaluate(scn, a), scn.omega_t, scn.omega_e)


def dinkelbach_objective(scn: Scenario, a: Allocation, y: float,
                         breakdown: Optional[CostBreakdown] = None) -> float:
    """V − y·(ω_t·T + ω_e·E_total) with T the allocation's delay bound variable."""
    bd = breakdown if breakdown is not None else evaluate(scn, a)
    return bd.V - y * (scn.omega_t * a.T + scn.omega_e * bd.E_total)


# ─────────────────────────────────────────────────────────────────────────────
# Feasibility
# ─────────────────────────────────────────────────────────────────────────────

def _flag(out: List[Violation], code: ViolationCode, excess: np.ndarray, tol: float):
    for idx in np.argwhere(excess > tol):
        out.append(Violation(code, tuple(int(i) for i in idx), float(excess[tuple(idx)])))


def check_feasibility(scn: Scenario, a: Allocation, tol: float = FEASIBILITY_TOL) -> List[Violation]:
    """All violated constraints of the joint problem; empty list iff feasible."""
    if a.x.shape != (scn.N, scn.M):
        raise ValueError(f"allocation is {a.x.shape}, scenario is {scn.N}×{scn.M}")
    out: List[Violation] = []
    x = a.x

    _flag(out, ViolationCode.BINARY_ASSOCIATION, np.abs(x - np.round(x)), tol)
    _flag(out, ViolationCode.SINGLE_SERVER, np.abs(x.sum(axis=1) - 1.0), tol)
    _flag(out, ViolationCode.SPLIT_RANGE, np.maximum(-a.phi, a.phi - 1.0), tol)

    _flag(out, ViolationCode.BANDWIDTH_CAP, (x * a.b).sum(axis=0) / scn.b_max - 1.0, tol)
    _flag(out, ViolationCode.USER_POWER_CAP, a.p_u / scn.p_max_n - 1.0, tol)
    _flag(out, ViolationCode.SERVER_POWER_CAP, (x * a.p_s).sum(axis=0) / scn.p_max_m - 1.0, tol)
    _flag(out, ViolationCode.USER_GPU_CAP, a.f_u / scn.F_max_n - 1.0, tol)
    _flag(out, ViolationCode.SERVER_GPU_CAP, (x * a.f_s).sum(axis=0) / scn.F_max_m - 1.0, tol)

    negative = np.concatenate([
        (-a.b / scn.b_max).ravel(), -a.p_u / scn.p_max_n, (-a.p_s / scn.p_max_m).ravel(),
        -a.f_u / scn.F_max_n, (-a.f_s / scn.F_max_m).ravel(), [-a.T],
    ])
    if np.any(negative > tol):
        out.append(Violation(ViolationCode.NONNEGATIVE, (int(np.argmax(negative)),), float(negative.max())))

    pair = phase_delay_tables(scn, a)
    pair = pair[0] + pair[1] + pair[2] + pair[3]
    with np.errstate(invalid="ignore", divide="ignore"):
        if a.T > 0:
            excess = pair / a.T - 1.0
        else:
            excess = np.where(pair > 0, np.inf, 0.0)
    excess = np.where(np.isfinite(pair), excess, np.inf)
    _flag(out, ViolationCode.DELAY_BOUND, excess, tol)

    if out:
        logger.debug(f"🔍 {len(out)} constraint violations: {', '.join(str(v) for v in out[:5])}")
    return out

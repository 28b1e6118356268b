# edge_core/association.py

"""
First block of the alternating optimization: with bandwidth, powers and GPU
speeds held fixed, choose the association x, the split ratios phi and the
delay bound T.

The block is a quadratically constrained program in q = [phi; vec(x)]
(bilinear x·phi terms). It is lifted to S = s·sᵀ with s = [q; 1], relaxed by
dropping rank(S) = 1, solved as a semidefinite program, rounded back to a
binary association through a capacity-aware Hungarian matching, and the
split ratios are refitted exactly by a linear program.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

from config_settings import FEASIBILITY_TOL, SDP_MAX_ITER, SDP_TOL
from edge_core import sdpsolver
from edge_core.errors import InfeasiblePairError, InfeasibleProblemError, RoundingError
from edge_core.model import Allocation, Scenario, _service_table, link_rate

logger = logging.getLogger(__name__)

FAMILIES = ("binary", "single_server", "split_box", "capacity", "delay")


@dataclass(frozen=True, eq=False)
class QcqpCoeffs:
    """
    Part-1 objective  Σ A_n·phi_n + Σ B·x + Σ G·x·phi + w_T·T  (to be minimized;
    it is the negated Dinkelbach objective) and the per-pair delay pieces
    delay_{n,m} = a_n·phi_n + c·x + (alpha − c)·x·phi.
    """
    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    y: float
    w_T: float
    a: np.ndarray        # local training time per unit of split, length N
    alpha: np.ndarray    # upload time of the whole adapter, N×M
    c: np.ndarray        # server training + download time of the whole adapter, N×M

    def objective(self, x: np.ndarray, phi: np.ndarray, T: float) -> float:
        return float(self.A @ phi + np.sum(self.B * x) + np.sum(self.G * x * phi[:, None]) + self.w_T * T)

    def pair_delays(self, x: np.ndarray, phi: np.ndarray) -> np.ndarray:
        ph = phi[:, None]
        return self.a[:, None] * ph + self.c * x + (self.alpha - self.c) * x * ph

    def implied_T(self, x: np.ndarray, phi: np.ndarray) -> float:
        return float(np.max(self.pair_delays(x, phi)))


def coeffs(scn: Scenario, fixed: Allocation, y: float) -> QcqpCoeffs:
    """Objective and delay coefficients of the association block for fixed resources."""
    if y < 0:
        raise ValueError(f"Dinkelbach parameter must be nonnegative, got {y}")
    work = scn.d * scn.t
    bits = (scn.d * scn.omega_b)[:, None]
    r_up = link_rate(fixed.b, np.broadcast_to(fixed.p_u[:, None], fixed.b.shape), scn.g, scn.sigma2)
    r_dn = link_rate(fixed.b, fixed.p_s, scn.g, scn.sigma2)

    bad = (r_up <= 0) | (r_dn <= 0) | (fixed.f_s <= 0) | (fixed.f_u <= 0)[:, None]
    if np.any(bad):
        n, m = (int(i) for i in np.argwhere(bad)[0])
        raise InfeasiblePairError(n, m, "zero rate or GPU speed leaves the pair's delay unbounded")

    up_energy = fixed.p_u[:, None] * bits / r_up
    dn_energy = fixed.p_s * bits / r_dn
    srv_energy = (scn.e_m * scn.kappa_m)[None, :] * work[:, None] * fixed.f_s ** 2
    v = _service_table(scn, fixed.p_s, fixed.f_s, fixed.b)
    ye = y * scn.omega_e

    return QcqpCoeffs(
        A=ye * scn.e_n * scn.kappa_n * work * fixed.f_u ** 2,
        B=ye * (dn_energy + srv_energy) - v,
        G=ye * (up_energy - dn_energy - srv_energy),
        y=float(y),
        w_T=float(y * scn.omega_t),
        a=work * scn.e_n / fixed.f_u,
        alpha=bits / r_up,
        c=work[:, None] * scn.e_m[None, :] / fixed.f_s + bits / r_dn,
    )


# ─────────────────────────────────────────────────────────────────────────────
# Homogenized relaxation
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class SdrConstraint:
    family: str
    index: Tuple[int, ...]
    matrix: np.ndarray
    rhs: float
    t_coeff: float = 0.0
    equality: bool = False


@dataclass(eq=False)
class HomogenizedSdr:
    n_users: int
    n_servers: int
    objective: np.ndarray
    w_T: float
    constraints: List[SdrConstraint] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.n_users + self.n_users * self.n_servers + 1

    def count(self, family: Optional[str] = None) -> int:
        if family is None:
            return len(self.constraints)
        return sum(1 for c in self.constraints if c.family == family)

    def family_counts(self) -> Dict[str, int]:
        return {name: self.count(name) for name in FAMILIES}

    def to_program(self) -> sdpsolver.ConicProgram:
        """ConicProgram with the homogenization anchor S[D,D] = 1 appended."""
        anchor = np.zeros((self.dim, self.dim))
        anchor[-1, -1] = 1.0
        equalities = [(c.matrix, c.rhs) for c in self.constraints if c.equality]
        equalities.append((anchor, 1.0))
        inequalities = [(c.matrix, c.rhs, c.t_coeff) for c in self.constraints if not c.equality]
        return sdpsolver.ConicProgram(C=self.objective, w_T=self.w_T,
                                      equalities=equalities, inequalities=inequalities)


def x_index(n: int, m: int, n_users: int, n_servers: int) -> int:
    return n_users + n * n_servers + m


def homogenize(x: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """s = [phi; vec(x) row-major; 1]."""
    return np.concatenate([np.asarray(phi, dtype=float), np.asarray(x, dtype=float).ravel(), [1.0]])


def lift(x: np.ndarray, phi: np.ndarray) -> np.ndarray:
    s = homogenize(x, phi)
    return np.outer(s, s)


def _linear(M: np.ndarray, i: int, value: float) -> None:
    M[i, -1] += 0.5 * value
    M[-1, i] += 0.5 * value


def _bilinear(M: np.ndarray, i: int, j: int, value: float) -> None:
    M[i, j] += 0.5 * value
    M[j, i] += 0.5 * value


def build_sdr(co: QcqpCoeffs, fixed: Allocation, scn: Scenario) -> HomogenizedSdr:
    n_users, n_servers = scn.N, scn.M
    D = n_users + n_users * n_servers + 1
    last = D - 1
    xi = lambda n, m: x_index(n, m, n_users, n_servers)  # noqa: E731

    C = np.zeros((D, D))
    for n in range(n_users):
        _linear(C, n, co.A[n])
        for m in range(n_servers):
            _linear(C, xi(n, m), co.B[n, m])
            _bilinear(C, n, xi(n, m), co.G[n, m])
    sdr = HomogenizedSdr(n_users, n_servers, C, co.w_T)
    out = sdr.constraints

    # x(x − 1) = 0
    for n in range(n_users):
        for m in range(n_servers):
            M = np.zeros((D, D))
            j = xi(n, m)
            M[j, j] = 1.0
            _linear(M, j, -1.0)
            out.append(SdrConstraint("binary", (n, m), M, 0.0, equality=True))

    for n in range(n_users):
        M = np.zeros((D, D))
        for m in range(n_servers):
            _linear(M, xi(n, m), 1.0)
        out.append(SdrConstraint("single_server", (n,), M, 1.0, equality=True))

    # −phi <= 0 and phi² − phi <= 0
    for n in range(n_users):
        lower = np.zeros((D, D))
        _linear(lower, n, -1.0)
        out.append(SdrConstraint("split_box", (n, 0), lower, 0.0))
        upper = np.zeros((D, D))
        upper[n, n] = 1.0
        _linear(upper, n, -1.0)
        out.append(SdrConstraint("split_box", (n, 1), upper, 0.0))

    for k, (table, cap) in enumerate(((fixed.b, scn.b_max), (fixed.p_s, scn.p_max_m), (fixed.f_s, scn.F_max_m))):
        for m in range(n_servers):
            M = np.zeros((D, D))
            for n in range(n_users):
                _linear(M, xi(n, m), table[n, m] / cap[m])
            out.append(SdrConstraint("capacity", (k, m), M, 1.0))

    for n in range(n_users):
        for m in range(n_servers):
            M = np.zeros((D, D))
            j = xi(n, m)
            _linear(M, n, co.a[n])
            _linear(M, j, co.c[n, m])
            _bilinear(M, n, j, co.alpha[n, m] - co.c[n, m])
            out.append(SdrConstraint("delay", (n, m), M, 0.0, t_coeff=-1.0))

    logger.debug(f"🔍 SDR D={D}: {sdr.family_counts()}")
    return sdr


@dataclass(frozen=True, eq=False)
class Relaxation:
    S: np.ndarray
    T: float
    lower_bound: Optional[float]     # None unless the residuals were certified
    solution: sdpsolver.SdpSolution


def solve_relaxation(sdr: HomogenizedSdr, tol: float = SDP_TOL, max_iter: int = SDP_MAX_ITER) -> Relaxation:
    sol = sdpsolver.solve(sdr.to_program(), tol=tol, max_iter=max_iter)
    diagnostics = {
        "status": sol.status,
        "backend": sol.backend,
        "iterations": sol.iterations,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
        "psd_violation": sol.psd_violation,
    }
    if sol.status == "infeasible":
        raise InfeasibleProblemError("association relaxation is infeasible for the fixed resources", diagnostics)
    if not sol.converged:
        logger.warning(f"⚠️ Association relaxation not converged, rounding without a bound: {diagnostics}")
    return Relaxation(S=sol.S, T=sol.T, lower_bound=sol.lower_bound if sol.converged else None, solution=sol)


# ─────────────────────────────────────────────────────────────────────────────
# Rounding
# ─────────────────────────────────────────────────────────────────────────────

def hungarian_match(weights: np.ndarray) -> np.ndarray:
    """Column assigned to every row of a maximum-weight assignment (rows <= columns)."""
    weights = np.asarray(weights, dtype=float)
    rows, cols = weights.shape
    if rows > cols:
        raise ValueError(f"cannot match {rows} rows into {cols} columns")
    square = np.zeros((cols, cols))
    square[:rows] = weights
    row_ind, col_ind = linear_sum_assignment(square, maximize=True)
    match = np.empty(rows, dtype=int)
    for r, c in zip(row_ind, col_ind):
        if r < rows:
            match[r] = c
    return match


def match_association(weights: np.ndarray) -> np.ndarray:
    """Binary association from N×M preference weights, each server offered ⌈N/M⌉ slots."""
    n_users, n_servers = weights.shape
    slots = math.ceil(n_users / n_servers)
    expanded = np.repeat(weights, slots, axis=1)
    cols = hungarian_match(expanded)
    x = np.zeros((n_users, n_servers))
    x[np.arange(n_users), cols // slots] = 1.0
    return x


def extract_direction(S: np.ndarray) -> np.ndarray:
    """q̂ with unit homogenization coordinate, from the last column or the leading eigenvector."""
    h = S[-1, -1]
    if h > 1e-12:
        return S[:, -1] / h
    eigvals, eigvecs = np.linalg.eigh(0.5 * (S + S.T))
    if eigvals[-1] <= 1e-12:
        raise RoundingError(f"relaxed matrix is degenerate (homogenization {h:.3e}, top eigenvalue {eigvals[-1]:.3e})")
    lead = eigvecs[:, -1] * np.sqrt(eigvals[-1])
    if abs(lead[-1]) > 1e-12:
        return lead / lead[-1]
    return np.abs(lead)


def round_association(S: np.ndarray, n_users: int, n_servers: int) -> np.ndarray:
    q = extract_direction(S)
    xs = np.clip(q[n_users:n_users + n_users * n_servers].reshape(n_users, n_servers), 0.0, 1.0)
    sums = xs.sum(axis=1)
    over = sums > 1.0
    xs[over] /= sums[over, None]
    return match_association(xs)


# ─────────────────────────────────────────────────────────────────────────────
# Split refit
# ─────────────────────────────────────────────────────────────────────────────

def refit_phi(x: np.ndarray, co: QcqpCoeffs) -> Tuple[np.ndarray, float]:
    """Exact (phi, T) for a binary association by linear programming."""
    n_users, n_servers = x.shape
    cost = np.append(co.A + np.sum(co.G * x, axis=1), co.w_T)

    rows, rhs = [], []
    for n in range(n_users):
        row = np.zeros(n_users + 1)
        row[n] = co.a[n]
        row[-1] = -1.0
        rows.append(row)
        rhs.append(0.0)
        for m in np.flatnonzero(x[n] > 0.5):
            row = np.zeros(n_users + 1)
            row[n] = co.a[n] + co.alpha[n, m] - co.c[n, m]
            row[-1] = -1.0
            rows.append(row)
            rhs.append(-co.c[n, m])

    bounds = [(0.0, 1.0)] * n_users + [(0.0, None)]
    res = linprog(cost, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds, method="highs")
    if res.status != 0:
        raise InfeasibleProblemError(f"split refit failed: {res.message}", {"status": int(res.status)})
    phi = np.clip(res.x[:n_users], 0.0, 1.0)
    return phi, co.implied_T(x, phi)


def caps_respected(scn: Scenario, fixed: Allocation, x: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
    return bool(
        np.all((x * fixed.b).sum(axis=0) / scn.b_max <= 1.0 + tol)
        and np.all((x * fixed.p_s).sum(axis=0) / scn.p_max_m <= 1.0 + tol)
        and np.all((x * fixed.f_s).sum(axis=0) / scn.F_max_m <= 1.0 + tol)
    )


@dataclass(frozen=True, eq=False)
class Part1Result:
    allocation: Allocation
    objective: float                 # minimized Part-1 objective at the returned point
    lower_bound: Optional[float]     # relaxation bound, None when the relaxation was skipped
    switched: bool                   # rounded association replaced the incumbent


def solve_part1(scn: Scenario, current: Allocation, y: float, tol: float = SDP_TOL,
                max_iter: int = SDP_MAX_ITER, relax: bool = True) -> Part1Result:
    """
    One association step. The incumbent association (with its split refitted)
    is kept unless the rounded relaxation respects the fixed caps and strictly
    lowers the Part-1 objective.
    """
    co = coeffs(scn, current, y)
    phi, T = refit_phi(current.x, co)
    best_x, best_phi, best_T = current.x, phi, T
    best_obj = co.objective(best_x, best_phi, best_T)
    lower_bound = None
    switched = False

    if relax:
        try:
            relaxation = solve_relaxation(build_sdr(co, current, scn), tol=tol, max_iter=max_iter)
            lower_bound = relaxation.lower_bound
            x_new = round_association(relaxation.S, scn.N, scn.M)
            if not np.array_equal(x_new, current.x):
                if caps_respected(scn, current, x_new):
                    phi_new, T_new = refit_phi(x_new, co)
                    obj_new = co.objective(x_new, phi_new, T_new)
                    if obj_new < best_obj - 1e-12 * max(1.0, abs(best_obj)):
                        best_x, best_phi, best_T, best_obj = x_new, phi_new, T_new, obj_new
                        switched = True
                    else:
                        logger.debug(f"🔍 Rounded association does not improve ({obj_new:.6e} >= {best_obj:.6e})")
                else:
                    logger.debug("🔍 Rounded association exceeds the fixed resource caps")
        except (InfeasibleProblemError, RoundingError) as e:
            logger.warning(f"⚠️ Association relaxation unusable, keeping incumbent: {e}")

    allocation = current.replace(x=best_x, phi=best_phi, T=best_T)
    return Part1Result(allocation=allocation, objective=best_obj, lower_bound=lower_bound, switched=switched)

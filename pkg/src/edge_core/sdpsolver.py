# edge_core/sdpsolver.py

"""
Dense semidefinite programs with one PSD block S and one free scalar T:

    minimize    Tr(C S) + w_T·T
    subject to  Tr(M_i S) = c_i                 (equalities)
                Tr(N_j S) + t_j·T <= d_j        (inequalities)
                S ⪰ 0

Two backends share this contract. The built-in one vectorizes the program as
v = [svec(S); T] and solves it by operator splitting: every iteration solves
one linear system against the affine part, projects onto the constraint box
and the PSD cone, and relaxes the step (ADMM with over-relaxation, per-row
step sizes and adaptive rho). The interior-point backend hands the same
program to cvxpy.

Both solve an equilibrated copy S = E·S'·E (diagonal E, so S' ⪰ 0 iff S ⪰ 0)
and report residuals of the original program with every constraint row
scaled to unit norm.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from config_settings import (
    ADMM_ADAPT_EVERY,
    ADMM_ALPHA,
    ADMM_CHECK_EVERY,
    ADMM_EQ_RHO_FACTOR,
    ADMM_INFEASIBLE_TOL,
    ADMM_RHO,
    ADMM_SIGMA,
    SDP_AUTO_ADMM_ITER,
    SDP_BACKEND,
    SDP_EQUILIBRATE_PASSES,
    SDP_MAX_ITER,
    SDP_TOL,
)
from edge_core.run_store import atomic_write_text

try:
    import cvxpy as cp
except ImportError:  # ADMM only
    cp = None

logger = logging.getLogger(__name__)

BACKENDS = ("auto", "admm", "interior")

# Dual norm (scaled units) past which a stalled run is reported infeasible
_DIVERGED_DUAL_NORM = 1e4


@dataclass(eq=False)
class ConicProgram:
    C: np.ndarray
    w_T: float = 0.0
    equalities: List[Tuple[np.ndarray, float]] = field(default_factory=list)
    inequalities: List[Tuple[np.ndarray, float, float]] = field(default_factory=list)

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float)
        dim = self.C.shape[0]
        if self.C.shape != (dim, dim):
            raise ValueError(f"objective matrix must be square, got {self.C.shape}")
        for mat in [self.C] + [M for M, _ in self.equalities] + [N for N, _, _ in self.inequalities]:
            if mat.shape != (dim, dim):
                raise ValueError(f"constraint matrix shape {mat.shape} does not match block dimension {dim}")
            if not np.allclose(mat, mat.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(mat).max())):
                raise ValueError("program matrices must be symmetric")

    @property
    def dim(self) -> int:
        return self.C.shape[0]


@dataclass(eq=False)
class SdpSolution:
    S: np.ndarray
    T: float
    objective: float
    dual_objective: float
    primal_residual: float     # worst unit-row constraint violation of the original program
    dual_residual: float       # nan when the backend does not expose one
    initial_residual: float
    iterations: int
    status: str                # "solved", "max_iter", "inaccurate" or "infeasible"
    backend: str = "admm"
    psd_violation: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status == "solved"

    @property
    def lower_bound(self) -> float:
        return min(self.objective, self.dual_objective)

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.S)[0])


# ─────────────────────────────────────────────────────────────────────────────
# Vectorization, projection and scaling
# ─────────────────────────────────────────────────────────────────────────────

@lru_cache(maxsize=32)
def _svec_layout(dim: int):
    iu = np.triu_indices(dim)
    weights = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return iu, weights


def svec(M: np.ndarray) -> np.ndarray:
    """Upper triangle with off-diagonals scaled by √2, so svec(A)·svec(B) = Tr(AB)."""
    iu, weights = _svec_layout(M.shape[0])
    return M[iu] * weights


def smat(v: np.ndarray, dim: int) -> np.ndarray:
    iu, weights = _svec_layout(dim)
    M = np.zeros((dim, dim))
    M[iu] = v / weights
    return M + M.T - np.diag(np.diag(M))


def project_psd(M: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped)."""
    sym = 0.5 * (M + M.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals[0] >= 0:
        return sym
    out = (eigvecs * np.maximum(eigvals, 0.0)) @ eigvecs.T
    return 0.5 * (out + out.T)


def _inf_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def equilibrate(prog: ConicProgram, passes: int = SDP_EQUILIBRATE_PASSES) -> Tuple[ConicProgram, np.ndarray]:
    """
    Ruiz-style congruence scaling. Returns the program in S' with S = E·S'·E
    and the diagonal of E, chosen so that every row of the stacked constraint
    matrices has a max entry close to one.
    """
    mats = [M for M, _ in prog.equalities] + [N for N, _, _ in prog.inequalities]
    e = np.ones(prog.dim)
    if not mats:
        return prog, e
    stack = np.abs(np.stack(mats))
    for _ in range(passes):
        r = np.max(stack * np.outer(e, e)[None, :, :], axis=(0, 2))
        r[r == 0] = 1.0
        e /= np.sqrt(r)
        if np.max(np.abs(r - 1.0)) < 1e-3:
            break
    EE = np.outer(e, e)
    scaled = ConicProgram(
        C=prog.C * EE, w_T=prog.w_T,
        equalities=[(M * EE, c) for M, c in prog.equalities],
        inequalities=[(N * EE, d, t) for N, d, t in prog.inequalities],
    )
    return scaled, e


def residuals(prog: ConicProgram, S: np.ndarray, T: float) -> Tuple[float, float]:
    """(worst constraint violation with every row scaled to unit norm, PSD violation) of a candidate."""
    worst = 0.0
    for M, c in prog.equalities:
        norm = float(np.linalg.norm(M)) or 1.0
        worst = max(worst, abs(float(np.sum(M * S)) - c) / norm)
    for N, d, t in prog.inequalities:
        norm = float(np.hypot(np.linalg.norm(N), t)) or 1.0
        worst = max(worst, max(0.0, float(np.sum(N * S)) + t * T - d) / norm)
    psd = max(0.0, -float(np.linalg.eigvalsh(0.5 * (S + S.T))[0]))
    return worst, psd


def _unscale(S_scaled: np.ndarray, e: np.ndarray) -> np.ndarray:
    S = S_scaled * np.outer(e, e)
    return 0.5 * (S + S.T)


# ─────────────────────────────────────────────────────────────────────────────
# Operator splitting
# ─────────────────────────────────────────────────────────────────────────────

class AdmmSdpSolver:
    """
    Operator-splitting solver for a ConicProgram.

    The program is equilibrated first. Constraint rows are then scaled to
    unit Frobenius norm, the T column to unit max entry and the cost vector
    to unit max entry before iterating.
    """

    def __init__(self, prog: ConicProgram, rho: float = ADMM_RHO, sigma: float = ADMM_SIGMA,
                 alpha: float = ADMM_ALPHA, adaptive_rho: bool = True):
        self.prog = prog
        self.scaled, self.e = equilibrate(prog)
        self.dim = prog.dim
        self.rho = rho
        self.sigma = sigma
        self.alpha = alpha
        self.adaptive_rho = adaptive_rho
        self.n_s = self.dim * (self.dim + 1) // 2
        self.n = self.n_s + 1

        rows, lo, hi = [], [], []
        for M, c in self.scaled.equalities:
            rows.append(np.append(svec(M), 0.0))
            lo.append(c)
            hi.append(c)
        for N, d, t in self.scaled.inequalities:
            rows.append(np.append(svec(N), t))
            lo.append(-np.inf)
            hi.append(d)
        A = np.array(rows, dtype=float).reshape(len(rows), self.n)
        lo = np.array(lo, dtype=float)
        hi = np.array(hi, dtype=float)

        norms = np.linalg.norm(A, axis=1)
        norms[norms == 0] = 1.0
        A /= norms[:, None]
        lo /= norms
        hi /= norms

        t_col = _inf_norm(A[:, -1])
        self.t_scale = 1.0 / t_col if t_col > 0 else 1.0
        A[:, -1] *= self.t_scale

        q = np.append(svec(self.scaled.C), self.scaled.w_T * self.t_scale)
        self.cost_scale = _inf_norm(q) or 1.0

        self.A = A
        self.lo = lo
        self.hi = hi
        self.q = q / self.cost_scale
        self.is_eq = lo == hi
        self._factor()

    def _factor(self):
        self._rho_c = np.where(self.is_eq, ADMM_EQ_RHO_FACTOR * self.rho, self.rho)
        d0 = np.full(self.n, self.sigma)
        d0[:self.n_s] += self.rho
        self._d0 = d0
        if self.A.shape[0]:
            # Woodbury: (D0 + AᵀRA)⁻¹ through the small system R⁻¹ + A D0⁻¹ Aᵀ
            small = np.diag(1.0 / self._rho_c) + (self.A / d0) @ self.A.T
            self._chol = cho_factor(small)

    def _solve_linear(self, rhs: np.ndarray) -> np.ndarray:
        w = rhs / self._d0
        if self.A.shape[0]:
            w = w - (self.A.T @ cho_solve(self._chol, self.A @ w)) / self._d0
        return w

    def _project_box(self, v: np.ndarray) -> np.ndarray:
        return np.clip(v, self.lo, self.hi)

    def _box_support(self, y: np.ndarray) -> float:
        """sup of yᵀz over the constraint box (inf when unbounded in y's direction)."""
        pos = np.maximum(y, 0.0)
        neg = np.minimum(y, 0.0)
        if np.any((pos > 0) & ~np.isfinite(self.hi)) or np.any((neg < 0) & ~np.isfinite(self.lo)):
            return np.inf
        upper = np.where(pos > 0, self.hi, 0.0)
        lower = np.where(neg < 0, self.lo, 0.0)
        return float(upper @ pos + lower @ neg)

    def _primal_infeasible(self, dy_c: np.ndarray, dy_s: np.ndarray) -> bool:
        scale = max(_inf_norm(dy_c), _inf_norm(dy_s))
        if scale < 1e-12:
            return False
        eps = ADMM_INFEASIBLE_TOL * scale
        at_dy = self.A.T @ dy_c
        at_dy[:self.n_s] += dy_s
        if _inf_norm(at_dy) > eps:
            return False
        if np.linalg.eigvalsh(smat(dy_s, self.dim))[-1] > eps:
            return False
        small = np.where(np.abs(dy_c) > eps, dy_c, 0.0)
        return self._box_support(small) < -eps

    def _adapt(self, r_prim, r_dual, prim_scale, dual_scale) -> None:
        ratio = (r_prim / max(prim_scale, 1e-12)) / max(r_dual / max(dual_scale, 1e-12), 1e-12)
        new_rho = float(np.clip(self.rho * np.sqrt(ratio), 1e-6, 1e6))
        if new_rho > 5.0 * self.rho or new_rho < 0.2 * self.rho:
            logger.debug(f"🔄 rho {self.rho:.3e} -> {new_rho:.3e}")
            self.rho = new_rho
            self._factor()

    def _certify(self, z_s: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, float, float, float]:
        S = _unscale(smat(z_s, self.dim), self.e)
        T = float(x[-1] * self.t_scale)
        r_prim, psd = residuals(self.prog, S, T)
        return S, T, r_prim, psd

    def solve(self, tol: float = SDP_TOL, max_iter: int = SDP_MAX_ITER) -> SdpSolution:
        A, q, n_s = self.A, self.q, self.n_s
        m_c = A.shape[0]
        alpha = self.alpha

        x = np.zeros(self.n)
        z_c = np.zeros(m_c)
        z_s = np.zeros(n_s)
        y_c = np.zeros(m_c)
        y_s = np.zeros(n_s)

        status = "max_iter"
        initial_residual: Optional[float] = None
        r_prim = r_dual = np.inf
        it = 0
        for it in range(1, max_iter + 1):
            rhs = self.sigma * x - q
            rhs[:n_s] += self.rho * z_s - y_s
            if m_c:
                rhs += A.T @ (self._rho_c * z_c - y_c)
            x_tilde = self._solve_linear(rhs)
            zt_c = A @ x_tilde
            zt_s = x_tilde[:n_s]

            x = alpha * x_tilde + (1.0 - alpha) * x
            v_c = alpha * zt_c + (1.0 - alpha) * z_c + y_c / self._rho_c
            v_s = alpha * zt_s + (1.0 - alpha) * z_s + y_s / self.rho
            z_c = self._project_box(v_c)
            z_s = svec(project_psd(smat(v_s, self.dim)))
            y_c_prev, y_s_prev = y_c, y_s
            y_c = self._rho_c * (v_c - z_c)
            y_s = self.rho * (v_s - z_s)

            if it % ADMM_CHECK_EVERY and it != max_iter:
                continue

            ax = A @ x
            r_prim = max(_inf_norm(ax - z_c), _inf_norm(x[:n_s] - z_s))
            aty = A.T @ y_c
            aty[:n_s] += y_s
            r_dual = _inf_norm(q + aty)
            prim_scale = max(_inf_norm(ax), _inf_norm(x[:n_s]), _inf_norm(z_c), _inf_norm(z_s))
            dual_scale = max(_inf_norm(aty), _inf_norm(q))
            if initial_residual is None:
                initial_residual = self._certify(z_s, x)[2]

            if r_prim <= tol and r_dual <= tol:
                status = "solved"
                break
            if self._primal_infeasible(y_c - y_c_prev, y_s - y_s_prev):
                status = "infeasible"
                break
            if self.adaptive_rho and it % ADMM_ADAPT_EVERY == 0:
                self._adapt(r_prim, r_dual, prim_scale, dual_scale)

        if status == "max_iter":
            dual_norm = max(_inf_norm(y_c), _inf_norm(y_s))
            if r_prim > 100.0 * tol * (1.0 + prim_scale) and dual_norm > _DIVERGED_DUAL_NORM:
                status = "infeasible"

        S, T, certified, psd = self._certify(z_s, x)
        if status == "solved" and max(certified, psd) > tol:
            logger.debug(f"🔍 ADMM stopped with unit-row residual {certified:.2e} above tol {tol:.1e}")
            status = "inaccurate"
        objective = float(np.sum(self.prog.C * S) + self.prog.w_T * T)
        dual_objective = -self._box_support(y_c) * self.cost_scale
        return SdpSolution(
            S=S, T=T,
            objective=objective,
            dual_objective=float(dual_objective),
            primal_residual=float(certified),
            dual_residual=float(r_dual),
            initial_residual=float(initial_residual if initial_residual is not None else certified),
            iterations=it,
            status=status,
            backend="admm",
            psd_violation=psd,
        )


# ─────────────────────────────────────────────────────────────────────────────
# Interior point (cvxpy)
# ─────────────────────────────────────────────────────────────────────────────

def _interior_solver() -> str:
    return cp.CLARABEL if cp.CLARABEL in cp.installed_solvers() else cp.SCS


def solve_interior(prog: ConicProgram, tol: float = SDP_TOL) -> SdpSolution:
    """Same program through cvxpy; rows are unit-normalized exactly as in the ADMM backend."""
    if cp is None:
        raise ImportError("the interior-point SDP backend needs cvxpy")
    scaled, e = equilibrate(prog)
    dim = prog.dim
    S = cp.Variable((dim, dim), PSD=True)
    T = cp.Variable()
    constraints = []
    for M, c in scaled.equalities:
        norm = float(np.linalg.norm(M)) or 1.0
        constraints.append(cp.sum(cp.multiply(M / norm, S)) == c / norm)
    for N, d, t in scaled.inequalities:
        norm = float(np.hypot(np.linalg.norm(N), t)) or 1.0
        constraints.append(cp.sum(cp.multiply(N / norm, S)) + (t / norm) * T <= d / norm)
    cost_scale = max(_inf_norm(scaled.C), abs(scaled.w_T)) or 1.0
    problem = cp.Problem(cp.Minimize(cp.sum(cp.multiply(scaled.C / cost_scale, S)) + (scaled.w_T / cost_scale) * T),
                         constraints)
    solver = _interior_solver()
    if solver == cp.SCS:
        options = {"eps_abs": tol * 1e-2, "eps_rel": tol * 1e-2}
    else:
        options = {"tol_feas": tol * 1e-3, "tol_gap_abs": tol * 1e-3, "tol_gap_rel": tol * 1e-3}
    problem.solve(solver=solver, **options)
    iterations = int(problem.solver_stats.num_iters or 0) if problem.solver_stats else 0

    if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE) or S.value is None:
        nan = float("nan")
        return SdpSolution(S=np.zeros((dim, dim)), T=nan, objective=np.inf, dual_objective=np.inf,
                           primal_residual=np.inf, dual_residual=nan, initial_residual=np.inf,
                           iterations=iterations, status="infeasible", backend="interior")

    S_orig = _unscale(np.asarray(S.value), e)
    T_val = float(T.value) if T.value is not None else 0.0
    certified, psd = residuals(prog, S_orig, T_val)
    status = "solved" if problem.status == cp.OPTIMAL and max(certified, psd) <= tol else "inaccurate"
    objective = float(np.sum(prog.C * S_orig) + prog.w_T * T_val)
    return SdpSolution(
        S=S_orig, T=T_val,
        objective=objective,
        dual_objective=objective,
        primal_residual=certified,
        dual_residual=float("nan"),
        initial_residual=certified,
        iterations=iterations,
        status=status,
        backend="interior",
        psd_violation=psd,
    )


def solve(prog: ConicProgram, tol: float = SDP_TOL, max_iter: int = SDP_MAX_ITER,
          backend: str = SDP_BACKEND) -> SdpSolution:
    """
    Solve a ConicProgram; a nonconverged result is returned flagged, not raised.
    "auto" gives ADMM a short budget and hands an unfinished program to the
    interior-point backend when cvxpy is installed.
    """
    if backend not in BACKENDS:
        raise ValueError(f"unknown SDP backend {backend!r}; expected one of {BACKENDS}")
    if backend == "interior":
        sol = solve_interior(prog, tol)
    else:
        budget = max_iter
        if backend == "auto" and cp is not None:
            budget = min(max_iter, SDP_AUTO_ADMM_ITER)
        sol = AdmmSdpSolver(prog).solve(tol=tol, max_iter=budget)
        if backend == "auto" and cp is not None and sol.status in ("max_iter", "inaccurate"):
            logger.debug(f"🔄 ADMM unfinished after {sol.iterations} iterations "
                         f"(residual {sol.primal_residual:.1e}), switching to {_interior_solver()}")
            try:
                sol = solve_interior(prog, tol)
            except cp.error.SolverError as e:
                logger.warning(f"⚠️ Interior-point backend failed, keeping the ADMM iterate: {e}")

    if sol.status == "solved":
        logger.debug(f"✅ SDP solved by {sol.backend} in {sol.iterations} iterations, objective {sol.objective:.6e}, "
                     f"residual {sol.primal_residual:.1e}")
    elif sol.status == "infeasible":
        logger.warning(f"⚠️ SDP looks infeasible after {sol.iterations} iterations "
                       f"(primal residual {sol.primal_residual:.3e})")
    else:
        logger.warning(f"⚠️ SDP unfinished ({sol.status}, {sol.backend}): residuals "
                       f"{sol.primal_residual:.3e}/{sol.dual_residual:.3e}")
    return sol


# ─────────────────────────────────────────────────────────────────────────────
# Debug dump
# ─────────────────────────────────────────────────────────────────────────────

def _matrix_lines(M: np.ndarray) -> List[str]:
    return [" ".join(repr(float(v)) for v in row) for row in M]


def dump_program(prog: ConicProgram, path: str) -> str:
    """
    Write a program as plain text for cross-checking with external tools:

        dim <D>
        w_T <value>
        equalities <count>
        inequalities <count>
        objective            followed by D rows
        equality <c>         followed by D rows, one block per equality
        inequality <d> <t>   followed by D rows, one block per inequality

    Matrices are dense, row-major, full-precision decimals.
    """
    lines = [
        "# conic program: one PSD block S, one scalar T",
        f"dim {prog.dim}",
        f"w_T {float(prog.w_T)!r}",
        f"equalities {len(prog.equalities)}",
        f"inequalities {len(prog.inequalities)}",
        "objective",
    ]
    lines += _matrix_lines(prog.C)
    for M, c in prog.equalities:
        lines.append(f"equality {float(c)!r}")
        lines += _matrix_lines(M)
    for N, d, t in prog.inequalities:
        lines.append(f"inequality {float(d)!r} {float(t)!r}")
        lines += _matrix_lines(N)
    atomic_write_text(path, "\n".join(lines) + "\n")
    logger.debug(f"💾 Dumped conic program (D={prog.dim}) to {path}")
    return path

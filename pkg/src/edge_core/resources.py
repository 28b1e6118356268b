# edge_core/resources.py

"""
Second block of the alternating optimization: with x and phi fixed, choose
bandwidth, powers, GPU speeds and the delay bound T.

The energy of every transmission is a ratio chi/r (power times bits over
rate). Each ratio is replaced by the quadratic surrogate chi²·z + 1/(4·r²·z),
which is tight at z = 1/(2·chi·r) and concave in the resources for fixed z.
Part 2 alternates between refreshing z and maximizing the concave surrogate
with a log-barrier Newton method.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from config_settings import (
    BARRIER_MU0,
    BARRIER_MU_FACTOR,
    FP_MAX_OUTER,
    FP_TOL,
    KKT_TOL,
    LINE_SEARCH_ALPHA,
    LINE_SEARCH_BETA,
    LINE_SEARCH_MAX_HALVINGS,
    NEWTON_MAX_ITER,
)
from edge_core.errors import InfeasiblePairError, InfeasibleProblemError
from edge_core.model import (
    Allocation,
    Scenario,
    dinkelbach_objective,
    link_rate,
    link_rate_grad,
    link_rate_hessian,
    phase_delay_tables,
)

logger = logging.getLogger(__name__)

# Variable groups in block order; T is always optimized
GROUPS = ("b", "p_s", "f_s", "p_u", "f_u")

# Distance kept from every bound when a start point is pulled into the interior
_INTERIOR_MARGIN = 1e-6


@dataclass(frozen=True)
class FpState:
    """Auxiliaries of the surrogate, keyed by connected (user, server) pair."""
    z1: Dict[Tuple[int, int], float] = field(default_factory=dict)
    z2: Dict[Tuple[int, int], float] = field(default_factory=dict)


def _connected_pairs(x: np.ndarray) -> List[Tuple[int, int]]:
    return [(int(n), int(m)) for n, m in np.argwhere(np.asarray(x) > 0.5)]


def chi(a: Allocation, scn: Scenario, x: np.ndarray, phi: np.ndarray, n: int, m: int) -> Tuple[float, float]:
    """(chi1, chi2): transmit power times transmitted bits on the up and down link of (n, m)."""
    bits = scn.d[n] * scn.omega_b
    chi1 = a.p_u[n] * x[n, m] * phi[n] * bits
    chi2 = a.p_s[n, m] * x[n, m] * (1.0 - phi[n]) * bits
    return float(chi1), float(chi2)


def update_z(a: Allocation, scn: Scenario, x: np.ndarray, phi: np.ndarray) -> FpState:
    """Auxiliaries that make the surrogate tight at `a`; pairs with chi = 0 get none."""
    z1, z2 = {}, {}
    for n, m in _connected_pairs(x):
        chi1, chi2 = chi(a, scn, x, phi, n, m)
        for value, power, store, link in ((chi1, a.p_u[n], z1, "uplink"), (chi2, a.p_s[n, m], z2, "downlink")):
            if value == 0:
                continue
            r = link_rate(a.b[n, m], power, scn.g[n, m], scn.sigma2)
            if not r > 0:
                raise InfeasiblePairError(n, m, f"zero {link} rate with data to send")
            store[(n, m)] = 1.0 / (2.0 * value * r)
    return FpState(z1=z1, z2=z2)


def direct_objective(a: Allocation, scn: Scenario, x: np.ndarray, phi: np.ndarray, y: float) -> float:
    """Resource-block objective evaluated on the model itself: V − y·(ω_t·T + ω_e·E)."""
    return dinkelbach_objective(scn, a.replace(x=x, phi=phi), y)


# ─────────────────────────────────────────────────────────────────────────────
# Barrier subproblem
# ─────────────────────────────────────────────────────────────────────────────

class ResourceProblem:
    """
    Concave surrogate and its constraints in cap-normalized coordinates.

    The vector w holds five blocks of length N (b, p_s, f_s of the connected
    pair, then p_u, f_u), each divided by its cap, followed by T / T_scale.
    Variables outside the `free` groups stay at their start values.
    """

    def __init__(self, scn: Scenario, x: np.ndarray, phi: np.ndarray, y: float, z: FpState,
                 start: Allocation, free: Optional[Iterable[str]] = None):
        x = np.asarray(x, dtype=float)
        phi = np.asarray(phi, dtype=float)
        self.scn = scn
        self.x = x
        self.phi = phi
        self.y = float(y)
        self.start = start
        N = self.N = scn.N
        self.rows = np.arange(N)
        self.srv = np.argmax(x, axis=1)

        srv = self.srv
        self.caps = np.stack([scn.b_max[srv], scn.p_max_m[srv], scn.F_max_m[srv], scn.p_max_n, scn.F_max_n])
        self.g = scn.g[self.rows, srv]
        work = scn.d * scn.t
        bits = scn.d * scn.omega_b
        self.k1 = phi * bits
        self.k2 = (1.0 - phi) * bits
        self.a1 = phi * work * scn.e_n
        self.a3 = (1.0 - phi) * work * scn.e_m[srv]
        self.c1 = scn.e_n * scn.kappa_n * phi * work
        self.c3 = scn.e_m[srv] * scn.kappa_m[srv] * (1.0 - phi) * work
        self.z1 = np.array([z.z1.get((n, int(srv[n])), 0.0) for n in range(N)])
        self.z2 = np.array([z.z2.get((n, int(srv[n])), 0.0) for n in range(N)])
        self.up = self.z1 > 0
        self.dn = self.z2 > 0
        self.T_scale = start.T if start.T > 0 else 1.0

        groups = tuple(GROUPS) if free is None else tuple(free)
        unknown = set(groups) - set(GROUPS) - {"T"}
        if unknown:
            raise ValueError(f"unknown variable groups: {sorted(unknown)}")
        self.free_groups = tuple(name for name in GROUPS if name in groups)
        mask = np.zeros(5 * N + 1, dtype=bool)
        for name in self.free_groups:
            k = GROUPS.index(name)
            mask[k * N:(k + 1) * N] = True
        mask[-1] = True
        self.free_idx = np.flatnonzero(mask)
        self._free_vars = np.flatnonzero(mask[:-1])

        # per-server capacity groups for b, p_s, f_s
        self._cap_groups = []
        for k, name in enumerate(GROUPS[:3]):
            if name not in self.free_groups:
                continue
            for m in range(scn.M):
                members = k * N + np.flatnonzero(srv == m)
                if members.size:
                    self._cap_groups.append(members)
        self._user_caps = np.concatenate([
            np.arange(k * N, (k + 1) * N) for k, name in ((3, "p_u"), (4, "f_u")) if name in self.free_groups
        ] or [np.zeros(0, dtype=int)])

    # ── packing ──────────────────────────────────────────────────────────────

    @property
    def n_constraints(self) -> int:
        return self._free_vars.size + self._user_caps.size + len(self._cap_groups) + self.N

    def pack(self, a: Allocation) -> np.ndarray:
        r, s = self.rows, self.srv
        blocks = [a.b[r, s], a.p_s[r, s], a.f_s[r, s], a.p_u, a.f_u]
        return np.append(np.concatenate(blocks) / self.caps.ravel(), a.T / self.T_scale)

    def unpack(self, w: np.ndarray):
        phys = w[:-1].reshape(5, self.N) * self.caps
        return phys[0], phys[1], phys[2], phys[3], phys[4], w[-1] * self.T_scale

    def to_allocation(self, w: np.ndarray, base: Allocation) -> Allocation:
        b, ps, fs, pu, fu, T = self.unpack(w)
        tables = {"b": base.b.copy(), "p_s": base.p_s.copy(), "f_s": base.f_s.copy()}
        for name, values in (("b", b), ("p_s", ps), ("f_s", fs)):
            tables[name][self.rows, self.srv] = values
        return base.replace(x=self.x, phi=self.phi, p_u=pu, f_u=fu, T=T, **tables)

    # ── surrogate objective ──────────────────────────────────────────────────

    def _links(self, b, ps, pu):
        sigma2 = self.scn.sigma2
        r_up = link_rate(b, pu, self.g, sigma2)
        r_dn = link_rate(b, ps, self.g, sigma2)
        return r_up, r_dn

    def objective(self, w: np.ndarray) -> float:
        """Concave surrogate of the resource-block objective (to be maximized)."""
        scn = self.scn
        b, ps, fs, pu, fu, T = self.unpack(w)
        r_up, r_dn = self._links(b, ps, pu)
        share = w[:self.N] + w[self.N:2 * self.N] + w[2 * self.N:3 * self.N]
        ye = self.y * scn.omega_e
        value = np.sum(scn.varpi1 * np.log1p(scn.varpi2 * share))
        value -= self.y * scn.omega_t * T
        value -= ye * np.sum(self.c1 * fu ** 2 + self.c3 * fs ** 2)
        with np.errstate(divide="ignore"):
            up = self.k1 ** 2 * self.z1 * pu ** 2 + 1.0 / (4.0 * r_up ** 2 * np.where(self.up, self.z1, 1.0))
            dn = self.k2 ** 2 * self.z2 * ps ** 2 + 1.0 / (4.0 * r_dn ** 2 * np.where(self.dn, self.z2, 1.0))
        value -= ye * (np.sum(up[self.up]) + np.sum(dn[self.dn]))
        return float(value)

    def _link_terms(self, b, p, k, z, active, r):
        """Gradient and Hessian of k²z·p² + 1/(4r²z) in physical (b, p)."""
        zs = np.where(active, z, 1.0)
        rs = np.where(active, r, 1.0)
        h1 = -1.0 / (2.0 * rs ** 3 * zs)
        h2 = 3.0 / (2.0 * rs ** 4 * zs)
        rb, rp = link_rate_grad(np.where(active, b, 1.0), p, self.g, self.scn.sigma2)
        rbb, rbp, rpp = link_rate_hessian(np.where(active, b, 1.0), p, self.g, self.scn.sigma2)
        gb = h1 * rb
        gp = 2.0 * k ** 2 * z * p + h1 * rp
        hbb = h2 * rb * rb + h1 * rbb
        hbp = h2 * rb * rp + h1 * rbp
        hpp = 2.0 * k ** 2 * z + h2 * rp * rp + h1 * rpp
        on = active.astype(float)
        return gb * on, gp * on, hbb * on, hbp * on, hpp * on

    def _index(self, k: int) -> np.ndarray:
        return k * self.N + self.rows

    def objective_grad(self, w: np.ndarray) -> np.ndarray:
        scn = self.scn
        N = self.N
        b, ps, fs, pu, fu, T = self.unpack(w)
        r_up, r_dn = self._links(b, ps, pu)
        cap_b, cap_ps, cap_fs, cap_pu, cap_fu = self.caps
        ye = self.y * scn.omega_e
        grad = np.zeros(5 * N + 1)

        share = w[:N] + w[N:2 * N] + w[2 * N:3 * N]
        dv = scn.varpi1 * scn.varpi2 / (1.0 + scn.varpi2 * share)
        for k in range(3):
            grad[self._index(k)] += dv
        grad[-1] = -self.y * scn.omega_t * self.T_scale
        grad[self._index(4)] -= ye * 2.0 * self.c1 * fu * cap_fu
        grad[self._index(2)] -= ye * 2.0 * self.c3 * fs * cap_fs

        gb, gp, *_ = self._link_terms(b, pu, self.k1, self.z1, self.up, r_up)
        grad[self._index(0)] -= ye * gb * cap_b
        grad[self._index(3)] -= ye * gp * cap_pu
        gb, gp, *_ = self._link_terms(b, ps, self.k2, self.z2, self.dn, r_dn)
        grad[self._index(0)] -= ye * gb * cap_b
        grad[self._index(1)] -= ye * gp * cap_ps
        return grad

    def objective_hess(self, w: np.ndarray) -> np.ndarray:
        scn = self.scn
        N = self.N
        b, ps, fs, pu, fu, T = self.unpack(w)
        r_up, r_dn = self._links(b, ps, pu)
        cap_b, cap_ps, cap_fs, cap_pu, cap_fu = self.caps
        ye = self.y * scn.omega_e
        H = np.zeros((5 * N + 1, 5 * N + 1))

        share = w[:N] + w[N:2 * N] + w[2 * N:3 * N]
        d2v = -scn.varpi1 * scn.varpi2 ** 2 / (1.0 + scn.varpi2 * share) ** 2
        for i in range(3):
            for j in range(3):
                H[self._index(i), self._index(j)] += d2v
        H[self._index(4), self._index(4)] -= ye * 2.0 * self.c1 * cap_fu ** 2
        H[self._index(2), self._index(2)] -= ye * 2.0 * self.c3 * cap_fs ** 2

        ib = self._index(0)
        for p, k, z, active, r, ip, cap_p in ((pu, self.k1, self.z1, self.up, r_up, self._index(3), cap_pu),
                                              (ps, self.k2, self.z2, self.dn, r_dn, self._index(1), cap_ps)):
            _, _, hbb, hbp, hpp = self._link_terms(b, p, k, z, active, r)
            H[ib, ib] -= ye * hbb * cap_b ** 2
            H[ib, ip] -= ye * hbp * cap_b * cap_p
            H[ip, ib] -= ye * hbp * cap_b * cap_p
            H[ip, ip] -= ye * hpp * cap_p ** 2
        return H

    # ── delay constraints ────────────────────────────────────────────────────

    def delays(self, w: np.ndarray) -> np.ndarray:
        """Per-user completion time of the connected pair (s)."""
        b, ps, fs, pu, fu, _ = self.unpack(w)
        r_up, r_dn = self._links(b, ps, pu)
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(self.k1 > 0, self.k1 / r_up, 0.0)
            dn = np.where(self.k2 > 0, self.k2 / r_dn, 0.0)
            local = np.where(self.a1 > 0, self.a1 / fu, 0.0)
            server = np.where(self.a3 > 0, self.a3 / fs, 0.0)
        return local + up + server + dn

    def _delay_derivs(self, w: np.ndarray):
        """Gradient (N×5) and Hessian (N×5×5) of every user's delay in scaled coordinates."""
        N = self.N
        b, ps, fs, pu, fu, _ = self.unpack(w)
        r_up, r_dn = self._links(b, ps, pu)
        caps = self.caps.T                      # N×5
        grad = np.zeros((N, 5))
        hess = np.zeros((N, 5, 5))

        grad[:, 4] = -self.a1 / fu ** 2
        hess[:, 4, 4] = 2.0 * self.a1 / fu ** 3
        grad[:, 2] = -self.a3 / fs ** 2
        hess[:, 2, 2] = 2.0 * self.a3 / fs ** 3

        for k, p, r, ip in ((self.k1, pu, r_up, 3), (self.k2, ps, r_dn, 1)):
            on = k > 0
            rs = np.where(on, r, 1.0)
            rb, rp = link_rate_grad(b, p, self.g, self.scn.sigma2)
            rbb, rbp, rpp = link_rate_hessian(b, p, self.g, self.scn.sigma2)
            kk = np.where(on, k, 0.0)
            grad[:, 0] += -kk * rb / rs ** 2
            grad[:, ip] += -kk * rp / rs ** 2
            hess[:, 0, 0] += kk * (2.0 * rb * rb / rs ** 3 - rbb / rs ** 2)
            hess[:, 0, ip] += kk * (2.0 * rb * rp / rs ** 3 - rbp / rs ** 2)
            hess[:, ip, 0] += kk * (2.0 * rb * rp / rs ** 3 - rbp / rs ** 2)
            hess[:, ip, ip] += kk * (2.0 * rp * rp / rs ** 3 - rpp / rs ** 2)

        grad *= caps
        hess *= caps[:, :, None] * caps[:, None, :]
        return grad, hess

    # ── barrier ──────────────────────────────────────────────────────────────

    def slacks(self, w: np.ndarray) -> Optional[Dict[str, np.ndarray]]:
        """Positive slacks of every barrier constraint, or None outside the interior."""
        lower = w[self._free_vars]
        if np.any(lower <= 0):
            return None
        caps = 1.0 - w[self._user_caps]
        groups = np.array([1.0 - np.sum(w[g]) for g in self._cap_groups])
        if np.any(caps <= 0) or np.any(groups <= 0):
            return None
        delay = w[-1] - self.delays(w) / self.T_scale
        if not np.all(np.isfinite(delay)) or np.any(delay <= 0):
            return None
        return {"lower": lower, "caps": caps, "groups": groups, "delay": delay}

    def barrier_value(self, w: np.ndarray, mu: float, f_scale: float) -> float:
        s = self.slacks(w)
        if s is None:
            return np.inf
        logs = sum(np.sum(np.log(v)) for v in s.values())
        return -self.objective(w) / f_scale - mu * logs

    def barrier_grad(self, w: np.ndarray, mu: float, f_scale: float, s=None) -> np.ndarray:
        s = s if s is not None else self.slacks(w)
        grad = -self.objective_grad(w) / f_scale
        grad[self._free_vars] -= mu / s["lower"]
        grad[self._user_caps] += mu / s["caps"]
        for members, slack in zip(self._cap_groups, s["groups"]):
            grad[members] += mu / slack
        dgrad, _ = self._delay_derivs(w)
        for n in range(self.N):
            idx = self._user_idx(n)
            ds = np.append(-dgrad[n] / self.T_scale, 1.0)
            grad[idx] -= mu * ds / s["delay"][n]
        return grad

    def barrier_hess(self, w: np.ndarray, mu: float, f_scale: float, s=None) -> np.ndarray:
        s = s if s is not None else self.slacks(w)
        H = -self.objective_hess(w) / f_scale
        H[self._free_vars, self._free_vars] += mu / s["lower"] ** 2
        H[self._user_caps, self._user_caps] += mu / s["caps"] ** 2
        for members, slack in zip(self._cap_groups, s["groups"]):
            H[np.ix_(members, members)] += mu / slack ** 2
        dgrad, dhess = self._delay_derivs(w)
        for n in range(self.N):
            idx = self._user_idx(n)
            sn = s["delay"][n]
            ds = np.append(-dgrad[n] / self.T_scale, 1.0)
            block = np.outer(ds, ds) / sn ** 2
            block[:5, :5] += dhess[n] / (self.T_scale * sn)
            H[np.ix_(idx, idx)] += mu * block
        return H

    def _user_idx(self, n: int) -> np.ndarray:
        return np.array([k * self.N + n for k in range(5)] + [5 * self.N])

    def interior(self, w: np.ndarray) -> np.ndarray:
        """Pull a start point strictly inside every barrier constraint."""
        w = w.copy()
        eps = _INTERIOR_MARGIN
        w[self._free_vars] = np.maximum(w[self._free_vars], eps)
        w[self._user_caps] = np.minimum(w[self._user_caps], 1.0 - eps)
        free = set(self._free_vars.tolist())
        for members in self._cap_groups:
            movable = np.array([i for i in members if i in free])
            fixed_sum = np.sum(w[[i for i in members if i not in free]])
            total = fixed_sum + np.sum(w[movable])
            if total > 1.0 - eps:
                room = 1.0 - eps - fixed_sum
                if room <= 0:
                    raise InfeasibleProblemError("frozen resources already exhaust a server cap")
                w[movable] *= room / np.sum(w[movable])
        T_needed = np.max(self.delays(w)) / self.T_scale
        if not np.isfinite(T_needed):
            raise InfeasibleProblemError("start point has an unbounded delay")
        w[-1] = max(w[-1], T_needed) * (1.0 + eps) + 1e-12
        return w


# ─────────────────────────────────────────────────────────────────────────────
# Solvers
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ConcaveResult:
    allocation: Allocation
    objective: float          # surrogate value at the returned point
    kkt_residual: float
    converged: bool
    newton_steps: int


def _newton_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    try:
        return -cho_solve(cho_factor(H), g)
    except LinAlgError:
        ridge = 1e-10 * max(1.0, float(np.max(np.abs(np.diag(H)))))
        return -np.linalg.solve(H + ridge * np.eye(H.shape[0]), g)


def _centering(prob: ResourceProblem, w: np.ndarray, mu: float, f_scale: float) -> Tuple[np.ndarray, bool, int]:
    """Damped Newton on the barrier function for one value of mu."""
    idx = prob.free_idx
    for step_no in range(1, NEWTON_MAX_ITER + 1):
        s = prob.slacks(w)
        grad = prob.barrier_grad(w, mu, f_scale, s)[idx]
        hess = prob.barrier_hess(w, mu, f_scale, s)[np.ix_(idx, idx)]
        direction = _newton_direction(hess, grad)
        slope = float(grad @ direction)
        if -slope / 2.0 <= 1e-12:
            return w, True, step_no
        psi0 = prob.barrier_value(w, mu, f_scale)
        t = 1.0
        for _ in range(LINE_SEARCH_MAX_HALVINGS):
            cand = w.copy()
            cand[idx] += t * direction
            psi = prob.barrier_value(cand, mu, f_scale)
            if psi <= psi0 + LINE_SEARCH_ALPHA * t * slope:
                break
            t *= LINE_SEARCH_BETA
        else:
            logger.debug(f"🔍 Line search stalled at mu={mu:.1e} after {step_no} Newton steps")
            return w, False, step_no
        w = cand
    return w, False, NEWTON_MAX_ITER


def _implied_T(scn: Scenario, a: Allocation) -> float:
    T1, T2, T3, T4 = phase_delay_tables(scn, a)
    return float(np.max(T1 + T2 + T3 + T4))


def solve_concave(scn: Scenario, x: np.ndarray, phi: np.ndarray, z: FpState, y: float, start: Allocation,
                  tol: float = KKT_TOL, free: Optional[Iterable[str]] = None) -> ConcaveResult:
    """
    Maximize the surrogate for fixed z from a feasible start. The start is
    returned unchanged when the barrier iterate does not improve on it.
    """
    start = start.replace(x=x, phi=phi)
    prob = ResourceProblem(scn, x, phi, y, z, start, free)
    w0 = prob.pack(start)
    f_start = prob.objective(w0)
    f_scale = max(1.0, abs(f_start))

    w = prob.interior(w0)
    mu = BARRIER_MU0
    steps = 0
    stage_ok = False
    while True:
        w, stage_ok, k = _centering(prob, w, mu, f_scale)
        steps += k
        if mu * prob.n_constraints <= tol:
            break
        mu /= BARRIER_MU_FACTOR

    kkt = max(float(np.max(np.abs(prob.barrier_grad(w, mu, f_scale)[prob.free_idx]))), mu * prob.n_constraints)
    candidate = prob.to_allocation(w, start)
    candidate = candidate.replace(T=_implied_T(scn, candidate))
    f_new = prob.objective(prob.pack(candidate))
    logger.debug(f"🔍 Barrier solve: {steps} Newton steps, surrogate {f_start:.6e} -> {f_new:.6e}, KKT {kkt:.1e}")

    if f_new < f_start:
        return ConcaveResult(start, f_start, kkt, False, steps)
    return ConcaveResult(candidate, f_new, kkt, stage_ok and kkt <= max(tol, 10.0 * mu * prob.n_constraints), steps)


def transformed_objective(a: Allocation, z: FpState, scn: Scenario, x: np.ndarray, phi: np.ndarray, y: float) -> float:
    """Surrogate value at `a` (its own T) for fixed auxiliaries z."""
    a = a.replace(x=x, phi=phi)
    prob = ResourceProblem(scn, x, phi, y, z, a)
    return prob.objective(prob.pack(a))


@dataclass(frozen=True, eq=False)
class Part2Result:
    allocation: Allocation
    objective: float
    trace: List[float]        # direct objective after every surrogate refresh, start first
    iterations: int
    converged: bool


def solve_part2(scn: Scenario, x: np.ndarray, phi: np.ndarray, y: float, start: Allocation,
                tol: float = FP_TOL, max_outer: int = FP_MAX_OUTER,
                free: Optional[Iterable[str]] = None) -> Part2Result:
    a = start.replace(x=x, phi=phi)
    a = a.replace(T=_implied_T(scn, a))
    obj = direct_objective(a, scn, x, phi, y)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, max_outer + 1):
        z = update_z(a, scn, x, phi)
        res = solve_concave(scn, x, phi, z, y, a, free=free)
        new_obj = direct_objective(res.allocation, scn, x, phi, y)
        if new_obj < obj:
            logger.debug(f"🔍 Resource step {it} did not ascend ({new_obj:.9e} < {obj:.9e}), stopping")
            converged = True
            break
        change = (new_obj - obj) / max(1.0, abs(obj))
        a, obj = res.allocation, new_obj
        trace.append(obj)
        logger.debug(f"🔄 Resource step {it}: objective {obj:.9e} (change {change:.2e})")
        if change <= tol:
            converged = True
            break
    return Part2Result(allocation=a, objective=obj, trace=trace, iterations=it, converged=converged)


def equal_split(scn: Scenario, x: np.ndarray, phi: Optional[np.ndarray] = None) -> Allocation:
    """
    Server caps divided among the connected users, user caps in full.
    Unconnected pairs keep a cap/N standby share.
    """
    x = np.asarray(x, dtype=float)
    counts = np.maximum(x.sum(axis=0), 1.0)
    tables = {}
    for name, cap in (("b", scn.b_max), ("p_s", scn.p_max_m), ("f_s", scn.F_max_m)):
        tables[name] = np.where(x > 0.5, cap / counts, cap / scn.N) * np.ones_like(x)
    phi = np.full(scn.N, 0.5) if phi is None else np.asarray(phi, dtype=float)
    a = Allocation(x=x, phi=phi, p_u=scn.p_max_n, f_u=scn.F_max_n, T=0.0, **tables)
    return a.replace(T=_implied_T(scn, a))

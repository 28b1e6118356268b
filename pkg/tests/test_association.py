import itertools
import math

import numpy as np
import pytest

from edge_core import association, oracle, sdpsolver
from edge_core.association import (
    build_sdr,
    coeffs,
    hungarian_match,
    lift,
    match_association,
    refit_phi,
    round_association,
    solve_part1,
    solve_relaxation,
)
from edge_core.dashf import greedy_association, initialize, random_association
from edge_core.errors import InfeasiblePairError, InfeasibleProblemError
from edge_core.model import allocation_scr, dinkelbach_objective, evaluate
from edge_core.resources import equal_split


def _random_binary(rng, n_users, n_servers):
    return random_association(n_users, n_servers, rng), rng.random(n_users)


# ── coefficients and lifting ─────────────────────────────────────────────────

def test_lifted_objective_reproduces_association_objective(default_scenario):
    scn = default_scenario
    fixed = initialize(scn)
    y = allocation_scr(scn, fixed)
    co = coeffs(scn, fixed, y)
    sdr = build_sdr(co, fixed, scn)
    rng = np.random.default_rng(1)
    for _ in range(100):
        x, phi = _random_binary(rng, scn.N, scn.M)
        T = co.implied_T(x, phi)
        lifted = float(np.sum(sdr.objective * lift(x, phi)) + sdr.w_T * T)
        direct = co.objective(x, phi, T)
        model = -dinkelbach_objective(scn, fixed.replace(x=x, phi=phi, T=T), y)
        scale = max(1.0, abs(model))
        assert abs(lifted - direct) <= 1e-9 * scale
        assert abs(direct - model) <= 1e-9 * scale


def test_delay_pieces_match_model_delays(default_scenario):
    scn = default_scenario
    fixed = initialize(scn)
    co = coeffs(scn, fixed, 1.0)
    a = fixed.replace(phi=np.linspace(0.1, 0.9, scn.N))
    pair = evaluate(scn, a).pair_delay
    assert np.allclose(co.pair_delays(a.x, a.phi), pair, rtol=1e-12)


def test_sdr_constraint_families(default_scenario):
    scn = default_scenario
    fixed = initialize(scn)
    sdr = build_sdr(coeffs(scn, fixed, 1.0), fixed, scn)
    N, M = scn.N, scn.M
    assert sdr.dim == N + N * M + 1
    assert sdr.family_counts() == {
        "binary": N * M,
        "single_server": N,
        "split_box": 2 * N,
        "capacity": 3 * M,
        "delay": N * M,
    }
    prog = sdr.to_program()
    assert len(prog.equalities) == N * M + N + 1
    assert len(prog.inequalities) == 2 * N + 3 * M + N * M


def test_lifted_feasible_point_satisfies_every_constraint(default_scenario):
    scn = default_scenario
    fixed = initialize(scn)
    co = coeffs(scn, fixed, 1.0)
    sdr = build_sdr(co, fixed, scn)
    S = lift(fixed.x, fixed.phi)
    T = co.implied_T(fixed.x, fixed.phi)
    for c in sdr.constraints:
        lhs = float(np.sum(c.matrix * S) + c.t_coeff * T)
        if c.equality:
            assert lhs == pytest.approx(c.rhs, abs=1e-12)
        else:
            assert lhs <= c.rhs + 1e-9 * max(1.0, T), (c.family, c.index)


def test_zero_speed_pair_is_rejected(default_scenario):
    scn = default_scenario
    fixed = initialize(scn)
    f_s = fixed.f_s.copy()
    f_s[3, 1] = 0.0
    with pytest.raises(InfeasiblePairError) as err:
        coeffs(scn, fixed.replace(f_s=f_s), 1.0)
    assert (err.value.n, err.value.m) == (3, 1)


# ── Hungarian rounding ───────────────────────────────────────────────────────

def test_hungarian_matches_exhaustive_permutations():
    rng = np.random.default_rng(42)
    for _ in range(100):
        size = int(rng.integers(1, 8))
        W = rng.random((size, size))
        match = hungarian_match(W)
        assert sorted(match.tolist()) == list(range(size))
        best = max(sum(W[i, p[i]] for i in range(size)) for p in itertools.permutations(range(size)))
        assert W[np.arange(size), match].sum() == pytest.approx(best, rel=1e-12)


def test_hungarian_rejects_more_rows_than_columns():
    with pytest.raises(ValueError):
        hungarian_match(np.ones((3, 2)))


def test_match_association_balances_load():
    rng = np.random.default_rng(3)
    W = rng.random((7, 3))
    x = match_association(W)
    assert np.all(x.sum(axis=1) == 1)
    assert x.sum(axis=0).max() <= math.ceil(7 / 3)


def test_rank_one_lift_rounds_to_itself():
    x = greedy_association(6, 3)
    x = x[np.random.default_rng(0).permutation(6)]
    phi = np.linspace(0.0, 1.0, 6)
    assert np.array_equal(round_association(lift(x, phi), 6, 3), x)


def test_rounding_ignores_positive_scaling():
    rng = np.random.default_rng(8)
    for _ in range(20):
        W = rng.random((7, 3))
        for c in (1e-3, 7.5, 1e4):
            assert np.array_equal(match_association(c * W), match_association(W))
        x = rng.random((7, 3))
        x /= x.sum(axis=1, keepdims=True)
        S = lift(x, rng.random(7))
        for c in (0.2, 40.0):
            assert np.array_equal(round_association(c * S, 7, 3), round_association(S, 7, 3))


def test_fractional_row_follows_the_other_users():
    # user 0 is split evenly; users 1 and 2 fill the first server's two slots
    x = np.array([[0.5, 0.5], [1.0, 0.0], [0.9, 0.1]])
    rounded = round_association(lift(x, np.full(3, 0.5)), 3, 2)
    assert rounded.tolist() == [[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]]


# ── split refit and relaxation ───────────────────────────────────────────────

def test_refit_matches_oracle_split(small_scenario):
    scn = small_scenario
    fixed = initialize(scn)
    y = allocation_scr(scn, fixed)
    co = coeffs(scn, fixed, y)
    phi, T = refit_phi(fixed.x, co)
    ours = co.objective(fixed.x, phi, T)
    ref_phi, ref = oracle._phi_lp(scn, fixed, y)
    assert ours == pytest.approx(ref, rel=1e-7, abs=1e-9)
    assert np.all((phi >= 0) & (phi <= 1))


def test_infeasible_relaxation_raises(scenario_factory):
    scn = scenario_factory(2, 1, seed=5)
    fixed = equal_split(scn, np.ones((2, 1)))
    fixed = fixed.replace(b=np.full((2, 1), 2.0 * scn.b_max[0]))
    sdr = build_sdr(coeffs(scn, fixed, 1.0), fixed, scn)
    with pytest.raises(InfeasibleProblemError) as err:
        solve_relaxation(sdr, max_iter=20000)
    assert err.value.diagnostics["status"] == "infeasible"



def test_default_relaxation_is_certified(default_scenario):
    scn = default_scenario
    fixed = initialize(scn)
    y = allocation_scr(scn, fixed)
    co = coeffs(scn, fixed, y)
    sdr = build_sdr(co, fixed, scn)
    relaxation = solve_relaxation(sdr)
    sol = relaxation.solution
    assert sol.converged
    worst_row, psd = sdpsolver.residuals(sdr.to_program(), sol.S, sol.T)
    assert worst_row <= 1e-6 and psd <= 1e-6
    assert sol.primal_residual == pytest.approx(worst_row, abs=1e-12)
    # the lifted incumbent is feasible for the relaxation
    phi, T = refit_phi(fixed.x, co)
    incumbent = co.objective(fixed.x, phi, T)
    assert relaxation.lower_bound is not None
    assert relaxation.lower_bound <= incumbent + 1e-6 * max(1.0, abs(incumbent))


def test_relaxation_residuals_are_absolute(scenario_factory):
    for seed in range(3):
        scn = scenario_factory(3, 2, seed=40 + seed)
        fixed = initialize(scn)
        sdr = build_sdr(coeffs(scn, fixed, allocation_scr(scn, fixed)), fixed, scn)
        sol = solve_relaxation(sdr, tol=1e-6).solution
        if sol.converged:
            worst_row, psd = sdpsolver.residuals(sdr.to_program(), sol.S, sol.T)
            assert max(worst_row, psd) <= 1e-6

def test_part1_never_worse_than_refitted_incumbent(small_scenario):
    scn = small_scenario
    current = initialize(scn)
    y = allocation_scr(scn, current)
    co = coeffs(scn, current, y)
    phi, T = refit_phi(current.x, co)
    incumbent = co.objective(current.x, phi, T)
    res = solve_part1(scn, current, y)
    assert res.objective <= incumbent + 1e-12 * max(1.0, abs(incumbent))
    assert association.caps_respected(scn, current, res.allocation.x)
    assert np.all(res.allocation.x.sum(axis=1) == 1)


def test_part1_without_relaxation_keeps_association(small_scenario):
    scn = small_scenario
    current = equal_split(scn, greedy_association(scn.N, scn.M))
    res = solve_part1(scn, current, allocation_scr(scn, current), relax=False)
    assert np.array_equal(res.allocation.x, current.x)
    assert res.lower_bound is None and not res.switched


@pytest.mark.slow
def test_relaxation_bound_and_rounding_gap_against_brute_force(scenario_factory):
    for seed in range(20):
        scn = scenario_factory(3, 2, seed=100 + seed)
        fixed = initialize(scn)
        y = allocation_scr(scn, fixed)
        best = oracle.brute_force_association(scn, fixed, y)
        co = coeffs(scn, fixed, y)
        relaxation = solve_relaxation(build_sdr(co, fixed, scn))
        assert relaxation.lower_bound is not None
        assert relaxation.lower_bound <= best.objective + 1e-6 * max(1.0, abs(best.objective))
        res = solve_part1(scn, fixed, y)
        assert res.objective - best.objective <= 0.05 * abs(best.objective)

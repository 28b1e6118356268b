import dataclasses

import numpy as np
import pytest

from edge_core import oracle, resources
from edge_core.dashf import greedy_association, initialize
from edge_core.model import allocation_scr, check_feasibility, link_rate
from edge_core.resources import (
    ResourceProblem,
    direct_objective,
    equal_split,
    solve_concave,
    solve_part2,
    transformed_objective,
    update_z,
)


def _random_resources(rng, scn, base):
    """Feasible resource vector on the base association: every cap shared at random."""
    x = base.x
    tables = {}
    for name, cap in (("b", scn.b_max), ("p_s", scn.p_max_m), ("f_s", scn.F_max_m)):
        share = rng.uniform(0.05, 1.0, size=x.shape) * x
        share /= np.maximum(share.sum(axis=0), 1e-12)
        tables[name] = np.where(x > 0.5, share * cap * rng.uniform(0.5, 1.0), cap / scn.N)
    a = base.replace(
        p_u=scn.p_max_n * rng.uniform(0.05, 1.0, scn.N),
        f_u=scn.F_max_n * rng.uniform(0.05, 1.0, scn.N),
        phi=rng.uniform(0.0, 1.0, scn.N),
        **tables,
    )
    return a.replace(T=resources._implied_T(scn, a))


def test_fp_surrogate_is_tight_at_refreshed_auxiliaries(default_scenario):
    scn = default_scenario
    base = initialize(scn)
    y = allocation_scr(scn, base)
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = _random_resources(rng, scn, base)
        z = update_z(a, scn, a.x, a.phi)
        surrogate = transformed_objective(a, z, scn, a.x, a.phi, y)
        direct = direct_objective(a, scn, a.x, a.phi, y)
        assert abs(surrogate - direct) <= 1e-9 * max(1.0, abs(direct))


def test_surrogate_lower_bounds_objective_away_from_tight_point(default_scenario):
    scn = default_scenario
    base = initialize(scn)
    y = allocation_scr(scn, base)
    rng = np.random.default_rng(1)
    a = _random_resources(rng, scn, base)
    other = _random_resources(rng, scn, base).replace(phi=a.phi)
    other = other.replace(T=resources._implied_T(scn, other))
    z = update_z(a, scn, a.x, a.phi)
    assert transformed_objective(other, z, scn, a.x, a.phi, y) <= direct_objective(other, scn, a.x, a.phi, y) + 1e-9


def test_auxiliaries_follow_closed_form(small_scenario):
    scn = small_scenario
    a = initialize(scn)
    z = update_z(a, scn, a.x, a.phi)
    for (n, m), value in z.z1.items():
        chi1, _ = resources.chi(a, scn, a.x, a.phi, n, m)
        r = link_rate(a.b[n, m], a.p_u[n], scn.g[n, m], scn.sigma2)
        assert value == pytest.approx(1.0 / (2.0 * chi1 * r), rel=1e-12)
    assert set(z.z1) == {(n, int(m)) for n, m in enumerate(a.servers_of())}


def test_user_with_everything_on_server_has_no_uplink_auxiliary(small_scenario):
    scn = small_scenario
    a = initialize(scn)
    phi = a.phi.copy()
    phi[0] = 0.0
    z = update_z(a, scn, a.x, phi)
    assert (0, int(a.servers_of()[0])) not in z.z1
    assert (0, int(a.servers_of()[0])) in z.z2


def test_analytic_gradient_and_hessian_match_finite_differences(default_scenario):
    scn = default_scenario
    base = initialize(scn)
    y = allocation_scr(scn, base)
    rng = np.random.default_rng(2)
    for _ in range(20):
        a = _random_resources(rng, scn, base)
        z = update_z(a, scn, a.x, a.phi)
        prob = ResourceProblem(scn, a.x, a.phi, y, z, a)
        w = prob.pack(a)
        numeric = oracle.finite_diff_grad(prob.objective, w, h=1e-7)
        analytic = prob.objective_grad(w)
        assert np.linalg.norm(analytic - numeric) <= 1e-4 * max(1.0, np.linalg.norm(analytic))

        H = prob.objective_hess(w)
        col = 3 * scn.N  # first p_u entry
        numeric_col = oracle.finite_diff_grad(lambda v: prob.objective_grad(v)[col], w, h=1e-7)
        assert np.linalg.norm(H[col] - numeric_col) <= 1e-4 * max(1.0, np.linalg.norm(H[col]))


def test_surrogate_hessian_is_negative_semidefinite(small_scenario):
    scn = small_scenario
    a = initialize(scn)
    z = update_z(a, scn, a.x, a.phi)
    prob = ResourceProblem(scn, a.x, a.phi, allocation_scr(scn, a), z, a)
    eig = np.linalg.eigvalsh(prob.objective_hess(prob.pack(a)))
    assert eig.max() <= 1e-9 * max(1.0, np.abs(eig).max())


def test_equal_split_divides_caps_by_connected_users(default_scenario):
    scn = default_scenario
    x = greedy_association(scn.N, scn.M)
    a = equal_split(scn, x)
    for m in range(scn.M):
        members = x[:, m] > 0.5
        assert np.allclose(a.b[members, m], scn.b_max[m] / members.sum())
        assert np.allclose(a.b[~members, m], scn.b_max[m] / scn.N)
    assert np.array_equal(a.p_u, scn.p_max_n)
    assert check_feasibility(scn, a) == []


def test_concave_step_improves_surrogate_and_stays_feasible(small_scenario):
    scn = small_scenario
    a = initialize(scn)
    y = allocation_scr(scn, a)
    z = update_z(a, scn, a.x, a.phi)
    res = solve_concave(scn, a.x, a.phi, z, y, a)
    assert res.objective >= transformed_objective(a, z, scn, a.x, a.phi, y) - 1e-12
    assert check_feasibility(scn, res.allocation) == []


def test_part2_trace_is_nondecreasing_and_result_feasible(default_scenario):
    scn = default_scenario
    a = initialize(scn)
    y = allocation_scr(scn, a)
    res = solve_part2(scn, a.x, a.phi, y, a)
    assert all(b >= a_ for a_, b in zip(res.trace, res.trace[1:]))
    assert res.objective == pytest.approx(direct_objective(res.allocation, scn, a.x, a.phi, y))
    assert res.objective >= res.trace[0]
    assert check_feasibility(scn, res.allocation) == []


def test_unknown_variable_group_is_rejected(small_scenario):
    scn = small_scenario
    a = initialize(scn)
    with pytest.raises(ValueError):
        ResourceProblem(scn, a.x, a.phi, 1.0, update_z(a, scn, a.x, a.phi), a, free=("bandwidth",))


@pytest.mark.parametrize("group,seed", [("b", s) for s in range(5)] + [("p_u", s) for s in range(5)])
def test_single_user_matches_fine_grid(scenario_factory, group, seed):
    scn = scenario_factory(1, 1, seed=300 + seed)
    start = equal_split(scn, np.ones((1, 1)))
    y = allocation_scr(scn, start)
    res = solve_part2(scn, start.x, start.phi, y, start, free=(group,), max_outer=100)

    cap = scn.b_max[0] if group == "b" else scn.p_max_n[0]
    grid = oracle.GridSpec({group: (cap * 1e-4, cap, 10_000)})
    ref = oracle.grid_resource_search(scn, start.x, start.phi, y, grid, start)
    assert not ref.empty
    assert res.objective >= ref.objective - 1e-3 * max(1.0, abs(ref.objective))


def test_part2_restarted_at_its_result_stops_at_once(small_scenario):
    scn = small_scenario
    a = initialize(scn)
    y = allocation_scr(scn, a)
    first = solve_part2(scn, a.x, a.phi, y, a)
    assert first.converged
    again = solve_part2(scn, a.x, a.phi, y, first.allocation)
    assert again.iterations == 1
    assert again.converged
    assert again.objective >= first.objective - 1e-9 * max(1.0, abs(first.objective))


def test_identical_users_get_identical_resources(scenario_factory):
    base = scenario_factory(2, 1, seed=12)
    twin = base.users[0]
    scn = dataclasses.replace(base, users=(twin, twin), g=np.repeat(base.g[:1], 2, axis=0))
    start = equal_split(scn, np.ones((2, 1)))
    y = allocation_scr(scn, start)
    res = solve_part2(scn, start.x, start.phi, y, start)
    out = res.allocation
    for name in ("b", "p_s", "f_s"):
        table = getattr(out, name)
        assert table[0, 0] == pytest.approx(table[1, 0], rel=1e-6)
    for name in ("p_u", "f_u"):
        values = getattr(out, name)
        assert values[0] == pytest.approx(values[1], rel=1e-6)

import dataclasses
import math

import numpy as np
import pytest

from constants import ViolationCode
from edge_core import oracle
from edge_core.dashf import initialize
from edge_core.errors import InvalidScenarioError, UndefinedRatioError
from edge_core.model import (
    allocation_scr,
    check_feasibility,
    dinkelbach_objective,
    evaluate,
    link_rate,
    link_rate_grad,
    link_rate_hessian,
    phase_delays,
    phase_energies,
    scr,
    service_score,
)
from edge_core.resources import equal_split


# ── link rate ────────────────────────────────────────────────────────────────

def test_link_rate_matches_shannon_formula():
    b, p, g, sigma2 = 1e6, 0.1, 1e-10, 4e-21
    expected = b * math.log2(1.0 + g * p / (sigma2 * b))
    assert link_rate(b, p, g, sigma2) == pytest.approx(expected, rel=1e-12)


def test_link_rate_is_zero_without_bandwidth_or_power():
    assert link_rate(0.0, 0.1, 1e-10, 4e-21) == 0.0
    assert link_rate(1e6, 0.0, 1e-10, 4e-21) == 0.0


def test_link_rate_rejects_bad_inputs():
    with pytest.raises(ValueError):
        link_rate(-1.0, 0.1, 1e-10, 4e-21)
    with pytest.raises(InvalidScenarioError):
        link_rate(1e6, 0.1, 0.0, 4e-21)
    with pytest.raises(InvalidScenarioError):
        link_rate(1e6, 0.1, 1e-10, 0.0)


def test_link_rate_derivatives_match_finite_differences():
    g, sigma2 = 3e-11, 4e-21
    point = np.array([2e6, 0.15])
    f = lambda v: link_rate(v[0], v[1], g, sigma2)  # noqa: E731
    numeric = oracle.finite_diff_grad(f, point)
    analytic = np.array(link_rate_grad(point[0], point[1], g, sigma2), dtype=float)
    assert np.allclose(analytic, numeric, rtol=1e-5)

    hbb, hbp, hpp = link_rate_hessian(point[0], point[1], g, sigma2)
    db = oracle.finite_diff_grad(lambda v: float(link_rate_grad(v[0], v[1], g, sigma2)[0]), point)
    dp = oracle.finite_diff_grad(lambda v: float(link_rate_grad(v[0], v[1], g, sigma2)[1]), point)
    assert np.allclose([hbb, hbp], db, rtol=1e-4)
    assert np.allclose([hbp, hpp], dp, rtol=1e-4)
    # concave in (b, p)
    assert hbb <= 0 and hpp <= 0 and hbb * hpp - hbp ** 2 >= -1e-12 * abs(hbb * hpp)


# ── delays, energies, score ──────────────────────────────────────────────────

def test_evaluate_matches_scalar_reference(default_scenario):
    scn = default_scenario
    a = initialize(scn)
    bd = evaluate(scn, a)
    ref = oracle.scalar_cost(scn, a)
    assert bd.V == pytest.approx(ref["V"], rel=1e-9)
    assert bd.T_total == pytest.approx(ref["T_total"], rel=1e-9)
    assert bd.E_total == pytest.approx(ref["E_total"], rel=1e-9)
    assert allocation_scr(scn, a) == pytest.approx(oracle.scalar_scr(scn, a), rel=1e-9)


def test_unconnected_pair_only_pays_local_training(default_scenario):
    scn = default_scenario
    a = initialize(scn)
    n = 0
    m_off = 1 - int(a.servers_of()[n])
    T1, T2, T3, T4 = phase_delays(scn, a, n, m_off)
    assert T1 > 0
    assert (T2, T3, T4) == (0.0, 0.0, 0.0)
    assert phase_energies(scn, a, n, m_off) == (0.0, 0.0, 0.0, 0.0)


def test_local_energy_counted_once_per_user(default_scenario):
    scn = default_scenario
    a = initialize(scn)
    bd = evaluate(scn, a)
    expected = scn.e_n * scn.kappa_n * a.phi * scn.d * scn.t * a.f_u ** 2
    assert np.allclose(bd.E1.sum(axis=1), expected, rtol=1e-12)


def test_split_extremes_remove_phases(default_scenario):
    scn = default_scenario
    a = initialize(scn)
    n, m = 0, int(a.servers_of()[0])
    phi = a.phi.copy()
    phi[n] = 0.0
    T1, T2, _, _ = phase_delays(scn, a.replace(phi=phi), n, m)
    assert T1 == 0.0 and T2 == 0.0
    phi[n] = 1.0
    _, _, T3, T4 = phase_delays(scn, a.replace(phi=phi), n, m)
    assert T3 == 0.0 and T4 == 0.0


def test_zero_rate_pair_has_infinite_delay(default_scenario):
    scn = default_scenario
    a = initialize(scn)
    n, m = 0, int(a.servers_of()[0])
    b = a.b.copy()
    b[n, m] = 0.0
    assert math.isinf(phase_delays(scn, a.replace(b=b), n, m)[1])


def test_service_score_grows_with_resources():
    base = service_score(1.0, 1e14, 1e6, 10.0, 1e15, 1e7, 100.0, 1.0 / 3.0)
    more = service_score(2.0, 1e14, 1e6, 10.0, 1e15, 1e7, 100.0, 1.0 / 3.0)
    assert more > base > 0
    assert service_score(0.0, 0.0, 0.0, 10.0, 1e15, 1e7, 100.0, 1.0 / 3.0) == 0.0
    with pytest.raises(ValueError):
        service_score(11.0, 0.0, 0.0, 10.0, 1e15, 1e7, 100.0, 1.0 / 3.0)


# ── ratio and Dinkelbach objective ───────────────────────────────────────────

def test_scr_undefined_without_cost(default_scenario):
    bd = evaluate(default_scenario, initialize(default_scenario))
    zero = dataclasses.replace(bd, T_total=0.0, E_total=0.0)
    with pytest.raises(UndefinedRatioError):
        scr(zero, 0.5, 0.005)


def test_dinkelbach_objective_vanishes_at_the_ratio(default_scenario):
    scn = default_scenario
    a = initialize(scn)
    y = allocation_scr(scn, a)
    value = dinkelbach_objective(scn, a, y)
    assert abs(value) <= 1e-9 * evaluate(scn, a).V


# ── feasibility ──────────────────────────────────────────────────────────────

def test_initial_and_equal_split_allocations_are_feasible(default_scenario):
    scn = default_scenario
    assert check_feasibility(scn, initialize(scn)) == []
    a = initialize(scn)
    assert check_feasibility(scn, equal_split(scn, a.x, a.phi)) == []


def test_violations_name_the_constraint(default_scenario):
    scn = default_scenario
    a = initialize(scn)

    b = a.b * 3.0
    codes = {v.code for v in check_feasibility(scn, a.replace(b=b))}
    assert ViolationCode.BANDWIDTH_CAP in codes

    x = a.x.copy()
    x[0] = 1.0
    codes = {v.code for v in check_feasibility(scn, a.replace(x=x))}
    assert ViolationCode.SINGLE_SERVER in codes

    phi = a.phi.copy()
    phi[2] = 1.5
    codes = {v.code for v in check_feasibility(scn, a.replace(phi=phi))}
    assert ViolationCode.SPLIT_RANGE in codes

    codes = {v.code for v in check_feasibility(scn, a.replace(T=0.5 * a.T))}
    assert codes == {ViolationCode.DELAY_BOUND}

    codes = {v.code for v in check_feasibility(scn, a.replace(f_u=a.f_u * 2.0))}
    assert ViolationCode.USER_GPU_CAP in codes


def test_scenario_rejects_nonpositive_gain(default_scenario):
    g = np.array(default_scenario.g)
    g[0, 0] = 0.0
    with pytest.raises(InvalidScenarioError):
        dataclasses.replace(default_scenario, g=g)


def test_service_score_reference_points():
    varpi1, varpi2 = 10000.0 / math.log(2.0), 1.0 / 3.0
    caps = (10.0, 1e15, 1e7)
    assert service_score(*caps, *caps, varpi1, varpi2) == pytest.approx(10000.0, rel=1e-12)
    half = tuple(c / 2 for c in caps)
    assert service_score(*half, *caps, varpi1, varpi2) == pytest.approx(varpi1 * math.log(1.5), rel=1e-12)


def test_service_score_is_concave_in_resources():
    rng = np.random.default_rng(11)
    caps = np.array([10.0, 1e15, 1e7])
    varpi2 = 1.0 / 3.0
    for _ in range(200):
        varpi1 = rng.uniform(1.0, 1e4)
        u, v = rng.uniform(0.0, 1.0, size=(2, 3)) * caps
        lam = rng.uniform()
        mid = service_score(*(lam * u + (1 - lam) * v), *caps, varpi1, varpi2)
        chord = lam * service_score(*u, *caps, varpi1, varpi2) + (1 - lam) * service_score(*v, *caps, varpi1, varpi2)
        assert mid - chord >= -1e-9 * max(1.0, abs(chord))


def test_scaling_both_weights_divides_the_ratio(default_scenario):
    scn = default_scenario
    a = initialize(scn)
    b = equal_split(scn, a.x, a.phi)
    base_a, base_b = allocation_scr(scn, a), allocation_scr(scn, b)
    for c in (0.01, 3.0, 250.0):
        scaled = scn.with_weights(c * scn.omega_t, c * scn.omega_e)
        assert allocation_scr(scaled, a) * c == pytest.approx(base_a, rel=1e-12)
        # ranking of allocations is unchanged
        assert (allocation_scr(scaled, a) > allocation_scr(scaled, b)) == (base_a > base_b)

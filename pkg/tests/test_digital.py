import numpy as np
import pytest

from hybridbf.digital import (
    DigitalSolution,
    assemble_sdp_data,
    build_sdp_problem,
    extract_rank_one,
    lifted_objective,
    recover,
    sinr_expression,
    solve_digital_sdp,
)
from hybridbf.metrics import constraint_report, radiated_power, sinrs, total_beampattern, effective_channels
from hybridbf.scenarios import synthetic_scenario
from hybridbf.sdp_backends import INFEASIBLE, OPTIMAL


def lift(B):
    return tuple(np.outer(b, b.conj()) for b in B.T)


@pytest.fixture(scope="module")
def solved(small_scenario):
    data = assemble_sdp_data(small_scenario)
    return data, solve_digital_sdp(data, small_scenario)


def test_lifted_forms_match_exact_metrics(random_case):
    sc, B = random_case
    data = assemble_sdp_data(sc)
    X = lift(B)
    assert lifted_objective(data, X) == pytest.approx(total_beampattern(sc, B), rel=1e-12)
    assert sum(np.real(np.trace(data.AP @ Xk)) for Xk in X) == pytest.approx(radiated_power(sc, B), rel=1e-12)
    res = data.invariant_residuals()
    assert res["A0_mean"] < 1e-13 and res["Ym_psd"] < 1e-12 and res["Omega_rank1"] < 1e-12


def test_sinr_expression_sign(random_case):
    sc, B = random_case
    data = assemble_sdp_data(sc)
    X = lift(B)
    s = sinrs(sc, effective_channels(sc), B)
    for m in range(sc.M):
        assert sinr_expression(data, X, m, 0.9 * s[m], sc.noise_power) < 0
        assert sinr_expression(data, X, m, 1.1 * s[m], sc.noise_power) > 0
        assert sinr_expression(data, X, m, s[m], sc.noise_power) == pytest.approx(0, abs=1e-10 * sc.noise_power)


def test_problem_omits_implied_constraints(small_scenario):
    data = assemble_sdp_data(small_scenario)
    fams = [c.family for c in build_sdp_problem(data, small_scenario).constraints]
    assert fams.count("sinr") == 2 and fams.count("power") == 1
    sc = small_scenario.replace(beta_max=np.inf, beta_lo=np.zeros(2))
    fams = [c.family for c in build_sdp_problem(data, sc).constraints]
    assert "beampattern-high" not in fams and "beampattern-low" not in fams


def test_solve_optimal_and_feasible(solved, small_scenario):
    data, sol = solved
    assert sol.status == OPTIMAL
    assert sol.max_residual < 1e-6
    prob = build_sdp_problem(data, small_scenario)
    assert max(prob.violations(sol.lifted)) < 1e-6
    for X in sol.lifted:
        assert np.linalg.eigvalsh(X)[0] > -1e-8 * np.linalg.norm(X, 2)


def test_solve_deterministic(solved, small_scenario):
    data, sol = solved
    again = solve_digital_sdp(data, small_scenario)
    assert again.objective_lifted == sol.objective_lifted
    for a, b in zip(sol.lifted, again.lifted):
        np.testing.assert_array_equal(a, b)


def test_infeasible_sinr_named(small_scenario):
    sc = small_scenario.replace(gamma_min=np.array([1e6, small_scenario.gamma_min[1]]))
    sol = solve_digital_sdp(assemble_sdp_data(sc), sc)
    assert sol.status == INFEASIBLE
    assert (sol.infeasible_family, sol.infeasible_index) == ("sinr", 0)


def test_objective_monotone_in_power_budget(small_scenario):
    data = assemble_sdp_data(small_scenario)
    vals = [solve_digital_sdp(data, small_scenario.replace(p_max=p)).objective_lifted for p in (1.0, 1.5, 2.0)]
    assert vals[0] <= vals[1] * (1 + 1e-7) and vals[1] <= vals[2] * (1 + 1e-7)


def test_recovery_of_known_rank_one_point(small_scenario, solved):
    data, sol = solved
    B = recover(sol, data, small_scenario, seed=3).B
    fake = DigitalSolution(lifted=lift(B), status=OPTIMAL, objective_lifted=lifted_objective(data, lift(B)))
    got, diag = extract_rank_one(fake, data, small_scenario)
    assert diag.path == "principal"
    M = small_scenario.M
    for m in range(M):
        ph = np.vdot(got[:, m], B[:, m])
        ph /= abs(ph)
        np.testing.assert_allclose(got[:, m] * ph, B[:, m], atol=1e-8 * np.linalg.norm(B[:, m]))
    np.testing.assert_allclose(got[:, M:] @ got[:, M:].conj().T, B[:, M:] @ B[:, M:].conj().T,
                               atol=1e-8 * np.linalg.norm(B[:, M:]) ** 2)


def test_tiny_second_eigenvalue_takes_principal_path(small_scenario, solved):
    data, sol = solved
    B = recover(sol, data, small_scenario).B
    X = list(lift(B))
    v = np.ones(small_scenario.N) / np.sqrt(small_scenario.N)
    X[0] = X[0] + 1e-9 * np.linalg.norm(X[0], 2) * np.outer(v, v)
    fake = DigitalSolution(lifted=tuple(X), status=OPTIMAL, objective_lifted=0.0)
    _, diag = extract_rank_one(fake, data, small_scenario)
    assert diag.rank_gaps[0] < 1e-6
    assert diag.path in ("principal", "principal-scaled")


def test_randomization_feasible_and_below_lifted(solved, small_scenario):
    data, sol = solved
    out = recover(sol, data, small_scenario, num_samples=200, seed=5)
    rep = constraint_report(small_scenario, out.B)
    assert out.diagnostics.feasible and rep.feasible(1e-6)
    assert out.objective_recovered <= out.objective_lifted * (1 + 1e-6)
    again = recover(sol, data, small_scenario, num_samples=200, seed=5)
    np.testing.assert_array_equal(out.B, again.B)


def test_recovered_ratio_harness():
    fails = 0
    for seed in range(5):
        sc = synthetic_scenario(8, 2, 2, 2, seed=seed)
        data = assemble_sdp_data(sc)
        sol = solve_digital_sdp(data, sc)
        assert sol.status == OPTIMAL
        out = recover(sol, data, sc, num_samples=200)
        assert out.objective_recovered / out.objective_lifted <= 1 + 1e-6
        fails += not out.diagnostics.feasible
    assert fails == 0


def test_recover_rejects_non_optimal(small_scenario):
    data = assemble_sdp_data(small_scenario)
    bad = DigitalSolution(lifted=(), status=INFEASIBLE, objective_lifted=float("nan"))
    with pytest.raises(ValueError):
        extract_rank_one(bad, data, small_scenario)


def test_single_user_no_interference():
    sc = synthetic_scenario(8, 1, 1, 1, seed=2)
    data = assemble_sdp_data(sc)
    sol = recover(solve_digital_sdp(data, sc), data, sc)
    assert sol.diagnostics.feasible
    assert sol.B.shape == (1, 2)

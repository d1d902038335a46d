import numpy as np
import pytest

from hybridbf.errors import ContractError
from hybridbf.metrics import constraint_report, total_beampattern
from hybridbf.orchestrator import AlgorithmConfig, IterationRecord, convergence_check, run_alternating


def rec(outer, p, bound=1e9, accepted=True, stage="analog"):
    z = np.zeros(1)
    return IterationRecord(outer, stage, p, z, z, 0.0, bound, accepted, 0.0, np.zeros((1, 1), complex), z)


@pytest.fixture(scope="module")
def run(small_scenario):
    return run_alternating(small_scenario, AlgorithmConfig(max_outer_iters=6, randomization_samples=200))


def test_config_validation():
    for bad in ({"max_outer_iters": 0}, {"analog_steps_per_outer": -1}, {"objective_tolerance": 0},
                {"trust_rho": 1.0}, {"seed": -1}, {"analog_mode": "x"}, {"randomization_samples": 0}):
        with pytest.raises(ContractError):
            AlgorithmConfig(**bad)


def test_convergence_constant_objective():
    d = convergence_check([rec(0, 1.0), rec(1, 1.0)], 1e-4)
    assert d.converged and not d.anomaly and d.relative_improvement == 0.0


def test_convergence_still_improving():
    tol = 1e-4
    d = convergence_check([rec(0, 1.0), rec(1, 1.0 + 10 * tol)], tol)
    assert not d.converged
    assert d.relative_improvement == pytest.approx(10 * tol)


def test_convergence_uses_previous_outer():
    trace = [rec(0, 1.0), rec(1, 1.5), rec(1, 1.50001), rec(2, 1.50001, accepted=False)]
    d = convergence_check(trace, 1e-4)
    assert d.relative_improvement == pytest.approx(0.5 / 1.0 + 0.00001, rel=1e-3)


def test_bound_violation_is_anomaly():
    d = convergence_check([rec(0, 1.0), rec(1, 2.0, bound=1.5)], 1e-4)
    assert d.anomaly and not d.converged
    with pytest.raises(ContractError):
        convergence_check([], 1e-4)


def test_no_accepted_point():
    d = convergence_check([rec(0, 1.0, accepted=False)], 1e-4)
    assert not d.converged and np.isnan(d.relative_improvement)


def test_digital_only(small_scenario):
    res = run_alternating(small_scenario, AlgorithmConfig(analog_steps_per_outer=0, randomization_samples=100))
    assert res.termination == "digital_only"
    assert len(res.trace) == 1 and res.trace[0].stage == "digital"
    np.testing.assert_array_equal(res.state.y, small_scenario.susceptance)
    assert res.feasible


def test_monotone_feasible_and_bounded(run, small_scenario):
    acc = run.accepted_objectives
    assert acc.size >= 2
    assert np.all(np.diff(acc) >= 0)
    assert run.feasible
    assert constraint_report(run.final_scenario, run.B).feasible(1e-6)
    assert all(r.p_tot <= r.bound for r in run.trace)
    assert run.termination in ("converged", "max_outer_iters", "no_progress")


def test_records_match_exact_metrics(run, small_scenario):
    for r in run.trace:
        p = total_beampattern(small_scenario.with_susceptance(r.y), r.B)
        assert abs(p - r.p_tot) <= 1e-10 * abs(p)


def test_run_deterministic(run, small_scenario):
    again = run_alternating(small_scenario, AlgorithmConfig(max_outer_iters=6, randomization_samples=200))
    assert len(again.trace) == len(run.trace)
    assert all(a.equals(b) for a, b in zip(run.trace, again.trace))
    assert again.termination == run.termination


def test_infeasible_start_reports_family(small_scenario):
    sc = small_scenario.replace(gamma_min=np.array([small_scenario.gamma_min[0], 1e6]))
    res = run_alternating(sc)
    assert res.termination == "infeasible" and res.B is None and not res.feasible
    assert res.infeasibility["family"] == "sinr" and res.infeasibility["index"] == 1

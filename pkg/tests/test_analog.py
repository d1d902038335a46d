import numpy as np
import pytest

from hybridbf.analog import (
    AnalogState,
    accept_or_shrink,
    analog_step,
    assemble_qcqp_data,
    build_qcqp_problem,
    neumann_inverse,
    solve_analog_step,
    trust_region_bound,
)
from hybridbf.digital import assemble_sdp_data, recover, solve_digital_sdp
from hybridbf.errors import ContractError, InfeasibleStartError, TrustRegionError
from hybridbf.metrics import constraint_report, direction_gains, effective_channels, radiated_power, sinrs


@pytest.fixture(scope="module")
def feasible(small_scenario):
    data = assemble_sdp_data(small_scenario)
    B = recover(solve_digital_sdp(data, small_scenario), data, small_scenario).B
    return small_scenario, B, AnalogState.from_scenario(small_scenario)


def truncated_metrics(sc, state, B, z):
    """Gains, SINR expressions and power computed with the first-order inverse."""
    T = neumann_inverse(state, z)
    adm = sc.admittances
    G = sc.steering @ T @ adm.Y_st
    gains = (np.abs(G @ B) ** 2).sum(1)
    h = sc.Y_RS @ T @ adm.Y_st
    P = np.abs(h @ B) ** 2
    sig = P[np.arange(sc.M), np.arange(sc.M)]
    expr = P.sum(1) - sig - sig / sc.gamma_min + sc.noise_power
    BBH = B @ B.conj().T
    power = 0.5 * np.real(np.trace((adm.Y_tt - adm.Y_st.T @ T @ adm.Y_st) @ BBH))
    return gains, expr, power


def test_zeroth_order_consistency(feasible):
    sc, B, state = feasible
    data = assemble_qcqp_data(state, sc, B)
    np.testing.assert_allclose(data.e, direction_gains(sc, B), rtol=1e-12)
    assert data.objective(np.zeros(sc.L)) == pytest.approx(direction_gains(sc, B).mean(), rel=1e-12)
    s = sinrs(sc, effective_channels(sc), B)
    assert np.all((data.sinr_expression(np.zeros(sc.L)) <= 0) == (s >= sc.gamma_min))
    assert data.power_expression(np.zeros(sc.L)) == pytest.approx(4 * (radiated_power(sc, B) - sc.p_max), rel=1e-10)


def test_model_equals_truncated_inverse(feasible, rng):
    sc, B, state = feasible
    data = assemble_qcqp_data(state, sc, B)
    z = rng.uniform(-1, 1, sc.L) * data.z_bound
    gains, expr, power = truncated_metrics(sc, state, B, z)
    np.testing.assert_allclose(data.beampattern(z), gains, rtol=1e-10)
    assert data.objective(z) == pytest.approx(gains.mean(), rel=1e-10)
    np.testing.assert_allclose(data.sinr_expression(z), expr, rtol=1e-9, atol=1e-12 * sc.noise_power)
    assert data.power_expression(z) == pytest.approx(4 * (power - sc.p_max), rel=1e-10)


def test_real_form_matches_complex_form(feasible, rng):
    sc, B, state = feasible
    data = assemble_qcqp_data(state, sc, B)
    z = rng.standard_normal(sc.L) * data.z_bound
    zc = z.astype(complex)
    cplx = data.eT + zc @ data.wT + np.conj(data.wT) @ zc + zc @ data.QT @ zc
    assert abs(cplx.imag) < 1e-10 * abs(cplx)
    assert data.objective(z) == pytest.approx(cplx.real, rel=1e-12)


def test_Qd_hermitian_psd(feasible):
    sc, B, state = feasible
    data = assemble_qcqp_data(state, sc, B)
    for Q in data.Q:
        np.testing.assert_allclose(Q, Q.conj().T, atol=1e-12 * np.abs(Q).max())
        lam = np.linalg.eigvalsh(Q)
        assert lam[0] >= -1e-10 * lam[-1]
        assert np.linalg.eigvalsh(Q.real)[0] >= -1e-10 * lam[-1]


def test_neumann_error_quadratic(feasible, rng):
    sc, _, state = feasible
    z = rng.uniform(-1, 1, sc.L) * trust_region_bound(state) * 0.1
    errs = []
    for scale in (1.0, 0.5):
        exact = state.with_susceptance(state.y + scale * z).Yhat
        errs.append(np.linalg.norm(exact - neumann_inverse(state, scale * z), 2))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_neumann_divergence_guard(feasible):
    sc, _, state = feasible
    z = np.full(sc.L, 2.0 / np.linalg.norm(state.Yhat, 2) * np.sqrt(sc.L))
    with pytest.raises(TrustRegionError):
        neumann_inverse(state, z)


def test_state_validation(feasible):
    sc, _, state = feasible
    for rho in (0.0, 1.0, -0.1):
        with pytest.raises(ContractError):
            state.replace(trust_radius=rho)
    assert state.inverse_residual() < 1e-12
    assert trust_region_bound(state) == pytest.approx(0.1 / np.linalg.norm(state.Yhat, 2))


def unconstrained(data):
    L = data.wT.shape[0]
    return data.replace(
        l=np.zeros(0), s=np.zeros((0, L)), F=np.zeros((0, L, L)),
        beta_lo=np.zeros_like(data.beta_lo), beta_max=np.inf, j=np.zeros(L), PT=1.0,
    )


def test_box_only_step_is_sign_of_gradient(feasible):
    sc, B, state = feasible
    data = unconstrained(assemble_qcqp_data(state, sc, B))
    z = solve_analog_step(data)
    expect = data.z_bound * np.sign(data.wT.real)
    np.testing.assert_allclose(z, expect, rtol=1e-6, atol=1e-7 * data.z_bound)


def test_zero_gradient_gives_zero_step(feasible):
    sc, B, state = feasible
    data = unconstrained(assemble_qcqp_data(state, sc, B))
    data = data.replace(wT=np.zeros_like(data.wT))
    assert not np.any(solve_analog_step(data))


def test_zero_step_rejected(feasible):
    sc, B, state = feasible
    res, new = accept_or_shrink(state, np.zeros(sc.L), sc, B)
    assert not res.accepted and res.reason == "non-improving"
    np.testing.assert_array_equal(new.y, state.y)
    assert new.trust_radius == pytest.approx(state.trust_radius / 2)


def test_step_accepted_and_ascends(feasible):
    sc, B, state = feasible
    res, new = analog_step(state, sc, B)
    assert res.accepted
    rep = constraint_report(sc.with_susceptance(new.y), B)
    assert rep.feasible(1e-6)
    assert rep.p_tot > res.exact_objective_before
    assert rep.p_tot == res.exact_objective_after
    assert new.trust_radius == pytest.approx(min(1.5 * state.trust_radius, 0.5))
    assert new.inverse_residual() < 1e-12
    assert np.max(np.abs(new.y - state.y)) <= trust_region_bound(state) * (1 + 1e-9)


def test_acceptance_follows_exact_metrics(feasible, rng):
    sc, B, state = feasible
    s = sinrs(sc, effective_channels(sc), B)
    tight = sc.replace(gamma_min=s * (1 - 1e-9))
    bound = trust_region_bound(state)
    seen_reject = False
    for _ in range(40):
        z = rng.uniform(-1, 1, sc.L) * bound
        rep = constraint_report(tight.with_susceptance(state.y + z), B)
        before = constraint_report(tight, B).p_tot
        res, _ = accept_or_shrink(state, z, tight, B)
        assert res.accepted == (rep.p_tot > before + 1e-12 * before and rep.feasible(1e-6))
        if rep.p_tot > before and not rep.feasible(1e-6):
            assert not res.accepted
            seen_reject = True
    assert seen_reject


def test_oversized_step_refused(feasible):
    sc, B, state = feasible
    with pytest.raises(ContractError):
        accept_or_shrink(state, np.full(sc.L, 2 * trust_region_bound(state)), sc, B)


def test_zero_beamformer_cannot_start(feasible):
    sc, B, state = feasible
    data = assemble_qcqp_data(state, sc, np.zeros_like(B))
    assert not np.any(data.w) and data.eT == 0.0
    with pytest.raises(InfeasibleStartError):
        build_qcqp_problem(data)


def test_as_printed_mode(feasible):
    sc, B, state = feasible
    data = assemble_qcqp_data(state, sc, B)
    z = solve_analog_step(data, mode="as-printed")
    assert np.max(np.abs(z)) <= data.z_bound
    res, _ = analog_step(state, sc, B, mode="as-printed")
    assert res.exact_objective_after >= res.exact_objective_before or not res.accepted
    with pytest.raises(ValueError):
        build_qcqp_problem(data, mode="bogus")

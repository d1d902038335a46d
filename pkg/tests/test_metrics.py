import numpy as np
import pytest

from hybridbf.em_model import AdmittanceSet, ArrayGeometry, Scenario
from hybridbf.errors import ConditioningError, ContractError
from hybridbf.metrics import (
    beampattern_gain,
    beampattern_gains,
    bound_diagnostics,
    boundedness_certificate,
    constraint_report,
    direction_gains,
    effective_channels,
    normalized_violation,
    objective_upper_bound,
    radiated_power,
    sinr,
    sinrs,
    total_beampattern,
)
from hybridbf.oracle import random_structural_scenario
from hybridbf.scenarios import random_beamformer


def scalar_scenario(ys=0.5 + 0.2j, yss=1.0 - 0.1j, yst=0.7j, ytt=1.1j, yr=1.0, yrr=0.2j, yrs=0.3 + 0.4j, D=1):
    g = ArrayGeometry(np.zeros((1, 3)), 1, 1)
    adm = AdmittanceSet(
        Y_tt=np.array([[ytt]]), Y_s=np.array([[ys]]), Y_ss=np.array([[yss]]), Y_st=np.array([[yst]]),
        Y_r=np.array([[yr]]), Y_rr=np.array([[yrr]]), Y_rs=np.array([[yrs]]),
    )
    dirs = np.column_stack([np.linspace(-0.3, 0.3, D), np.zeros(D)])
    return Scenario(g, adm, dirs, 0.0, np.inf, 1.0, 0.5, 1.0, r0=ys.real)


def test_scalar_channel():
    sc = scalar_scenario()
    ch = effective_channels(sc)
    expect = 0.3 + 0.4j
    expect = expect / (1.0 + 0.2j) * 0.7j / (0.5 + 0.2j + 1.0 - 0.1j)
    assert ch.h[0, 0] == pytest.approx(expect, rel=1e-14)


def test_zero_receive_coupling_gives_zero_channel(small_scenario):
    adm = small_scenario.admittances
    sc = small_scenario.replace(admittances=adm.replace(Y_rs=np.zeros_like(adm.Y_rs)))
    assert not np.any(effective_channels(sc).h)


def test_channel_matches_dense_inverse(rng):
    sc = random_structural_scenario(rng, L=8, N=2, M=2, D=1)
    adm = sc.admittances
    h = np.linalg.inv(adm.Y_r + adm.Y_rr) @ adm.Y_rs @ np.linalg.inv(adm.Y_s + adm.Y_ss) @ adm.Y_st
    np.testing.assert_allclose(effective_channels(sc).h, h, rtol=1e-10, atol=1e-12)


def test_singular_receiver_raises(small_scenario):
    adm = small_scenario.admittances
    sc = small_scenario.replace(admittances=adm.replace(Y_rr=-adm.Y_r))
    with pytest.raises(ConditioningError) as exc:
        effective_channels(sc)
    assert exc.value.matrix == "Y_r + Y_rr"


def test_sinr_special_cases(random_case):
    sc, B = random_case
    ch = effective_channels(sc)
    B0 = B.copy()
    B0[:, 0] = 0
    assert sinr(sc, ch, B0, 0) == 0.0
    only = np.zeros_like(B)
    only[:, 1] = B[:, 1]
    assert sinr(sc, ch, only, 1) == pytest.approx(abs(ch.h[1] @ B[:, 1]) ** 2 / sc.noise_power, rel=1e-13)
    with pytest.raises(ContractError):
        sinr(sc, ch, B, sc.M)


def test_sinr_matches_stream_sum(random_case):
    sc, B = random_case
    ch = effective_channels(sc)
    for m in range(sc.M):
        p = [abs(sum(ch.h[m, n] * B[n, k] for n in range(sc.N))) ** 2 for k in range(B.shape[1])]
        assert sinr(sc, ch, B, m) == pytest.approx(p[m] / (sum(p) - p[m] + sc.noise_power), rel=1e-12)


def test_beampattern_scalar_case():
    sc = scalar_scenario()
    b = np.array([[0.3 - 0.2j, 0.0]])
    expect = abs(0.7j * b[0, 0]) ** 2 / abs(0.5 + 0.2j + 1.0 - 0.1j) ** 2
    assert beampattern_gain(sc, b, 0.1, 0.0) == pytest.approx(expect, rel=1e-14)


def test_beampattern_zero_and_single_direction(random_case):
    sc, B = random_case
    assert beampattern_gain(sc, np.zeros_like(B), 0.2, 0.1) == 0.0
    assert total_beampattern(sc, np.zeros_like(B)) == 0.0
    one = sc.replace(directions=sc.directions[:1], beta_lo=sc.beta_lo[:1])
    assert total_beampattern(one, B) == pytest.approx(beampattern_gain(one, B, *sc.directions[0]), rel=1e-13)


def test_vectorized_gains_match_scalar(random_case, rng):
    sc, B = random_case
    th, ph = rng.uniform(-1.5, 1.5, 7), rng.uniform(0, 3, 7)
    vec = beampattern_gains(sc, B, th, ph)
    for k in range(7):
        assert vec[k] == pytest.approx(beampattern_gain(sc, B, th[k], ph[k]), rel=1e-12)


def test_total_is_mean_of_direction_gains(random_case):
    sc, B = random_case
    assert total_beampattern(sc, B) == pytest.approx(np.mean(direction_gains(sc, B)), rel=1e-14)


def test_total_invariant_under_unitary_mixing(random_case, rng):
    sc, B = random_case
    K = B.shape[1]
    U, _ = np.linalg.qr(rng.standard_normal((K, K)) + 1j * rng.standard_normal((K, K)))
    assert total_beampattern(sc, B @ U) == pytest.approx(total_beampattern(sc, B), rel=1e-12)


def test_radiated_power_structural_form(random_case):
    sc, B = random_case
    adm = sc.admittances
    BBH = B @ B.conj().T
    assert radiated_power(sc, np.zeros_like(B)) == 0.0
    alt = -0.5 * np.real(np.trace(adm.Y_st.T @ sc.Ytilde @ adm.Y_st @ BBH))
    assert radiated_power(sc, B) == pytest.approx(alt, rel=1e-12)


def test_radiated_power_stream_sum(random_case):
    sc, B = random_case
    adm = sc.admittances
    Z = adm.Y_tt - adm.Y_st.T @ np.linalg.inv(adm.Y_s + adm.Y_ss) @ adm.Y_st
    expect = 0.5 * sum(np.real(np.vdot(B[:, k], Z @ B[:, k])) for k in range(B.shape[1]))
    assert radiated_power(sc, B) == pytest.approx(expect, rel=1e-12)


def test_bound_dominates_and_scales(random_case):
    sc, B = random_case
    assert objective_upper_bound(sc, np.zeros_like(B)) == 0.0
    assert objective_upper_bound(sc, B) >= total_beampattern(sc, B)
    assert objective_upper_bound(sc, 3 * B) == pytest.approx(9 * objective_upper_bound(sc, B), rel=1e-12)


def test_bound_dominates_many_trials():
    for t in range(1000):
        rng = np.random.default_rng([7, t])
        sc = random_structural_scenario(rng)
        B = random_beamformer(rng, sc.N, sc.M + sc.N)
        assert objective_upper_bound(sc, B) >= total_beampattern(sc, B)


def test_bound_diagnostics_report_both_factors(random_case):
    sc, B = random_case
    d = bound_diagnostics(sc, B)
    assert d["bound_min_LMN"] == pytest.approx(objective_upper_bound(sc, B))
    ratio = d["bound_min_LN"] / d["bound_min_LMN"]
    assert ratio == pytest.approx(min(sc.L, sc.N) / min(sc.L, sc.M, sc.N))
    sv = np.linalg.svd(sc.admittances.Y_s + sc.admittances.Y_ss, compute_uv=False)
    assert d["ytilde_norm"] == pytest.approx(1 / sv[-1], rel=1e-10)


def test_certificate_structural(random_case):
    sc, B = random_case
    cert = boundedness_certificate(sc, B)
    assert cert.ytt_ok and cert.norm_match_ok
    assert cert.inverse_norm == pytest.approx(cert.inverse_sigma_min, rel=1e-10)


def test_certificate_detects_real_Yst(random_case):
    sc, B = random_case
    adm = sc.admittances
    bad = sc.replace(admittances=adm.replace(Y_st=adm.Y_st + 0.5 * np.abs(adm.Y_st)))
    assert not boundedness_certificate(bad, B).norm_match_ok


def test_certificate_power_at_feasible_point(small_scenario):
    from hybridbf.digital import assemble_sdp_data, recover, solve_digital_sdp

    data = assemble_sdp_data(small_scenario)
    sol = recover(solve_digital_sdp(data, small_scenario), data, small_scenario)
    cert = boundedness_certificate(small_scenario, sol.B)
    assert cert.passed
    assert cert.power_trace == pytest.approx(4 * radiated_power(small_scenario, sol.B), rel=1e-9)


def test_constraint_report(small_scenario, rng):
    B = random_beamformer(rng, small_scenario.N, small_scenario.M + small_scenario.N) * 10
    rep = constraint_report(small_scenario, B)
    assert rep.p_tot == pytest.approx(total_beampattern(small_scenario, B))
    assert rep.power_violation == pytest.approx(normalized_violation(rep.power, small_scenario.p_max))
    fam, idx, v = rep.worst()
    assert v == rep.max_violation
    assert not rep.feasible()
    assert rep.violations()


def test_beamformer_shape_checked(small_scenario):
    with pytest.raises(ContractError):
        total_beampattern(small_scenario, np.zeros((2, 3)))
    with pytest.raises(ContractError):
        total_beampattern(small_scenario, np.full((2, 4), np.nan))

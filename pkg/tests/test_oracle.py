import numpy as np
import pytest

from hybridbf.oracle import (
    MUTATIONS,
    check_boundedness_chain,
    check_hadamard_trace_identity,
    run_mutation,
    run_oracle_suite,
)


@pytest.fixture(scope="module")
def suite():
    return run_oracle_suite(trials=30, seed=1)


def test_suite_passes(suite):
    for r in suite:
        assert r.passed, str(r)
    names = [r.name for r in suite]
    assert len(set(names)) == len(names) == 5


def test_report_record_roundtrip(suite):
    rec = suite[0].to_record()
    assert rec["passed"] is True and rec["kind"] == "oracle"
    assert str(suite[0]).startswith("[PASS]")


@pytest.mark.parametrize("name", sorted(MUTATIONS))
def test_mutation_detected(name):
    assert any(not r.passed for r in run_mutation(name, trials=5))


def test_hadamard_small_examples():
    A = np.array([[1, 2j], [3, 4 - 1j]])
    C = np.array([[0.5, -1j], [2, 1 + 1j]])
    z = np.array([0.3, -1.2])
    lhs = np.trace(np.diag(z) @ A @ np.diag(z) @ C)
    assert z @ (A * C.T) @ z == pytest.approx(lhs, rel=1e-14)
    assert check_hadamard_trace_identity(trials=20).passed


def test_boundedness_flags_recorded():
    r = check_boundedness_chain(trials=30, seed=2)
    assert r.passed
    assert 0 < r.flags["bound_ratio_max"] <= 1
    assert r.flags["ytt_residual_max"] <= 1e-10


def test_real_Ytt_defect_detected():
    defect = lambda adm: adm.replace(Y_tt=adm.Y_tt + np.eye(adm.Y_tt.shape[0]))
    assert not check_boundedness_chain(trials=5, model_transform=defect).passed

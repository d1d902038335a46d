"""Brute-force verifiers for every reformulation used by the optimizer.

Each check draws random instances, evaluates one side of an identity
through the production assembly (which can be swapped for a mutated one)
and the other side from first principles: explicit inverses and sums over
individual streams, never the helpers in ``metrics``, ``digital`` or
``analog``.  Trial ``k`` of a check uses the random stream
``default_rng([seed, k])``.

``MUTATIONS`` holds deliberately wrong variants of the assembly; each must
make at least one check fail, which shows the checks can fail at all.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analog import AnalogState, assemble_qcqp_data, trust_region_bound
from .digital import assemble_sdp_data
from .em_model import ArrayGeometry, Scenario, build_synthetic_admittances
from .errors import DegenerateModelError

__all__ = [
    "OracleReport",
    "random_structural_scenario",
    "check_lifting_identity",
    "check_sinr_chain",
    "check_neumann_chain",
    "check_hadamard_trace_identity",
    "check_boundedness_chain",
    "run_oracle_suite",
    "MUTATIONS",
    "run_mutation",
]

ORACLE_TOL = 1e-9
HADAMARD_TOL = 1e-11

DIMS_L = (4, 8, 16)
DIMS_N = (1, 2, 4)
DIMS_M = (1, 2, 3)
DIMS_D = (1, 2, 4)


@dataclass(frozen=True)
class OracleReport:
    """Outcome of one identity check; ``passed`` iff ``max_rel_error <= tolerance``."""

    name: str
    max_rel_error: float
    trials: int
    tolerance: float
    flags: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.max_rel_error <= self.tolerance)

    def to_record(self):
        return {
            "kind": "oracle",
            "name": self.name,
            "max_rel_error": self.max_rel_error,
            "trials": self.trials,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "flags": dict(self.flags),
        }

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: max rel err {self.max_rel_error:.3e} <= {self.tolerance:.0e} over {self.trials} trials"


def _rel(a, b, scale=None):
    if scale is None:
        scale = max(abs(a), abs(b))
    if scale == 0:
        return 0.0 if a == b else float("inf")
    return abs(a - b) / scale


def _crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_structural_scenario(rng, L=None, N=None, M=None, D=None, coupling_scale=None):
    """Random scenario with the structural admittance properties.

    Unspecified dimensions are drawn from the default grids.  Surface
    susceptances, ``R_0``, directions and thresholds are random too; the
    thresholds are not meant to be jointly feasible.
    """
    L = int(rng.choice(DIMS_L)) if L is None else L
    N = int(rng.choice(DIMS_N)) if N is None else N
    M = int(rng.choice(DIMS_M)) if M is None else M
    D = int(rng.choice(DIMS_D)) if D is None else D
    cs = float(rng.uniform(0.0, 0.5)) if coupling_scale is None else coupling_scale
    r0 = float(rng.uniform(0.0, 0.5))
    geometry = ArrayGeometry.upa(L, N, M)
    for _ in range(16):
        try:
            adm = build_synthetic_admittances(geometry, int(rng.integers(2**63)), cs, r0=r0)
            break
        except DegenerateModelError:
            continue
    else:
        raise DegenerateModelError("Y_s + Y_ss", "no well-conditioned draw")
    dirs = np.column_stack([rng.uniform(-np.pi / 2, np.pi / 2, D), rng.uniform(0.0, np.pi, D)])
    sc = Scenario(geometry, adm, dirs, np.zeros(D), np.inf, rng.uniform(0.1, 2.0, M),
                  float(rng.uniform(0.01, 1.0)), float(rng.uniform(0.5, 2.0)), r0)
    return sc.with_susceptance(rng.uniform(-1.0, 1.0, L))


# ---------------------------------------------------------------- brute force

def _inverse(scenario):
    adm = scenario.admittances
    return np.linalg.inv(adm.Y_s + adm.Y_ss)


def _steer(scenario, d):
    pos = scenario.geometry.element_positions
    th, ph = scenario.directions[d]
    u = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
    return np.exp(2j * np.pi * (pos @ u))


def _stream_gain(a, T, Yst, b):
    # |a^T T Y_st b|^2, summed by hand over surface elements
    field_ = T @ (Yst @ b)
    s = 0.0 + 0.0j
    for l in range(a.shape[0]):
        s += a[l] * field_[l]
    return abs(s) ** 2


def _brute_gains(scenario, T, B):
    Yst = scenario.admittances.Y_st
    return np.array([
        sum(_stream_gain(_steer(scenario, d), T, Yst, B[:, k]) for k in range(B.shape[1]))
        for d in range(scenario.D)
    ])


def _brute_channels(scenario, T):
    adm = scenario.admittances
    y_RS = np.linalg.solve(adm.Y_r + adm.Y_rr, adm.Y_rs)
    return y_RS @ T @ adm.Y_st


def _brute_power(scenario, T, B):
    adm = scenario.admittances
    Z = adm.Y_tt - adm.Y_st.T @ T @ adm.Y_st
    return 0.5 * sum(np.real(B[:, k].conj() @ Z @ B[:, k]) for k in range(B.shape[1]))


def _random_B(rng, scenario, zero=False):
    K = scenario.M + scenario.N
    if zero:
        return np.zeros((scenario.N, K), dtype=complex)
    return _crandn(rng, scenario.N, K)


def _lifted_trace(A, B):
    return sum(float(np.real(B[:, k].conj() @ A @ B[:, k])) for k in range(B.shape[1]))


# ---------------------------------------------------------------- checks

def check_lifting_identity(trials=100, seed=0, tol=ORACLE_TOL, assembler=assemble_sdp_data, dims=None):
    """Trace forms of the objective, each direction gain and the power.

    Compares ``sum_k b_k^H A0 b_k`` with the direction-averaged gain,
    ``sum_k b_k^H Ad b_k`` with each gain and ``sum_k Re b_k^H AP b_k``
    with the radiated power.  Trial 0 uses ``B = 0``.
    """
    worst = 0.0
    dims = dims or {}
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        sc = random_structural_scenario(rng, **dims)
        B = _random_B(rng, sc, zero=t == 0)
        data = assembler(sc)
        gains = _brute_gains(sc, _inverse(sc), B)
        worst = max(worst, _rel(_lifted_trace(data.A0, B), float(np.mean(gains))))
        for d in range(sc.D):
            worst = max(worst, _rel(_lifted_trace(data.Ad[d], B), gains[d]))
        pw = _brute_power(sc, _inverse(sc), B)
        worst = max(worst, _rel(_lifted_trace(data.AP, B), pw))
    return OracleReport("lifting identity", worst, trials, tol)


def check_sinr_chain(trials=100, seed=0, tol=ORACLE_TOL, assembler=assemble_sdp_data, sweep=21, dims=None):
    """Sign of the lifted SINR expression against the SINR itself.

    For every user the threshold is swept geometrically through the
    brute-force SINR (factor 1/4 .. 4).  The expression must vanish at the
    crossing (error measured in units of ``sigma^2``) and have the sign of
    ``Gamma - gamma`` elsewhere; a wrong sign counts as infinite error.
    """
    worst = 0.0
    wrong_sign = 0
    dims = dims or {}
    factors = np.geomspace(0.25, 4.0, sweep)
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        sc = random_structural_scenario(rng, **dims)
        B = _random_B(rng, sc)
        data = assembler(sc)
        H = _brute_channels(sc, _inverse(sc))
        sig2 = sc.noise_power
        for m in range(sc.M):
            p = [abs(H[m] @ B[:, k]) ** 2 for k in range(B.shape[1])]
            gamma = p[m] / (sum(p) - p[m] + sig2)
            if gamma == 0:
                continue
            tr = [_lifted_trace(data.Ym[m], B[:, [k]]) for k in range(B.shape[1])]
            for f in np.concatenate([[1.0], factors]):
                G = gamma * f
                expr = sum(tr) - tr[m] - tr[m] / G + sig2
                if f == 1.0:
                    worst = max(worst, abs(expr) / sig2)
                elif np.sign(expr) != np.sign(G - gamma):
                    wrong_sign += 1
    if wrong_sign:
        worst = float("inf")
    return OracleReport("sinr chain", worst, trials, tol, {"wrong_sign": wrong_sign})


def check_neumann_chain(trials=100, seed=0, tol=ORACLE_TOL, assembler=assemble_qcqp_data, dims=None,
                        step_fraction=0.5):
    """Model expressions against direct evaluation with the truncated inverse.

    Per trial, with ``T = Yhat - i Yhat diag(z) Yhat`` for a random ``z``
    inside ``step_fraction`` of the trust box (``z = 0`` in trial 0):

    (a) ``eT + z wT + wT^H z^T + z QT z^T`` vs the averaged direct gains,
        and ``e_d + z w_d + w_d^H z^T + z Q_d z^T`` vs each direct gain;
    (b) ``l_m + z s_m + s_m^H z^T + z F_m z^T + sigma^2`` vs
        ``sum_{i != m} |h_m b_i|^2 - |h_m b_m|^2 / Gamma_m + sigma^2``;
    (c) ``z j + j^H z^T - 2 P_T`` vs ``4 (P_t - P_max)``.

    Errors are relative to the magnitude of the terms that make up each
    direct side; the imaginary parts of the complex forms count as error.
    """
    worst = {"objective": 0.0, "beampattern": 0.0, "sinr": 0.0, "power": 0.0}
    dims = dims or {}
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        sc = random_structural_scenario(rng, **dims)
        state = AnalogState.from_scenario(sc, trust_radius=float(rng.uniform(0.05, 0.5)))
        B = _random_B(rng, sc)
        data = assembler(state, sc, B)
        zb = step_fraction * trust_region_bound(state)
        z = np.zeros(sc.L) if t == 0 else rng.uniform(-zb, zb, sc.L)

        Yh = np.linalg.inv(state.Yss_tilde + 1j * np.diag(state.y))
        T = Yh - 1j * Yh @ np.diag(z) @ Yh

        gains = _brute_gains(sc, T, B)
        direct = float(np.mean(gains))
        model = data.eT + z @ data.wT + data.wT.conj() @ z + z @ data.QT @ z
        worst["objective"] = max(worst["objective"], _rel(model, direct, max(abs(direct), 1e-300)))
        for d in range(sc.D):
            model = data.e[d] + z @ data.w[d] + data.w[d].conj() @ z + z @ data.Q[d] @ z
            worst["beampattern"] = max(worst["beampattern"], _rel(model, gains[d], max(gains[d], 1e-300)))

        H = _brute_channels(sc, T)
        for m in range(sc.M):
            p = [abs(H[m] @ B[:, k]) ** 2 for k in range(B.shape[1])]
            g = sc.gamma_min[m]
            direct = sum(p) - p[m] - p[m] / g + sc.noise_power
            scale = sum(p) + p[m] / g + sc.noise_power
            model = data.l[m] + z @ data.s[m] + data.s[m].conj() @ z + z @ data.F[m] @ z + sc.noise_power
            worst["sinr"] = max(worst["sinr"], _rel(model, direct, scale))

        pt = _brute_power(sc, T, B)
        direct = 4.0 * (pt - sc.p_max)
        model = z @ data.j + data.j.conj() @ z - 2.0 * data.PT
        worst["power"] = max(worst["power"], _rel(model, direct, 4.0 * (abs(pt) + sc.p_max)))
    return OracleReport("neumann chain", max(worst.values()), trials, tol, {k: float(v) for k, v in worst.items()})


def check_hadamard_trace_identity(trials=100, seed=0, tol=HADAMARD_TOL, dims=None):
    """``tr{diag(z) A diag(z) C} = z (A o C^T) z^T`` for complex ``A``, ``C``, real ``z``.

    The error is relative to ``sum |z_i A_ij z_j C_ji|`` so that
    cancellation in the sum does not inflate it.
    """
    worst = 0.0
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        L = int(rng.choice(DIMS_L + (16,))) if not dims else dims["L"]
        A, C = _crandn(rng, L, L), _crandn(rng, L, L)
        z = rng.standard_normal(L)
        lhs = 0.0 + 0.0j
        for i in range(L):
            for k in range(L):
                lhs += z[i] * A[i, k] * z[k] * C[k, i]
        rhs = z @ (A * C.T) @ z
        scale = float(np.sum(np.abs(np.outer(z, z) * A * C.T)))
        worst = max(worst, _rel(lhs, rhs, max(scale, 1e-300)))
    return OracleReport("hadamard trace identity", worst, trials, tol)


def check_boundedness_chain(trials=100, seed=0, tol=ORACLE_TOL, dims=None, model_transform=None):
    """Structural facts behind the ascent bound, measured on random instances.

    Asserted per trial (trial 0 uses ``B = 0``):

    * ``P_tot <= ||Ytilde^H|| ||Ytilde|| ||Y_st B B^H Y_st^H|| L min(L, M, N)``;
    * ``|Re tr{Y_tt B B^H}| <= 1e-10 ||Y_tt|| ||B||^2``;
    * ``||Omega_T|| <= L`` for the direction average ``Omega_T``.

    Measured but not asserted: whether ``||X|| <= tr{X}`` holds for
    ``X = (Ytilde + Ytilde^H) Ytilde_T``.  Trials with a negative trace
    and trials where the inequality fails are counted in ``flags``.

    ``model_transform`` maps the admittance set before use (defect
    injection).
    """
    worst = 0.0
    flags = {"negative_trace": 0, "trace_norm_counterexamples": 0, "bound_ratio_max": 0.0}
    dims = dims or {}
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        sc = random_structural_scenario(rng, **dims)
        if model_transform is not None:
            sc = sc.replace(admittances=model_transform(sc.admittances))
        B = _random_B(rng, sc, zero=t == 0)
        adm = sc.admittances
        Yt = _inverse(sc)
        BBH = B @ B.conj().T
        p_tot = float(np.mean(_brute_gains(sc, Yt, B)))
        norm = lambda X: float(np.linalg.svd(X, compute_uv=False)[0])
        bound = norm(Yt.conj().T) * norm(Yt) * norm(adm.Y_st @ BBH @ adm.Y_st.conj().T) * sc.L * min(sc.L, sc.M, sc.N)
        if p_tot > 0:
            flags["bound_ratio_max"] = max(flags["bound_ratio_max"], p_tot / bound)
            worst = max(worst, (p_tot - bound) / p_tot)
        nb2 = norm(B) ** 2
        ytt = abs(float(np.real(np.trace(adm.Y_tt @ BBH))))
        flags["ytt_residual_max"] = max(flags.get("ytt_residual_max", 0.0),
                                        ytt / (norm(adm.Y_tt) * nb2) if nb2 > 0 else 0.0)
        if ytt > 1e-10 * norm(adm.Y_tt) * nb2:
            worst = float("inf")
        Omega_T = np.mean([np.outer(_steer(sc, d).conj(), _steer(sc, d)) for d in range(sc.D)], axis=0)
        worst = max(worst, (norm(Omega_T) - sc.L) / sc.L)
        X = (Yt + Yt.conj().T) @ (-adm.Y_st @ BBH @ adm.Y_st.T)
        tr = float(np.real(np.trace(X)))
        if tr < 0:
            flags["negative_trace"] += 1
        elif norm(X) > tr * (1 + 1e-12):
            flags["trace_norm_counterexamples"] += 1
    return OracleReport("boundedness chain", max(worst, 0.0), trials, tol, flags)


def run_oracle_suite(trials=100, seed=0):
    """All checks at their default tolerances."""
    return [
        check_lifting_identity(trials, seed),
        check_sinr_chain(trials, seed),
        check_neumann_chain(trials, seed),
        check_hadamard_trace_identity(trials, seed),
        check_boundedness_chain(trials, seed),
    ]


# ---------------------------------------------------------------- mutations

def _sdp_mutation(change):
    def assembler(scenario, channels=None):
        return change(scenario, assemble_sdp_data(scenario, channels))
    return assembler


def _qcqp_mutation(change):
    def assembler(state, scenario, B):
        return change(state, scenario, B, assemble_qcqp_data(state, scenario, B))
    return assembler


def _omega_conjugated(scenario, data):
    G = scenario.Ytilde @ scenario.admittances.Y_st
    a = scenario.steering
    Ad = np.stack([G.conj().T @ np.outer(a[d], a[d].conj()) @ G for d in range(scenario.D)])
    return type(data)(A0=Ad.mean(0), Ad=Ad, Ym=data.Ym, Psi=data.Psi, AP=data.AP, Omega=data.Omega)


def _ap_without_half(scenario, data):
    return type(data)(A0=data.A0, Ad=data.Ad, Ym=data.Ym, Psi=data.Psi, AP=2.0 * data.AP, Omega=data.Omega)


def _psi_transposed(scenario, data):
    G = scenario.Ytilde @ scenario.admittances.Y_st
    Ym = np.stack([G.conj().T @ P.T @ G for P in data.Psi])
    return type(data)(A0=data.A0, Ad=data.Ad, Ym=Ym, Psi=data.Psi, AP=data.AP, Omega=data.Omega)


def _q_no_transpose(state, scenario, B, data):
    Yh = state.Yhat
    Yst = scenario.admittances.Y_st
    X = Yh @ Yst @ B @ B.conj().T @ Yst.conj().T @ Yh.conj().T
    a = scenario.steering
    Q = np.stack([X * (Yh.conj().T @ np.outer(a[d].conj(), a[d]) @ Yh) for d in range(scenario.D)])
    return data.replace(Q=Q, QT=Q.mean(0))


def _w_without_i(state, scenario, B, data):
    return data.replace(w=data.w / 1j, wT=data.wT / 1j)


def _e_minus(state, scenario, B, data):
    Yh = state.Yhat
    Yst = scenario.admittances.Y_st
    BBH = B @ B.conj().T
    y_RS = scenario.Y_RS
    l, s, F, E = data.l.copy(), data.s.copy(), data.F.copy(), data.E.copy()
    for m in range(scenario.M):
        b = B[:, m]
        E[m] = Yst @ (BBH - (1.0 - 1.0 / scenario.gamma_min[m]) * np.outer(b, b.conj())) @ Yst.conj().T
        Psi = np.outer(y_RS[m].conj(), y_RS[m])
        Xm = Yh @ E[m] @ Yh.conj().T
        l[m] = np.real(np.trace(Xm @ Psi))
        s[m] = np.diag(1j * Yh.conj().T @ Psi @ Xm)
        F[m] = Xm * (Yh.T @ Psi.T @ Yh.conj())
    return data.replace(l=l, s=s, F=F, E=E)


def _j_hermitian(state, scenario, B, data):
    Yh = state.Yhat
    Yst = scenario.admittances.Y_st
    J = 1j * Yh @ Yst @ B @ B.conj().T @ Yst.conj().T @ Yh
    return data.replace(j=np.diag(J).copy())


MUTATIONS = {
    "omega-conjugated": ("sdp", _sdp_mutation(_omega_conjugated)),
    "ap-without-half": ("sdp", _sdp_mutation(_ap_without_half)),
    "psi-transposed": ("sdp", _sdp_mutation(_psi_transposed)),
    "q-without-transpose": ("qcqp", _qcqp_mutation(_q_no_transpose)),
    "w-without-i": ("qcqp", _qcqp_mutation(_w_without_i)),
    "e-with-one-minus": ("qcqp", _qcqp_mutation(_e_minus)),
    "j-with-hermitian": ("qcqp", _qcqp_mutation(_j_hermitian)),
}


def run_mutation(name, trials=10, seed=0):
    """Run the checks that consume the mutated assembler.

    Returns the reports; the mutation is detected iff any of them fails.
    """
    kind, assembler = MUTATIONS[name]
    if kind == "sdp":
        return [
            check_lifting_identity(trials, seed, assembler=assembler),
            check_sinr_chain(trials, seed, assembler=assembler),
        ]
    return [check_neumann_chain(trials, seed, assembler=assembler)]

"""Trust-region step in the tunable surface susceptances.

With the digital beamformer fixed, every problem quantity depends on the
surface through ``(Ytilde_ss + i diag(y))^{-1}``.  A step ``y -> y + z``
replaces that inverse by its first-order Neumann expansion::

    T(z) = Yhat - i Yhat diag(z) Yhat

and every quantity becomes an explicit quadratic in ``z``.  The
expansions below are *exact* for ``T(z)``; the only approximation is
``T(z)`` itself, which the trust region keeps accurate and the exact
acceptance test guards.

Quadratics, for real ``z`` and with ``Omega_d = a_d^* a_d^T``,
``M = Y_st B B^H Y_st^H``, ``X = Yhat M Yhat^H``::

    P_d(z)  = e_d + z w_d + w_d^H z^T + z Q_d z^T
        e_d = tr{X Omega_d}
        w_d = diag{i Yhat^H Omega_d Yhat M Yhat^H}
        Q_d = X o (Yhat^T Omega_d^T Yhat^*)

    user m meets its SINR target iff
        l_m + z s_m + s_m^H z^T + z F_m z^T + sigma^2 <= 0
        E_m = Y_st (B B^H - (1 + 1/Gamma_m) b_m b_m^H) Y_st^H
        l_m = tr{Yhat E_m Yhat^H Psi_m},  Psi_m = y_RS,m^H y_RS,m
        s_m = diag{i Yhat^H Psi_m Yhat E_m Yhat^H}
        F_m = (Yhat E_m Yhat^H) o (Yhat^T Psi_m^T Yhat^*)

    radiated power within budget iff
        z j + j^H z^T <= 2 P_T
        j   = diag{i Yhat Y_st B B^H Y_st^T Yhat}
        P_T = 2 P_max - Re{tr(Y_tt B B^H) - tr(Yhat Y_st B B^H Y_st^T)}

For real ``z``, ``z w + w^H z^T = 2 Re(w) . z`` and ``z Q z^T = z Re(Q) z^T``
when ``Q`` is Hermitian; the solvers use these real forms.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .em_model import _checked_inverse
from .errors import ConditioningError, ContractError, InfeasibleStartError, TrustRegionError
from .metrics import check_beamformer, constraint_report
from .qcqp_backends import QcqpProblem, QuadraticConstraint, get_qcqp_backend, psd_factor

__all__ = [
    "AnalogState",
    "QcqpData",
    "StepResult",
    "assemble_qcqp_data",
    "trust_region_bound",
    "solve_analog_step",
    "accept_or_shrink",
    "analog_step",
    "neumann_inverse",
    "build_qcqp_problem",
]

RHO_DEFAULT = 0.1
RHO_MAX = 0.5
MAX_SHRINKS = 8
GROWTH = 1.5
FEASIBILITY_TOL = 1e-6
INVERSE_RTOL = 1e-9
MODES = ("surrogate", "as-printed")


def _spectral(a):
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


@dataclass(frozen=True, eq=False)
class AnalogState:
    """Current susceptances ``y`` and the exact inverse ``Yhat`` at ``y``."""

    y: np.ndarray
    Yss_tilde: np.ndarray
    Yhat: np.ndarray
    trust_radius: float = RHO_DEFAULT
    iteration: int = 0

    def __post_init__(self):
        if not 0.0 < self.trust_radius < 1.0:
            raise ContractError(f"trust radius must lie in (0, 1), got {self.trust_radius}")
        L = self.Yss_tilde.shape[0]
        if self.y.shape != (L,) or self.Yhat.shape != (L, L):
            raise ContractError("inconsistent analog state shapes")

    @classmethod
    def from_scenario(cls, scenario, trust_radius=RHO_DEFAULT, y=None):
        y = scenario.susceptance if y is None else np.asarray(y, dtype=float)
        Yss_tilde = scenario.Yss_tilde
        return cls(y, Yss_tilde, _checked_inverse(Yss_tilde + 1j * np.diag(y), "Y_s + Y_ss"), trust_radius)

    @property
    def L(self):
        return self.y.shape[0]

    def with_susceptance(self, y, trust_radius=None, iteration=None):
        """New state at ``y`` with an exactly refactored inverse."""
        y = np.asarray(y, dtype=float)
        Yhat = _checked_inverse(self.Yss_tilde + 1j * np.diag(y), "Y_s + Y_ss")
        return AnalogState(
            y,
            self.Yss_tilde,
            Yhat,
            self.trust_radius if trust_radius is None else trust_radius,
            self.iteration if iteration is None else iteration,
        )

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def inverse_residual(self):
        """``||Yhat (Ytilde_ss + i diag(y)) - I|| / ||I||`` (max-abs)."""
        P = self.Yhat @ (self.Yss_tilde + 1j * np.diag(self.y))
        return float(np.max(np.abs(P - np.eye(self.L))))


def trust_region_bound(state):
    """Box half-width ``rho / ||Yhat||`` for the step ``z``."""
    return state.trust_radius / _spectral(state.Yhat)


def neumann_inverse(state, z):
    """First-order expansion of ``(Ytilde_ss + i diag(y + z))^{-1}``.

    Raises
    ------
    TrustRegionError
        If ``||diag(z) Yhat|| >= 1`` (series does not converge).
    """
    z = np.asarray(z, dtype=float)
    Yh = state.Yhat
    if _spectral(z[:, None] * Yh) >= 1.0:
        raise TrustRegionError("||diag(z) Yhat|| >= 1: Neumann series diverges")
    return Yh - 1j * (Yh * z[None, :]) @ Yh


@dataclass(frozen=True, eq=False)
class QcqpData:
    """Coefficients of the quadratic step model at the current state.

    Array shapes: ``w`` ``(D, L)``, ``Q`` ``(D, L, L)``, ``s`` ``(M, L)``,
    ``F`` and ``E`` ``(M, L, L)``.  Thresholds are carried along so the data
    is self-contained.
    """

    eT: float
    wT: np.ndarray
    QT: np.ndarray
    e: np.ndarray
    w: np.ndarray
    Q: np.ndarray
    l: np.ndarray
    s: np.ndarray
    F: np.ndarray
    E: np.ndarray
    j: np.ndarray
    PT: float
    z_bound: float
    beta_lo: np.ndarray
    beta_max: float
    noise_power: float
    p_max: float

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    # exact expressions in z (real parts of Hermitian forms)
    def objective(self, z, quadratic=True):
        v = self.eT + 2.0 * self.wT.real @ z
        if quadratic:
            v += z @ self.QT.real @ z
        return float(v)

    def beampattern(self, z):
        """Model gains ``P_d(z)``, shape ``(D,)``."""
        return self.e + 2.0 * self.w.real @ z + np.einsum("i,dij,j->d", z, self.Q.real, z)

    def sinr_expression(self, z):
        """``<= 0`` iff user ``m`` meets its target under the model."""
        return self.l + 2.0 * self.s.real @ z + np.einsum("i,mij,j->m", z, self.F.real, z) + self.noise_power

    def power_expression(self, z):
        """``z j + j^H z^T - 2 P_T``; ``<= 0`` iff within budget."""
        return float(2.0 * self.j.real @ z - 2.0 * self.PT)


def _diag_of_product(A, B):
    # diag(A @ B) without forming the product
    return np.einsum("ij,ji->i", A, B)


def assemble_qcqp_data(state, scenario, B):
    """Build the quadratic model of every quantity around ``state``.

    Raises
    ------
    ConditioningError
        If ``Yhat`` fails its inverse check beyond ``1e-9`` relative.
    """
    B = check_beamformer(B, scenario)
    if state.inverse_residual() > INVERSE_RTOL * max(1.0, _spectral(state.Yhat) * _spectral(state.Yss_tilde)):
        raise ConditioningError("Yhat", "stale or inaccurate inverse")
    adm = scenario.admittances
    Yh = state.Yhat
    YhH = Yh.conj().T
    Yst = adm.Y_st
    BBH = B @ B.conj().T
    Mx = Yst @ BBH @ Yst.conj().T
    X = Yh @ Mx @ YhH
    A = scenario.steering

    D, L, M = scenario.D, scenario.L, scenario.M
    e = np.empty(D)
    w = np.empty((D, L), dtype=complex)
    Q = np.empty((D, L, L), dtype=complex)
    for d in range(D):
        Om = np.outer(A[d].conj(), A[d])
        e[d] = np.real(np.trace(X @ Om))
        w[d] = 1j * _diag_of_product(YhH @ Om, X)
        Q[d] = X * (Yh.T @ Om.T @ Yh.conj())

    y_RS = scenario.Y_RS
    l = np.empty(M)
    s = np.empty((M, L), dtype=complex)
    F = np.empty((M, L, L), dtype=complex)
    E = np.empty((M, L, L), dtype=complex)
    for m in range(M):
        b = B[:, m]
        g = scenario.gamma_min[m]
        E[m] = Yst @ (BBH - (1.0 + 1.0 / g) * np.outer(b, b.conj())) @ Yst.conj().T
        Psi = np.outer(y_RS[m].conj(), y_RS[m])
        Xm = Yh @ E[m] @ YhH
        l[m] = np.real(np.trace(Xm @ Psi))
        s[m] = 1j * _diag_of_product(YhH @ Psi, Xm)
        F[m] = Xm * (Yh.T @ Psi.T @ Yh.conj())

    K = Yst @ BBH @ Yst.T
    j = 1j * _diag_of_product(Yh, K @ Yh)
    PT = 2.0 * scenario.p_max - float(np.real(np.trace(adm.Y_tt @ BBH) - np.trace(Yh @ K)))

    return QcqpData(
        eT=float(e.mean()),
        wT=w.mean(axis=0),
        QT=Q.mean(axis=0),
        e=e,
        w=w,
        Q=Q,
        l=l,
        s=s,
        F=F,
        E=E,
        j=j,
        PT=PT,
        z_bound=trust_region_bound(state),
        beta_lo=scenario.beta_lo.copy(),
        beta_max=scenario.beta_max,
        noise_power=scenario.noise_power,
        p_max=scenario.p_max,
    )


def _hermitian_real(Q):
    R = Q.real
    return 0.5 * (R + R.T)


def _psd_part(Q):
    w, V = np.linalg.eigh(_hermitian_real(Q))
    return (V * np.clip(w, 0.0, None)) @ V.T


def build_qcqp_problem(data, mode="surrogate", tol=FEASIBILITY_TOL):
    """Real QCQP for the step, normalized like the exact constraint checks.

    ``surrogate`` drops the objective's and the lower beampattern
    constraints' ``z Q z`` terms (both nonnegative) and replaces ``F_m``
    by its PSD part, which makes the problem convex and every constraint
    conservative with respect to the model.  ``as-printed`` keeps every
    term as is.

    Constraints already violated at ``z = 0`` by no more than ``tol`` are
    relaxed to pass there; larger violations raise.

    Raises
    ------
    InfeasibleStartError
        If ``z = 0`` violates the model constraints by more than ``tol``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    surrogate = mode == "surrogate"
    cons = []

    def add(const, lin, quad, scale, family, index):
        const, lin = const / scale, lin / scale
        quad = None if quad is None else quad / scale
        if const > tol:
            raise InfeasibleStartError(f"{family}[{index}] violated by {const:.3e} at the current point")
        cons.append(QuadraticConstraint(min(const, 0.0), lin, quad, family, index))

    for d in range(len(data.e)):
        lin = 2.0 * data.w[d].real
        Qd = _hermitian_real(data.Q[d])
        if data.beta_lo[d] > 0:
            add(data.beta_lo[d] - data.e[d], -lin, None if surrogate else -Qd,
                max(1.0, data.beta_lo[d]), "beampattern-low", d)
        if np.isfinite(data.beta_max):
            add(data.e[d] - data.beta_max, lin, _psd_part(data.Q[d]) if surrogate else Qd,
                max(1.0, data.beta_max), "beampattern-high", d)
    for m in range(len(data.l)):
        # SINR expression is in units of sigma^2 * Gamma-free power; scale by
        # the size of its terms so the tolerance is meaningful
        Fm = _psd_part(data.F[m]) if surrogate else _hermitian_real(data.F[m])
        scale = max(data.noise_power, abs(data.l[m]), 1e-300)
        add(data.l[m] + data.noise_power, 2.0 * data.s[m].real, Fm, scale, "sinr", m)
    add(-2.0 * data.PT, 2.0 * data.j.real, None, max(1.0, 4.0 * data.p_max), "power", 0)

    return QcqpProblem(
        obj_const=data.eT,
        obj_lin=2.0 * data.wT.real,
        obj_quad=None if surrogate else _hermitian_real(data.QT),
        constraints=tuple(cons),
        bound=data.z_bound,
    )


def solve_analog_step(data, backend=None, mode="surrogate"):
    """Solve the step problem; returns ``z`` with ``|z_l| <= z_bound``.

    The default backend is the convex SOCP one for ``surrogate`` and SLSQP
    for ``as-printed``.  Returns zeros when the solver fails or the
    objective has no linear term.

    Raises
    ------
    InfeasibleStartError
        The current point violates the model constraints; feasibility must
        be restored by the digital stage.
    """
    problem = build_qcqp_problem(data, mode)
    L = problem.size
    if not np.any(problem.obj_lin) and problem.obj_quad is None:
        return np.zeros(L)
    if backend is None:
        backend = "cvxopt" if mode == "surrogate" else "slsqp"
    z, _status = get_qcqp_backend(backend).solve(problem)
    if z is None or not np.all(np.isfinite(z)):
        return np.zeros(L)
    # a polished step must not lose to standing still on the model
    if problem.max_violation(z) > 1e-9 or problem.objective(z) < problem.obj_const:
        return np.zeros(L)
    return np.clip(z, -data.z_bound, data.z_bound)


@dataclass(frozen=True, eq=False)
class StepResult:
    z: np.ndarray
    accepted: bool
    exact_objective_before: float
    exact_objective_after: float
    exact_constraint_report: object
    shrink_count: int
    trust_radius: float
    reason: str = ""
    info: dict = field(default_factory=dict)


def _exact(scenario, y, B):
    try:
        return constraint_report(scenario.with_susceptance(y), B)
    except (ConditioningError, ArithmeticError):
        return None


def accept_or_shrink(
    state,
    z,
    scenario,
    B,
    backend=None,
    data=None,
    mode="surrogate",
    max_shrinks=MAX_SHRINKS,
    rho_max=RHO_MAX,
    growth=GROWTH,
    tol=FEASIBILITY_TOL,
):
    """Accept ``y + z`` only if it truly improves and stays feasible.

    The candidate is evaluated with the exact inverse.  It is accepted iff
    the exact total beampattern strictly increases and every constraint
    holds within ``tol``.  On acceptance the trust radius grows by
    ``growth`` (capped at ``rho_max``) and ``Yhat`` is refactored exactly.

    On rejection the trust radius is halved.  With a ``backend`` the step
    is re-solved on the smaller region, up to ``max_shrinks`` times;
    without one a single rejection is returned.

    Returns
    -------
    StepResult, AnalogState
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (state.L,):
        raise ContractError(f"step must have {state.L} entries")
    if np.max(np.abs(z), initial=0.0) > trust_region_bound(state) * (1 + 1e-9):
        raise ContractError("step exceeds the trust-region box")
    base = _exact(scenario, state.y, B)
    if base is None:
        raise ConditioningError("Y_s + Y_ss", "current analog state is singular")
    before = base.p_tot
    rho = state.trust_radius
    shrinks = 0
    last = base
    while True:
        if np.any(z):
            rep = _exact(scenario, state.y + z, B)
            if rep is not None:
                last = rep
                if rep.p_tot > before + 1e-12 * abs(before) and rep.feasible(tol):
                    new_rho = min(growth * rho, rho_max)
                    new_state = state.with_susceptance(state.y + z, new_rho, state.iteration + 1)
                    return StepResult(z, True, before, rep.p_tot, rep, shrinks, new_rho, "accepted"), new_state
        shrinks += 1
        rho = 0.5 * rho
        if backend is None or shrinks > max_shrinks or not np.any(z):
            break
        if data is None:
            data = assemble_qcqp_data(state, scenario, B)
        data = data.replace(z_bound=rho / _spectral(state.Yhat))
        z = solve_analog_step(data, backend, mode)

    reason = "non-improving" if not np.any(z) else "max-shrinks" if backend is not None else "rejected"
    after = last.p_tot if last is not None else float("nan")
    new_state = state.replace(trust_radius=rho)
    return StepResult(z, False, before, after, last, shrinks, rho, reason), new_state


def analog_step(state, scenario, B, backend=None, mode="surrogate", **kwargs):
    """Assemble, solve and accept-or-shrink in one call."""
    data = assemble_qcqp_data(state, scenario, B)
    if backend is None:
        backend = "cvxopt" if mode == "surrogate" else "slsqp"
    backend = get_qcqp_backend(backend)
    z = solve_analog_step(data, backend, mode)
    return accept_or_shrink(state, z, scenario, B, backend=backend, data=data, mode=mode, **kwargs)

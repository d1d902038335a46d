"""Exact evaluators for SINR, beampattern, radiated power and the ascent bound.

No approximation is used anywhere in this module: every quantity is
computed with the exact inverse ``(Y_s + Y_ss)^{-1}`` of the scenario.  The
optimization stages are accepted or rejected against these values.

A beamformer is an ``(N, M + N)`` complex array whose first ``M`` columns
are the communication precoders and whose last ``N`` columns are the
sensing precoders.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .em_model import steering_matrix
from .errors import ContractError

__all__ = [
    "EffectiveChannelSet",
    "ConstraintReport",
    "BoundednessCertificate",
    "check_beamformer",
    "effective_channels",
    "sinr",
    "sinrs",
    "beampattern_gain",
    "beampattern_gains",
    "direction_gains",
    "total_beampattern",
    "radiated_power",
    "objective_upper_bound",
    "bound_diagnostics",
    "boundedness_certificate",
    "constraint_report",
    "normalized_violation",
]

# imaginary residue allowed on real-by-construction quadratic forms
IMAG_RTOL = 1e-10


def check_beamformer(B, scenario):
    """Return ``B`` as a complex array after shape and finiteness checks."""
    B = np.asarray(B, dtype=complex)
    shape = (scenario.N, scenario.M + scenario.N)
    if B.shape != shape:
        raise ContractError(f"beamformer must have shape {shape}, got {B.shape}")
    if not np.all(np.isfinite(B)):
        raise ContractError("beamformer entries must be finite")
    return B


def _real(value, scale, what):
    value = complex(value)
    if abs(value.imag) > IMAG_RTOL * scale:
        raise ArithmeticError(f"{what}: imaginary residue {value.imag:.3e} exceeds tolerance")
    return value.real


@dataclass(frozen=True, eq=False)
class EffectiveChannelSet:
    """User channels through the surface: ``h = Y_RS Ytilde Y_st``."""

    h: np.ndarray
    y_RS: np.ndarray
    Ytilde: np.ndarray


def effective_channels(scenario):
    """Compute ``Y_RS = (Y_r + Y_rr)^{-1} Y_rs`` and ``h_m = y_RS,m Ytilde Y_st``.

    Raises
    ------
    ConditioningError
        If ``Y_s + Y_ss`` or ``Y_r + Y_rr`` is singular.
    """
    Yt = scenario.Ytilde
    y_RS = scenario.Y_RS
    h = y_RS @ Yt @ scenario.admittances.Y_st
    return EffectiveChannelSet(h=h, y_RS=y_RS, Ytilde=Yt)


def sinrs(scenario, channels, B):
    """SINR of every user, shape ``(M,)``."""
    B = check_beamformer(B, scenario)
    HB = channels.h @ B
    power = np.abs(HB) ** 2
    M = scenario.M
    signal = power[np.arange(M), np.arange(M)]
    interference = power.sum(axis=1) - signal
    return signal / (interference + scenario.noise_power)


def sinr(scenario, channels, B, m):
    """SINR of user ``m`` (0-based)::

        |h_m b_m|^2 / (||h_m B||^2 - |h_m b_m|^2 + sigma^2)
    """
    if not 0 <= m < scenario.M:
        raise ContractError(f"user index {m} out of range 0..{scenario.M - 1}")
    return float(sinrs(scenario, channels, B)[m])


def _field_matrix(scenario):
    # G = Ytilde Y_st maps precoded streams to surface excitations
    return scenario.Ytilde @ scenario.admittances.Y_st


def beampattern_gains(scenario, B, thetas, phis):
    """Beampattern ``P(theta, phi)`` over many directions (vectorized)."""
    B = check_beamformer(B, scenario)
    A = steering_matrix(scenario.geometry, thetas, phis)
    Z = A @ (_field_matrix(scenario) @ B)
    return (np.abs(Z) ** 2).sum(axis=1)


def beampattern_gain(scenario, B, theta, phi):
    """``P = a^T Ytilde Y_st B B^H Y_st^H Ytilde^H a^*`` at one direction.

    Evaluated as a Hermitian quadratic form; the imaginary residue of the
    scalar is checked rather than silently discarded.
    """
    B = check_beamformer(B, scenario)
    a = steering_matrix(scenario.geometry, theta, phi)[0]
    G = _field_matrix(scenario)
    C = G @ B @ B.conj().T @ G.conj().T
    value = a @ C @ a.conj()
    return _real(value, scenario.L * _spectral(C), "beampattern")


def direction_gains(scenario, B):
    """``P(theta_d, phi_d)`` for every scenario direction, shape ``(D,)``."""
    B = check_beamformer(B, scenario)
    Z = scenario.steering @ (_field_matrix(scenario) @ B)
    return (np.abs(Z) ** 2).sum(axis=1)


def total_beampattern(scenario, B):
    """Mean beampattern gain over the scenario directions."""
    return float(np.mean(direction_gains(scenario, B)))


def radiated_power(scenario, B):
    """``P_t = 1/2 Re tr{(Y_tt - Y_st^T Ytilde Y_st) B B^H}``."""
    B = check_beamformer(B, scenario)
    adm = scenario.admittances
    C = adm.Y_tt - adm.Y_st.T @ scenario.Ytilde @ adm.Y_st
    return 0.5 * float(np.real(np.trace(C @ B @ B.conj().T)))


def _spectral(a):
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


def objective_upper_bound(scenario, B):
    """Upper bound on the total beampattern::

        ||Ytilde^H|| ||Ytilde|| ||Y_st B B^H Y_st^H|| * L * min(L, M, N)

    with spectral norms.  Always >= ``total_beampattern(scenario, B)``.
    """
    B = check_beamformer(B, scenario)
    Yt = scenario.Ytilde
    Yst = scenario.admittances.Y_st
    T = Yst @ B @ B.conj().T @ Yst.conj().T
    L, M, N = scenario.L, scenario.M, scenario.N
    return _spectral(Yt.conj().T) * _spectral(Yt) * _spectral(T) * L * min(L, M, N)


def bound_diagnostics(scenario, B):
    """Both rank factors of the bound plus the literal inverse-norm identity.

    The trace bound is stated with ``min(L, M, N)`` while a rank argument
    on ``Y_st B B^H Y_st^H`` gives ``min(L, N)``; both are reported.  The
    inverse norm equals ``1 / sigma_min(Y_s + Y_ss)``.
    """
    B = check_beamformer(B, scenario)
    adm = scenario.admittances
    Yt = scenario.Ytilde
    T = adm.Y_st @ B @ B.conj().T @ adm.Y_st.conj().T
    L, M, N = scenario.L, scenario.M, scenario.N
    base = _spectral(Yt.conj().T) * _spectral(Yt) * _spectral(T) * L
    sigma_min = float(np.linalg.svd(adm.Y_s + adm.Y_ss, compute_uv=False)[-1])
    return {
        "bound_min_LMN": base * min(L, M, N),
        "bound_min_LN": base * min(L, N),
        "ytilde_norm": _spectral(Yt),
        "inverse_sigma_min": 1.0 / sigma_min,
        "p_tot": total_beampattern(scenario, B),
    }


@dataclass(frozen=True)
class BoundednessCertificate:
    """Runtime evidence for the structural facts the ascent bound relies on."""

    ytt_residual: float
    ytt_tolerance: float
    ytilde_T_norm: float
    gram_norm: float
    norm_match_error: float
    power_trace: float
    power_limit: float
    inverse_norm: float
    inverse_sigma_min: float

    @property
    def ytt_ok(self):
        return self.ytt_residual <= self.ytt_tolerance

    @property
    def norm_match_ok(self):
        return self.norm_match_error <= 1e-10

    @property
    def power_ok(self):
        return self.power_trace <= self.power_limit * (1 + 1e-9) + 1e-12

    @property
    def passed(self):
        return self.ytt_ok and self.norm_match_ok and self.power_ok


def boundedness_certificate(scenario, B):
    """Check (i) ``Re tr{Y_tt B B^H} = 0``, (ii) ``||Ytilde_T|| = ||Y_st B B^H Y_st^H||``
    and (iii) ``tr{(Ytilde + Ytilde^H) Ytilde_T} <= 4 P_max`` at ``B``.

    (ii) holds only when ``Y_st`` is purely imaginary, since then
    ``-Y_st^T = Y_st^H``.  Violations are reported, not raised.
    """
    B = check_beamformer(B, scenario)
    adm = scenario.admittances
    BBH = B @ B.conj().T
    nb2 = _spectral(B) ** 2
    ytt_res = abs(float(np.real(np.trace(adm.Y_tt @ BBH))))
    ytt_tol = 1e-10 * max(_spectral(adm.Y_tt), 1e-300) * nb2
    Yt_T = -adm.Y_st @ BBH @ adm.Y_st.T
    gram = adm.Y_st @ BBH @ adm.Y_st.conj().T
    n_T, n_g = _spectral(Yt_T), _spectral(gram)
    match = abs(n_T - n_g) / max(n_g, n_T, 1e-300) if max(n_g, n_T) > 0 else 0.0
    Yt = scenario.Ytilde
    trace = float(np.real(np.trace((Yt + Yt.conj().T) @ Yt_T)))
    sigma_min = float(np.linalg.svd(adm.Y_s + adm.Y_ss, compute_uv=False)[-1])
    return BoundednessCertificate(
        ytt_residual=ytt_res,
        ytt_tolerance=ytt_tol,
        ytilde_T_norm=n_T,
        gram_norm=n_g,
        norm_match_error=match,
        power_trace=trace,
        power_limit=4.0 * scenario.p_max,
        inverse_norm=_spectral(Yt),
        inverse_sigma_min=1.0 / sigma_min,
    )


# ------------------------------------------------------ constraint screening

def normalized_violation(lhs, rhs):
    """Violation of ``lhs <= rhs`` in units of ``max(1, |rhs|)``."""
    return (np.asarray(lhs, dtype=float) - rhs) / np.maximum(1.0, np.abs(rhs))


@dataclass(frozen=True, eq=False)
class ConstraintReport:
    """Exact values and normalized violations of every P1 constraint.

    Violations are positive when a constraint is broken, and expressed in
    units of ``max(1, |threshold|)``.
    """

    p_tot: float
    gains: np.ndarray
    sinr: np.ndarray
    power: float
    beta_lo_violation: np.ndarray
    beta_hi_violation: np.ndarray
    sinr_violation: np.ndarray
    power_violation: float

    @property
    def max_violation(self):
        parts = [self.beta_lo_violation, self.beta_hi_violation, self.sinr_violation, [self.power_violation]]
        return float(max(np.max(p) if len(p) else -np.inf for p in parts))

    def feasible(self, tol=1e-6):
        return self.max_violation <= tol

    def worst(self):
        """``(family, index, violation)`` of the largest violation."""
        best = ("power", 0, float(self.power_violation))
        for fam, arr in (
            ("beampattern-low", self.beta_lo_violation),
            ("beampattern-high", self.beta_hi_violation),
            ("sinr", self.sinr_violation),
        ):
            if len(arr):
                k = int(np.argmax(arr))
                if arr[k] > best[2]:
                    best = (fam, k, float(arr[k]))
        return best

    def violations(self):
        """Mapping ``"family[index]" -> violation`` for all broken constraints."""
        out = {}
        for fam, arr in (
            ("beampattern-low", self.beta_lo_violation),
            ("beampattern-high", self.beta_hi_violation),
            ("sinr", self.sinr_violation),
            ("power", [self.power_violation]),
        ):
            for k, v in enumerate(arr):
                if v > 0:
                    out[f"{fam}[{k}]"] = float(v)
        return out


def constraint_report(scenario, B, channels=None):
    """Evaluate objective and all constraints exactly at ``B``."""
    B = check_beamformer(B, scenario)
    if channels is None:
        channels = effective_channels(scenario)
    gains = direction_gains(scenario, B)
    gam = sinrs(scenario, channels, B)
    power = radiated_power(scenario, B)
    beta_hi = (
        normalized_violation(gains, scenario.beta_max)
        if np.isfinite(scenario.beta_max)
        else np.full(scenario.D, -np.inf)
    )
    return ConstraintReport(
        p_tot=float(np.mean(gains)),
        gains=gains,
        sinr=gam,
        power=power,
        beta_lo_violation=(scenario.beta_lo - gains) / np.maximum(1.0, scenario.beta_lo),
        beta_hi_violation=beta_hi,
        sinr_violation=(scenario.gamma_min - gam) / np.maximum(1.0, scenario.gamma_min),
        power_violation=float(normalized_violation(power, scenario.p_max)),
    )

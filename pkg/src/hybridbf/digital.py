"""Digital stage: lifted SDP for a fixed surface state, then rank-one recovery.

With ``B_m = b_m b_m^H`` every quantity of the beamforming problem becomes
trace-linear in the lifted matrices.  The rank-one requirement is dropped
(semidefinite relaxation) and restored afterwards by eigen-thresholding or
Gaussian randomization with exact feasibility screening.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .embedding import hermitian_embedding
from .metrics import constraint_report, effective_channels
from .sdp_backends import INFEASIBLE, OPTIMAL, TROUBLE, LinearConstraint, SdpProblem, get_sdp_backend

__all__ = [
    "SdpData",
    "DigitalSolution",
    "RecoveryDiagnostics",
    "assemble_sdp_data",
    "build_sdp_problem",
    "solve_digital_sdp",
    "extract_rank_one",
    "hermitian_embedding",
    "lifted_objective",
    "sinr_expression",
]

RANK_ONE_THRESHOLD = 1e-6
FEASIBILITY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class SdpData:
    """Coefficient matrices of the lifted problem.

    Attributes
    ----------
    A0 : (N, N)
        Objective matrix, the direction average of ``Ad``.
    Ad : (D, N, N)
        Per-direction beampattern matrices.
    Ym : (M, N, N)
        Per-user SINR matrices.
    Psi : (M, L, L)
        Rank-one user projectors ``y_RS,m^H y_RS,m``.
    AP : (N, N)
        Power matrix (not Hermitian; only its Hermitian part matters).
    Omega : (D, L, L)
        Rank-one steering projectors ``a^* a^T``.
    """

    A0: np.ndarray
    Ad: np.ndarray
    Ym: np.ndarray
    Psi: np.ndarray
    AP: np.ndarray
    Omega: np.ndarray

    def invariant_residuals(self):
        """Measured residuals of the structural identities of the data."""
        scale = max(np.linalg.norm(self.A0, 2), 1e-300)
        mean_res = np.linalg.norm(self.A0 - self.Ad.mean(axis=0), 2) / scale
        psd = 0.0
        for Y in self.Ym:
            lam = np.linalg.eigvalsh(0.5 * (Y + Y.conj().T))
            psd = max(psd, -lam[0] / max(np.abs(lam).max(), 1e-300))
        rank = 0.0
        for O in self.Omega:
            s = np.linalg.svd(O, compute_uv=False)
            rank = max(rank, s[1] / s[0] if s.size > 1 else 0.0)
        return {"A0_mean": float(mean_res), "Ym_psd": float(psd), "Omega_rank1": float(rank)}


def assemble_sdp_data(scenario, channels=None):
    """Build all lifted-problem matrices for the scenario's current surface.

    ``Ytilde = (Y_s + Y_ss)^{-1}``; ``Ad = Y_st^H Ytilde^H Omega_d Ytilde Y_st``,
    ``Ym = Y_st^H Ytilde^H Psi_m Ytilde Y_st``, ``AP = (Y_tt - Y_st^T Ytilde Y_st) / 2``.
    """
    if channels is None:
        channels = effective_channels(scenario)
    adm = scenario.admittances
    Yt = channels.Ytilde
    left = adm.Y_st.conj().T @ Yt.conj().T
    right = Yt @ adm.Y_st

    a = scenario.steering
    Omega = a.conj()[:, :, None] * a[:, None, :]
    Ad = np.einsum("ij,djk,kl->dil", left, Omega, right)
    Ad = 0.5 * (Ad + Ad.conj().transpose(0, 2, 1))
    A0 = Ad.mean(axis=0)

    y = channels.y_RS
    Psi = y.conj()[:, :, None] * y[:, None, :]
    Ym = np.einsum("ij,mjk,kl->mil", left, Psi, right)
    Ym = 0.5 * (Ym + Ym.conj().transpose(0, 2, 1))

    AP = 0.5 * (adm.Y_tt - adm.Y_st.T @ Yt @ adm.Y_st)
    return SdpData(A0=A0, Ad=Ad, Ym=Ym, Psi=Psi, AP=AP, Omega=Omega)


def lifted_objective(data, lifted):
    return float(sum(np.real(np.trace(data.A0 @ X)) for X in lifted))


def sinr_expression(data, lifted, m, gamma, noise_power):
    """``sum_{i != m} tr{Y_m B_i} - tr{Y_m B_m} / gamma + sigma^2`` (<= 0 iff SINR met)."""
    Y = data.Ym[m]
    tr = [float(np.real(np.trace(Y @ X))) for X in lifted]
    return sum(tr) - tr[m] - tr[m] / gamma + noise_power


def build_sdp_problem(data, scenario):
    """Translate ``SdpData`` plus thresholds into a backend ``SdpProblem``.

    Lower beampattern constraints with ``beta_d = 0`` and upper ones with
    ``beta_max = inf`` are implied and omitted.
    """
    M, N, K = scenario.M, scenario.N, scenario.M + scenario.N
    cons = []
    for d in range(scenario.D):
        coeffs = (data.Ad[d],) * K
        if np.isfinite(scenario.beta_max):
            cons.append(LinearConstraint(coeffs, "<=", scenario.beta_max, "beampattern-high", d))
        if scenario.beta_lo[d] > 0:
            cons.append(LinearConstraint(coeffs, ">=", float(scenario.beta_lo[d]), "beampattern-low", d))
    for m in range(M):
        Y = data.Ym[m]
        coeffs = tuple(-Y / scenario.gamma_min[m] if k == m else Y for k in range(K))
        cons.append(LinearConstraint(coeffs, "<=", -scenario.noise_power, "sinr", m))
    cons.append(LinearConstraint((data.AP,) * K, "<=", scenario.p_max, "power", 0))
    return SdpProblem(block_sizes=(N,) * K, objective=(data.A0,) * K, constraints=tuple(cons))


@dataclass(frozen=True, eq=False)
class RecoveryDiagnostics:
    path: str
    rank_gaps: tuple
    solver_rank_gaps: tuple
    feasibility_rate: float
    num_candidates: int
    feasible: bool
    violations: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class DigitalSolution:
    """Lifted solution and (after recovery) the rank-one beamformer."""

    lifted: tuple
    status: str
    objective_lifted: float
    rank_gap: tuple = ()
    B: np.ndarray | None = None
    objective_recovered: float = float("nan")
    max_residual: float = float("nan")
    infeasible_family: str | None = None
    infeasible_index: int | None = None
    diagnostics: RecoveryDiagnostics | None = None
    info: dict = field(default_factory=dict)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _rank_gap(X):
    lam = np.linalg.eigvalsh(0.5 * (X + X.conj().T))[::-1]
    if lam.size < 2 or lam[0] <= 0:
        return 0.0
    return float(max(lam[1], 0.0) / lam[0])


def _diagnose_infeasibility(problem, backend):
    """Least-violating point with the power budget kept hard.

    Returns ``(family, index)`` of the requirement with the largest
    normalized violation at the elastic optimum.
    """
    K = len(problem.block_sizes)
    soft = [c for c in problem.constraints if c.family != "power"]
    if not soft:
        return "power", 0
    minus_one = np.array([[-1.0]])
    plus_one = np.array([[1.0]])
    cons = []
    for c in problem.constraints:
        if c.family == "power":
            cons.append(LinearConstraint(c.coeffs + (None, None), c.sense, c.rhs, c.family, c.index))
            continue
        s = max(1.0, abs(c.rhs))
        sign = 1.0 if c.sense == "<=" else -1.0
        coeffs = tuple(None if A is None else sign * A / s for A in c.coeffs)
        cons.append(LinearConstraint(coeffs + (minus_one, plus_one), "<=", sign * c.rhs / s, c.family, c.index))
    cons.append(LinearConstraint((None,) * K + (None, plus_one), "<=", 1.0, "bound", 0))
    elastic = SdpProblem(
        block_sizes=problem.block_sizes + (1, 1),
        objective=(None,) * K + (minus_one, plus_one),
        constraints=tuple(cons),
    )
    res = backend.solve(elastic)
    if res.status != OPTIMAL:
        return None, None
    blocks = res.blocks[:K]
    viol = problem.violations(blocks)
    best = None
    for c, v in zip(problem.constraints, viol):
        if c.family != "power" and (best is None or v > best[0]):
            best = (v, c.family, c.index)
    return best[1], best[2]


def solve_digital_sdp(data, scenario, backend=None):
    """Solve the relaxed lifted problem.

    Returns a ``DigitalSolution`` with ``status`` in ``{"optimal",
    "infeasible", "numerical-trouble"}``.  On infeasibility the requirement
    family with the largest violation is named.
    """
    backend = get_sdp_backend(backend)
    problem = build_sdp_problem(data, scenario)
    res = backend.solve(problem)
    if res.status == OPTIMAL:
        lifted = tuple(res.blocks)
        return DigitalSolution(
            lifted=lifted,
            status=OPTIMAL,
            objective_lifted=lifted_objective(data, lifted),
            rank_gap=tuple(_rank_gap(X) for X in lifted),
            max_residual=res.max_residual,
            info=dict(res.info),
        )
    if res.status == INFEASIBLE:
        fam, idx = _diagnose_infeasibility(problem, backend)
        return DigitalSolution(
            lifted=(),
            status=INFEASIBLE,
            objective_lifted=float("nan"),
            infeasible_family=fam,
            infeasible_index=idx,
            info=dict(res.info),
        )
    return DigitalSolution(
        lifted=tuple(res.blocks),
        status=TROUBLE,
        objective_lifted=float("nan"),
        max_residual=res.max_residual,
        info=dict(res.info),
    )


# -------------------------------------------------------------- recovery

def _phase_normalize(b):
    if not np.any(b):
        return b
    k = int(np.argmax(np.abs(b)))
    return b * (abs(b[k]) / b[k])


def _principal(X):
    lam, V = np.linalg.eigh(0.5 * (X + X.conj().T))
    return _phase_normalize(np.sqrt(max(lam[-1], 0.0)) * V[:, -1])


def _batch_terms(scenario, channels, Bs):
    """Gains, signal, interference and power for a stack ``(S, N, K)``."""
    adm = scenario.admittances
    G = scenario.steering @ channels.Ytilde @ adm.Y_st
    gains = (np.abs(np.einsum("dn,snk->sdk", G, Bs)) ** 2).sum(-1)
    HB = np.abs(np.einsum("mn,snk->smk", channels.h, Bs)) ** 2
    M = scenario.M
    signal = HB[:, np.arange(M), np.arange(M)]
    interf = HB.sum(-1) - signal
    C = adm.Y_tt - adm.Y_st.T @ channels.Ytilde @ adm.Y_st
    power = 0.5 * np.real(np.einsum("snk,nl,slk->s", Bs.conj(), C, Bs))
    return gains, signal, interf, power


def _best_scale(scenario, gains, signal, interf, power):
    """Largest common power gain ``t^2`` keeping each candidate feasible.

    Gains and power scale with ``t^2`` and SINR increases with ``t``, so
    the feasible set in ``t^2`` is an interval; its right end maximizes the
    objective.  Returns ``t^2`` (``nan`` where the interval is empty).
    """
    S = gains.shape[0]
    tiny = 1e-300
    hi = np.full(S, np.inf)
    lo = np.zeros(S)
    if np.isfinite(scenario.beta_max):
        with np.errstate(divide="ignore"):
            hi = np.minimum(hi, np.where(gains > tiny, scenario.beta_max / np.maximum(gains, tiny), np.inf).min(1))
    hi = np.minimum(hi, np.where(power > tiny, scenario.p_max / np.maximum(power, tiny), np.inf))
    beta = scenario.beta_lo[None, :]
    need = np.where(beta > 0, np.where(gains > tiny, beta / np.maximum(gains, tiny), np.inf), 0.0)
    lo = np.maximum(lo, need.max(1))
    gam = scenario.gamma_min[None, :]
    margin = signal - gam * interf
    need = np.where(margin > tiny, gam * scenario.noise_power / np.maximum(margin, tiny), np.inf)
    lo = np.maximum(lo, need.max(1))
    ok = np.isfinite(hi) & (lo <= hi * (1 + 1e-12))
    return np.where(ok, hi, np.nan)


def extract_rank_one(
    solution,
    data,
    scenario,
    num_samples=1000,
    seed=0,
    threshold=RANK_ONE_THRESHOLD,
    channels=None,
):
    """Recover a beamformer from the lifted solution.

    The sensing blocks enter every constraint only through their sum, which
    has rank at most ``N``; it is refactored exactly into ``N`` rank-one
    columns first.  If all communication blocks then have
    ``lambda_2 / lambda_1 <= threshold`` the scaled principal eigenvectors
    are returned.  Otherwise ``num_samples`` Gaussian candidates are drawn
    from the lifted covariances (stream ``(seed, k)`` for candidate ``k``),
    each scaled to its largest feasible common gain and screened against
    the exact metrics; the feasible candidate with the highest total
    beampattern wins.

    Returns
    -------
    B : (N, M + N) complex array
    diagnostics : RecoveryDiagnostics
        ``feasible`` is False when no candidate passed; ``B`` is then the
        principal-eigenvector fallback and ``violations`` lists its broken
        constraints.
    """
    if solution.status != OPTIMAL:
        raise ValueError(f"cannot recover from a {solution.status} solution")
    if channels is None:
        channels = effective_channels(scenario)
    M, N = scenario.M, scenario.N
    lifted = [0.5 * (X + X.conj().T) for X in solution.lifted]
    solver_gaps = tuple(_rank_gap(X) for X in lifted)

    S_sum = sum(lifted[M:], np.zeros((N, N), dtype=complex))
    lam, V = np.linalg.eigh(S_sum)
    lam, V = lam[::-1], V[:, ::-1]
    Bs = np.column_stack([_phase_normalize(np.sqrt(max(l, 0.0)) * V[:, j]) for j, l in enumerate(lam)])
    comm = lifted[:M]
    gaps = tuple(_rank_gap(X) for X in comm) + (0.0,) * N

    B_p = np.column_stack([_principal(X) for X in comm] + [Bs]) if M else Bs

    def screen(B):
        rep = constraint_report(scenario, B, channels)
        return rep, rep.feasible(FEASIBILITY_TOL)

    seed_key = list(np.atleast_1d(seed).astype(np.int64))
    if all(g <= threshold for g in gaps[:M]):
        rep, ok = screen(B_p)
        if ok:
            diag = RecoveryDiagnostics("principal", gaps, solver_gaps, 1.0, 1, True)
            return B_p, diag
        cands = B_p[None]
        path = "principal-scaled"
    else:
        path = "randomization"
        draws = [B_p]
        roots = []
        for X in comm:
            w, U = np.linalg.eigh(X)
            roots.append(U * np.sqrt(np.clip(w, 0.0, None)))
        target = np.array([np.real(np.trace(data.Ym[m] @ comm[m])) for m in range(M)])
        for k in range(int(num_samples)):
            rng = np.random.default_rng(seed_key + [k])
            xi = (rng.standard_normal((N, M)) + 1j * rng.standard_normal((N, M))) / np.sqrt(2.0)
            cols = []
            for m in range(M):
                b = roots[m] @ xi[:, m]
                got = abs(channels.h[m] @ b) ** 2
                if got > 0 and target[m] > 0:
                    b = b * np.sqrt(target[m] / got)
                cols.append(_phase_normalize(b))
            draws.append(np.column_stack(cols + [Bs]))
        cands = np.stack(draws)

    t2 = _best_scale(scenario, *_batch_terms(scenario, channels, cands))
    feasible_idx = np.flatnonzero(np.isfinite(t2))
    rate = feasible_idx.size / cands.shape[0]
    if feasible_idx.size:
        gains = _batch_terms(scenario, channels, cands[feasible_idx])[0].mean(1) * t2[feasible_idx]
        for j in feasible_idx[np.argsort(-gains, kind="stable")]:
            B = np.sqrt(t2[j]) * cands[j]
            rep, ok = screen(B)
            if ok:
                diag = RecoveryDiagnostics(path, gaps, solver_gaps, rate, cands.shape[0], True)
                return B, diag
    rep, _ = screen(B_p)
    diag = RecoveryDiagnostics(path, gaps, solver_gaps, rate, cands.shape[0], False, rep.violations())
    return B_p, diag


def recover(solution, data, scenario, num_samples=1000, seed=0, threshold=RANK_ONE_THRESHOLD, channels=None):
    """``extract_rank_one`` folded back into the ``DigitalSolution``."""
    if channels is None:
        channels = effective_channels(scenario)
    B, diag = extract_rank_one(solution, data, scenario, num_samples, seed, threshold, channels)
    rep = constraint_report(scenario, B, channels)
    return solution.replace(B=B, objective_recovered=rep.p_tot, rank_gap=diag.rank_gaps, diagnostics=diag)

"""Alternating optimization: digital stage, then analog steps, repeated.

Every stage is accepted against the exact metrics, so the total
beampattern of the accepted points never decreases.  It is also bounded
above (``metrics.objective_upper_bound``), hence convergent; the bound is
recorded with every point and checked by ``convergence_check``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .analog import AnalogState, analog_step
from .digital import assemble_sdp_data, recover, solve_digital_sdp
from .errors import ConditioningError, ContractError, InfeasibleStartError
from .metrics import constraint_report, effective_channels, objective_upper_bound
from .qcqp_backends import get_qcqp_backend
from .sdp_backends import OPTIMAL

__all__ = [
    "AlgorithmConfig",
    "IterationRecord",
    "RunResult",
    "ConvergenceDecision",
    "run_alternating",
    "convergence_check",
    "make_record",
]

log = logging.getLogger(__name__)

BOUND_RTOL = 1e-9

CONVERGED = "converged"
MAX_OUTER = "max_outer_iters"
NO_PROGRESS = "no_progress"
INFEASIBLE = "infeasible"
DIGITAL_ONLY = "digital_only"
ANOMALY = "anomaly"


@dataclass(frozen=True)
class AlgorithmConfig:
    """Schedule and solver settings for ``run_alternating``.

    ``analog_steps_per_outer = 0`` reduces the run to one digital solve.
    """

    max_outer_iters: int = 50
    analog_steps_per_outer: int = 5
    objective_tolerance: float = 1e-4
    rank_one_threshold: float = 1e-6
    randomization_samples: int = 1000
    trust_rho: float = 0.1
    seed: int = 0
    analog_mode: str = "surrogate"
    sdp_backend: str = "cvxopt"
    qcqp_backend: str | None = None

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise ContractError("max_outer_iters must be >= 1")
        if self.analog_steps_per_outer < 0:
            raise ContractError("analog_steps_per_outer must be >= 0")
        if not 0.0 < self.objective_tolerance < 1.0:
            raise ContractError("objective_tolerance must lie in (0, 1)")
        if not self.rank_one_threshold > 0:
            raise ContractError("rank_one_threshold must be > 0")
        if self.randomization_samples < 1:
            raise ContractError("randomization_samples must be >= 1")
        if not 0.0 < self.trust_rho < 1.0:
            raise ContractError("trust_rho must lie in (0, 1)")
        if self.seed < 0:
            raise ContractError("seed must be >= 0")
        if self.analog_mode not in ("surrogate", "as-printed"):
            raise ContractError("analog_mode must be 'surrogate' or 'as-printed'")


@dataclass(frozen=True, eq=False)
class IterationRecord:
    """Exact metrics at the point reached after one stage.

    ``B`` and ``y`` are the point the numbers refer to, whether or not the
    stage was accepted.  ``wall_time`` is excluded from comparisons and
    from emitted files.
    """

    outer: int
    stage: str
    p_tot: float
    gains: np.ndarray
    sinr: np.ndarray
    power: float
    bound: float
    accepted: bool
    max_violation: float
    B: np.ndarray
    y: np.ndarray
    info: dict = field(default_factory=dict)
    wall_time: float = field(default=0.0, compare=False)

    def equals(self, other):
        return (
            self.outer == other.outer
            and self.stage == other.stage
            and self.p_tot == other.p_tot
            and np.array_equal(self.gains, other.gains)
            and np.array_equal(self.sinr, other.sinr)
            and self.power == other.power
            and self.bound == other.bound
            and self.accepted == other.accepted
            and self.max_violation == other.max_violation
            and np.array_equal(self.B, other.B)
            and np.array_equal(self.y, other.y)
            and self.info == other.info
        )


@dataclass(frozen=True, eq=False)
class RunResult:
    B: np.ndarray | None
    state: AnalogState
    trace: tuple
    termination: str
    scenario: object
    feasible: bool
    infeasibility: dict = field(default_factory=dict)
    anomalies: tuple = ()

    @property
    def accepted_objectives(self):
        return np.array([r.p_tot for r in self.trace if r.accepted])

    @property
    def final_scenario(self):
        return self.scenario.with_susceptance(self.state.y)


@dataclass(frozen=True)
class ConvergenceDecision:
    converged: bool
    anomaly: bool
    relative_improvement: float
    reason: str = ""


def make_record(outer, stage, scenario, B, y, accepted, info=None, wall_time=0.0):
    """Evaluate the exact metrics at ``(B, y)`` and pack them."""
    sc = scenario.with_susceptance(y)
    rep = constraint_report(sc, B)
    return IterationRecord(
        outer=outer,
        stage=stage,
        p_tot=rep.p_tot,
        gains=rep.gains,
        sinr=rep.sinr,
        power=rep.power,
        bound=objective_upper_bound(sc, B),
        accepted=bool(accepted),
        max_violation=rep.max_violation,
        B=np.array(B, dtype=complex),
        y=np.array(y, dtype=float),
        info=dict(info or {}),
        wall_time=wall_time,
    )


def convergence_check(trace, tol):
    """Decide convergence from the accepted records of a trace.

    Improvement is measured between the last accepted value of the final
    outer iteration and that of the one before (or, with a single outer
    iteration, the first accepted value).  A record whose objective
    exceeds its own upper bound is an anomaly and blocks convergence.
    """
    if not trace:
        raise ContractError("trace must be non-empty")
    for r in trace:
        if r.p_tot > r.bound * (1 + BOUND_RTOL) + 1e-300:
            return ConvergenceDecision(False, True, float("nan"),
                                       f"objective {r.p_tot:.6g} exceeds bound {r.bound:.6g} at outer {r.outer}")
    acc = [r for r in trace if r.accepted]
    if not acc:
        return ConvergenceDecision(False, False, float("nan"), "no accepted point")
    last_outer = acc[-1].outer
    prev = [r for r in acc if r.outer < last_outer]
    ref = prev[-1].p_tot if prev else acc[0].p_tot
    cur = acc[-1].p_tot
    rel = (cur - ref) / abs(ref) if ref != 0 else (0.0 if cur == ref else float("inf"))
    return ConvergenceDecision(bool(rel < tol), False, float(rel))


def run_alternating(scenario, config=None):
    """Run the alternating optimization from the scenario's susceptances.

    Returns
    -------
    RunResult
        ``termination`` is one of ``converged``, ``max_outer_iters``,
        ``no_progress``, ``digital_only``, ``infeasible`` or ``anomaly``.
    """
    config = AlgorithmConfig() if config is None else config
    state = AnalogState.from_scenario(scenario, config.trust_rho)
    qcqp = get_qcqp_backend(config.qcqp_backend or ("cvxopt" if config.analog_mode == "surrogate" else "slsqp"))
    trace = []
    anomalies = []
    B = None
    current = -np.inf
    termination = MAX_OUTER

    for outer in range(config.max_outer_iters):
        progressed = False
        t0 = time.perf_counter()
        sc = scenario.with_susceptance(state.y)
        channels = effective_channels(sc)
        data = assemble_sdp_data(sc, channels)
        sol = solve_digital_sdp(data, sc, config.sdp_backend)
        if sol.status != OPTIMAL:
            info = {"status": sol.status, "family": sol.infeasible_family, "index": sol.infeasible_index}
            if B is None:
                log.info("digital stage %s on first iteration", sol.status)
                return RunResult(None, state, tuple(trace), INFEASIBLE, scenario, False, info, tuple(anomalies))
            anomalies.append(f"outer {outer}: digital stage {sol.status}")
            trace.append(make_record(outer, "digital", scenario, B, state.y, False, info,
                                     time.perf_counter() - t0))
        else:
            sol = recover(sol, data, sc, config.randomization_samples, [config.seed, outer],
                          config.rank_one_threshold, channels)
            rep = constraint_report(sc, sol.B, channels)
            ok = rep.feasible()
            take = B is None or (ok and rep.p_tot >= current)
            info = {
                "path": sol.diagnostics.path,
                "rank_gaps": [float(g) for g in sol.rank_gap],
                "objective_lifted": float(sol.objective_lifted),
                "objective_recovered": float(sol.objective_recovered),
                "recovery_feasible": bool(sol.diagnostics.feasible),
                "feasibility_rate": float(sol.diagnostics.feasibility_rate),
            }
            if take:
                progressed = B is None or rep.p_tot > current
                B, current = sol.B, rep.p_tot
            trace.append(make_record(outer, "digital", scenario, sol.B if take else B, state.y, take, info,
                                     time.perf_counter() - t0))

        if config.analog_steps_per_outer == 0:
            termination = DIGITAL_ONLY
            break

        state = state.replace(trust_radius=max(state.trust_radius, config.trust_rho))
        for _ in range(config.analog_steps_per_outer):
            t0 = time.perf_counter()
            try:
                res, state = analog_step(state, scenario, B, qcqp, config.analog_mode)
            except InfeasibleStartError as exc:
                log.info("analog stage skipped: %s", exc)
                break
            except ConditioningError as exc:
                anomalies.append(f"outer {outer}: {exc}")
                break
            info = {"shrinks": res.shrink_count, "trust_radius": float(res.trust_radius), "reason": res.reason}
            if res.accepted:
                progressed = True
                current = res.exact_objective_after
            trace.append(make_record(outer, "analog", scenario, B, state.y, res.accepted, info,
                                     time.perf_counter() - t0))
            if not res.accepted:
                break

        decision = convergence_check(trace, config.objective_tolerance)
        if decision.anomaly:
            anomalies.append(decision.reason)
            termination = ANOMALY
            break
        if outer > 0 and decision.converged:
            termination = CONVERGED
            break
        if not progressed:
            termination = NO_PROGRESS
            break

    final = constraint_report(scenario.with_susceptance(state.y), B)
    infeas = {} if final.feasible() else {"worst": list(final.worst()), "violations": final.violations()}
    return RunResult(B, state, tuple(trace), termination, scenario, final.feasible(), infeas, tuple(anomalies))

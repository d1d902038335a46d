"""Backend interface for small Hermitian semidefinite programs.

A problem is posed over Hermitian PSD blocks ``X_1..X_K``::

    maximize    sum_k tr{C_k X_k}
    subject to  sum_k tr{A_ik X_k}  (<= | >=)  b_i
                X_k >= 0

Only the Hermitian part of each coefficient matters (traces are taken as
real parts).  Backends return the blocks, a status in
``{"optimal", "infeasible", "numerical-trouble"}``, the objective and the
largest normalized constraint residual.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedding import hermitian_basis, hermitian_coordinates, hermitian_embedding

__all__ = [
    "LinearConstraint",
    "SdpProblem",
    "SdpResult",
    "CvxoptSdpBackend",
    "CvxpySdpBackend",
    "get_sdp_backend",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
TROUBLE = "numerical-trouble"

RESIDUAL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class LinearConstraint:
    """``sum_k Re tr{coeffs[k] X_k}  sense  rhs``; ``None`` marks a zero block."""

    coeffs: tuple
    sense: str
    rhs: float
    family: str = ""
    index: int = 0

    def __post_init__(self):
        if self.sense not in ("<=", ">="):
            raise ValueError(f"sense must be '<=' or '>=', got {self.sense!r}")


@dataclass(frozen=True, eq=False)
class SdpProblem:
    block_sizes: tuple
    objective: tuple
    constraints: tuple

    def _trace(self, coeffs, blocks):
        total = 0.0
        for A, X in zip(coeffs, blocks):
            if A is not None:
                total += float(np.real(np.trace(A @ X)))
        return total

    def objective_value(self, blocks):
        return self._trace(self.objective, blocks)

    def constraint_values(self, blocks):
        return np.array([self._trace(c.coeffs, blocks) for c in self.constraints])

    def violations(self, blocks):
        """Normalized violation of each linear constraint (positive = broken)."""
        vals = self.constraint_values(blocks)
        out = np.empty(len(self.constraints))
        for i, (c, v) in enumerate(zip(self.constraints, vals)):
            diff = v - c.rhs if c.sense == "<=" else c.rhs - v
            out[i] = diff / max(1.0, abs(c.rhs))
        return out

    def max_residual(self, blocks):
        res = 0.0
        if self.constraints:
            res = max(res, float(np.max(self.violations(blocks))))
        for X in blocks:
            lam = np.linalg.eigvalsh(0.5 * (X + X.conj().T))
            scale = max(1.0, float(np.max(np.abs(lam))))
            res = max(res, -float(lam[0]) / scale)
        return res


@dataclass(eq=False)
class SdpResult:
    status: str
    blocks: list
    objective: float
    max_residual: float
    info: dict = field(default_factory=dict)


class CvxoptSdpBackend:
    """Real symmetric SDP through ``cvxopt.solvers.sdp``.

    Each Hermitian block is parametrized by its ``n^2`` real coordinates
    and constrained through ``hermitian_embedding`` to be PSD, so the
    solver only ever sees real symmetric ``2n x 2n`` cones.

    Tight tolerances occasionally push the interior-point method past its
    numerical limit after it has effectively converged; a solve that ends
    in trouble is retried with each looser tolerance in ``fallback_tols``.
    """

    name = "cvxopt"

    def __init__(self, abstol=1e-10, reltol=1e-10, feastol=1e-10, maxiters=200, fallback_tols=(1e-8, 1e-7)):
        self.options = {
            "show_progress": False,
            "abstol": abstol,
            "reltol": reltol,
            "feastol": feastol,
            "maxiters": maxiters,
        }
        self.fallback_tols = tuple(fallback_tols)

    def solve(self, problem):
        res = self._solve(problem, self.options)
        for tol in self.fallback_tols:
            if res.status != TROUBLE:
                break
            opts = dict(self.options, abstol=tol, reltol=tol, feastol=tol)
            res = self._solve(problem, opts)
            res.info["fallback_tol"] = tol
        return res

    def _solve(self, problem, options):
        from cvxopt import matrix, solvers

        sizes = [int(n) for n in problem.block_sizes]
        offsets = np.concatenate([[0], np.cumsum([n * n for n in sizes])])
        nvar = int(offsets[-1])

        def row(coeffs):
            r = np.zeros(nvar)
            for k, A in enumerate(coeffs):
                if A is not None:
                    r[offsets[k]:offsets[k + 1]] = hermitian_coordinates(A, sizes[k])
            return r

        c = -row(problem.objective)
        c_scale = max(np.linalg.norm(c), 1e-300)
        c = c / c_scale

        G_rows, h_vals = [], []
        for con in problem.constraints:
            r, b = row(con.coeffs), float(con.rhs)
            if con.sense == ">=":
                r, b = -r, -b
            s = np.linalg.norm(r)
            if s == 0.0:
                if b < 0:
                    return SdpResult(INFEASIBLE, [], np.nan, np.inf, {"reason": "0 <= negative rhs"})
                continue
            G_rows.append(r / s)
            h_vals.append(b / s)

        Gs, hs = [], []
        for k, n in enumerate(sizes):
            basis = hermitian_basis(n)
            blk = np.zeros(((2 * n) ** 2, nvar))
            for j, E in enumerate(basis):
                blk[:, offsets[k] + j] = -hermitian_embedding(E).ravel(order="F")
            Gs.append(matrix(blk))
            hs.append(matrix(np.zeros((2 * n, 2 * n))))

        kwargs = {}
        if G_rows:
            kwargs["Gl"] = matrix(np.array(G_rows))
            kwargs["hl"] = matrix(np.array(h_vals))
        try:
            sol = solvers.sdp(matrix(c), Gs=Gs, hs=hs, options=options, **kwargs)
        except (ArithmeticError, ValueError) as exc:
            return SdpResult(TROUBLE, [], np.nan, np.inf, {"reason": str(exc)})

        status = sol["status"]
        if status == "primal infeasible":
            return SdpResult(INFEASIBLE, [], np.nan, np.inf, {"solver_status": status})
        if sol["x"] is None:
            return SdpResult(TROUBLE, [], np.nan, np.inf, {"solver_status": status})
        x = np.array(sol["x"]).ravel()
        blocks = []
        for k, n in enumerate(sizes):
            X = np.tensordot(x[offsets[k]:offsets[k + 1]], hermitian_basis(n), axes=1)
            blocks.append(0.5 * (X + X.conj().T))
        resid = problem.max_residual(blocks)
        info = {
            "solver_status": status,
            "gap": sol.get("gap"),
            "relative_gap": sol.get("relative gap"),
            "iterations": sol.get("iterations"),
        }
        if status == "optimal" and resid <= RESIDUAL_TOL:
            out = OPTIMAL
        elif status == "unknown" and resid <= RESIDUAL_TOL and (sol.get("relative gap") or 1.0) <= 1e-6:
            out = OPTIMAL
        elif status == "dual infeasible":
            out = TROUBLE
            info["reason"] = "unbounded objective"
        else:
            out = TROUBLE
        return SdpResult(out, blocks, problem.objective_value(blocks), resid, info)


class CvxpySdpBackend:
    """Complex-native backend through cvxpy (Hermitian variables)."""

    name = "cvxpy"

    def __init__(self, solver="CLARABEL", **solver_kwargs):
        self.solver = solver
        self.solver_kwargs = solver_kwargs

    def solve(self, problem):
        import cvxpy as cp

        X = [cp.Variable((n, n), hermitian=True) for n in problem.block_sizes]

        def expr(coeffs):
            terms = [cp.real(cp.trace(A @ Xk)) for A, Xk in zip(coeffs, X) if A is not None]
            return cp.sum(cp.hstack(terms)) if terms else 0.0

        cons = [Xk >> 0 for Xk in X]
        for c in problem.constraints:
            e = expr(c.coeffs)
            cons.append(e <= c.rhs if c.sense == "<=" else e >= c.rhs)
        prob = cp.Problem(cp.Maximize(expr(problem.objective)), cons)
        try:
            prob.solve(solver=self.solver, **self.solver_kwargs)
        except cp.error.SolverError as exc:
            return SdpResult(TROUBLE, [], np.nan, np.inf, {"reason": str(exc)})
        if prob.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return SdpResult(INFEASIBLE, [], np.nan, np.inf, {"solver_status": prob.status})
        if X[0].value is None:
            return SdpResult(TROUBLE, [], np.nan, np.inf, {"solver_status": prob.status})
        blocks = [0.5 * (Xk.value + Xk.value.conj().T) for Xk in X]
        resid = problem.max_residual(blocks)
        status = OPTIMAL if prob.status == cp.OPTIMAL and resid <= RESIDUAL_TOL else TROUBLE
        return SdpResult(status, blocks, problem.objective_value(blocks), resid, {"solver_status": prob.status})


def get_sdp_backend(backend=None):
    """Resolve ``None`` / a name / a backend instance to a backend."""
    if backend is None or backend == "cvxopt":
        return CvxoptSdpBackend()
    if backend == "cvxpy":
        return CvxpySdpBackend()
    if hasattr(backend, "solve"):
        return backend
    raise ValueError(f"unknown SDP backend {backend!r}")

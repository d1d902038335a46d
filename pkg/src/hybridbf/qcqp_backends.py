"""Backends for small real QCQPs over a box.

Problem form (``z`` real, length ``L``)::

    maximize    c0 + c @ z + z @ P @ z
    subject to  k_i + q_i @ z + z @ R_i @ z <= 0
                |z_l| <= bound

``CvxoptQcqpBackend`` needs a concave objective (``P`` NSD) and convex
constraints (``R_i`` PSD) and solves the problem globally as an SOCP.
``ScipyQcqpBackend`` accepts anything and returns a local solution.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuadraticConstraint",
    "QcqpProblem",
    "CvxoptQcqpBackend",
    "ScipyQcqpBackend",
    "get_qcqp_backend",
    "psd_factor",
]


@dataclass(frozen=True, eq=False)
class QuadraticConstraint:
    const: float
    lin: np.ndarray
    quad: np.ndarray | None = None
    family: str = ""
    index: int = 0

    def value(self, z):
        v = self.const + self.lin @ z
        if self.quad is not None:
            v += z @ self.quad @ z
        return float(v)


@dataclass(frozen=True, eq=False)
class QcqpProblem:
    obj_const: float
    obj_lin: np.ndarray
    obj_quad: np.ndarray | None
    constraints: tuple
    bound: float

    @property
    def size(self):
        return self.obj_lin.shape[0]

    def objective(self, z):
        v = self.obj_const + self.obj_lin @ z
        if self.obj_quad is not None:
            v += z @ self.obj_quad @ z
        return float(v)

    def max_violation(self, z):
        vals = [c.value(z) for c in self.constraints]
        box = float(np.max(np.abs(z))) - self.bound if z.size else -np.inf
        return max(vals + [box]) if vals else box


def psd_factor(P, tol=0.0):
    """``R`` with ``R.T @ R`` equal to the PSD part of symmetric ``P``."""
    P = 0.5 * (P + P.T)
    w, V = np.linalg.eigh(P)
    keep = w > tol * max(1.0, abs(w).max())
    return (V[:, keep] * np.sqrt(w[keep])).T


class CvxoptQcqpBackend:
    """Convex QCQP as a second-order cone program via ``cvxopt.solvers.socp``."""

    name = "cvxopt"

    def __init__(self, abstol=1e-10, reltol=1e-10, feastol=1e-10, maxiters=100):
        self.options = {
            "show_progress": False,
            "abstol": abstol,
            "reltol": reltol,
            "feastol": feastol,
            "maxiters": maxiters,
        }

    def solve(self, problem):
        from cvxopt import matrix, solvers

        n = problem.size
        has_epi = problem.obj_quad is not None and np.any(problem.obj_quad)
        nv = n + (1 if has_epi else 0)

        # minimize -(c @ z) [+ u], with u >= z @ (-P) @ z
        c = np.zeros(nv)
        c[:n] = -problem.obj_lin
        if has_epi:
            c[n] = 1.0
        scale = max(np.linalg.norm(c), 1e-12)
        c = c / scale

        Gl = [np.hstack([np.eye(n), np.zeros((n, nv - n))]), np.hstack([-np.eye(n), np.zeros((n, nv - n))])]
        hl = [np.full(n, problem.bound), np.full(n, problem.bound)]
        Gq, hq = [], []

        def add(const, lin, R):
            # const + lin @ x + ||R x||^2 <= 0
            s = max(np.linalg.norm(lin), abs(const), 1e-12)
            const, lin, R = const / s, lin / s, R / np.sqrt(s)
            if R.shape[0] == 0:
                Gl.append(lin[None, :])
                hl.append(np.array([-const]))
                return
            G = np.vstack([lin[None, :], lin[None, :], -2.0 * R])
            h = np.concatenate([[1.0 - const], [-1.0 - const], np.zeros(R.shape[0])])
            Gq.append(matrix(G))
            hq.append(matrix(h))

        for con in problem.constraints:
            lin = np.concatenate([con.lin, np.zeros(nv - n)])
            R = psd_factor(con.quad) if con.quad is not None else np.zeros((0, n))
            add(con.const, lin, np.hstack([R, np.zeros((R.shape[0], nv - n))]))
        if has_epi:
            R = psd_factor(-problem.obj_quad)
            lin = np.zeros(nv)
            lin[n] = -1.0
            add(0.0, lin, np.hstack([R, np.zeros((R.shape[0], 1))]))

        kwargs = {"Gl": matrix(np.vstack(Gl)), "hl": matrix(np.concatenate(hl))}
        if Gq:
            kwargs["Gq"], kwargs["hq"] = Gq, hq
        # socp reads the module-level options dict, not a keyword
        saved = dict(solvers.options)
        solvers.options.update(self.options)
        try:
            sol = solvers.socp(matrix(c), **kwargs)
        except (ArithmeticError, ValueError):
            return None, "numerical-trouble"
        finally:
            solvers.options.clear()
            solvers.options.update(saved)
        if sol["x"] is None:
            return None, sol["status"]
        z = np.clip(np.array(sol["x"]).ravel()[:n], -problem.bound, problem.bound)
        return z, sol["status"]


class ScipyQcqpBackend:
    """Local solution with SLSQP from ``z = 0`` (any curvature)."""

    name = "slsqp"

    def __init__(self, maxiter=200, ftol=1e-12):
        self.maxiter = maxiter
        self.ftol = ftol

    def solve(self, problem, z0=None):
        from scipy.optimize import minimize

        n = problem.size
        P = problem.obj_quad if problem.obj_quad is not None else np.zeros((n, n))
        P = 0.5 * (P + P.T)
        scale = max(np.linalg.norm(problem.obj_lin), np.linalg.norm(P), 1e-12)

        def f(z):
            return -(problem.obj_lin @ z + z @ P @ z) / scale

        def g(z):
            return -(problem.obj_lin + 2.0 * P @ z) / scale

        cons = []
        for con in problem.constraints:
            Q = np.zeros((n, n)) if con.quad is None else 0.5 * (con.quad + con.quad.T)
            s = max(np.linalg.norm(con.lin), abs(con.const), 1e-12)
            cons.append({
                "type": "ineq",
                "fun": lambda z, c=con, Q=Q, s=s: -(c.const + c.lin @ z + z @ Q @ z) / s,
                "jac": lambda z, c=con, Q=Q, s=s: -(c.lin + 2.0 * Q @ z) / s,
            })
        z0 = np.zeros(n) if z0 is None else z0
        res = minimize(
            f, z0, jac=g, method="SLSQP", constraints=cons,
            bounds=[(-problem.bound, problem.bound)] * n,
            options={"maxiter": self.maxiter, "ftol": self.ftol},
        )
        z = np.clip(res.x, -problem.bound, problem.bound)
        return z, "optimal" if res.success else res.message


def get_qcqp_backend(backend=None):
    if backend is None or backend == "cvxopt":
        return CvxoptQcqpBackend()
    if backend in ("slsqp", "scipy"):
        return ScipyQcqpBackend()
    if hasattr(backend, "solve"):
        return backend
    raise ValueError(f"unknown QCQP backend {backend!r}")

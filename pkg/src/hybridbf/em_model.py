"""Electromagnetic scenario: array geometry, steering, admittance matrices.

The admittance set follows the multiport description of a dynamic
metasurface antenna with three port groups: RF feeds (``t``), surface
elements (``s``) and receivers (``r``).  Only the structural properties
used by the optimization and its boundedness argument are modelled; the
synthetic generator reproduces those properties, not a physical layout.

Matrix file grammar (``*.adm``)::

    file    := comment* header block{7}
    header  := "L N M D"                  four non-negative integers
    block   := name rows cols NEWLINE row{rows}
    row     := (re im){cols}              whitespace separated floats
    name    := Y_tt | Y_s | Y_ss | Y_st | Y_r | Y_rr | Y_rs
    comment := "#" anything

Blocks may appear in any order; each must appear exactly once.  Entries
are written with 17 significant digits so that save/load is exact.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    ConditioningError,
    ContractError,
    DegenerateModelError,
    ParseError,
    SchemaError,
    ScenarioError,
)

__all__ = [
    "ArrayGeometry",
    "AdmittanceSet",
    "Scenario",
    "CheckResult",
    "ValidationReport",
    "steering_vector",
    "steering_matrix",
    "build_synthetic_admittances",
    "load_admittances",
    "save_admittances",
    "validate_admittances",
    "default_directions",
]

# smallest singular value must exceed this fraction of the spectral norm
EPS_INV = 1e-9
# generator rejects models above this condition number
MAX_CONDITION = 1e12

BLOCK_NAMES = ("Y_tt", "Y_s", "Y_ss", "Y_st", "Y_r", "Y_rr", "Y_rs")


def _frozen(a, dtype=None):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """Element positions (in wavelengths) plus port counts.

    Parameters
    ----------
    element_positions : (L, 3) array_like
        Surface element coordinates in units of the wavelength.
    num_rf_ports : int
        Number of RF chains ``N``.
    num_users : int
        Number of communication users ``M``.
    """

    element_positions: np.ndarray
    num_rf_ports: int
    num_users: int

    def __post_init__(self):
        pos = np.asarray(self.element_positions, dtype=float)
        if pos.ndim == 1 and pos.size == 3:
            pos = pos.reshape(1, 3)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ScenarioError(f"element_positions must be (L, 3), got {pos.shape}")
        if pos.shape[0] < 1 or self.num_rf_ports < 1 or self.num_users < 1:
            raise ScenarioError("L, N and M must all be >= 1")
        if not np.all(np.isfinite(pos)):
            raise ScenarioError("element positions must be finite")
        if pos.shape[0] > 1:
            diff = pos[:, None, :] - pos[None, :, :]
            dist = np.sqrt((diff ** 2).sum(-1))
            np.fill_diagonal(dist, np.inf)
            if dist.min() <= 0.0:
                raise ScenarioError("element positions must be pairwise distinct")
        object.__setattr__(self, "element_positions", _frozen(pos))
        object.__setattr__(self, "num_rf_ports", int(self.num_rf_ports))
        object.__setattr__(self, "num_users", int(self.num_users))

    @property
    def L(self):
        return self.element_positions.shape[0]

    @property
    def N(self):
        return self.num_rf_ports

    @property
    def M(self):
        return self.num_users

    @classmethod
    def upa(cls, num_elements, num_rf_ports, num_users, spacing=0.5):
        """Uniform planar array in the x-y plane, as square as ``L`` allows."""
        L = int(num_elements)
        if L < 1:
            raise ScenarioError("num_elements must be >= 1")
        nx = max(d for d in range(1, math.isqrt(L) + 1) if L % d == 0)
        ny = L // nx
        ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        pos = np.zeros((L, 3))
        pos[:, 0] = spacing * ix.ravel()
        pos[:, 1] = spacing * iy.ravel()
        return cls(pos, num_rf_ports, num_users)

    def distances(self):
        diff = self.element_positions[:, None, :] - self.element_positions[None, :, :]
        return np.sqrt((diff ** 2).sum(-1))


def steering_matrix(geometry, thetas, phis):
    """Steering vectors for many directions, one per row.

    Returns a ``(K, L)`` complex array with unit-modulus entries.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    thetas, phis = np.broadcast_arrays(thetas, phis)
    st = np.sin(thetas)
    k = np.stack([st * np.cos(phis), st * np.sin(phis), np.cos(thetas)], axis=-1)
    phase = 2.0 * np.pi * (k @ geometry.element_positions.T)
    return np.exp(1j * phase)


def steering_vector(geometry, theta, phi):
    """Far-field steering vector ``a(theta, phi)`` of length ``L``."""
    return steering_matrix(geometry, theta, phi)[0]


def default_directions(num_directions):
    """``D`` directions spread over [-pi/4, pi/4] in the x-z plane."""
    D = int(num_directions)
    if D < 1:
        raise ScenarioError("num_directions must be >= 1")
    thetas = np.linspace(-np.pi / 4, np.pi / 4, D) if D > 1 else np.zeros(1)
    return np.column_stack([thetas, np.zeros(D)])


@dataclass(frozen=True, eq=False)
class AdmittanceSet:
    """All mutual-admittance matrices of the metasurface model."""

    Y_tt: np.ndarray
    Y_s: np.ndarray
    Y_ss: np.ndarray
    Y_st: np.ndarray
    Y_r: np.ndarray
    Y_rr: np.ndarray
    Y_rs: np.ndarray

    def __post_init__(self):
        for name in BLOCK_NAMES:
            arr = np.asarray(getattr(self, name), dtype=complex)
            if arr.ndim != 2:
                raise SchemaError(f"{name} must be a matrix", field=name)
            object.__setattr__(self, name, _frozen(arr, complex))
        shapes = self.expected_shapes(self.L, self.N, self.M)
        for name, shape in shapes.items():
            got = getattr(self, name).shape
            if got != shape:
                raise SchemaError(f"{name} has shape {got}, expected {shape}", field=name)

    @property
    def L(self):
        return self.Y_ss.shape[0]

    @property
    def N(self):
        return self.Y_tt.shape[0]

    @property
    def M(self):
        return self.Y_r.shape[0]

    @staticmethod
    def expected_shapes(L, N, M):
        return {
            "Y_tt": (N, N),
            "Y_s": (L, L),
            "Y_ss": (L, L),
            "Y_st": (L, N),
            "Y_r": (M, M),
            "Y_rr": (M, M),
            "Y_rs": (M, L),
        }

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def equals(self, other, atol=0.0):
        return all(
            np.allclose(getattr(self, n), getattr(other, n), rtol=0.0, atol=atol)
            for n in BLOCK_NAMES
        )


def build_synthetic_admittances(geometry, seed, coupling_scale, r0=0.0):
    """Random admittance set with every structural property the model needs.

    ``Y_ss`` couples elements with magnitude ``coupling_scale / (1 + dist)``
    and random phase; its real part is made diagonally dominant so that
    ``Re(Y_s + Y_ss)`` is positive definite (a passive surface).  ``Y_st``
    is purely imaginary and ``Y_tt`` is diagonal and purely imaginary.

    Raises
    ------
    DegenerateModelError
        If ``Y_s + Y_ss`` or ``Y_r + Y_rr`` has condition number above 1e12.
    """
    if coupling_scale < 0:
        raise ScenarioError("coupling_scale must be >= 0")
    if r0 < 0:
        raise ScenarioError("r0 must be >= 0")
    rng = np.random.default_rng(seed)
    L, N, M = geometry.L, geometry.N, geometry.M

    dist = geometry.distances()
    mag = coupling_scale / (1.0 + dist)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(L, L))
    off = np.triu(mag * np.exp(1j * phase), k=1)
    off = off + off.T
    g_diag = 1.0 + np.abs(off.real).sum(axis=1)
    x_diag = rng.uniform(-1.0, 1.0, size=L)
    Y_ss = off + np.diag(g_diag + 1j * x_diag)

    Y_s = np.diag(np.full(L, r0, dtype=complex))
    Y_st = 1j * rng.uniform(-1.0, 1.0, size=(L, N))
    Y_tt = np.diag(1j * rng.uniform(0.5, 1.5, size=N))

    Y_r = np.diag(1.0 + 1j * rng.uniform(-0.5, 0.5, size=M))
    Y_rr = 0.1 * (rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M)))
    Y_rr = 0.5 * (Y_rr + Y_rr.T)
    Y_rs = (rng.standard_normal((M, L)) + 1j * rng.standard_normal((M, L))) / np.sqrt(2.0)

    for name, mat in (("Y_s + Y_ss", Y_s + Y_ss), ("Y_r + Y_rr", Y_r + Y_rr)):
        cond = np.linalg.cond(mat)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise DegenerateModelError(name, f"condition number {cond:.3e}; resample seed")
    return AdmittanceSet(Y_tt=Y_tt, Y_s=Y_s, Y_ss=Y_ss, Y_st=Y_st, Y_r=Y_r, Y_rr=Y_rr, Y_rs=Y_rs)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def __str__(self):
        lines = []
        for c in self.checks:
            flag = "PASS" if c.passed else "FAIL"
            lines.append(f"{flag} {c.name}: measured={c.measured:.3e} threshold={c.threshold:.3e}")
        return "\n".join(lines)


def _offdiag(a):
    return a - np.diag(np.diag(a))


def _max_abs(a):
    return float(np.max(np.abs(a))) if a.size else 0.0


def _invertibility_margin(mat):
    s = np.linalg.svd(mat, compute_uv=False)
    return float(s[-1] / s[0]) if s[0] > 0 else 0.0


def validate_admittances(adm, eps=1e-9, r0=None):
    """Check every structural invariant; failures are reported, never raised.

    Residual checks pass when ``measured <= eps * max(1, ||X||)``.  The two
    invertibility checks report ``sigma_min / sigma_max`` and pass when it
    is at least ``EPS_INV``.

    Parameters
    ----------
    adm : AdmittanceSet
    eps : float
        Absolute residual tolerance (scaled by the matrix norm when > 1).
    r0 : float, optional
        Expected ``Re(Y_s)_{ll}``.  Defaults to the mean of the diagonal.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")

    def tol(mat):
        return eps * max(1.0, float(np.linalg.norm(mat, 2)))

    checks = []

    def add(name, measured, threshold, passed=None):
        if passed is None:
            passed = measured <= threshold
        checks.append(CheckResult(name, bool(passed), float(measured), float(threshold)))

    add("Y_tt diagonal", _max_abs(_offdiag(adm.Y_tt)), tol(adm.Y_tt))
    add("Y_tt imaginary", _max_abs(np.diag(adm.Y_tt).real), tol(adm.Y_tt))
    add("Y_st imaginary", _max_abs(adm.Y_st.real), tol(adm.Y_st))
    add("Y_ss symmetric", _max_abs(adm.Y_ss - adm.Y_ss.T), tol(adm.Y_ss))
    add("Y_s diagonal", _max_abs(_offdiag(adm.Y_s)), tol(adm.Y_s))
    re_diag = np.diag(adm.Y_s).real
    expected = float(np.mean(re_diag)) if r0 is None else float(r0)
    add("Y_s real part", _max_abs(re_diag - expected), tol(adm.Y_s))
    add("R_0 nonnegative", max(0.0, -expected), 0.0)
    add(
        "Y_s + Y_ss invertible",
        _invertibility_margin(adm.Y_s + adm.Y_ss),
        EPS_INV,
        passed=_invertibility_margin(adm.Y_s + adm.Y_ss) >= EPS_INV,
    )
    add(
        "Y_r + Y_rr invertible",
        _invertibility_margin(adm.Y_r + adm.Y_rr),
        EPS_INV,
        passed=_invertibility_margin(adm.Y_r + adm.Y_rr) >= EPS_INV,
    )
    return ValidationReport(tuple(checks))


# ---------------------------------------------------------------- file I/O

def _fmt(x):
    return format(float(x), ".17g")


def save_admittances(adm, path, num_directions=0):
    """Write ``adm`` in the text matrix format (see module docstring)."""
    lines = ["# hybridbf admittance set", f"{adm.L} {adm.N} {adm.M} {int(num_directions)}"]
    for name in BLOCK_NAMES:
        mat = getattr(adm, name)
        lines.append(f"{name} {mat.shape[0]} {mat.shape[1]}")
        for row in mat:
            lines.append(" ".join(f"{_fmt(v.real)} {_fmt(v.imag)}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_admittances(path):
    """Parse a matrix file.  No structural validation is performed.

    Raises
    ------
    ParseError
        Malformed content; the message carries line number and field.
    SchemaError
        Block dimensions disagree with the header.
    """
    text = Path(path).read_text()
    rows = [
        (i + 1, ln.strip())
        for i, ln in enumerate(text.splitlines())
        if ln.strip() and not ln.strip().startswith("#")
    ]
    if not rows:
        raise ParseError("empty matrix file", line=1, field="header")
    lineno, header = rows[0]
    parts = header.split()
    if len(parts) != 4:
        raise ParseError("header must be 'L N M D'", line=lineno, field="header")
    try:
        L, N, M, D = (int(p) for p in parts)
    except ValueError:
        raise ParseError("header entries must be integers", line=lineno, field="header") from None
    if min(L, N, M) < 1 or D < 0:
        raise SchemaError("header dimensions out of range", line=lineno, field="header")
    expected = AdmittanceSet.expected_shapes(L, N, M)

    blocks = {}
    k = 1
    while k < len(rows):
        lineno, ln = rows[k]
        parts = ln.split()
        name = parts[0]
        if name not in expected:
            raise ParseError(f"unknown block {name!r}", line=lineno, field=name)
        if name in blocks:
            raise ParseError(f"duplicate block {name!r}", line=lineno, field=name)
        if len(parts) != 3:
            raise ParseError("block header must be 'name rows cols'", line=lineno, field=name)
        try:
            nr, nc = int(parts[1]), int(parts[2])
        except ValueError:
            raise ParseError("block dimensions must be integers", line=lineno, field=name) from None
        if (nr, nc) != expected[name]:
            raise SchemaError(
                f"{name} declared {nr}x{nc}, header implies {expected[name][0]}x{expected[name][1]}",
                line=lineno,
                field=name,
            )
        if k + nr > len(rows) - 1:
            raise ParseError(f"{name} truncated: expected {nr} rows", line=lineno, field=name)
        mat = np.empty((nr, nc), dtype=complex)
        for r in range(nr):
            rl, rtext = rows[k + 1 + r]
            vals = rtext.split()
            if vals and vals[0] in expected:
                raise ParseError(f"{name} truncated: expected {nr} rows", line=rl, field=name)
            if len(vals) != 2 * nc:
                raise SchemaError(
                    f"{name} row {r + 1} has {len(vals)} numbers, expected {2 * nc}",
                    line=rl,
                    field=name,
                )
            try:
                nums = np.array([float(v) for v in vals])
            except ValueError as exc:
                raise ParseError(f"bad number in {name} row {r + 1}: {exc}", line=rl, field=name) from None
            mat[r] = nums[0::2] + 1j * nums[1::2]
        blocks[name] = mat
        k += nr + 1
    missing = [n for n in BLOCK_NAMES if n not in blocks]
    if missing:
        raise SchemaError(f"missing blocks: {', '.join(missing)}", field=missing[0])
    return AdmittanceSet(**blocks)


# ---------------------------------------------------------------- scenario

@dataclass(frozen=True, eq=False)
class Scenario:
    """Complete problem instance: model, directions and thresholds.

    ``beta_max`` may be ``inf`` (no upper beampattern constraint).
    """

    geometry: ArrayGeometry
    admittances: AdmittanceSet
    directions: np.ndarray
    beta_lo: np.ndarray
    beta_max: float
    gamma_min: np.ndarray
    noise_power: float
    p_max: float
    r0: float = 0.0

    def __post_init__(self):
        g, adm = self.geometry, self.admittances
        if (adm.L, adm.N, adm.M) != (g.L, g.N, g.M):
            raise ScenarioError(
                f"admittance dimensions (L,N,M)={(adm.L, adm.N, adm.M)} do not match geometry {(g.L, g.N, g.M)}"
            )
        dirs = np.asarray(self.directions, dtype=float).reshape(-1, 2)
        if dirs.shape[0] < 1:
            raise ScenarioError("at least one sensing direction is required")
        D = dirs.shape[0]
        beta_lo = np.asarray(self.beta_lo, dtype=float).reshape(-1)
        if beta_lo.size == 1 and D > 1:
            beta_lo = np.full(D, beta_lo[0])
        if beta_lo.shape != (D,):
            raise ScenarioError(f"beta_lo must have {D} entries")
        gamma = np.asarray(self.gamma_min, dtype=float).reshape(-1)
        if gamma.size == 1 and g.M > 1:
            gamma = np.full(g.M, gamma[0])
        if gamma.shape != (g.M,):
            raise ScenarioError(f"gamma_min must have {g.M} entries")
        beta_max = float(self.beta_max)
        if np.any(beta_lo < 0) or beta_max < 0:
            raise ScenarioError("beampattern thresholds must be nonnegative")
        if np.any(beta_lo > beta_max):
            d = int(np.argmax(beta_lo > beta_max))
            raise ScenarioError(f"beta_lo[{d}]={beta_lo[d]} exceeds beta_max={beta_max}")
        if np.any(gamma <= 0):
            raise ScenarioError("gamma_min entries must be > 0")
        if not self.noise_power > 0:
            raise ScenarioError("noise_power must be > 0")
        if not self.p_max > 0:
            raise ScenarioError("p_max must be > 0")
        if self.r0 < 0:
            raise ScenarioError("r0 must be >= 0")
        object.__setattr__(self, "directions", _frozen(dirs))
        object.__setattr__(self, "beta_lo", _frozen(beta_lo))
        object.__setattr__(self, "gamma_min", _frozen(gamma))
        object.__setattr__(self, "beta_max", beta_max)
        object.__setattr__(self, "noise_power", float(self.noise_power))
        object.__setattr__(self, "p_max", float(self.p_max))
        object.__setattr__(self, "r0", float(self.r0))

    @property
    def L(self):
        return self.geometry.L

    @property
    def N(self):
        return self.geometry.N

    @property
    def M(self):
        return self.geometry.M

    @property
    def D(self):
        return self.directions.shape[0]

    @cached_property
    def steering(self):
        """``(D, L)`` steering vectors of the sensing directions."""
        a = steering_matrix(self.geometry, self.directions[:, 0], self.directions[:, 1])
        a.setflags(write=False)
        return a

    @cached_property
    def Ytilde(self):
        """``(Y_s + Y_ss)^{-1}``; raises ConditioningError if singular."""
        return _checked_inverse(self.admittances.Y_s + self.admittances.Y_ss, "Y_s + Y_ss")

    @cached_property
    def Y_RS(self):
        adm = self.admittances
        return _checked_inverse(adm.Y_r + adm.Y_rr, "Y_r + Y_rr") @ adm.Y_rs

    @property
    def susceptance(self):
        """Tunable part ``Im diag(Y_s)``."""
        return np.diag(self.admittances.Y_s).imag.copy()

    @property
    def Yss_tilde(self):
        """``Y_ss + Re(Y_s)``: the fixed part of the surface matrix."""
        adm = self.admittances
        return adm.Y_ss + np.diag(np.diag(adm.Y_s).real)

    def with_susceptance(self, y):
        """Copy with ``Y_s = diag(Re(Y_s)) + i diag(y)``."""
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape != (self.L,):
            raise ContractError(f"susceptance must have {self.L} entries")
        Y_s = np.diag(np.diag(self.admittances.Y_s).real + 1j * y)
        return self.replace(admittances=self.admittances.replace(Y_s=Y_s))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def equals(self, other):
        """Exact equality of every field (arrays compared elementwise)."""
        if not isinstance(other, Scenario):
            return False
        return (
            np.array_equal(self.geometry.element_positions, other.geometry.element_positions)
            and self.N == other.N
            and self.M == other.M
            and self.admittances.equals(other.admittances)
            and np.array_equal(self.directions, other.directions)
            and np.array_equal(self.beta_lo, other.beta_lo)
            and self.beta_max == other.beta_max
            and np.array_equal(self.gamma_min, other.gamma_min)
            and self.noise_power == other.noise_power
            and self.p_max == other.p_max
            and self.r0 == other.r0
        )


def _checked_inverse(mat, name):
    s = np.linalg.svd(mat, compute_uv=False)
    if not np.all(np.isfinite(s)) or s[0] == 0 or s[-1] < EPS_INV * s[0]:
        raise ConditioningError(name, f"sigma_min/sigma_max = {s[-1] / s[0] if s[0] else 0.0:.3e}")
    inv = np.linalg.inv(mat)
    inv.setflags(write=False)
    return inv


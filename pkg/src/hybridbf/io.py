"""Scenario and config files, run traces and beampattern tables.

Scenario file (JSON object)
---------------------------
Required: ``L`` (or ``positions``), ``N``, ``M``, ``gamma_min``,
``noise_power``, ``p_max``, ``admittances``, and ``directions`` or ``D``.

=================  =========================================================
field              meaning / default
=================  =========================================================
``L``              number of surface elements on a half-wavelength UPA
``spacing``        UPA element spacing in wavelengths (default 0.5)
``positions``      explicit ``[[x, y, z], ...]`` in wavelengths (overrides
                   ``L``/``spacing``)
``N``, ``M``       RF ports, users
``directions``     ``[[theta, phi], ...]`` in radians
``D``              number of default directions, theta evenly spread on
                   ``[-pi/4, pi/4]`` at ``phi = 0`` (used without
                   ``directions``)
``beta_lo``        scalar or per-direction list (default 0)
``beta_max``       number, or ``null`` for no upper limit (default ``null``)
``gamma_min``      scalar or per-user list
``noise_power``    sigma^2
``p_max``          power budget
``r0``             surface resistance ``Re(Y_s)`` (default 0)
``admittances``    one of ``{"synthetic": {"seed": s, "coupling_scale": c}}``,
                   ``{"file": "path.adm"}`` (relative to the scenario file)
                   or ``{"inline": {"Y_tt": {"re": [[..]], "im": [[..]]}, ...}}``
=================  =========================================================

Unknown fields are rejected.  Errors name the field and, where it can be
located, the line.

Trace file (JSON lines)
-----------------------
One ``header`` record, one ``iteration`` record per trace entry, then one
``termination`` record.  Wall-clock times are not written, so files are
byte-identical for identical inputs.  Floats use the shortest repr that
round-trips exactly.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .em_model import AdmittanceSet, ArrayGeometry, Scenario, build_synthetic_admittances, default_directions, load_admittances
from .errors import ParseError, ScenarioError, SchemaError
from .metrics import beampattern_gains
from .orchestrator import AlgorithmConfig, IterationRecord

__all__ = [
    "TRACE_SCHEMA",
    "SCENARIO_FIELDS",
    "parse_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "serialize_scenario",
    "parse_config",
    "config_to_dict",
    "emit_trace",
    "parse_trace",
    "AngularGrid",
    "parse_grid",
    "export_beampattern",
    "write_result",
    "read_result",
]

TRACE_SCHEMA = "hybridbf-trace/1"
RESULT_SCHEMA = "hybridbf-result/1"

SCENARIO_FIELDS = {
    "L", "spacing", "positions", "N", "M", "directions", "D", "beta_lo", "beta_max",
    "gamma_min", "noise_power", "p_max", "r0", "admittances",
}
_REQUIRED = ("N", "M", "gamma_min", "noise_power", "p_max", "admittances")
_BLOCKS = ("Y_tt", "Y_s", "Y_ss", "Y_st", "Y_r", "Y_rr", "Y_rs")


def _line_of(text, key):
    """1-based line of the first ``"key":`` in ``text`` (None if absent)."""
    if text is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _load_json(path):
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(obj, dict):
        raise SchemaError("top level must be a JSON object", line=1)
    return obj, text


def _number(obj, key, text, positive=False):
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError("expected a number", _line_of(text, key), key)
    if positive and not v > 0:
        raise ScenarioError(f"{key} must be > 0")
    return float(v)


def _vector(obj, key, text, n):
    v = obj[key]
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return np.full(n, float(v))
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError("expected a number or a list of numbers", _line_of(text, key), key) from None
    if arr.shape != (n,):
        raise SchemaError(f"expected {n} entries", _line_of(text, key), key)
    return arr


def _complex_block(spec, name, text):
    if not isinstance(spec, dict) or set(spec) != {"re", "im"}:
        raise SchemaError("inline matrix must be {\"re\": [[...]], \"im\": [[...]]}", _line_of(text, name), name)
    try:
        re_, im_ = np.asarray(spec["re"], dtype=float), np.asarray(spec["im"], dtype=float)
    except (TypeError, ValueError):
        raise SchemaError("matrix entries must be numbers", _line_of(text, name), name) from None
    if re_.ndim != 2 or re_.shape != im_.shape:
        raise SchemaError("re and im must be matrices of equal shape", _line_of(text, name), name)
    return re_ + 1j * im_


def _admittances(spec, geometry, r0, text, base_dir):
    key = "admittances"
    if not isinstance(spec, dict) or len(spec) != 1:
        raise SchemaError("expected exactly one of synthetic / file / inline", _line_of(text, key), key)
    (kind, body), = spec.items()
    if kind == "synthetic":
        if not isinstance(body, dict) or not set(body) <= {"seed", "coupling_scale"} or "seed" not in body:
            raise SchemaError("synthetic needs 'seed' and optional 'coupling_scale'", _line_of(text, "synthetic"), "synthetic")
        return build_synthetic_admittances(geometry, int(body["seed"]), float(body.get("coupling_scale", 0.3)), r0=r0)
    if kind == "file":
        p = Path(body)
        return load_admittances(p if p.is_absolute() else Path(base_dir) / p)
    if kind == "inline":
        if not isinstance(body, dict) or set(body) != set(_BLOCKS):
            raise SchemaError(f"inline needs exactly the blocks {', '.join(_BLOCKS)}", _line_of(text, "inline"), "inline")
        blocks = {name: _complex_block(body[name], name, text) for name in _BLOCKS}
        try:
            return AdmittanceSet(**blocks)
        except ValueError as exc:
            raise SchemaError(str(exc), _line_of(text, "inline"), "inline") from None
    raise SchemaError(f"unknown admittance source {kind!r}", _line_of(text, kind), kind)


def scenario_from_dict(obj, text=None, base_dir="."):
    """Build a ``Scenario`` from a parsed scenario object (see module doc)."""
    unknown = sorted(set(obj) - SCENARIO_FIELDS)
    if unknown:
        raise SchemaError("unknown field", _line_of(text, unknown[0]), unknown[0])
    for key in _REQUIRED:
        if key not in obj:
            raise SchemaError("missing required field", None, key)
    N, M = int(_number(obj, "N", text)), int(_number(obj, "M", text))
    if "positions" in obj:
        try:
            pos = np.asarray(obj["positions"], dtype=float)
        except (TypeError, ValueError):
            raise SchemaError("positions must be [[x, y, z], ...]", _line_of(text, "positions"), "positions") from None
        geometry = ArrayGeometry(pos, N, M)
    elif "L" in obj:
        geometry = ArrayGeometry.upa(int(_number(obj, "L", text)), N, M, float(obj.get("spacing", 0.5)))
    else:
        raise SchemaError("missing required field (or 'positions')", None, "L")

    if "directions" in obj:
        try:
            dirs = np.asarray(obj["directions"], dtype=float)
        except (TypeError, ValueError):
            raise SchemaError("directions must be [[theta, phi], ...]", _line_of(text, "directions"), "directions") from None
        if dirs.ndim != 2 or dirs.shape[1] != 2 or dirs.shape[0] < 1:
            raise SchemaError("directions must be [[theta, phi], ...]", _line_of(text, "directions"), "directions")
    elif "D" in obj:
        dirs = default_directions(int(_number(obj, "D", text)))
    else:
        raise SchemaError("missing required field (or 'directions')", None, "D")
    D = dirs.shape[0]

    r0 = _number(obj, "r0", text) if "r0" in obj else 0.0
    beta_lo = _vector(obj, "beta_lo", text, D) if "beta_lo" in obj else np.zeros(D)
    beta_max = math.inf if obj.get("beta_max") is None else _number(obj, "beta_max", text)
    adm = _admittances(obj["admittances"], geometry, r0, text, base_dir)
    return Scenario(
        geometry=geometry,
        admittances=adm,
        directions=dirs,
        beta_lo=beta_lo,
        beta_max=beta_max,
        gamma_min=_vector(obj, "gamma_min", text, M),
        noise_power=_number(obj, "noise_power", text),
        p_max=_number(obj, "p_max", text),
        r0=r0,
    )


def parse_scenario(path):
    """Read a scenario file.

    Raises
    ------
    ParseError
        Malformed JSON (with line).
    SchemaError
        Unknown, missing or ill-typed field (with field name and line).
    ScenarioError
        Physically invalid values, e.g. ``beta_lo > beta_max``.
    """
    obj, text = _load_json(path)
    return scenario_from_dict(obj, text, Path(path).parent)


def _cmat(a):
    a = np.asarray(a)
    return {"re": a.real.tolist(), "im": a.imag.tolist()}


def scenario_to_dict(scenario):
    """Self-contained scenario object with inline admittances."""
    adm = scenario.admittances
    return {
        "positions": scenario.geometry.element_positions.tolist(),
        "N": scenario.N,
        "M": scenario.M,
        "directions": scenario.directions.tolist(),
        "beta_lo": scenario.beta_lo.tolist(),
        "beta_max": None if math.isinf(scenario.beta_max) else scenario.beta_max,
        "gamma_min": scenario.gamma_min.tolist(),
        "noise_power": scenario.noise_power,
        "p_max": scenario.p_max,
        "r0": scenario.r0,
        "admittances": {"inline": {name: _cmat(getattr(adm, name)) for name in _BLOCKS}},
    }


def serialize_scenario(scenario, path):
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=1) + "\n")


# ------------------------------------------------------------------ config

def config_to_dict(config):
    return dataclasses.asdict(config)


def parse_config(path, seed=None):
    """Read an ``AlgorithmConfig`` JSON object; omitted fields keep defaults."""
    obj, text = _load_json(path)
    names = {f.name for f in dataclasses.fields(AlgorithmConfig)}
    unknown = sorted(set(obj) - names)
    if unknown:
        raise SchemaError("unknown field", _line_of(text, unknown[0]), unknown[0])
    if seed is not None:
        obj["seed"] = seed
    try:
        return AlgorithmConfig(**obj)
    except (TypeError, ValueError) as exc:
        raise SchemaError(str(exc), None, None) from None


# ------------------------------------------------------------------- trace

def _dumps(obj):
    return json.dumps(obj, allow_nan=True)


def _record_to_dict(r):
    return {
        "kind": "iteration",
        "outer": r.outer,
        "stage": r.stage,
        "p_tot": r.p_tot,
        "gains": r.gains.tolist(),
        "sinr": r.sinr.tolist(),
        "power": r.power,
        "bound": r.bound,
        "accepted": r.accepted,
        "max_violation": r.max_violation,
        "B": _cmat(r.B),
        "y": r.y.tolist(),
        "info": r.info,
    }


def _record_from_dict(d):
    return IterationRecord(
        outer=d["outer"],
        stage=d["stage"],
        p_tot=d["p_tot"],
        gains=np.asarray(d["gains"], dtype=float),
        sinr=np.asarray(d["sinr"], dtype=float),
        power=d["power"],
        bound=d["bound"],
        accepted=d["accepted"],
        max_violation=d["max_violation"],
        B=np.asarray(d["B"]["re"], dtype=float) + 1j * np.asarray(d["B"]["im"], dtype=float),
        y=np.asarray(d["y"], dtype=float),
        info=d["info"],
    )


def emit_trace(result, path, config=None):
    """Write the run trace as JSON lines (header, records, termination)."""
    sc = result.scenario
    header = {"kind": "header", "schema": TRACE_SCHEMA, "L": sc.L, "N": sc.N, "M": sc.M, "D": sc.D}
    if config is not None:
        header["config"] = config_to_dict(config)
    lines = [_dumps(header)]
    lines += [_dumps(_record_to_dict(r)) for r in result.trace]
    lines.append(_dumps({
        "kind": "termination",
        "reason": result.termination,
        "feasible": result.feasible,
        "records": len(result.trace),
        "infeasibility": result.infeasibility,
        "anomalies": list(result.anomalies),
    }))
    Path(path).write_text("\n".join(lines) + "\n")


def parse_trace(path):
    """Read a trace file back: ``(header, records, termination)``."""
    header, records, term = None, [], None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, line=lineno) from None
            kind = d.get("kind")
            if kind == "header":
                if d.get("schema") != TRACE_SCHEMA:
                    raise SchemaError(f"unsupported schema {d.get('schema')!r}", lineno, "schema")
                header = d
            elif kind == "iteration":
                records.append(_record_from_dict(d))
            elif kind == "termination":
                term = d
            else:
                raise SchemaError(f"unknown record kind {kind!r}", lineno, "kind")
    if header is None or term is None:
        raise SchemaError("trace needs a header and a termination record")
    return header, records, term


# ------------------------------------------------------------- beampattern

@dataclass(frozen=True, eq=False)
class AngularGrid:
    """Sample points, theta-major."""

    thetas: np.ndarray
    phis: np.ndarray

    @classmethod
    def regular(cls, n_theta, n_phi):
        """``theta`` on ``[-pi/2, pi/2]``, ``phi`` on ``[0, pi]`` (endpoints included)."""
        if n_theta < 1 or n_phi < 1:
            raise ValueError("grid sizes must be >= 1")
        th = np.linspace(-np.pi / 2, np.pi / 2, n_theta) if n_theta > 1 else np.zeros(1)
        ph = np.linspace(0.0, np.pi, n_phi) if n_phi > 1 else np.zeros(1)
        T, P = np.meshgrid(th, ph, indexing="ij")
        return cls(T.ravel(), P.ravel())

    @classmethod
    def points(cls, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return cls(pts[:, 0].copy(), pts[:, 1].copy())

    def __len__(self):
        return self.thetas.shape[0]


def parse_grid(spec):
    """``"<nTheta>x<nPhi>"`` -> ``AngularGrid``."""
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", spec)
    if not m:
        raise ValueError(f"grid must look like 181x91, got {spec!r}")
    return AngularGrid.regular(int(m.group(1)), int(m.group(2)))


def export_beampattern(scenario, B, grid, path):
    """Write ``theta,phi,gain`` rows (17 significant digits) at ``B``.

    ``scenario`` must carry the final surface state; ``B = None`` writes
    zero gains.
    """
    if B is None:
        gains = np.zeros(len(grid))
    else:
        gains = beampattern_gains(scenario, B, grid.thetas, grid.phis)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "phi", "gain"])
        for t, p, g in zip(grid.thetas, grid.phis, gains):
            w.writerow([format(t, ".17g"), format(p, ".17g"), format(g, ".17g")])
    return gains


def write_result(result, path):
    """Final point (beamformer and susceptances) plus a summary."""
    last = [r for r in result.trace if r.accepted]
    obj = {
        "schema": RESULT_SCHEMA,
        "termination": result.termination,
        "feasible": result.feasible,
        "p_tot": last[-1].p_tot if last else None,
        "B": None if result.B is None else _cmat(result.B),
        "y": result.state.y.tolist(),
    }
    Path(path).write_text(_dumps(obj) + "\n")


def read_result(path):
    """``(B or None, y)`` from a result file."""
    obj, text = _load_json(path)
    if obj.get("schema") != RESULT_SCHEMA:
        raise SchemaError(f"unsupported schema {obj.get('schema')!r}", _line_of(text, "schema"), "schema")
    B = obj["B"]
    B = None if B is None else np.asarray(B["re"], dtype=float) + 1j * np.asarray(B["im"], dtype=float)
    return B, np.asarray(obj["y"], dtype=float)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)

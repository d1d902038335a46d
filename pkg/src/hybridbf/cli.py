"""Command-line front end.

Commands
--------
``run``                 optimize one scenario; writes ``trace.jsonl``,
                        ``result.json`` and ``beampattern.csv``
``verify``              run the oracle suite (and optionally the mutation
                        checks); writes ``oracle.jsonl``
``sweep``               run one scenario per value of a field, in parallel
``export-beampattern``  sample the beampattern of a saved result

Exit codes: 0 success, 1 infeasible, 2 validation error, 3 oracle failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import io as hio
from .em_model import validate_admittances
from .errors import HybridBFError, ParseError, ScenarioError
from .orchestrator import AlgorithmConfig, run_alternating

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_VALIDATION = 2
EXIT_ORACLE = 3

DEFAULT_GRID = "181x91"

log = logging.getLogger("hybridbf")


def _config(args):
    if args.config:
        return hio.parse_config(args.config, seed=args.seed)
    return AlgorithmConfig() if args.seed is None else AlgorithmConfig(seed=args.seed)


def _check_model(scenario):
    report = validate_admittances(scenario.admittances, r0=scenario.r0)
    if not report.passed:
        raise ScenarioError("admittance validation failed:\n" + str(report))


def _run_one(scenario, config, out, grid):
    out = hio.ensure_dir(out)
    result = run_alternating(scenario, config)
    hio.emit_trace(result, out / "trace.jsonl", config)
    hio.write_result(result, out / "result.json")
    hio.export_beampattern(result.final_scenario, result.B, grid, out / "beampattern.csv")
    return result


def cmd_run(args):
    scenario = hio.parse_scenario(args.scenario)
    _check_model(scenario)
    config = _config(args)
    result = _run_one(scenario, config, args.out, hio.parse_grid(args.grid))
    acc = result.accepted_objectives
    print(f"termination={result.termination} feasible={result.feasible} "
          f"p_tot={acc[-1] if acc.size else float('nan'):.10g} records={len(result.trace)}")
    return EXIT_OK if result.feasible else EXIT_INFEASIBLE


def cmd_verify(args):
    from .oracle import MUTATIONS, run_mutation, run_oracle_suite

    reports = run_oracle_suite(args.trials, args.seed or 0)
    records = [r.to_record() for r in reports]
    ok = all(r.passed for r in reports)
    for r in reports:
        print(r)
    if args.mutations:
        for name in MUTATIONS:
            reps = run_mutation(name, max(1, min(args.trials, 10)), args.seed or 0)
            detected = any(not r.passed for r in reps)
            ok &= detected
            print(f"[{'PASS' if detected else 'FAIL'}] mutation {name}: "
                  f"{'detected' if detected else 'NOT detected'}")
            records.append({"kind": "mutation", "name": name, "detected": detected})
    if args.out:
        out = hio.ensure_dir(args.out)
        (out / "oracle.jsonl").write_text("".join(json.dumps(r) + "\n" for r in records))
    return EXIT_OK if ok else EXIT_ORACLE


def _set_field(obj, dotted, value):
    keys = dotted.split(".")
    cur = obj
    for k in keys[:-1]:
        if not isinstance(cur, dict) or k not in cur:
            raise ScenarioError(f"sweep field {dotted!r} not present in the scenario")
        cur = cur[k]
    if not isinstance(cur, dict) or (len(keys) > 1 and keys[-1] not in cur):
        raise ScenarioError(f"sweep field {dotted!r} not present in the scenario")
    cur[keys[-1]] = value


def _sweep_job(job):
    obj, base_dir, config, out, grid_spec = job
    scenario = hio.scenario_from_dict(obj, None, base_dir)
    _check_model(scenario)
    result = _run_one(scenario, config, out, hio.parse_grid(grid_spec))
    acc = result.accepted_objectives
    return result.termination, result.feasible, float(acc[-1]) if acc.size else float("nan")


def cmd_sweep(args):
    obj, _ = hio._load_json(args.scenario)
    base_dir = str(Path(args.scenario).parent)
    config = _config(args)
    values = [json.loads(v) for v in args.sweep_values.split(",")]
    out = hio.ensure_dir(args.out)
    jobs = []
    for k, v in enumerate(values):
        o = copy.deepcopy(obj)
        _set_field(o, args.sweep_field, v)
        # validate up front so bad values fail before any solve
        hio.scenario_from_dict(o, None, base_dir)
        jobs.append((o, base_dir, config, str(out / f"{k:03d}"), args.grid))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", args.sweep_field, "termination", "feasible", "p_tot"])
        for k, (v, (term, feas, p)) in enumerate(zip(values, results)):
            w.writerow([k, json.dumps(v), term, int(feas), format(p, ".17g")])
            print(f"{args.sweep_field}={v}: termination={term} feasible={feas} p_tot={p:.10g}")
    return EXIT_OK if all(r[1] for r in results) else EXIT_INFEASIBLE


def cmd_export(args):
    scenario = hio.parse_scenario(args.scenario)
    B, y = hio.read_result(args.result)
    out = hio.ensure_dir(args.out)
    hio.export_beampattern(scenario.with_susceptance(y), B, hio.parse_grid(args.grid), out / "beampattern.csv")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="hybridbf", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", required=True, type=Path)
        sp.add_argument("--config", type=Path)
        sp.add_argument("--out", type=Path, required=scenario)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--grid", default=DEFAULT_GRID, help="<nTheta>x<nPhi> (default %(default)s)")

    sp = sub.add_parser("run", help="optimize one scenario")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("verify", help="run the oracle suite")
    common(sp, scenario=False)
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--mutations", action="store_true", help="also check that every mutation is detected")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("sweep", help="vary one scenario field")
    common(sp)
    sp.add_argument("--sweep-field", required=True, help="top-level or dotted field, e.g. p_max")
    sp.add_argument("--sweep-values", required=True, help="comma-separated JSON values")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("export-beampattern", help="sample a saved result")
    common(sp)
    sp.add_argument("--result", required=True, type=Path, help="result.json written by run")
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    for name in ("scenario", "config", "result"):
        path = getattr(args, name, None)
        if path is not None and not Path(path).is_file():
            print(f"error: {name} file not found: {path}", file=sys.stderr)
            return EXIT_VALIDATION
    try:
        return args.func(args)
    except (ParseError, ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except HybridBFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

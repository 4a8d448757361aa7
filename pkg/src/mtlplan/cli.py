"""Command-line front end: ``plan``, ``check`` and ``min-horizon``.

Exit codes: 0 success (verified plan, satisfied trace, horizon found),
1 negative verdict (infeasible, violated, no horizon), 2 errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import mtl
from .encoder import build
from .environment import ScenarioError, load_scenario
from .milp.mps import export_mps
from .planner import VerificationError, find_min_horizon, plan
from .plots import plan_svg, timespace_svg

EXIT_OK, EXIT_NO, EXIT_ERROR = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    command: str
    spec: str | None = None
    horizon: int | None = None
    gap: float | None = None
    node_limit: int | None = None
    time_limit: float | None = None
    out: str = "."
    export_mps: bool = False
    seed: int | None = None

    def __post_init__(self):
        for name in ("gap", "node_limit", "time_limit", "horizon"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")

    def solver_options(self) -> dict:
        return {"gap_tol": self.gap, "node_limit": self.node_limit, "time_limit": self.time_limit}


# ---------------------------------------------------------------------------
# trajectory CSV


def trajectory_rows(result, scenario, state_names, input_names):
    """Header and rows: step, time, states, inputs, then one 0/1 column per atom."""
    atoms = sorted(scenario.propositions)
    header = ["step", "time", *state_names, *input_names, *atoms]
    rows = []
    for t in range(result.N + 1):
        row = [str(t), repr(round(t * scenario.dt, 12))]
        row += [repr(float(v)) for v in result.x[t]]
        if t < result.N:
            row += [repr(float(v)) for v in result.u[t]]
        else:
            row += [""] * len(input_names)
        row += ["1" if a in result.labels[t] else "0" for a in atoms]
        rows.append(row)
    return header, rows


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


class TraceFormatError(ValueError):
    pass


def read_trace_csv(path, atoms, dt: float | None = None):
    """Label trace and sample period from a trajectory CSV.

    Columns named after the atoms hold 0/1 flags; other columns are ignored
    except ``time``, which gives the sample period when ``dt`` is not set.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError("empty trace file") from None
        rows = [r for r in reader if r]
    missing = sorted(set(atoms) - set(header))
    if missing:
        raise TraceFormatError(f"trace has no column for atoms {missing}")
    idx = {a: header.index(a) for a in atoms}
    steps = []
    for ln, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise TraceFormatError(f"line {ln}: expected {len(header)} fields, got {len(r)}")
        s = set()
        for a, i in idx.items():
            if r[i] not in ("0", "1"):
                raise TraceFormatError(f"line {ln}: atom column {a!r} must be 0 or 1, got {r[i]!r}")
            if r[i] == "1":
                s.add(a)
        steps.append(s)
    if dt is None:
        if "time" in header and len(rows) >= 2:
            k = header.index("time")
            try:
                dt = float(rows[1][k]) - float(rows[0][k])
            except ValueError:
                raise TraceFormatError("time column is not numeric") from None
        else:
            dt = 1.0
    if not dt > 0:
        raise TraceFormatError("sample period must be positive")
    return mtl.Trace(steps, atoms), dt


# ---------------------------------------------------------------------------
# commands


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def cmd_plan(cfg: RunConfig) -> int:
    try:
        scenario = load_scenario(cfg.scenario)
    except ScenarioError as exc:
        _err(f"{cfg.scenario}: {exc} (at {exc.path})")
        return EXIT_ERROR
    except (OSError, json.JSONDecodeError) as exc:
        _err(f"cannot read scenario: {exc}")
        return EXIT_ERROR
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    N = cfg.horizon or scenario.N
    if N is None:
        _err("no horizon: pass --horizon or set N in the scenario")
        return EXIT_ERROR
    try:
        if cfg.export_mps:
            enc = build(scenario, N, scenario.specification(cfg.spec))
            (out / "model.mps").write_text(export_mps(enc.model))
        result = plan(scenario, N, cfg.spec, **cfg.solver_options())
    except VerificationError as exc:
        _err(f"verification failed: {exc}")
        (out / "report.json").write_text(json.dumps({"status": "verification-failed",
                                                    "verification": exc.report.to_dict()}, indent=2) + "\n")
        return EXIT_ERROR
    except (mtl.MTLSyntaxError, mtl.HorizonError, ValueError, KeyError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    report = result.report()
    report["scenario"] = scenario.name
    report["config"] = asdict(cfg)
    if not result.feasible:
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
        print(f"{result.status}: no plan for horizon {N}")
        return EXIT_NO
    from .dynamics import vehicle_model

    sys_ = vehicle_model(scenario.vehicle, scenario.bounds, scenario.dt)
    base = sys_.modes[0] if hasattr(sys_, "modes") else sys_
    header, rows = trajectory_rows(result, scenario, base.state_names, base.input_names)
    write_csv(out / "trajectory.csv", header, rows)
    pos = result.x @ base.C.T
    (out / "plan.svg").write_text(plan_svg(scenario, pos))
    (out / "timespace.svg").write_text(timespace_svg(scenario, pos))
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    v = result.verification
    print(f"{result.status}: objective {result.objective:.6g}, spec {'satisfied' if v.satisfied else 'VIOLATED'}, "
          f"min clearance {min(v.clearance):.3g}, residual {v.residual:.2g}")
    return EXIT_OK


def cmd_check(trace_path: str, spec: str, dt: float | None = None) -> int:
    try:
        f = mtl.parse(spec)
        trace, dt = read_trace_csv(trace_path, sorted(mtl.atoms_of(f)), dt)
    except (mtl.MTLSyntaxError, TraceFormatError, OSError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    f = mtl.to_steps(f, dt)
    last = len(trace) - 1
    try:
        if last < 0:
            raise mtl.HorizonError("empty trace")
        f = mtl.truncate(f, last)
        verdict = mtl.first_violation(f, trace)
    except (mtl.HorizonError, IndexError) as exc:
        _err(f"trace too short: {exc}")
        return EXIT_ERROR
    if verdict is None:
        print("satisfied")
        return EXIT_OK
    step, sub = verdict
    print(f"violated at step {step}: {mtl.to_text(sub)}")
    return EXIT_NO


def cmd_min_horizon(cfg: RunConfig, n_max: int) -> int:
    try:
        scenario = load_scenario(cfg.scenario)
        N = find_min_horizon(scenario, n_max, cfg.spec, **cfg.solver_options())
    except ScenarioError as exc:
        _err(f"{cfg.scenario}: {exc} (at {exc.path})")
        return EXIT_ERROR
    except (mtl.MTLSyntaxError, ValueError, RuntimeError, OSError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    if N is None:
        print(f"infeasible up to N_max = {n_max}")
        return EXIT_NO
    print(N)
    return EXIT_OK


def _positive(kind):
    def conv(s):
        v = kind(s)
        if not v > 0:
            raise argparse.ArgumentTypeError("must be positive")
        return v

    return conv


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtlplan", description="MTL mission planning by mixed-integer programming")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    def solver_flags(q):
        q.add_argument("--spec", help="specification name from the scenario, or formula text")
        q.add_argument("--gap", type=_positive(float), help="relative optimality gap")
        q.add_argument("--node-limit", type=_positive(int))
        q.add_argument("--time-limit", type=_positive(float), help="seconds per solve")
        q.add_argument("--seed", type=int, help="recorded in the report; planning is deterministic")

    q = sub.add_parser("plan", help="plan a trajectory and write CSV, SVG and JSON artifacts")
    q.add_argument("scenario")
    q.add_argument("-N", "--horizon", type=_positive(int))
    q.add_argument("-o", "--out", default=".", help="output directory")
    q.add_argument("--export-mps", action="store_true", help="also write model.mps")
    solver_flags(q)

    q = sub.add_parser("check", help="check a trajectory CSV against a specification")
    q.add_argument("trace")
    q.add_argument("spec", help="formula text")
    q.add_argument("--dt", type=_positive(float), help="sample period (default: from the time column)")

    q = sub.add_parser("min-horizon", help="smallest feasible horizon")
    q.add_argument("scenario")
    q.add_argument("--n-max", type=_positive(int), required=True)
    solver_flags(q)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if args.command == "check":
        return cmd_check(args.trace, args.spec, args.dt)
    cfg = RunConfig(
        scenario=args.scenario,
        command=args.command,
        spec=args.spec,
        horizon=getattr(args, "horizon", None),
        gap=args.gap,
        node_limit=args.node_limit,
        time_limit=args.time_limit,
        out=getattr(args, "out", "."),
        export_mps=getattr(args, "export_mps", False),
        seed=args.seed,
    )
    if args.command == "plan":
        return cmd_plan(cfg)
    return cmd_min_horizon(cfg, args.n_max)


if __name__ == "__main__":
    sys.exit(main())

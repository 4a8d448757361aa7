"""Plan, verify, and search horizons; plus an exhaustive oracle on grids.

:func:`plan` never hands back an unverified trajectory: after decoding it
replays the inputs through the dynamics, labels every sample and evaluates
the specification with the trace monitor.  A solution that the solver calls
feasible but the checks reject raises :class:`VerificationError`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import mtl
from .dynamics import PwaSystem, StateBoundError, simulate
from .encoder import Encoding, build, prepare
from .environment import OBSTACLE_ATOM, ConvexPolygon, Region, Scenario, label_trace
from .milp import DisjunctionsFirst, branch_and_bound

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6
OBJECTIVE_TOL = 1e-6
SOLVER_KEYS = ("gap_tol", "node_limit", "time_limit", "branching")
BRANCHING = ("choice", "most-fractional")


class VerificationError(RuntimeError):
    """A solution accepted by the solver failed independent verification."""

    def __init__(self, message: str, report: "Verification"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class Verification:
    satisfied: bool
    violation: tuple | None  # (step, subformula text) of the earliest failure
    dwell: dict  # region -> longest run of consecutive samples inside it
    clearance: tuple  # per-sample halfspace clearance to the nearest obstacle
    obstacle_samples: tuple  # samples labelled with the obstacle atom
    residual: float  # max one-step dynamics residual (inf-norm)
    rollout_error: float  # max deviation of the simulated rollout from x
    objective_error: float
    problems: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.problems

    def to_dict(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "violation": list(self.violation) if self.violation else None,
            "dwell": dict(self.dwell),
            "min_clearance": min(self.clearance) if self.clearance else None,
            "clearance": list(self.clearance),
            "obstacle_samples": list(self.obstacle_samples),
            "dynamics_residual": self.residual,
            "rollout_error": self.rollout_error,
            "objective_error": self.objective_error,
            "problems": list(self.problems),
        }


@dataclass(frozen=True)
class PlanResult:
    status: str  # optimal | feasible | infeasible | node-limit | time-limit
    N: int
    spec: str
    x: np.ndarray | None = None
    u: np.ndarray | None = None
    modes: tuple | None = None
    objective: float = math.nan
    bound: float = -math.inf
    stats: dict = field(default_factory=dict)
    verification: Verification | None = None
    labels: tuple = ()
    positions: np.ndarray | None = None

    @property
    def feasible(self) -> bool:
        return self.x is not None


    def report(self) -> dict:
        out = {
            "status": self.status,
            "N": self.N,
            "spec": self.spec,
            "objective": None if math.isnan(self.objective) else self.objective,
            "bound": None if not math.isfinite(self.bound) else self.bound,
            "stats": dict(self.stats),
        }
        if self.verification is not None:
            out["verification"] = self.verification.to_dict()
        return out


def _freeze(a):
    if a is None:
        return None
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _runs(flags) -> int:
    best = cur = 0
    for f in flags:
        cur = cur + 1 if f else 0
        best = max(best, cur)
    return best


def clearance(p, polygons: list[ConvexPolygon]) -> float:
    """Largest normalized edge residual to the nearest polygon (positive outside)."""
    if not polygons:
        return math.inf
    out = math.inf
    for poly in polygons:
        worst = max((np.dot(hs.h, p) - hs.k) / math.hypot(*hs.h) for hs in poly.halfspaces)
        out = min(out, worst)
    return float(out)


def oracle_formula(scenario: Scenario, spec, N: int) -> mtl.Formula:
    """Specification as the monitor sees it: sampled and truncated to ``N``,
    but without the encoder's normal-form rewrites."""
    f = mtl.parse(scenario.specification(spec) if isinstance(spec, str) or spec is None else spec) \
        if not isinstance(spec, mtl.Formula) else spec
    return mtl.truncate(mtl.to_steps(f, scenario.dt), N)


def verify(scenario: Scenario, enc: Encoding, x, u, modes, objective, spec) -> Verification:
    """Independent checks of a decoded trajectory."""
    sys = enc.system
    problems = []
    base = sys.modes[0] if isinstance(sys, PwaSystem) else sys
    C = base.C
    pos = x @ C.T
    labels = label_trace(pos, scenario)
    trace = mtl.Trace(labels, scenario.propositions)
    f = oracle_formula(scenario, spec, enc.N)
    satisfied = mtl.evaluate(f, trace)
    violation = None
    if not satisfied:
        step, sub = mtl.first_violation(f, trace)
        violation = (step, mtl.to_text(sub))
        problems.append(f"specification violated at step {step}: {mtl.to_text(sub)}")
    inside = tuple(t for t, s in enumerate(labels) if OBSTACLE_ATOM in s)
    clear = tuple(clearance(p, scenario.obstacles_at(t)) for t, p in enumerate(pos))
    # one-step residual with the modes the optimizer selected
    res = 0.0
    for t in range(len(u)):
        m = sys.modes[modes[t]] if isinstance(sys, PwaSystem) else sys
        pred = m.A @ x[t] + m.B @ u[t] + m.c
        res = max(res, float(np.max(np.abs(x[t + 1] - pred))))
    if res > RESIDUAL_TOL:
        problems.append(f"dynamics residual {res:.3g} exceeds {RESIDUAL_TOL:g}")
    if isinstance(sys, PwaSystem):
        h = sys.heading_index
        for t, j in enumerate(modes):
            if not sys.mode_valid(j, x[t, h]):
                problems.append(f"mode {j} at step {t} does not cover heading {x[t, h]:.6g}")
    try:
        sim = simulate(sys, x[0], u, modes=modes, tol=RESIDUAL_TOL)
        rollout = float(np.max(np.abs(sim - x)))
    except StateBoundError as exc:
        rollout = math.inf
        problems.append(f"rollout leaves the admissible set: {exc}")
    cost = float(np.abs(u).sum())
    obj_err = abs(cost - objective) if math.isfinite(objective) else 0.0
    if obj_err > OBJECTIVE_TOL * max(1.0, abs(cost)):
        problems.append(f"objective {objective:.9g} differs from sum |u| = {cost:.9g}")
    dwell = {name: _runs(name in s for s in labels) for name in sorted(scenario.regions)}
    return Verification(
        satisfied, violation, dwell, clear, inside, res, rollout, obj_err, tuple(problems)
    )


def _branching(enc: Encoding, opts: dict) -> dict:
    """Translate the ``branching`` option into solver arguments.

    ``choice`` (default) first commits the operands of disjunctions and
    temporal windows, which take 0/1 values whenever the binaries do, then
    splits halfspace binaries; ``most-fractional`` uses binaries only.
    """
    opts = dict(opts)
    rule = opts.pop("branching", "choice")
    if rule not in BRANCHING:
        raise ValueError(f"unknown branching rule {rule!r}; use one of {BRANCHING}")
    if rule == "choice" and enc.ctx.groups:
        _c, _A, _rl, _ru, _lb, _ub, binary = enc.model.arrays()
        strategy = DisjunctionsFirst(enc.ctx.groups, binary)
        opts["implied"] = strategy.implied
        opts["branching"] = strategy
    return opts


def _solver_options(scenario: Scenario, overrides: dict) -> dict:
    opts = {k: v for k, v in scenario.solver.items() if k in SOLVER_KEYS}
    opts.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(opts) - set(SOLVER_KEYS) - {"stop_at_first"}
    if unknown:
        raise TypeError(f"unknown solver options {sorted(unknown)}")
    return opts


def plan(scenario: Scenario, N: int | None = None, spec=None, *, with_cost: bool = True,
         system=None, **solver) -> PlanResult:
    """Build, solve, decode and verify one planning problem.

    ``spec`` names one of the scenario's specifications or is formula text;
    by default the scenario's own.  Solver options (``gap_tol``,
    ``node_limit``, ``time_limit``, ``stop_at_first``) override the
    scenario's ``solver`` block.
    """
    N = N if N is not None else scenario.N
    if N is None:
        raise ValueError("no horizon given and the scenario does not set one")
    text = scenario.specification(spec) if not isinstance(spec, mtl.Formula) else mtl.to_text(spec)
    enc = build(scenario, N, text, with_cost=with_cost, system=system)
    opts = _solver_options(scenario, solver)
    sol = branch_and_bound(enc.model, **_branching(enc, opts))
    stats = {
        "nodes": sol.nodes,
        "time": sol.time,
        "lp_iterations": sol.lp_iterations,
        "gap": sol.gap if sol.x is not None else None,
        **enc.model.summary(),
        "binary_counts": enc.binary_counts,
    }
    if sol.x is None:
        return PlanResult(sol.status, N, text, bound=sol.bound, stats=stats)
    x, u, modes = enc.decode(sol.x)
    objective = float(sol.objective) if with_cost else float(np.abs(u).sum())
    report = verify(scenario, enc, x, u, modes, objective, text)
    result = PlanResult(
        sol.status, N, text, _freeze(x), _freeze(u), tuple(modes) if modes else None,
        objective, sol.bound if with_cost else -math.inf, stats, report,
        tuple(frozenset(s) for s in label_trace(x @ _output(enc).T, scenario)),
        _freeze(x @ _output(enc).T),
    )
    if not report.ok:
        raise VerificationError("; ".join(report.problems), report)
    return result


def _output(enc: Encoding) -> np.ndarray:
    sys = enc.system
    return (sys.modes[0] if isinstance(sys, PwaSystem) else sys).C


def find_min_horizon(scenario: Scenario, N_max: int, spec=None, N_min: int = 2, **solver) -> int | None:
    """Smallest ``N`` in ``[N_min, N_max]`` with a feasible plan, else ``None``.

    Each horizon is a feasibility solve (objective dropped, first incumbent
    accepted) followed by the usual verification.
    """
    if N_max < N_min:
        raise ValueError("N_max must be at least N_min")
    text = scenario.specification(spec)
    for N in range(N_min, N_max + 1):
        try:
            prepare(text, scenario.dt, N)
        except mtl.HorizonError:
            continue
        res = plan(scenario, N, text, with_cost=False, stop_at_first=True, **solver)
        log.info("horizon %d: %s", N, res.status)
        if res.feasible:
            return N
        if res.status not in ("infeasible",):
            raise RuntimeError(f"horizon {N} undecided: solver stopped with status {res.status}")
    return None


# ---------------------------------------------------------------------------
# grid oracle


def grid_scenario(width: int, height: int, start, regions: dict, obstacles=(), spec: str = "true",
                  name: str = "grid") -> Scenario:
    """Scenario on integer cells ``0..width-1 x 0..height-1`` for the grid walker.

    ``regions`` maps names to lists of cell rectangles ``(i0, j0, i1, j1)``
    (inclusive); ``obstacles`` is a list of such rectangles.
    """
    def rect(r):
        i0, j0, i1, j1 = r
        return ConvexPolygon([(i0 - 0.5, j0 - 0.5), (i1 + 0.5, j0 - 0.5), (i1 + 0.5, j1 + 0.5), (i0 - 0.5, j1 + 0.5)])

    return Scenario(
        bounds=(-0.5, -0.5, width - 0.5, height - 0.5),
        regions={k: Region(k, tuple(rect(r) for r in v)) for k, v in regions.items()},
        static_obstacles=[rect(r) for r in obstacles],
        moving_obstacles=[],
        vehicle={"model": "grid"},
        x0=tuple(float(v) for v in start),
        dt=1.0,
        spec=spec,
        inflation=0.0,
        name=name,
    )


@dataclass(frozen=True)
class OracleResult:
    feasible: bool
    cost: float  # minimal number of moves, inf if infeasible


def _key(f: mtl.Formula) -> str:
    return mtl.to_text(f)


def _mk(kind, parts):
    flat = []
    unit, zero = (mtl.TRUE, mtl.FALSE) if kind is mtl.And else (mtl.FALSE, mtl.TRUE)
    for p in parts:
        if p == zero:
            return zero
        if p == unit:
            continue
        flat.extend(p.args if isinstance(p, kind) else (p,))
    uniq = {_key(p): p for p in flat}
    if not uniq:
        return unit
    if len(uniq) == 1:
        return next(iter(uniq.values()))
    return kind(tuple(uniq[k] for k in sorted(uniq)))


def _neg(f):
    if f == mtl.TRUE:
        return mtl.FALSE
    if f == mtl.FALSE:
        return mtl.TRUE
    if isinstance(f, mtl.Not):
        return f.child
    return mtl.Not(f)


def progress(f: mtl.Formula, now: frozenset) -> mtl.Formula:
    """Residual obligation on the suffix after reading one sample's labels."""
    P = progress
    if isinstance(f, (mtl.TrueF, mtl.FalseF)):
        return f
    if isinstance(f, mtl.Atom):
        return mtl.TRUE if f.name in now else mtl.FALSE
    if isinstance(f, mtl.Not):
        return _neg(P(f.child, now))
    if isinstance(f, mtl.And):
        return _mk(mtl.And, [P(c, now) for c in f.args])
    if isinstance(f, mtl.Or):
        return _mk(mtl.Or, [P(c, now) for c in f.args])
    if isinstance(f, mtl.Next):
        return f.child
    lo, hi = int(f.interval.lo), int(f.interval.hi)
    later = mtl.Interval(max(lo - 1, 0), hi - 1) if hi >= 1 else None
    if isinstance(f, mtl.Eventually):
        if lo > 0:
            return mtl.Eventually(later, f.child)
        rest = mtl.Eventually(later, f.child) if later else mtl.FALSE
        return _mk(mtl.Or, [P(f.child, now), rest])
    if isinstance(f, mtl.Always):
        if lo > 0:
            return mtl.Always(later, f.child)
        rest = mtl.Always(later, f.child) if later else mtl.TRUE
        return _mk(mtl.And, [P(f.child, now), rest])
    if isinstance(f, mtl.Until):
        rest = mtl.Until(later, f.left, f.right) if later else mtl.FALSE
        if lo > 0:
            return _mk(mtl.And, [P(f.left, now), rest])
        return _mk(mtl.Or, [P(f.right, now), _mk(mtl.And, [P(f.left, now), rest])])
    if isinstance(f, mtl.Release):
        dual = mtl.Until(f.interval, _neg(f.left), _neg(f.right))
        return _neg(P(dual, now))
    raise TypeError(f"not a formula: {f!r}")


GRID_MOVES = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))


def brute_force_plan(scenario: Scenario, N: int, spec=None) -> OracleResult:
    """Exact minimum number of moves on a grid scenario, by dynamic
    programming over (cell, residual obligation) with formula progression."""
    xmin, ymin, xmax, ymax = scenario.bounds
    W, H = int(round(xmax - xmin)), int(round(ymax - ymin))
    if W > 8 or H > 8 or N > 12:
        raise ValueError("instance too large for the exhaustive oracle (grid <= 8x8, N <= 12)")
    f = oracle_formula(scenario, spec, N)
    cells = [(i, j) for i in range(W) for j in range(H)]
    lab = {(c, t): frozenset(_label_cell(scenario, c, t)) for c in cells for t in range(N + 1)}
    start = (int(round(scenario.x0[0])), int(round(scenario.x0[1])))
    layer = {}
    r0 = progress(f, lab[(start, 0)])
    if r0 != mtl.FALSE:
        layer[(start, r0)] = 0
    for t in range(1, N + 1):
        nxt: dict = {}
        for (c, r), cost in layer.items():
            for dx, dy in GRID_MOVES:
                d = (c[0] + dx, c[1] + dy)
                if not (0 <= d[0] < W and 0 <= d[1] < H):
                    continue
                r2 = progress(r, lab[(d, t)])
                if r2 == mtl.FALSE:
                    continue
                k = (d, r2)
                v = cost + (dx != 0 or dy != 0)
                if v < nxt.get(k, math.inf):
                    nxt[k] = v
        layer = nxt
    best = math.inf
    for (_c, r), cost in layer.items():
        if r == mtl.TRUE:
            best = min(best, cost)
        elif r != mtl.FALSE:
            raise mtl.HorizonError("obligation left open at the end of the horizon")
    return OracleResult(math.isfinite(best), float(best))


def _label_cell(scenario: Scenario, c, t) -> set[str]:
    from .environment import label

    return label(np.asarray(c, dtype=float), t, scenario)


def brute_force_min_horizon(scenario: Scenario, N_max: int, spec=None, N_min: int = 2) -> int | None:
    for N in range(N_min, N_max + 1):
        try:
            mtl.horizon_of(oracle_formula(scenario, spec, N), N)
        except mtl.HorizonError:
            continue
        if brute_force_plan(scenario, N, spec).feasible:
            return N
    return None

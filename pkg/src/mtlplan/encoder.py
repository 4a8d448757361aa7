"""Compile dynamics, an MTL mission and the input cost into a MILP.

Every formula node ``phi`` evaluated at sample ``t`` gets a continuous
variable ``P[phi,t]`` in [0, 1] tied to its operands by linear inequalities.
Binaries appear only as halfspace indicators ``z`` (and as mode / move
selectors of hybrid vehicles), so the search branches on geometry alone.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import mtl
from .dynamics import LinearSystem, PwaSystem, initial_state, vehicle_model
from .environment import OBSTACLE_ATOM, ConvexPolygon, Halfspace, Region, Scenario
from .milp import EQ, GE, LE, MilpModel


class EncodingError(ValueError):
    pass


@dataclass
class EncodingContext:
    """Handles into a model under construction.

    ``x[t]`` and ``u[t]`` hold variable ids of state and input at sample
    ``t``; ``P`` maps ``(formula, t)`` to the id of its truth variable.
    """

    scenario: Scenario
    N: int
    model: MilpModel = field(default_factory=MilpModel)
    x: list = field(default_factory=list)
    u: list = field(default_factory=list)
    C: np.ndarray | None = None
    modes: list = field(default_factory=list)
    moves: list = field(default_factory=list)
    P: dict = field(default_factory=dict)
    z: dict = field(default_factory=dict)
    counts: dict = field(default_factory=lambda: {"halfspace": 0, "mode": 0, "move": 0})
    big_m: dict = field(default_factory=dict)
    abs_vars: list = field(default_factory=list)
    # (parent P, operand ids) of every disjunctive operator; all of these
    # variables are integral whenever the binaries are
    groups: list = field(default_factory=list)
    # fixed big-M and eps; by default both are derived from the workspace
    fixed_m: float | None = None
    fixed_eps: float | None = None
    _consts: dict = field(default_factory=dict)
    _serial: itertools.count = field(default_factory=itertools.count)

    @property
    def dt(self) -> float:
        return self.scenario.dt

    @property
    def eps(self) -> float:
        return self.scenario.eps if self.fixed_eps is None else self.fixed_eps

    def position(self, t: int) -> list[dict]:
        """``C @ x(t)`` as two linear expressions."""
        if not self.x:
            raise EncodingError("position variables do not exist yet")
        ids = self.x[t]
        return [{int(ids[k]): float(row[k]) for k in np.flatnonzero(row)} for row in self.C]

    def new_p(self, name: str) -> int:
        return self.model.add_var(name, 0.0, 1.0)

    def const(self, value: int) -> int:
        if value not in self._consts:
            self._consts[value] = self.model.add_var(f"const[{value}]", value, value)
        return self._consts[value]


# ---------------------------------------------------------------------------
# dynamics


def _state_vars(ctx: EncodingContext, sys, N: int):
    m = ctx.model
    lo_x, hi_x = sys.x_lb, sys.x_ub
    lo_u, hi_u = sys.u_lb, sys.u_ub
    if not (np.all(np.isfinite(lo_x)) and np.all(np.isfinite(hi_x))):
        raise EncodingError("state bounds must be finite")
    if not (np.all(np.isfinite(lo_u)) and np.all(np.isfinite(hi_u))):
        raise EncodingError("input bounds must be finite")
    names = sys.state_names
    ctx.x = [
        np.array([m.add_var(f"x[{t},{names[i]}]", lo_x[i], hi_x[i]) for i in range(sys.n)])
        for t in range(N + 1)
    ]
    unames = sys.input_names
    ctx.u = [
        np.array([m.add_var(f"u[{t},{unames[i]}]", lo_u[i], hi_u[i]) for i in range(sys.m)])
        for t in range(N)
    ]


def _initial_and_loop(ctx: EncodingContext, x0, loop: bool):
    m = ctx.model
    for i, v in enumerate(x0):
        m.add_constr({int(ctx.x[0][i]): 1.0}, EQ, float(v), f"init[{i}]")
    if loop:
        for r, (e0, eN) in enumerate(zip(ctx.position(0), ctx.position(ctx.N))):
            expr = dict(eN)
            for k, a in e0.items():
                expr[k] = expr.get(k, 0.0) - a
            m.add_constr(expr, EQ, 0.0, f"loop[{r}]")


def encode_dynamics(ctx: EncodingContext, sys: LinearSystem, x0, N: int, loop: bool = False) -> None:
    """State/input variables, ``x(t+1) = A x(t) + B u(t) + c`` and ``x(0) = x0``."""
    if sys.domain != "discrete":
        raise EncodingError("encode_dynamics needs a discrete-time system")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.n,):
        raise EncodingError(f"initial state has {x0.size} components, system has {sys.n}")
    ctx.C = sys.C
    _state_vars(ctx, sys, N)
    m = ctx.model
    for t in range(N):
        for i in range(sys.n):
            expr = {int(ctx.x[t + 1][i]): 1.0}
            for k in np.flatnonzero(sys.A[i]):
                expr[int(ctx.x[t][k])] = expr.get(int(ctx.x[t][k]), 0.0) - sys.A[i, k]
            for k in np.flatnonzero(sys.B[i]):
                expr[int(ctx.u[t][k])] = -sys.B[i, k]
            m.add_constr(expr, EQ, float(sys.c[i]), f"dyn[{t},{i}]")
    _initial_and_loop(ctx, x0, loop)
    if sys.input_choices is not None:
        encode_input_choices(ctx, sys.input_choices)


def encode_input_choices(ctx: EncodingContext, choices) -> None:
    """Restrict every ``u(t)`` to one row of ``choices`` via selector binaries."""
    m = ctx.model
    choices = np.atleast_2d(choices)
    for t in range(len(ctx.u)):
        w = [m.add_var(f"move[{t},{k}]", binary=True) for k in range(len(choices))]
        ctx.counts["move"] += len(w)
        ctx.moves.append(w)
        m.add_constr({k: 1.0 for k in w}, EQ, 1.0, f"move_one[{t}]")
        for i in range(choices.shape[1]):
            expr = {int(ctx.u[t][i]): 1.0}
            for k, wk in enumerate(w):
                if choices[k, i]:
                    expr[wk] = -choices[k, i]
            m.add_constr(expr, EQ, 0.0, f"move_u[{t},{i}]")


def _interval_of(coefs: dict, lo: dict, hi: dict, const: float = 0.0):
    a, b = const, const
    for k, c in coefs.items():
        a += min(c * lo[k], c * hi[k])
        b += max(c * lo[k], c * hi[k])
    return a, b


def encode_pwa_dynamics(ctx: EncodingContext, sys: PwaSystem, x0, N: int, loop: bool = False) -> None:
    """Per-step mode binaries with big-M relaxed affine dynamics per mode."""
    if sys.domain != "discrete":
        raise EncodingError("encode_pwa_dynamics needs a discrete-time system")
    x0 = np.asarray(x0, dtype=float)
    base = sys.modes[0]
    if x0.shape != (base.n,):
        raise EncodingError(f"initial state has {x0.size} components, system has {base.n}")
    ctx.C = base.C
    _state_vars(ctx, base, N)
    m = ctx.model
    lo = {}
    hi = {}
    for t in range(N + 1):
        for i, v in enumerate(ctx.x[t]):
            lo[int(v)], hi[int(v)] = base.x_lb[i], base.x_ub[i]
    for t in range(N):
        for i, v in enumerate(ctx.u[t]):
            lo[int(v)], hi[int(v)] = base.u_lb[i], base.u_ub[i]
    h = sys.heading_index
    for t in range(N):
        sel = [m.add_var(f"mode[{t},{j}]", binary=True) for j in range(len(sys.modes))]
        ctx.counts["mode"] += len(sel)
        ctx.modes.append(sel)
        m.add_constr({k: 1.0 for k in sel}, EQ, 1.0, f"mode_one[{t}]")
        th = int(ctx.x[t][h])
        for j, (mode, (a, b)) in enumerate(zip(sys.modes, sys.intervals)):
            mj = sel[j]
            M_lo = max(0.0, a - base.x_lb[h]) * 1.1 + 1e-6
            M_hi = max(0.0, base.x_ub[h] - b) * 1.1 + 1e-6
            # theta >= a - M (1 - m);  theta <= b + M (1 - m)
            m.add_constr({th: 1.0, mj: -M_lo}, GE, a - M_lo, f"sector_lo[{t},{j}]")
            m.add_constr({th: 1.0, mj: M_hi}, LE, b + M_hi, f"sector_hi[{t},{j}]")
            for i in range(base.n):
                expr = {int(ctx.x[t + 1][i]): 1.0}
                for k in np.flatnonzero(mode.A[i]):
                    v = int(ctx.x[t][k])
                    expr[v] = expr.get(v, 0.0) - mode.A[i, k]
                for k in np.flatnonzero(mode.B[i]):
                    expr[int(ctx.u[t][k])] = -mode.B[i, k]
                e_lo, e_hi = _interval_of(expr, lo, hi, -mode.c[i])
                M = 1.1 * max(abs(e_lo), abs(e_hi)) + 1e-6
                ctx.big_m[f"pwa[{t},{j},{i}]"] = M
                e1 = dict(expr)
                e1[mj] = M
                m.add_constr(e1, LE, mode.c[i] + M, f"pwa_ub[{t},{j},{i}]")
                e2 = dict(expr)
                e2[mj] = -M
                m.add_constr(e2, GE, mode.c[i] - M, f"pwa_lb[{t},{j},{i}]")
    _initial_and_loop(ctx, x0, loop)


# ---------------------------------------------------------------------------
# geometry


def halfspace_big_m(hs: Halfspace, corners: np.ndarray, eps: float) -> float:
    """Big-M for ``hs`` over the workspace box: 1.1 * max |h@x - k| on its corners."""
    spread = float(np.max(np.abs(corners @ np.asarray(hs.h) - hs.k)))
    return max(1.1 * spread, spread + 2 * eps)


def encode_halfspace(ctx: EncodingContext, t: int, hs: Halfspace) -> int:
    """Indicator ``z`` with ``z = 1`` iff ``h @ C x(t) <= k`` (outside an eps band)."""
    key = (hs, t)
    if key in ctx.z:
        return ctx.z[key]
    m = ctx.model
    M = halfspace_big_m(hs, ctx.scenario.corners, ctx.eps) if ctx.fixed_m is None else ctx.fixed_m
    spread = float(np.max(np.abs(ctx.scenario.corners @ np.asarray(hs.h) - hs.k)))
    if not M >= spread + ctx.eps:
        raise EncodingError(f"big-M {M} does not dominate the halfspace residual {spread} on the workspace")
    j = len(ctx.z)
    z = m.add_var(f"z[{t},{j}]", binary=True)
    ctx.counts["halfspace"] += 1
    ctx.big_m[f"z[{t},{j}]"] = M
    expr = {}
    for coef, e in zip(hs.h, ctx.position(t)):
        for k, a in e.items():
            expr[k] = expr.get(k, 0.0) + coef * a
    # h x <= k + M (1 - z)
    e1 = dict(expr)
    e1[z] = M
    m.add_constr(e1, LE, hs.k + M, f"hs_in[{t},{j}]")
    # h x >= k - M z + eps
    e2 = dict(expr)
    e2[z] = M
    m.add_constr(e2, GE, hs.k + ctx.eps, f"hs_out[{t},{j}]")
    ctx.z[key] = z
    return z


def _and(ctx: EncodingContext, ps: list[int], name: str) -> int:
    if len(ps) == 1:
        return ps[0]
    m = ctx.model
    P = ctx.new_p(name)
    for i, p in enumerate(ps):
        m.add_constr({P: 1.0, p: -1.0}, LE, 0.0, f"{name}.le{i}")
    expr = {P: 1.0}
    for p in ps:
        expr[p] = expr.get(p, 0.0) - 1.0
    m.add_constr(expr, GE, 1.0 - len(ps), f"{name}.ge")
    return P


def _or(ctx: EncodingContext, ps: list[int], name: str) -> int:
    if len(ps) == 1:
        return ps[0]
    m = ctx.model
    P = ctx.new_p(name)
    for i, p in enumerate(ps):
        m.add_constr({P: 1.0, p: -1.0}, GE, 0.0, f"{name}.ge{i}")
    expr = {P: 1.0}
    for p in ps:
        expr[p] = expr.get(p, 0.0) - 1.0
    m.add_constr(expr, LE, 0.0, f"{name}.le")
    return P


def encode_polygon(ctx: EncodingContext, t: int, poly: ConvexPolygon, name: str) -> int:
    zs = [encode_halfspace(ctx, t, hs) for hs in poly.halfspaces]
    return _and(ctx, zs, f"P[{name},{t}]")


def encode_region(ctx: EncodingContext, t: int, region: Region) -> int:
    """``P`` with value 1 iff the position at ``t`` lies in ``region``."""
    key = (("region", region.name), t)
    if key in ctx.P:
        return ctx.P[key]
    parts = [
        encode_polygon(ctx, t, p, f"{region.name}.{i}" if len(region.polygons) > 1 else region.name)
        for i, p in enumerate(region.polygons)
    ]
    P = _or(ctx, parts, f"P[{region.name},{t}]")
    ctx.P[key] = P
    return P


def encode_obstacles(ctx: EncodingContext, t: int) -> int:
    """``P`` with value 1 iff the position at ``t`` is inside some inflated obstacle."""
    key = (("region", OBSTACLE_ATOM), t)
    if key in ctx.P:
        return ctx.P[key]
    polys = ctx.scenario.obstacles_at(t)
    if not polys:
        P = ctx.const(0)
    else:
        parts = [encode_polygon(ctx, t, p, f"{OBSTACLE_ATOM}.{i}") for i, p in enumerate(polys)]
        P = _or(ctx, parts, f"P[{OBSTACLE_ATOM},{t}]")
    ctx.P[key] = P
    return P


def encode_atom(ctx: EncodingContext, name: str, t: int) -> int:
    if name == OBSTACLE_ATOM:
        return encode_obstacles(ctx, t)
    try:
        region = ctx.scenario.regions[name]
    except KeyError:
        raise EncodingError(f"unknown proposition {name!r}") from None
    return encode_region(ctx, t, region)


# ---------------------------------------------------------------------------
# formulas


def prepare(spec, dt: float, N: int) -> mtl.Formula:
    """Parse (if needed), convert to samples, push negations to atoms,
    truncate unbounded windows to ``N`` and expand Release."""
    f = mtl.parse(spec) if isinstance(spec, str) else spec
    f = mtl.to_steps(f, dt)
    f = mtl.to_nnf(f)
    f = mtl.truncate(f, N)
    f = mtl.eliminate_release(f)
    mtl.horizon_of(f, N)
    return f


def encode_formula(ctx: EncodingContext, f: mtl.Formula, t: int = 0) -> int:
    """Truth variable of NNF formula ``f`` (intervals in samples) at ``t``."""
    if t == 0 and not mtl.is_nnf(f):
        raise EncodingError("formula must be in negation normal form")
    if t + mtl.horizon_of(f) > ctx.N:
        raise mtl.HorizonError(
            f"formula needs longer trajectory: horizon {mtl.horizon_of(f)} from t={t} exceeds N={ctx.N}"
        )
    return _enc(ctx, f, t)


def _enc(ctx: EncodingContext, f: mtl.Formula, t: int) -> int:
    key = (f, t)
    hit = ctx.P.get(key)
    if hit is not None:
        return hit
    m = ctx.model
    tag = f"{type(f).__name__}#{next(ctx._serial)}"
    if isinstance(f, mtl.TrueF):
        P = ctx.const(1)
    elif isinstance(f, mtl.FalseF):
        P = ctx.const(0)
    elif isinstance(f, mtl.Atom):
        P = encode_atom(ctx, f.name, t)
    elif isinstance(f, mtl.Not):
        if not isinstance(f.child, mtl.Atom):
            raise EncodingError("negation is only encoded on propositions")
        p = encode_atom(ctx, f.child.name, t)
        P = ctx.new_p(f"P[{tag},{t}]")
        m.add_constr({P: 1.0, p: 1.0}, EQ, 1.0, f"neg[{tag},{t}]")
    elif isinstance(f, mtl.And):
        P = _and(ctx, [_enc(ctx, c, t) for c in f.args], f"P[{tag},{t}]")
    elif isinstance(f, mtl.Or):
        ps = [_enc(ctx, c, t) for c in f.args]
        P = _or(ctx, ps, f"P[{tag},{t}]")
        ctx.groups.append((P, tuple(ps)))
    elif isinstance(f, mtl.Next):
        child = _enc(ctx, f.child, t + 1)
        P = ctx.new_p(f"P[{tag},{t}]")
        m.add_constr({P: 1.0, child: -1.0}, EQ, 0.0, f"next[{tag},{t}]")
    elif isinstance(f, (mtl.Eventually, mtl.Always)):
        lo, hi = int(f.interval.lo), int(f.interval.hi)
        ps = [_enc(ctx, f.child, t + s) for s in range(lo, hi + 1)]
        name = f"P[{tag},{t}]"
        P = ctx.new_p(name)
        if isinstance(f, mtl.Eventually):
            ctx.groups.append((P, tuple(ps)))
            for i, p in enumerate(ps):
                m.add_constr({P: 1.0, p: -1.0}, GE, 0.0, f"{name}.ge{i}")
            expr = {P: 1.0}
            for p in ps:
                expr[p] = expr.get(p, 0.0) - 1.0
            m.add_constr(expr, LE, 0.0, f"{name}.le")
        else:
            for i, p in enumerate(ps):
                m.add_constr({P: 1.0, p: -1.0}, LE, 0.0, f"{name}.le{i}")
            expr = {P: 1.0}
            for p in ps:
                expr[p] = expr.get(p, 0.0) - 1.0
            m.add_constr(expr, GE, -float(hi - lo), f"{name}.ge")
    elif isinstance(f, mtl.Until):
        P = _encode_until(ctx, f, t, tag)
    elif isinstance(f, mtl.Release):
        raise EncodingError("Release must be expanded before encoding (see mtl.eliminate_release)")
    else:
        raise TypeError(f"not a formula: {f!r}")
    ctx.P[key] = P
    return P


def _encode_until(ctx: EncodingContext, f: mtl.Until, t: int, tag: str) -> int:
    m = ctx.model
    lo, hi = int(f.interval.lo), int(f.interval.hi)
    name = f"P[{tag},{t}]"
    P = ctx.new_p(name)
    a_vars = []
    for j in range(t + lo, t + hi + 1):
        a = m.add_var(f"a[{tag},{t},{j}]", 0.0, 1.0)
        a_vars.append(a)
        q = _enc(ctx, f.right, j)
        ps = [_enc(ctx, f.left, k) for k in range(t, j)]
        m.add_constr({a: 1.0, q: -1.0}, LE, 0.0, f"{name}.a{j}.q")
        for k, p in zip(range(t, j), ps):
            m.add_constr({a: 1.0, p: -1.0}, LE, 0.0, f"{name}.a{j}.p{k}")
        expr = {a: 1.0, q: -1.0}
        for p in ps:
            expr[p] = expr.get(p, 0.0) - 1.0
        m.add_constr(expr, GE, -float(j - t), f"{name}.a{j}.ge")
        m.add_constr({P: 1.0, a: -1.0}, GE, 0.0, f"{name}.ge{j}")
    expr = {P: 1.0}
    for a in a_vars:
        expr[a] = -1.0
    m.add_constr(expr, LE, 0.0, f"{name}.le")
    ctx.groups.append((P, tuple(a_vars)))
    return P


# ---------------------------------------------------------------------------
# cost and assembly


def encode_cost(ctx: EncodingContext) -> None:
    """Minimize the sum of absolute input components via ``s >= |u|``."""
    m = ctx.model
    obj = {}
    for t, us in enumerate(ctx.u):
        for i, v in enumerate(us):
            v = int(v)
            cap = max(abs(m.lb[v]), abs(m.ub[v]))
            s = m.add_var(f"abs_u[{t},{i}]", 0.0, cap)
            ctx.abs_vars.append(s)
            m.add_constr({s: 1.0, v: -1.0}, GE, 0.0, f"abs_pos[{t},{i}]")
            m.add_constr({s: 1.0, v: 1.0}, GE, 0.0, f"abs_neg[{t},{i}]")
            obj[s] = 1.0
    m.set_objective(obj)


@dataclass
class Encoding:
    """A built model plus the directory needed to decode its solutions."""

    model: MilpModel
    ctx: EncodingContext
    system: object
    formula: mtl.Formula
    root: int

    @property
    def N(self) -> int:
        return self.ctx.N

    def decode(self, values):
        values = np.asarray(values, dtype=float)
        x = np.array([[values[v] for v in row] for row in self.ctx.x])
        u = np.array([[values[v] for v in row] for row in self.ctx.u]).reshape(self.N, -1)
        modes = [int(np.argmax([values[v] for v in sel])) for sel in self.ctx.modes] or None
        return x, u, modes

    @property
    def binary_counts(self) -> dict:
        return dict(self.ctx.counts)


def build(scenario: Scenario, N: int, spec=None, with_cost: bool = True, system=None) -> Encoding:
    """Full model: dynamics, specification with ``P[phi, 0] = 1``, and cost.

    ``spec`` is a formula, specification text, or the name of one of the
    scenario's specifications; by default the scenario's ``spec``.
    """
    if spec is None or isinstance(spec, str):
        spec = scenario.specification(spec)
    formula = prepare(spec, scenario.dt, N)
    sys = system if system is not None else vehicle_model(scenario.vehicle, scenario.bounds, scenario.dt)
    ctx = EncodingContext(scenario, N, MilpModel(scenario.name or "mtlplan"))
    x0 = initial_state(sys, scenario.x0)
    if isinstance(sys, PwaSystem):
        encode_pwa_dynamics(ctx, sys, x0, N, scenario.loop)
    else:
        encode_dynamics(ctx, sys, x0, N, scenario.loop)
    root = encode_formula(ctx, formula, 0)
    ctx.model.add_constr({root: 1.0}, EQ, 1.0, "spec")
    if with_cost:
        encode_cost(ctx)
    return Encoding(ctx.model, ctx, sys, formula, root)

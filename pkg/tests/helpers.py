"""Shared generators for randomized tests."""

from __future__ import annotations

import itertools
import random

import numpy as np

from mtlplan import mtl
from mtlplan.mtl import Interval


def random_formula(rng: random.Random, atoms, depth: int, budget: int, nnf: bool = False,
                   release: bool = True) -> mtl.Formula:
    """Random formula in sample units whose horizon is at most ``budget``.

    With ``nnf`` set, negation only wraps atoms.
    """
    if depth == 0 or rng.random() < 0.2:
        r = rng.random()
        if r < 0.05:
            return mtl.TRUE
        if r < 0.1:
            return mtl.FALSE
        a = mtl.Atom(rng.choice(atoms))
        return mtl.Not(a) if rng.random() < 0.3 else a
    kinds = ["and", "or", "not", "next", "F", "G", "U"] + (["R"] if release else [])
    if nnf:
        kinds.remove("not")
    if budget == 0:
        kinds = [k for k in kinds if k in ("and", "or", "not")]
    kind = rng.choice(kinds)
    sub = lambda b: random_formula(rng, atoms, depth - 1, b, nnf, release)  # noqa: E731
    if kind in ("and", "or"):
        args = tuple(sub(budget) for _ in range(rng.choice((2, 2, 3))))
        return (mtl.And if kind == "and" else mtl.Or)(args)
    if kind == "not":
        return mtl.Not(sub(budget))
    if kind == "next":
        return mtl.Next(sub(budget - 1))
    hi = rng.randint(0, budget)
    lo = rng.randint(0, hi)
    iv = Interval(lo, hi)
    if kind == "F":
        return mtl.Eventually(iv, sub(budget - hi))
    if kind == "G":
        return mtl.Always(iv, sub(budget - hi))
    cls = mtl.Until if kind == "U" else mtl.Release
    return cls(iv, sub(budget - hi), sub(budget - hi))


def all_traces(atoms, length: int):
    """Every label trace of ``length`` samples over ``atoms``."""
    subsets = [frozenset(c) for r in range(len(atoms) + 1) for c in itertools.combinations(atoms, r)]
    for steps in itertools.product(subsets, repeat=length):
        yield mtl.Trace(steps, atoms)


def random_trace(rng: random.Random, atoms, length: int, p: float = 0.4) -> mtl.Trace:
    return mtl.Trace([{a for a in atoms if rng.random() < p} for _ in range(length)], atoms)


# ---------------------------------------------------------------------------
# random linear programs


def model_from_arrays(c, A, rl, ru, lb, ub, binary, name="random"):
    """A MilpModel holding exactly the given dense data."""
    from mtlplan.milp import EQ, GE, LE, MilpModel

    m = MilpModel(name)
    for j in range(len(c)):
        m.add_var(f"x{j}", lb[j], ub[j], binary=bool(binary[j]))
    for i in range(len(rl)):
        coeffs = {j: float(A[i, j]) for j in np.flatnonzero(A[i])}
        if rl[i] == ru[i]:
            m.add_constr(coeffs, EQ, rl[i], f"r{i}")
            continue
        if np.isfinite(ru[i]):
            m.add_constr(coeffs, LE, ru[i], f"r{i}u")
        if np.isfinite(rl[i]):
            m.add_constr(coeffs, GE, rl[i], f"r{i}l")
    m.set_objective({j: float(c[j]) for j in range(len(c)) if c[j]})
    return m


def random_box_lp(rng: np.random.Generator, n: int, m: int):
    """Small LP with general rows and active variable bounds, as dense data."""
    A = np.round(rng.normal(size=(m, n)) * 2, 1) * (rng.random((m, n)) < 0.8)
    lb = -np.round(rng.random(n) * 3, 1)
    ub = np.round(rng.random(n) * 3, 1) + 0.1
    x0 = rng.uniform(lb, ub)
    act = A @ x0
    rl = act - np.round(rng.random(m) * 2, 1)
    ru = act + np.round(rng.random(m) * 2, 1)
    rl[rng.random(m) < 0.3] = -np.inf
    ru[rng.random(m) < 0.3] = np.inf
    eq = rng.random(m) < 0.15
    rl[eq] = ru[eq] = np.round(act[eq], 1)
    if rng.random() < 0.1:  # unreachable equality row
        i = rng.integers(m)
        A[i] = 0.1
        rl[i] = ru[i] = 100.0
    c = np.round(rng.normal(size=n) * 3, 1)
    return c, A, rl, ru, lb, ub


def random_standard_lp(rng: np.random.Generator, n: int, m: int, infeasible: bool = False):
    """``min c x, A x = b, x >= 0`` with a positive first row, so the feasible
    set is bounded and the finite upper bounds we add are never tight."""
    A = np.round(rng.normal(size=(m, n)) * 2, 1)
    A[0] = np.round(rng.uniform(0.5, 2.0, n), 1)
    x_star = rng.random(n) * (rng.random(n) < 0.5)
    b = A @ x_star
    if infeasible:
        b[0] = -1.0
    ub = b[0] / A[0] + 1.0 if not infeasible else np.full(n, 10.0)
    c = np.round(rng.normal(size=n) * 3, 1)
    return c, A, b, ub


def random_milp(rng: np.random.Generator, n_bin: int, n_cont: int, m: int):
    """Dense data of a random mixed-binary program (binaries first)."""
    n = n_bin + n_cont
    A = np.round(rng.normal(size=(m, n)) * 3) * (rng.random((m, n)) < 0.7)
    rhs = np.round(rng.normal(size=m) * 3)
    kind = rng.choice(3, size=m, p=[0.45, 0.45, 0.1])
    rl = np.where(kind == 0, -np.inf, rhs)
    ru = np.where(kind == 1, np.inf, rhs)
    lb = np.concatenate([np.zeros(n_bin), np.full(n_cont, -2.0)])
    ub = np.concatenate([np.ones(n_bin), np.full(n_cont, 3.0)])
    c = np.round(rng.normal(size=n) * 5)
    binary = np.arange(n) < n_bin
    return c, A, rl, ru, lb, ub, binary


# ---------------------------------------------------------------------------
# encodings over pinned positions


def pinned_context(scenario, points, **kw):
    """Encoding context whose position at sample ``t`` is fixed to ``points[t]``."""
    from mtlplan.encoder import EncodingContext
    from mtlplan.milp import MilpModel

    ctx = EncodingContext(scenario, len(points) - 1, MilpModel("pinned"), **kw)
    ctx.C = np.eye(2)
    ctx.x = [np.array([ctx.model.add_var(f"x[{t},{i}]", float(p[i]), float(p[i])) for i in range(2)])
             for t, p in enumerate(points)]
    return ctx


def venn_scenario():
    """Three overlapping boxes A, B, C; ``VENN_POINTS[s]`` lies in exactly the
    regions of label set ``s`` with a 0.5 margin to every edge."""
    from mtlplan.environment import ConvexPolygon, Region, Scenario

    regions = {
        "A": Region("A", (ConvexPolygon.box(0, 0, 2, 3),)),
        "B": Region("B", (ConvexPolygon.box(1, 0, 3, 3),)),
        "C": Region("C", (ConvexPolygon.box(0, 1, 4, 2),)),
    }
    return Scenario((0, 0, 4, 3), regions, [], [], {"model": "grid"}, (3.5, 0.5), 1.0, name="venn")


VENN_POINTS = {
    frozenset(): (3.5, 0.5), frozenset("A"): (0.5, 0.5), frozenset("AB"): (1.5, 0.5),
    frozenset("B"): (2.5, 0.5), frozenset("C"): (3.5, 1.5), frozenset("AC"): (0.5, 1.5),
    frozenset("ABC"): (1.5, 1.5), frozenset("BC"): (2.5, 1.5),
}


def formula_feasible(scenario, points, formula) -> bool:
    """Whether the model for ``formula`` with ``P = 1`` at sample 0 is feasible
    once positions are pinned to ``points``."""
    from mtlplan.encoder import encode_formula, prepare
    from mtlplan.milp import EQ, branch_and_bound

    ctx = pinned_context(scenario, points)
    f = prepare(formula, 1.0, len(points) - 1)
    root = encode_formula(ctx, f, 0)
    ctx.model.add_constr({root: 1.0}, EQ, 1.0, "spec")
    sol = branch_and_bound(ctx.model)
    assert sol.status in ("optimal", "infeasible"), sol.status
    return sol.status == "optimal"


# ---------------------------------------------------------------------------
# grid scenarios


def random_grid(rng: random.Random):
    """Small grid with two rectangular regions and at most one obstacle cell block."""
    W, H = rng.randint(3, 5), rng.randint(2, 4)
    start = (rng.randrange(W), rng.randrange(H))

    def rect():
        i0, j0 = rng.randrange(W), rng.randrange(H)
        return (i0, j0, rng.randint(i0, min(W - 1, i0 + 1)), rng.randint(j0, min(H - 1, j0 + 1)))

    regions = {"A": [rect()], "B": [rect()]}
    obstacles = []
    if rng.random() < 0.5:
        r = rect()
        if not (r[0] <= start[0] <= r[2] and r[1] <= start[1] <= r[3]):
            obstacles.append(r)
    from mtlplan.planner import grid_scenario

    return grid_scenario(W, H, start, regions, obstacles)


def random_grid_spec(rng: random.Random, N: int) -> str:
    f = random_formula(rng, ("A", "B"), 3, N)
    if rng.random() < 0.5:
        f = mtl.And((f, mtl.Always(mtl.Interval(0, N), mtl.Not(mtl.Atom("O")))))
    return mtl.to_text(f)

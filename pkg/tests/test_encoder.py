import math
import random

import numpy as np
import pytest

from helpers import VENN_POINTS, formula_feasible, pinned_context, random_formula, venn_scenario
from mtlplan import mtl
from mtlplan.dynamics import LinearSystem, PwaSystem, car_pwa, default_heading_nodes, discretize, vehicle_model
from mtlplan.encoder import (
    EncodingError, build, encode_dynamics, encode_formula, encode_halfspace, encode_pwa_dynamics,
    encode_region, prepare, EncodingContext,
)
from mtlplan.environment import ConvexPolygon, Halfspace, Region, Scenario, bundled_scenario
from mtlplan.milp import EQ, MilpModel, branch_and_bound
from mtlplan.planner import grid_scenario


def _box_scenario(regions=None, obstacles=(), bounds=(0, 0, 10, 10)):
    regions = regions or {"A": Region("A", (ConvexPolygon.box(1, 1, 3, 3),))}
    return Scenario(bounds, regions, list(obstacles), [], {"model": "grid"}, (9.5, 9.5), 1.0, inflation=0.0)


# ---------------------------------------------------------------------------
# halfspace indicators


def _fixed_m_rows(x1):
    ctx = pinned_context(_box_scenario(), [(x1, 5.0)], fixed_m=1e5, fixed_eps=1e-4)
    z = encode_halfspace(ctx, 0, Halfspace((1.0, 0.0), 2.0))
    return ctx, z


def test_fixed_m_halfspace_rows():
    ctx, z = _fixed_m_rows(0.0)
    m = ctx.model
    le, ge = m.row("hs_in[0,0]"), m.row("hs_out[0,0]")
    x1 = int(ctx.x[0][0])
    for r, sense, rhs in ((le, "<=", 2 + 1e5), (ge, ">=", 2 + 1e-4)):
        idx, val = m.rows[r]
        assert dict(zip(idx.tolist(), val.tolist())) == {x1: 1.0, z: 1e5}
        assert m.senses[r] == sense and m.rhs[r] == rhs


@pytest.mark.parametrize("x1, allowed", [(0.0, 1.0), (3.0, 0.0)])
def test_fixed_m_halfspace_forces_indicator(x1, allowed):
    ctx, z = _fixed_m_rows(x1)
    m = ctx.model
    for value in (0.0, 1.0):
        x = np.zeros(m.num_vars)
        x[ctx.x[0]] = (x1, 5.0)
        x[z] = value
        assert (not m.violations(x)) == (value == allowed)


def test_fixed_m_too_small_is_rejected():
    ctx = pinned_context(_box_scenario(), [(0.0, 0.0)], fixed_m=1.0)
    with pytest.raises(EncodingError, match="big-M"):
        encode_halfspace(ctx, 0, Halfspace((1.0, 0.0), 2.0))


def _region_truth(scenario, region, point):
    ctx = pinned_context(scenario, [point])
    P = encode_region(ctx, 0, region)
    sol = branch_and_bound(ctx.model)
    assert sol.status == "optimal"
    return round(sol.x[P])


def test_square_region_membership():
    s = _box_scenario()
    A = s.regions["A"]
    assert _region_truth(s, A, (2.0, 2.0)) == 1
    assert _region_truth(s, A, (4.0, 2.0)) == 0
    assert _region_truth(s, A, (2.0, 0.5)) == 0


def test_l_shaped_region_as_union():
    L = Region("L", (ConvexPolygon.box(0, 0, 4, 1), ConvexPolygon.box(0, 0, 1, 4)))
    s = _box_scenario({"L": L})
    for p, inside in [((3.5, 0.5), 1), ((0.5, 3.5), 1), ((0.5, 0.5), 1), ((3.0, 3.0), 0), ((1.5, 1.5), 0)]:
        assert _region_truth(s, L, p) == inside, p


# ---------------------------------------------------------------------------
# formulas over pinned positions


def _points(*label_sets):
    return [VENN_POINTS[frozenset(s)] for s in label_sets]


def test_conjunction_pinned():
    s = venn_scenario()
    assert formula_feasible(s, _points("AB"), "A & B")
    assert not formula_feasible(s, _points("A"), "A & B")


def test_eventually_window():
    s = venn_scenario()
    pts = _points("", "", "A")
    assert formula_feasible(s, pts, "F[0,2] A")
    assert not formula_feasible(s, pts, "F[0,1] A")
    assert not formula_feasible(s, pts, "F[0,2] B")


def test_until_ordering():
    s = venn_scenario()
    assert formula_feasible(s, _points("", "", "A", "B"), "!B U[0,3] A")
    assert not formula_feasible(s, _points("", "B", "A", ""), "!B U[0,3] A")
    # strict: the left operand must hold on every sample before the witness
    assert not formula_feasible(s, _points("B", "A"), "C U[1,1] A")


def test_formula_matches_evaluation_on_random_cases():
    s = venn_scenario()
    rng = random.Random(5)
    atoms = ("A", "B", "C")
    subsets = list(VENN_POINTS)
    seen = set()
    for _ in range(60):
        f = random_formula(rng, atoms, 3, 6)
        trace = [rng.choice(subsets) for _ in range(7)]
        want = mtl.evaluate(f, mtl.Trace(trace, atoms), 0)
        got = formula_feasible(s, [VENN_POINTS[k] for k in trace], f)
        assert got == want, mtl.to_text(f)
        seen.add(want)
    assert seen == {True, False}


def test_memoized_subformulas():
    s = venn_scenario()
    ctx = pinned_context(s, _points("A", "B", "C", "", "A"))
    f = prepare("F[0,2] A & G[0,2] (A | B)", 1.0, 4)
    encode_formula(ctx, f, 0)
    size = (ctx.model.num_vars, ctx.model.num_rows)
    encode_formula(ctx, f, 0)
    encode_formula(ctx, prepare("F[0,2] A", 1.0, 4), 0)
    assert (ctx.model.num_vars, ctx.model.num_rows) == size


def test_release_and_non_nnf_rejected():
    s = venn_scenario()
    ctx = pinned_context(s, _points("A", "A", "A"))
    with pytest.raises(EncodingError):
        encode_formula(ctx, mtl.parse("A R[0,2] B"), 0)
    with pytest.raises(EncodingError):
        encode_formula(ctx, mtl.parse("!(A & B)"), 0)
    with pytest.raises(mtl.HorizonError):
        encode_formula(ctx, mtl.parse("F[0,5] A"), 0)
    with pytest.raises(EncodingError, match="unknown"):
        encode_formula(ctx, mtl.parse("D"), 0)


# ---------------------------------------------------------------------------
# whole models


def _tally(scenario, names, t):
    """Distinct halfspaces needed for ``names`` (and obstacles) at sample ``t``."""
    polys = [p for n in names for p in scenario.regions[n].polygons] + scenario.obstacles_at(t)
    keys = set()
    for p in polys:
        v = p.vertices
        for i in range(len(v)):
            a, b = v[i], v[(i + 1) % len(v)]
            n = np.array([b[1] - a[1], a[0] - b[0]])
            n /= np.linalg.norm(n)
            keys.add((round(n[0], 9), round(n[1], 9), round(float(n @ a), 9)))
    return len(keys)


def test_halfspace_binary_count_matches_tally():
    s = bundled_scenario("workspace1")
    N = 6
    enc = build(s, N, "G[0,3] (!O | A | B)")
    want = sum(_tally(s, ("A", "B"), t) for t in range(N + 1))
    assert enc.binary_counts["halfspace"] == want
    assert enc.model.num_binary == want


def test_binary_count_without_shared_edges():
    regions = {
        "A": Region("A", (ConvexPolygon.box(1, 1, 2, 2),)),
        "B": Region("B", (ConvexPolygon.box(3.5, 3.5, 4.5, 4.7),)),
    }
    s = _box_scenario(regions, [ConvexPolygon.box(6.2, 6.3, 7.1, 7.4)])
    N = 4
    enc = build(s, N, "G[0,4] (!O & (A | B | !A))")
    assert enc.binary_counts["halfspace"] == 4 * 3 * (N + 1)
    assert enc.binary_counts["move"] == 5 * N


def test_mode_binary_count():
    s = bundled_scenario("workspace1")
    car = discretize(car_pwa(default_heading_nodes(6), workspace=s.bounds), s.dt)
    enc = build(s, 4, "F[0,2] A", system=car)
    assert enc.binary_counts["mode"] == 6 * 4


def test_big_m_dominates_residuals_on_bundled_models():
    for name in ("workspace1", "workspace2"):
        s = bundled_scenario(name)
        enc = build(s, 8, "G[0,4] !O & F[0,4] (A | B | C)")
        ctx = enc.ctx
        for (hs, _t), z in ctx.z.items():
            spread = np.max(np.abs(s.corners @ np.asarray(hs.h) - hs.k))
            assert ctx.big_m[enc.model.var_names[z]] >= spread + s.eps


def test_trivial_spec_has_zero_cost():
    s = grid_scenario(4, 4, (1, 1), {"A": [(3, 3, 3, 3)]})
    enc = build(s, 3, "true")
    sol = branch_and_bound(enc.model)
    assert sol.status == "optimal" and sol.objective == pytest.approx(0)
    _x, u, _m = enc.decode(sol.x)
    assert np.allclose(u, 0)


def test_unreachable_region_is_infeasible():
    s = grid_scenario(6, 1, (0, 0), {"A": [(5, 0, 5, 0)]})
    assert branch_and_bound(build(s, 4, "F[0,4] A").model).status == "infeasible"
    assert branch_and_bound(build(s, 5, "F[0,5] A").model).status == "optimal"


# ---------------------------------------------------------------------------
# piecewise affine dynamics


def _lti_car_at(node_index, n_nodes=6):
    car = car_pwa(default_heading_nodes(n_nodes), workspace=(0, 0, 8, 8))
    return car, car.modes[node_index], car.intervals[node_index]


def test_single_mode_pwa_equals_linear_model():
    s = bundled_scenario("workspace1")
    car, mode, _iv = _lti_car_at(0)
    single = PwaSystem([mode], [(-math.pi, math.pi)], heading_index=car.heading_index)
    a = build(s, 4, "F[0,2] A", system=discretize(mode, s.dt))
    b = build(s, 4, "F[0,2] A", system=discretize(single, s.dt))
    ra, rb = branch_and_bound(a.model), branch_and_bound(b.model)
    assert ra.status == rb.status
    if ra.x is not None:
        assert ra.objective == pytest.approx(rb.objective, abs=1e-6)


def test_forced_mode_matches_sector_restricted_linear_model():
    s = Scenario((0, 0, 8, 8), {"A": Region("A", (ConvexPolygon.box(3, 0, 4, 1),))}, [], [],
                 {"model": "car"}, (0.5, 0.5, 0.0), 0.5, inflation=0.0)
    car = discretize(car_pwa(default_heading_nodes(6), workspace=s.bounds), s.dt)
    j = car.mode_index(0.0)
    lo, hi = car.intervals[j]
    N = 6
    pwa = build(s, N, "F[0,3] A", system=car)
    for sel in pwa.ctx.modes:
        for k, v in enumerate(sel):
            pwa.model.fix(v, 1.0 if k == j else 0.0)
    mode = car.modes[j]
    x_lb, x_ub = mode.x_lb.copy(), mode.x_ub.copy()
    x_lb[car.heading_index], x_ub[car.heading_index] = lo, hi
    lti = LinearSystem(mode.A, mode.B, c=mode.c, domain="discrete", dt=s.dt, x_lb=x_lb, x_ub=x_ub,
                       u_lb=mode.u_lb, u_ub=mode.u_ub, C=mode.C, state_names=mode.state_names,
                       input_names=mode.input_names)
    ref = build(s, N, "F[0,3] A", system=lti)
    # the last state is not tied to a mode; restrict its heading as well
    th = int(pwa.ctx.x[N][car.heading_index])
    pwa.model.lb[th], pwa.model.ub[th] = max(pwa.model.lb[th], lo), min(pwa.model.ub[th], hi)
    a, b = branch_and_bound(pwa.model), branch_and_bound(ref.model)
    assert a.status == b.status == "optimal"
    assert a.objective == pytest.approx(b.objective, abs=1e-6)


def test_pwa_needs_discrete_system():
    s = bundled_scenario("workspace1")
    ctx = EncodingContext(s, 2, MilpModel())
    with pytest.raises(EncodingError):
        encode_pwa_dynamics(ctx, car_pwa(default_heading_nodes(6)), [0, 0, 0], 2)
    with pytest.raises(EncodingError):
        encode_dynamics(ctx, vehicle_model({"model": "quadrotor"}, s.bounds, s.dt), [0, 0], 2)

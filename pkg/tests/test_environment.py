import math

import numpy as np
import pytest

from mtlplan.environment import (
    ConvexPolygon, Halfspace, MovingObstacle, Region, Scenario, ScenarioError, bundled_scenario,
    halfspaces_of, inflate, label, label_trace, load_scenario, obstacle_at, scenario_from_dict,
)

SQUARE = ConvexPolygon.box(0, 0, 1, 1)


def _winding_inside(vertices, p) -> bool:
    """Crossing-number point-in-polygon test, independent of halfspaces."""
    inside = False
    n = len(vertices)
    for i in range(n):
        (x1, y1), (x2, y2) = vertices[i], vertices[(i + 1) % n]
        if (y1 > p[1]) != (y2 > p[1]):
            xc = x1 + (p[1] - y1) * (x2 - x1) / (y2 - y1)
            if p[0] < xc:
                inside = not inside
    return inside


def test_unit_square_halfspaces():
    got = {(tuple(np.round(h.h, 12)), round(h.k, 12)) for h in halfspaces_of(SQUARE)}
    assert got == {((0.0, -1.0), 0.0), ((1.0, 0.0), 1.0), ((0.0, 1.0), 1.0), ((-1.0, 0.0), 0.0)}


def test_triangle_hypotenuse_halfspace():
    tri = ConvexPolygon([(0, 0), (2, 0), (0, 2)])
    hs = halfspaces_of(tri)
    s = 1 / math.sqrt(2)
    diag = [h for h in hs if h.h[0] > 0 and h.h[1] > 0]
    assert len(diag) == 1
    assert np.allclose(diag[0].h, (s, s)) and math.isclose(diag[0].k, math.sqrt(2))
    # incident vertices lie on their edges; all vertices satisfy every halfspace
    for i, h in enumerate(hs):
        a, b = tri.vertices[i], tri.vertices[(i + 1) % 3]
        assert abs(h.value(a)) < 1e-12 and abs(h.value(b)) < 1e-12
        assert all(h.value(v) <= 1e-12 for v in tri.vertices)


def test_centroid_strictly_inside():
    rng = np.random.default_rng(0)
    for _ in range(50):
        pts = rng.uniform(-5, 5, (8, 2))
        from scipy.spatial import ConvexHull

        hull = pts[ConvexHull(pts).vertices]
        p = ConvexPolygon(hull)
        assert all(h.value(p.centroid) < 0 for h in p.halfspaces)


def test_halfspace_membership_matches_crossing_test():
    rng = np.random.default_rng(1)
    polys = [SQUARE, ConvexPolygon([(0, 0), (2, 0), (0, 2)]),
             ConvexPolygon([(1, 0), (3, 1), (2, 3), (0, 2)])]
    for p in polys:
        lo, hi = p.vertices.min(0) - 0.5, p.vertices.max(0) + 0.5
        for q in rng.uniform(lo, hi, (10_000, 2)):
            if min(abs(h.value(q)) for h in p.halfspaces) < 1e-9:
                continue
            assert p.contains(q) == _winding_inside(p.vertices, q)


def test_degenerate_polygons_rejected():
    with pytest.raises(ValueError):
        ConvexPolygon([(0, 0), (1, 1), (2, 2)])
    with pytest.raises(ValueError):
        ConvexPolygon([(0, 0), (2, 0), (1, 0.5), (2, 2), (0, 2)])
    with pytest.raises(ValueError):
        Halfspace((0, 0), 1)


def test_clockwise_input_is_reoriented():
    p = ConvexPolygon([(0, 0), (0, 1), (1, 1), (1, 0)])
    assert p.contains((0.5, 0.5)) and not p.contains((1.5, 0.5))


def test_inflate():
    assert inflate(SQUARE, 0) == SQUARE
    big = inflate(SQUARE, 0.1)
    assert np.allclose(sorted(map(tuple, big.vertices)),
                       sorted([(-0.1, -0.1), (1.1, -0.1), (1.1, 1.1), (-0.1, 1.1)]))
    assert big.contains((1.05, 0.5)) and not SQUARE.contains((1.05, 0.5))
    assert all(big.contains(v) for v in SQUARE.vertices)
    with pytest.raises(ValueError):
        inflate(SQUARE, -1)


def test_inflate_monotone():
    tri = ConvexPolygon([(0, 0), (2, 0), (0.5, 2)])
    prev = tri
    for r in (0.05, 0.2, 0.7):
        cur = inflate(tri, r)
        assert all(cur.contains(v, 1e-12) for v in prev.vertices)
        prev = cur


def test_moving_obstacle_interpolation():
    o = MovingObstacle(SQUARE, ((0.0, (0, 0)), (10.0, (10, 0))))
    assert np.allclose(obstacle_at(o, 10, 0.5).vertices, SQUARE.translate((5, 0)).vertices)
    assert obstacle_at(o, 0, 0.5) == SQUARE
    with pytest.raises(ValueError):
        obstacle_at(o, 21, 0.5)
    held = MovingObstacle(SQUARE, ((0.0, (0, 0)), (10.0, (10, 0))), hold_last=True)
    assert np.allclose(obstacle_at(held, 30, 0.5).vertices, SQUARE.translate((10, 0)).vertices)


def test_keyframes_validated():
    with pytest.raises(ValueError):
        MovingObstacle(SQUARE, ((1.0, (0, 0)), (2.0, (1, 0))))
    with pytest.raises(ValueError):
        MovingObstacle(SQUARE, ((0.0, (0, 0)), (0.0, (1, 0))))


def test_workspace1_obstacle_moves_right_to_left():
    s = bundled_scenario("workspace1")
    o = s.moving_obstacles[0]
    xs = [obstacle_at(o, t, s.dt).vertices[:, 0].min() for t in range(21)]
    assert all(b < a for a, b in zip(xs, xs[1:]))


def _scenario(**kw):
    base = dict(
        bounds=(0, 0, 10, 10),
        regions={"A": Region("A", (ConvexPolygon.box(1, 1, 3, 3),))},
        static_obstacles=[ConvexPolygon.box(5, 5, 6, 6)],
        moving_obstacles=[MovingObstacle(ConvexPolygon.box(0, 8, 1, 9), ((0.0, (0, 0)), (10.0, (8, 0))))],
        vehicle={"model": "quadrotor", "v_max": 1.0},
        x0=(0.5, 0.5),
        dt=0.5,
    )
    base.update(kw)
    return Scenario(**base)


def test_label_examples():
    s = _scenario()
    assert label((2, 2), 0, s) == {"A"}
    assert label((8, 2), 0, s) == set()
    assert "O" in label((5.5, 5.5), 3, s)
    # the moving obstacle starts at (0.5, 8.5) and has left by t = 20 (10 s)
    assert "O" in label((0.5, 8.5), 0, s)
    assert "O" not in label((0.5, 8.5), 20, s)


def test_label_uses_inflation_margin():
    s = _scenario()
    assert s.margin == pytest.approx(0.25)
    assert "O" in label((6.2, 5.5), 0, s)
    assert "O" not in label((6.3, 5.5), 0, s)
    assert "O" not in label((6.2, 5.5), 0, _scenario(inflation=0.0))


def test_label_trace_is_deterministic():
    s = bundled_scenario("workspace1")
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 8, (200, 2))
    assert label_trace(pts, s) == label_trace(pts, s)


def test_scenario_invariants():
    with pytest.raises(ScenarioError):
        _scenario(x0=(11, 1))
    with pytest.raises(ScenarioError):
        _scenario(x0=(5.5, 5.5))
    with pytest.raises(ScenarioError):
        _scenario(dt=0)
    with pytest.raises(ScenarioError):
        _scenario(inflation=-0.1)


def test_bundled_scenarios_load():
    for name in ("workspace1", "workspace2"):
        s = bundled_scenario(name)
        assert s.N and s.dt == 0.5
        assert set(s.specs) and s.specification() == s.specs[s.spec]
        assert s.vehicle["model"] == "quadrotor"


def test_specification_lookup():
    s = bundled_scenario("workspace1")
    assert s.specification("phi2").endswith("(!B U[0,inf] A)")
    assert s.specification("F A") == "F A"


def test_schema_error_names_the_field(tmp_path):
    doc = {
        "workspace": {"xmin": 0, "ymin": 0, "xmax": 1, "ymax": 1},
        "vehicle": {"model": "quadrotor"},
        "x0": [0.5, 0.5],
        "dt": 0.5,
        "regions": {"A": [[[0, 0], [1, 0], ["x", 1]]]},
    }
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(doc)
    assert err.value.path == "regions/A/0/2/0"
    doc["regions"] = {"A": [[[0, 0], [1, 1], [2, 2]]]}
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(doc)
    assert err.value.path == "regions/A/0"
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(p)


def test_obstacle_atom_reserved():
    doc = {
        "workspace": {"xmin": 0, "ymin": 0, "xmax": 1, "ymax": 1},
        "vehicle": {"model": "quadrotor"},
        "x0": [0.5, 0.5],
        "dt": 0.5,
        "regions": {"O": [[[0, 0], [1, 0], [1, 1]]]},
    }
    with pytest.raises(ScenarioError, match="reserved"):
        scenario_from_dict(doc)

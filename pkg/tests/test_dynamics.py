import math

import numpy as np
import pytest
import scipy.linalg

from mtlplan.dynamics import (
    GRAVITY, LinearSystem, PwaSystem, StateBoundError, car_dynamics, car_pwa, default_heading_nodes,
    discretize, grid_walker, planar_quadrotor, quadrotor_lti, simulate, vehicle_model,
)

DOUBLE_INTEGRATOR = LinearSystem([[0, 1], [0, 0]], [[0], [1]])


def series(M, terms=20):
    """Plain truncated Taylor series of exp(M), no scaling."""
    out = np.eye(len(M))
    term = np.eye(len(M))
    for k in range(1, terms + 1):
        term = term @ M / k
        out = out + term
    return out


def test_quadrotor_block_structure():
    sys = quadrotor_lti()
    A, B = sys.A, sys.B
    assert sys.n == 10 and sys.m == 3
    assert np.array_equal(A[0:3, 3:6], np.eye(3))
    assert np.array_equal(A[3:6, 6:8], [[0, GRAVITY], [-GRAVITY, 0], [0, 0]])
    assert np.array_equal(A[6:8, 8:10], np.eye(2))
    assert np.flatnonzero(B[:, 0]).tolist() == [5] and B[5, 0] == 1.0
    assert np.allclose(B[8:10, 1:3], np.diag([100.0, 100.0]))
    mask = np.ones_like(A, bool)
    mask[0:3, 3:6] = mask[3:6, 6:8] = mask[6:8, 8:10] = False
    assert not A[mask].any()


def test_quadrotor_parameters_fold_in():
    sys = quadrotor_lti(g=9.0, m=2.0, J=(0.1, 0.2, 0.3))
    assert sys.A[3, 7] == 9.0 and sys.A[4, 6] == -9.0
    assert sys.B[5, 0] == 0.5 and np.allclose(sys.B[8:10, 1:3], np.diag([10.0, 5.0]))
    for bad in (dict(m=0), dict(J=(0.1, -1, 0.1)), dict(J=[[1, 0.1, 0], [0, 1, 0], [0, 0, 1]])):
        with pytest.raises(ValueError):
            quadrotor_lti(**bad)


def test_planar_reduction_drops_altitude():
    p = planar_quadrotor(quadrotor_lti())
    assert p.state_names == ("x", "y", "vx", "vy", "roll", "pitch", "p", "q")
    assert p.input_names == ("u1", "u2")
    assert np.array_equal(p.C, np.eye(2, 8))


def test_car_modes_at_zero_and_quarter_turn():
    car = car_pwa([0, math.pi / 2, math.pi, -math.pi / 2], u1_nom=1.5)
    by_node = dict(zip(car.nodes, car.modes))
    m0 = by_node[0.0]
    assert np.allclose(m0.B, [[1, 0], [0, 0], [0, 1]])
    assert np.allclose(m0.A[:, 2], [0, 1.5, 0])
    assert np.allclose(by_node[math.pi / 2].B, [[0, 0], [1, 0], [0, 1]])


def test_car_mode_exact_at_linearization_point():
    car = car_pwa(default_heading_nodes(8), u1_nom=0.8)
    for th, mode in zip(car.nodes, car.modes):
        x = np.array([3.0, -2.0, th])
        u = np.array([0.8, 0.3])
        assert np.allclose(mode.A @ x + mode.B @ u + mode.c, car_dynamics(x, u), atol=1e-12)


def test_car_needs_four_nodes():
    with pytest.raises(ValueError):
        car_pwa([0, 1, 2])


def test_pwa_modes_partition_headings():
    car = car_pwa(default_heading_nodes(8))
    rng = np.random.default_rng(0)
    for th in np.concatenate([rng.uniform(-math.pi, math.pi, 2000), [-math.pi, 0.0],
                              [(a + b) / 2 for a, b in zip(car.nodes, car.nodes[1:])]]):
        hits = [j for j, (lo, hi) in enumerate(car.intervals) if lo <= th < hi or (hi == math.pi and th == hi)]
        assert len(hits) == 1
        assert car.mode_index(th) == hits[0]
        d = sorted(abs(th - n) for n in car.nodes)
        if d[1] - d[0] > 1e-12:
            assert hits[0] == int(np.argmin([abs(th - n) for n in car.nodes]))


def test_zoh_of_zero_matrix():
    sys = discretize(LinearSystem(np.zeros((3, 3)), np.arange(6).reshape(3, 2)), 0.25)
    assert np.array_equal(sys.A, np.eye(3))
    assert np.allclose(sys.B, 0.25 * np.arange(6).reshape(3, 2), atol=1e-15)


def test_zoh_double_integrator_closed_form():
    sys = discretize(DOUBLE_INTEGRATOR, 0.5)
    assert np.array_equal(sys.A, [[1.0, 0.5], [0.0, 1.0]])
    assert np.array_equal(sys.B.ravel(), [0.125, 0.5])


def test_zoh_quadrotor_matches_series():
    sys = quadrotor_lti()
    d = discretize(sys, 0.5)
    assert np.max(np.abs(d.A - series(sys.A * 0.5))) <= 1e-9
    aug = np.zeros((13, 13))
    aug[:10, :10], aug[:10, 10:] = sys.A, sys.B
    assert np.max(np.abs(d.B - series(aug * 0.5)[:10, 10:])) <= 1e-9


def test_zoh_agrees_with_scipy_expm_on_stiff_matrix():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(5, 5)) * 3
    B = rng.normal(size=(5, 2))
    d = discretize(LinearSystem(A, B), 0.7)
    assert np.allclose(d.A, scipy.linalg.expm(A * 0.7), rtol=1e-10, atol=1e-10)


def test_zoh_semigroup():
    rng = np.random.default_rng(3)
    for sys in (quadrotor_lti(), LinearSystem(rng.normal(size=(4, 4)), rng.normal(size=(4, 1)))):
        a = discretize(sys, 0.3).A
        b = discretize(sys, 0.45).A
        assert np.allclose(discretize(sys, 0.75).A, a @ b, atol=1e-9, rtol=0)


def test_discretize_rejects_discrete_or_bad_dt():
    with pytest.raises(ValueError):
        discretize(DOUBLE_INTEGRATOR, 0)
    with pytest.raises(ValueError):
        discretize(discretize(DOUBLE_INTEGRATOR, 0.5), 0.5)


def test_simulate_examples():
    sys = discretize(DOUBLE_INTEGRATOR, 0.5)
    assert not simulate(sys, [0, 0], np.zeros((4, 1))).any()
    xs = simulate(sys, [0, 0], np.ones((2, 1)))
    assert xs.shape == (3, 2)
    assert np.allclose(xs[2], [0.5, 1.0], atol=1e-15)


def test_simulate_superposition():
    sys = discretize(planar_quadrotor(quadrotor_lti()), 0.5)
    rng = np.random.default_rng(4)
    for _ in range(20):
        x1, x2 = rng.normal(size=(2, 8))
        u1, u2 = rng.normal(size=(2, 6, 2))
        a, b = rng.normal(size=2)
        lhs = simulate(sys, a * x1 + b * x2, a * u1 + b * u2)
        rhs = a * simulate(sys, x1, u1) + b * simulate(sys, x2, u2)
        assert np.allclose(lhs, rhs, atol=1e-9, rtol=0)


def test_simulate_reports_bound_violations():
    sys = vehicle_model({"model": "quadrotor", "v_max": 1.0}, (0, 0, 4, 4), 0.5)
    x0 = np.zeros(sys.n)
    x0[:2] = 2.0
    with pytest.raises(StateBoundError, match="outside"):
        simulate(sys, x0, np.full((30, 2), sys.u_ub))
    with pytest.raises(StateBoundError, match="input"):
        simulate(sys, x0, [[1.0, 0.0]])


def test_simulate_pwa_uses_current_heading():
    car = discretize(car_pwa(default_heading_nodes(8), workspace=(-10, -10, 10, 10)), 0.1)
    xs = simulate(car, [0, 0, 0.1], [[1.0, 0.0]] * 5)
    # heading held, straight motion along the mode's direction
    assert np.allclose(xs[:, 2], 0.1)
    assert xs[-1, 0] > 0.4
    with pytest.raises(ValueError):
        simulate(car_pwa(default_heading_nodes(8)), [0, 0, 0], [[1.0, 0.0]])


def test_vehicle_models():
    q = vehicle_model({"model": "quadrotor"}, (0, 0, 8, 8), 0.5)
    assert q.domain == "discrete" and q.n == 8
    q3 = vehicle_model({"model": "quadrotor", "planar": False}, (0, 0, 8, 8), 0.5)
    assert q3.n == 10
    car = vehicle_model({"model": "car", "theta_nodes": 6}, (0, 0, 8, 8), 0.5)
    assert isinstance(car, PwaSystem) and len(car.modes) == 6
    g = vehicle_model({"model": "grid"}, (0, 0, 3, 3), 1.0)
    assert g.input_choices.shape == (5, 2)
    with pytest.raises(ValueError):
        vehicle_model({"model": "boat"}, (0, 0, 1, 1), 1.0)


def test_grid_walker_step():
    g = grid_walker((0, 0, 4, 4))
    assert np.array_equal(simulate(g, [1, 1], [[1, 0], [0, 1]])[-1], [2, 2])


def test_dimension_checks():
    with pytest.raises(ValueError):
        LinearSystem(np.zeros((2, 3)), np.zeros((2, 1)))
    with pytest.raises(ValueError):
        LinearSystem(np.zeros((2, 2)), np.zeros((2, 1)), C=np.zeros((2, 3)))

"""Vehicle models: hover-linearized quadrotor, piecewise-affine car, grid walker.

All models share :class:`LinearSystem`, an (A, B, c) triple with box bounds
on states and inputs and an output matrix ``C`` picking the planar position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

QUAD_STATES = ("x", "y", "z", "vx", "vy", "vz", "roll", "pitch", "p", "q")
QUAD_INPUTS = ("F", "u1", "u2")

DEFAULT_MASS = 1.0
DEFAULT_INERTIA = (0.01, 0.01, 0.02)
GRAVITY = 9.81


class StateBoundError(ValueError):
    pass


def _vec(v, n, name):
    v = np.full(n, float(v)) if np.isscalar(v) else np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"{name} must have length {n}")
    return v


@dataclass
class LinearSystem:
    """``x' = A x + B u + c`` (continuous) or ``x+ = A x + B u + c`` (discrete)."""

    A: np.ndarray
    B: np.ndarray
    domain: str = "continuous"
    dt: float | None = None
    x_lb: np.ndarray | None = None
    x_ub: np.ndarray | None = None
    u_lb: np.ndarray | None = None
    u_ub: np.ndarray | None = None
    C: np.ndarray | None = None
    c: np.ndarray | None = None
    state_names: tuple = ()
    input_names: tuple = ()
    # finite admissible input set (rows), or None for the whole box
    input_choices: np.ndarray | None = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.asarray(self.B, dtype=float).reshape(self.A.shape[0], -1)
        n, m = self.n, self.m
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        if self.domain not in ("continuous", "discrete"):
            raise ValueError("domain must be 'continuous' or 'discrete'")
        if self.domain == "discrete" and not (self.dt and self.dt > 0):
            raise ValueError("discrete system needs dt > 0")
        self.x_lb = _vec(-np.inf if self.x_lb is None else self.x_lb, n, "x_lb")
        self.x_ub = _vec(np.inf if self.x_ub is None else self.x_ub, n, "x_ub")
        self.u_lb = _vec(-np.inf if self.u_lb is None else self.u_lb, m, "u_lb")
        self.u_ub = _vec(np.inf if self.u_ub is None else self.u_ub, m, "u_ub")
        self.c = np.zeros(n) if self.c is None else _vec(self.c, n, "c")
        if self.C is None:
            self.C = np.eye(2, n) if n >= 2 else np.eye(1, n)
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if self.C.shape[1] != n:
            raise ValueError("C must have one column per state")
        if not self.state_names:
            self.state_names = tuple(f"x{i}" for i in range(n))
        if not self.input_names:
            self.input_names = tuple(f"u{i}" for i in range(m))
        if self.input_choices is not None:
            self.input_choices = np.atleast_2d(np.asarray(self.input_choices, dtype=float))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, x, u):
        return self.A @ x + self.B @ u + self.c

    def reduce(self, states, inputs) -> "LinearSystem":
        """Restrict to a subset of states and inputs (by name or index)."""
        si = [self.state_names.index(s) if isinstance(s, str) else s for s in states]
        ui = [self.input_names.index(u) if isinstance(u, str) else u for u in inputs]
        return replace(
            self,
            A=self.A[np.ix_(si, si)],
            B=self.B[np.ix_(si, ui)],
            x_lb=self.x_lb[si],
            x_ub=self.x_ub[si],
            u_lb=self.u_lb[ui],
            u_ub=self.u_ub[ui],
            C=self.C[:, si],
            c=self.c[si],
            state_names=tuple(self.state_names[i] for i in si),
            input_names=tuple(self.input_names[i] for i in ui),
            input_choices=None if self.input_choices is None else self.input_choices[:, ui],
        )

    def __str__(self):
        with np.printoptions(precision=4, suppress=True, linewidth=120):
            head = f"LinearSystem({self.domain}" + (f", dt={self.dt}" if self.dt else "") + ")"
            return f"{head}\nstates {self.state_names}\ninputs {self.input_names}\nA =\n{self.A}\nB =\n{self.B}"


@dataclass
class PwaSystem:
    """Affine modes selected by heading; ``intervals[j]`` is the half-open
    validity range ``[lo, hi)`` of ``modes[j]`` (the last one is closed at pi)."""

    modes: list
    intervals: list
    heading_index: int = 2
    nodes: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.modes) != len(self.intervals):
            raise ValueError("one validity interval per mode")
        ivs = self.intervals
        if abs(ivs[0][0] + math.pi) > 1e-12 or abs(ivs[-1][1] - math.pi) > 1e-12:
            raise ValueError("validity intervals must cover [-pi, pi)")
        for (a0, b0), (a1, b1) in zip(ivs, ivs[1:]):
            if abs(b0 - a1) > 1e-12 or not a0 < b0:
                raise ValueError("validity intervals must partition [-pi, pi) in order")

    @property
    def domain(self) -> str:
        return self.modes[0].domain

    @property
    def dt(self):
        return self.modes[0].dt

    @property
    def n(self):
        return self.modes[0].n

    @property
    def m(self):
        return self.modes[0].m

    def mode_index(self, theta: float) -> int:
        theta = float(theta)
        for j, (lo, hi) in enumerate(self.intervals):
            if lo <= theta < hi:
                return j
        if theta == self.intervals[-1][1]:
            return len(self.intervals) - 1
        raise ValueError(f"heading {theta} outside [-pi, pi]")

    def mode_valid(self, j: int, theta: float, tol: float = 1e-6) -> bool:
        lo, hi = self.intervals[j]
        return lo - tol <= theta <= hi + tol


def quadrotor_lti(g: float = GRAVITY, m: float = DEFAULT_MASS, J=DEFAULT_INERTIA, **bounds) -> LinearSystem:
    """Quadrotor linearized about hover with zero yaw (10 states, 3 inputs).

    States ``(x, y, z, vx, vy, vz, roll, pitch, p, q)``; inputs are the thrust
    deviation ``F`` and the roll/pitch torques ``u1, u2``.  Keyword ``bounds``
    are forwarded to :func:`quadrotor_bounds`.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim == 2:
        if np.any(J != np.diag(np.diag(J))):
            raise ValueError("inertia must be diagonal")
        J = np.diag(J)
    if not m > 0:
        raise ValueError("mass must be positive")
    if J.shape != (3,) or np.any(J <= 0):
        raise ValueError("inertia must be three positive diagonal entries")
    A = np.zeros((10, 10))
    A[0:3, 3:6] = np.eye(3)
    A[3:6, 6:8] = [[0, g], [-g, 0], [0, 0]]
    A[6:8, 8:10] = np.eye(2)
    B = np.zeros((10, 3))
    B[5, 0] = 1 / m
    # roll/pitch torques only; the yaw torque column is dropped with psi and r
    B[8:10, 1:3] = (np.eye(2, 3) @ np.diag(1 / J))[:, :2]
    sys = LinearSystem(A, B, state_names=QUAD_STATES, input_names=QUAD_INPUTS)
    if bounds:
        sys = quadrotor_bounds(sys, **bounds)
    return sys


def quadrotor_bounds(
    sys: LinearSystem,
    workspace=None,
    z_range=(0.0, 5.0),
    v_max: float = 2.0,
    tilt_max: float = 0.3,
    rate_max: float = 2.0,
    torque_max: float = 0.05,
    thrust_max: float = 5.0,
) -> LinearSystem:
    xmin, ymin, xmax, ymax = workspace if workspace is not None else (-np.inf, -np.inf, np.inf, np.inf)
    x_lb = [xmin, ymin, z_range[0], -v_max, -v_max, -v_max, -tilt_max, -tilt_max, -rate_max, -rate_max]
    x_ub = [xmax, ymax, z_range[1], v_max, v_max, v_max, tilt_max, tilt_max, rate_max, rate_max]
    return replace(
        sys,
        x_lb=np.array(x_lb, dtype=float),
        x_ub=np.array(x_ub, dtype=float),
        u_lb=np.array([-thrust_max, -torque_max, -torque_max]),
        u_ub=np.array([thrust_max, torque_max, torque_max]),
    )


def planar_quadrotor(sys: LinearSystem) -> LinearSystem:
    """Drop the decoupled altitude chain (z, vz, F)."""
    return sys.reduce(("x", "y", "vx", "vy", "roll", "pitch", "p", "q"), ("u1", "u2"))


def car_pwa(theta_nodes, u1_nom: float = 1.0, **bounds) -> PwaSystem:
    """Car model linearized at each heading in ``theta_nodes``.

    Each mode is exact at ``(theta_hat, u1_nom)``: the affine offset is
    ``f(x_hat, u_hat) - A x_hat - B u_hat``.  A heading selects the mode of
    the nearest node; validity intervals are split at node midpoints.
    """
    nodes = sorted(float(t) for t in theta_nodes)
    if len(nodes) < 4:
        raise ValueError("car model needs at least 4 heading nodes")
    if not u1_nom > 0:
        raise ValueError("nominal speed must be positive")
    if nodes[0] < -math.pi or nodes[-1] > math.pi:
        raise ValueError("heading nodes must lie in [-pi, pi]")
    x_lb, x_ub, u_lb, u_ub = _car_bounds(**bounds)
    modes = []
    for th in nodes:
        s, c = math.sin(th), math.cos(th)
        A = np.array([[0, 0, -u1_nom * s], [0, 0, u1_nom * c], [0, 0, 0]])
        B = np.array([[c, 0], [s, 0], [0, 1]])
        x_hat = np.array([0.0, 0.0, th])
        u_hat = np.array([u1_nom, 0.0])
        f_hat = np.array([u1_nom * c, u1_nom * s, 0.0])
        offset = f_hat - A @ x_hat - B @ u_hat
        modes.append(
            LinearSystem(
                A, B, c=offset, x_lb=x_lb, x_ub=x_ub, u_lb=u_lb, u_ub=u_ub,
                state_names=("x", "y", "theta"), input_names=("u1", "u2"),
            )
        )
    cuts = [-math.pi] + [(a + b) / 2 for a, b in zip(nodes, nodes[1:])] + [math.pi]
    intervals = list(zip(cuts[:-1], cuts[1:]))
    return PwaSystem(modes, intervals, heading_index=2, nodes=nodes)


def _car_bounds(workspace=None, v_max=1.0, omega_max=1.0, u1_min=None):
    xmin, ymin, xmax, ymax = workspace if workspace is not None else (-np.inf, -np.inf, np.inf, np.inf)
    x_lb = np.array([xmin, ymin, -math.pi])
    x_ub = np.array([xmax, ymax, math.pi])
    u_lb = np.array([-v_max if u1_min is None else u1_min, -omega_max])
    u_ub = np.array([v_max, omega_max])
    return x_lb, x_ub, u_lb, u_ub


def car_dynamics(x, u):
    """Nonlinear car vector field."""
    return np.array([math.cos(x[2]) * u[0], math.sin(x[2]) * u[0], u[1]])


def default_heading_nodes(n: int = 8) -> list[float]:
    """``n`` equally spaced sector centres in ``(-pi, pi)``."""
    w = 2 * math.pi / n
    return [-math.pi + (j + 0.5) * w for j in range(n)]


def grid_walker(workspace=None) -> LinearSystem:
    """Single integrator on the integer grid: stay or one 4-neighbour move per step."""
    moves = np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float)
    xmin, ymin, xmax, ymax = workspace if workspace is not None else (-np.inf, -np.inf, np.inf, np.inf)
    return LinearSystem(
        np.eye(2), np.eye(2), domain="discrete", dt=1.0, x_lb=[xmin, ymin], x_ub=[xmax, ymax],
        u_lb=[-1, -1], u_ub=[1, 1], state_names=("x", "y"), input_names=("ux", "uy"),
        input_choices=moves,
    )


def expm(M: np.ndarray, terms: int = 20) -> np.ndarray:
    """Matrix exponential by scaling and squaring of a truncated Taylor series."""
    M = np.asarray(M, dtype=float)
    norm = np.linalg.norm(M, 1)
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    X = M / (2**s)
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms + 1):
        term = term @ X / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def discretize(sys, dt: float):
    """Zero-order-hold discretization (exact for piecewise-constant inputs)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if isinstance(sys, PwaSystem):
        return replace(sys, modes=[discretize(m, dt) for m in sys.modes])
    if sys.domain != "continuous":
        raise ValueError("system is already discrete")
    n, m = sys.n, sys.m
    aug = np.zeros((n + m + 1, n + m + 1))
    aug[:n, :n] = sys.A
    aug[:n, n : n + m] = sys.B
    aug[:n, n + m] = sys.c
    E = expm(aug * dt)
    return replace(
        sys, A=E[:n, :n], B=E[:n, n : n + m], c=E[:n, n + m], domain="discrete", dt=dt
    )


def simulate(sys, x0, u_seq, modes=None, check_bounds: bool = True, tol: float = 1e-6) -> np.ndarray:
    """Roll out a discrete system; returns ``len(u_seq) + 1`` states.

    PWA systems pick the mode of the current heading unless ``modes`` is
    given.  State or input bound violations beyond ``tol`` raise
    :class:`StateBoundError` when ``check_bounds`` is set.
    """
    if sys.domain != "discrete":
        raise ValueError("simulate needs a discrete-time system")
    u_seq = np.atleast_2d(np.asarray(u_seq, dtype=float))
    if u_seq.size == 0:
        u_seq = np.zeros((0, sys.m))
    x = np.asarray(x0, dtype=float).copy()
    out = [x]
    for t, u in enumerate(u_seq):
        if isinstance(sys, PwaSystem):
            j = modes[t] if modes is not None else sys.mode_index(x[sys.heading_index])
            mode = sys.modes[j]
        else:
            mode = sys
        if check_bounds:
            _check(mode, x, u, t, tol)
        x = mode.step(x, u)
        out.append(x)
    if check_bounds and len(u_seq):
        mode = sys.modes[0] if isinstance(sys, PwaSystem) else sys
        _check(mode, x, None, len(u_seq), tol)
    return np.array(out)


def _check(sys: LinearSystem, x, u, t, tol):
    bad = np.flatnonzero((x < sys.x_lb - tol) | (x > sys.x_ub + tol))
    if bad.size:
        i = bad[0]
        raise StateBoundError(
            f"state {sys.state_names[i]} = {x[i]:.6g} outside [{sys.x_lb[i]:.6g}, {sys.x_ub[i]:.6g}] at step {t}"
        )
    if u is not None:
        bad = np.flatnonzero((u < sys.u_lb - tol) | (u > sys.u_ub + tol))
        if bad.size:
            i = bad[0]
            raise StateBoundError(
                f"input {sys.input_names[i]} = {u[i]:.6g} outside [{sys.u_lb[i]:.6g}, {sys.u_ub[i]:.6g}] at step {t}"
            )


def vehicle_model(vehicle: dict, workspace, dt: float):
    """Discrete-time model described by a scenario's ``vehicle`` block."""
    cfg = dict(vehicle)
    kind = cfg.pop("model")
    if kind == "quadrotor":
        planar = cfg.pop("planar", True)
        g = cfg.pop("g", GRAVITY)
        mass = cfg.pop("mass", DEFAULT_MASS)
        J = cfg.pop("inertia", DEFAULT_INERTIA)
        z_range = tuple(cfg.pop("z_range", (0.0, 5.0)))
        sys = quadrotor_lti(g, mass, J, workspace=workspace, z_range=z_range, **cfg)
        if planar:
            sys = planar_quadrotor(sys)
        return discretize(sys, dt)
    if kind == "car":
        nodes = cfg.pop("theta_nodes", 8)
        if isinstance(nodes, int):
            nodes = default_heading_nodes(nodes)
        u1_nom = cfg.pop("u1_nom", 1.0)
        return discretize(car_pwa(nodes, u1_nom, workspace=workspace, **cfg), dt)
    if kind == "grid":
        return grid_walker(workspace)
    raise ValueError(f"unknown vehicle model {kind!r}")


def initial_state(sys, x0) -> np.ndarray:
    """Pad a position-only start to a full state (other components zero)."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape == (sys.n,):
        return x0
    if x0.shape == (2,):
        mode = sys.modes[0] if isinstance(sys, PwaSystem) else sys
        C = mode.C
        full = np.zeros(sys.n)
        full[np.argmax(C[0])] = x0[0]
        full[np.argmax(C[1])] = x0[1]
        return full
    raise ValueError(f"initial state must have 2 or {sys.n} components")

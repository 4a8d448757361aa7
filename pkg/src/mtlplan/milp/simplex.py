"""Bounded-variable revised dual simplex on sparse LU factors.

Rows ``row_lb <= A x <= row_ub`` are turned into equalities with one
logical per row, ``A x - r = 0``, so every column (structural or logical)
carries its own bounds and the logicals form the starting basis.

With all bounds finite, placing each nonbasic at the bound that matches the
sign of its reduced cost makes any basis dual feasible, and the dual simplex
runs directly.  Otherwise a first phase solves the auxiliary box problem
(free columns in [-1, 1], one-sided ones in [0, 1] or [-1, 0], boxed ones
fixed at 0) whose optimal basis is dual feasible for the original problem.

The basis inverse is an LU factorization (SuperLU) followed by a file of
product-form eta updates; it is refactored every ``refactor_every`` pivots.
The ratio test is the bound-flipping ("long step") one, which lets boxed
columns such as binaries flip bounds without pivoting.  After a run of
degenerate pivots the method falls back to Bland's smallest-index rule.
Costs are first shifted by small deterministic amounts against dual
degeneracy; the shift shrinks over passes and the last pass uses the true
costs.
"""

from __future__ import annotations

import math
import time

import numpy as np
import scipy.sparse as sp
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .model import LpSolution, MilpModel

PRIMAL_TOL = 1e-7
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-7
PERTURB = 1e-6


class NumericalError(RuntimeError):
    pass


class TimeLimitReached(Exception):
    """Raised when a solve passes the engine's ``deadline``."""


class DualSimplex:
    """Warm-startable LP engine for ``min c@x, row_lb <= A@x <= row_ub, lb <= x <= ub``."""

    def __init__(self, c, A, row_lb, row_ub, lb, ub, refactor_every: int = 64, max_iter: int | None = None):
        A = sp.csc_matrix(A, dtype=float)
        self.m, self.n = A.shape
        m, n = self.m, self.n
        self.A = A
        self.AT = sp.csr_matrix(A.T)
        self.K = sp.hstack([A, -sp.identity(m, format="csc")], format="csc")
        self.cost = np.concatenate([np.asarray(c, dtype=float), np.zeros(m)])
        self.lo = np.concatenate([np.asarray(lb, dtype=float), np.asarray(row_lb, dtype=float)])
        self.hi = np.concatenate([np.asarray(ub, dtype=float), np.asarray(row_ub, dtype=float)])
        if np.any(self.lo > self.hi):
            j = int(np.flatnonzero(self.lo > self.hi)[0])
            raise ValueError(f"column {j} has empty bounds")
        self.refactor_every = refactor_every
        self.max_iter = max_iter if max_iter is not None else 50 * (m + n) + 1000
        self.head = np.arange(n, n + m)
        self.deadline: float | None = None  # perf_counter value
        self.is_basic = np.zeros(n + m, dtype=bool)
        self.is_basic[self.head] = True
        self.at_upper = np.zeros(n + m, dtype=bool)
        self.x = np.zeros(n + m)
        self.d = self.cost.copy()
        self.iterations = 0
        self._lu = None
        self._etas: list = []
        self._factor()
        self._place_nonbasics()

    # -- basis factorization ------------------------------------------------
    def _factor(self):
        self._etas = []
        if self.m == 0:
            self._lu = None
            return
        B = self.K[:, self.head]
        try:
            self._lu = spla.splu(sp.csc_matrix(B), permc_spec="COLAMD")
        except RuntimeError:
            self._repair_basis()

    def _repair_basis(self):
        """Swap dependent basic columns for logicals of uncovered rows."""
        # basic logicals are unit columns, so only the structural columns on
        # the remaining rows can be dependent
        struct = np.flatnonzero(self.head < self.n)
        covered = np.zeros(self.m, dtype=bool)
        covered[self.head[self.head >= self.n] - self.n] = True
        rows = np.flatnonzero(~covered)
        S = self.A[:, self.head[struct]].toarray()[rows]
        if len(struct):
            r, perm = sla.qr(S, mode="r", pivoting=True)
            diag = np.abs(np.diag(r))
            rank = int(np.sum(diag > 1e-9 * max(1.0, diag[0] if len(diag) else 1.0)))
        else:
            perm, rank = np.zeros(0, dtype=np.int64), 0
        keep, drop = perm[:rank], struct[perm[rank:]]
        # rows left uncovered by the kept columns: non-pivot rows of an LU
        if rank:
            _p = sla.lu(S[:, keep])[0]
            free_rows = rows[np.argmax(_p, axis=0)[rank:]]
        else:
            free_rows = rows
        for pos, i in zip(drop, free_rows):
            self.is_basic[self.head[pos]] = False
            self.head[pos] = self.n + int(i)
            self.is_basic[self.n + int(i)] = True
        self._lu = spla.splu(sp.csc_matrix(self.K[:, self.head]), permc_spec="COLAMD")
        self._etas = []
        for j in np.flatnonzero(~self.is_basic):
            self.x[j] = self._nonbasic_value(j)

    def ftran(self, v):
        if self.m == 0:
            return np.zeros(0)
        y = self._lu.solve(np.asarray(v, dtype=float))
        for p, col in self._etas:
            yp = y[p] / col[p]
            y -= yp * col
            y[p] = yp
        return y

    def btran(self, v):
        if self.m == 0:
            return np.zeros(0)
        y = np.array(v, dtype=float)
        for p, col in reversed(self._etas):
            # (E^T y)_p = (y_p - sum_{i != p} col_i y_i) / col_p
            yp = y[p]
            y[p] = (yp - (col @ y - col[p] * yp)) / col[p]
        return self._lu.solve(y, trans="T")

    def _column(self, j):
        if j < self.n:
            col = np.zeros(self.m)
            s, e = self.K.indptr[j], self.K.indptr[j + 1]
            col[self.K.indices[s:e]] = self.K.data[s:e]
            return col
        col = np.zeros(self.m)
        col[j - self.n] = -1.0
        return col

    # -- state recomputation --------------------------------------------------
    def _nonbasic_value(self, j):
        if self.lo[j] == self.hi[j]:
            return self.lo[j]
        if self.at_upper[j]:
            return self.hi[j]
        if math.isfinite(self.lo[j]):
            return self.lo[j]
        return 0.0  # free or upper-only column sitting at zero

    def _compute_primal(self):
        nb = ~self.is_basic
        xn = np.where(nb, self.x, 0.0)
        rhs = -(self.K @ xn)
        self.x[self.head] = self.ftran(rhs)

    def _compute_duals(self):
        y = self.btran(self.cost[self.head])
        self.y = y
        self.d = self.cost - np.concatenate([self.AT @ y, -y])
        self.d[self.head] = 0.0

    def _place_nonbasics(self) -> int:
        """Put nonbasics at the bound their reduced cost prefers; return the
        number of columns that cannot be made dual feasible."""
        self._compute_duals()
        bad = 0
        lo, hi, d = self.lo, self.hi, self.d
        for j in np.flatnonzero(~self.is_basic):
            if lo[j] == hi[j]:
                self.at_upper[j] = False
            elif d[j] > DUAL_TOL:
                if math.isfinite(lo[j]):
                    self.at_upper[j] = False
                else:
                    bad += 1
                    self.at_upper[j] = math.isfinite(hi[j])
            elif d[j] < -DUAL_TOL:
                if math.isfinite(hi[j]):
                    self.at_upper[j] = True
                else:
                    bad += 1
                    self.at_upper[j] = False
            else:
                self.at_upper[j] = not math.isfinite(lo[j]) and math.isfinite(hi[j])
            self.x[j] = self._nonbasic_value(j)
        self._compute_primal()
        return bad

    def _dual_infeasible(self) -> np.ndarray:
        nb = ~self.is_basic
        fixed = self.lo == self.hi
        low_bad = nb & ~fixed & ~self.at_upper & (self.d < -DUAL_TOL)
        up_bad = nb & ~fixed & self.at_upper & (self.d > DUAL_TOL)
        free = nb & ~fixed & ~np.isfinite(self.lo) & ~np.isfinite(self.hi) & (np.abs(self.d) > DUAL_TOL)
        return np.flatnonzero(low_bad | up_bad | free)

    # -- public API ---------------------------------------------------------
    def set_bounds(self, lb, ub):
        """Change structural bounds (warm start keeps the current basis)."""
        n = self.n
        self.lo[:n] = lb
        self.hi[:n] = ub
        for j in np.flatnonzero(~self.is_basic[:n]):
            if self.at_upper[j] and not math.isfinite(self.hi[j]):
                self.at_upper[j] = False
            self.x[j] = self._nonbasic_value(j)

    def reset(self):
        """Return to the all-logical starting basis."""
        self.head = np.arange(self.n, self.n + self.m)
        self.is_basic[:] = False
        self.is_basic[self.head] = True
        self.at_upper[:] = False
        self._factor()
        self._place_nonbasics()

    def set_cost(self, c):
        self.cost[: self.n] = c
        self._place_nonbasics()

    def get_basis(self):
        return self.head.copy(), self.at_upper.copy()

    def set_basis(self, basis):
        head, at_upper = basis
        self.head = np.array(head)
        self.is_basic[:] = False
        self.is_basic[self.head] = True
        self.at_upper = np.array(at_upper)
        self._factor()
        for j in np.flatnonzero(~self.is_basic):
            self.x[j] = self._nonbasic_value(j)
        self._compute_duals()
        # bounds may differ from when the basis was stored; re-choose sides
        # only where the old side no longer satisfies dual feasibility
        for j in self._dual_infeasible():
            if self.lo[j] != self.hi[j]:
                self.at_upper[j] = self.d[j] < 0 and math.isfinite(self.hi[j])
                self.x[j] = self._nonbasic_value(j)
        self._compute_primal()

    @property
    def objective(self) -> float:
        return float(self.cost @ self.x)

    def solution(self) -> np.ndarray:
        return self.x[: self.n].copy()

    def _perturb(self, scale: float = 1.0):
        """Shift costs so nonbasic reduced costs move away from zero on their
        feasible side.  Breaks the dual degeneracy that otherwise stalls the
        method; removed again before optimality is declared."""
        rng = np.random.default_rng(self.n + 7 * self.m)
        xi = scale * PERTURB * (1.0 + np.abs(self.cost)) * (1.0 + rng.random(self.n + self.m))
        side = np.where(self.at_upper, -1.0, 1.0)
        side[self.is_basic] = np.where(rng.random(int(self.is_basic.sum())) < 0.5, -1.0, 1.0)
        side[self.lo == self.hi] = 0.0
        side[~np.isfinite(self.lo) & ~np.isfinite(self.hi)] = 0.0
        side[self.n:] = 0.0
        shift = side * xi
        self.cost = self.cost + shift
        self._compute_duals()
        return shift

    def solve(self, max_iter: int | None = None) -> str:
        """Run to optimality from the current basis; returns the status."""
        budget = max_iter if max_iter is not None else self.max_iter
        self._compute_primal()
        if len(self._dual_infeasible()):
            if self._place_nonbasics() or len(self._dual_infeasible()):
                status = self._phase_one(budget)
                if status != "ok":
                    return status
        for scale in (1.0, 1e-2, 1e-4, 0.0):
            if self._max_primal_infeasibility() > PRIMAL_TOL:
                shift = self._perturb(scale) if scale else 0.0
                try:
                    status = self._dual_loop(budget)
                finally:
                    self.cost = self.cost - shift
                if status == "infeasible":
                    # confirm with a fresh factorization before declaring
                    self._factor()
                    self._compute_primal()
                    self._compute_duals()
                    if len(self._dual_infeasible()) == 0:
                        status = self._dual_loop(budget)
                if status != "optimal":
                    self._compute_duals()
                    return status
            self._factor()
            self._compute_primal()
            self._compute_duals()
            bad = self._dual_infeasible()
            if len(bad) == 0 and self._max_primal_infeasibility() <= PRIMAL_TOL:
                return "optimal"
            # wrong-signed reduced costs left by the perturbation: move those
            # columns to the other bound and iterate again
            for j in bad:
                if math.isfinite(self.lo[j]) and math.isfinite(self.hi[j]):
                    self.at_upper[j] = self.d[j] < 0
                    self.x[j] = self._nonbasic_value(j)
            self._compute_primal()
            if len(self._dual_infeasible()):
                status = self._phase_one(budget)
                if status != "ok":
                    return status
        raise NumericalError("dual simplex failed to converge after refactorization")

    def _max_primal_infeasibility(self) -> float:
        xb = self.x[self.head]
        lo, hi = self.lo[self.head], self.hi[self.head]
        v = np.maximum(lo - xb, xb - hi)
        return float(v.max()) if len(v) else 0.0

    def _phase_one(self, budget) -> str:
        lo, hi = self.lo.copy(), self.hi.copy()
        flo, fhi = np.isfinite(lo), np.isfinite(hi)
        self.lo = np.where(flo & fhi, 0.0, np.where(flo, 0.0, -1.0))
        self.hi = np.where(flo & fhi, 0.0, np.where(fhi, 0.0, 1.0))
        self._place_nonbasics()
        try:
            status = self._dual_loop(budget)
        finally:
            self.lo, self.hi = lo, hi
        if status not in ("optimal",):
            raise NumericalError(f"auxiliary problem ended with status {status}")
        if self._place_nonbasics():
            # dual infeasible: primal is unbounded or infeasible
            cost = self.cost.copy()
            self.cost = np.zeros_like(cost)
            self._place_nonbasics()
            feas = self._dual_loop(budget)
            self.cost = cost
            self._compute_duals()
            return "unbounded" if feas == "optimal" else "infeasible"
        return "ok"

    def _dual_loop(self, budget) -> str:
        lo, hi = self.lo, self.hi
        boxed = np.isfinite(lo) & np.isfinite(hi)
        fixed = lo == hi
        degenerate = 0
        bland = False
        start = self.iterations
        while True:
            if self.iterations - start > budget:
                raise NumericalError("simplex iteration limit reached")
            if self.deadline is not None and self.iterations % 16 == 0 and time.perf_counter() > self.deadline:
                raise TimeLimitReached
            if len(self._etas) >= self.refactor_every:
                self._factor()
                self._compute_primal()
                self._compute_duals()
            head = self.head
            xb = self.x[head]
            below = lo[head] - xb
            above = xb - hi[head]
            viol = np.maximum(below, above)
            cand = np.flatnonzero(viol > PRIMAL_TOL)
            if len(cand) == 0:
                return "optimal"
            if bland:
                p = int(cand[np.argmin(head[cand])])
            else:
                p = int(cand[np.argmax(viol[cand])])
            leaving = int(head[p])
            up = below[p] > 0  # leaving variable must increase to its lower bound
            target = lo[leaving] if up else hi[leaving]
            e = np.zeros(self.m)
            e[p] = 1.0
            rho = self.btran(e)
            alpha = np.concatenate([self.AT @ rho, -rho])
            s = 1.0 if up else -1.0
            sa = s * alpha
            nb = ~self.is_basic & ~fixed
            at_up = self.at_upper
            free = ~np.isfinite(lo) & ~np.isfinite(hi)
            elig = nb & (
                (~at_up & ~free & (sa < -PIVOT_TOL))
                | (at_up & (sa > PIVOT_TOL))
                | (free & (np.abs(alpha) > PIVOT_TOL))
            )
            js = np.flatnonzero(elig)
            if len(js) == 0:
                return "infeasible"
            ratios = np.abs(self.d[js]) / np.abs(alpha[js])
            # reduced costs of the wrong sign within tolerance count as zero
            ratios = np.where(
                (~at_up[js] & (self.d[js] < 0)) | (at_up[js] & (self.d[js] > 0)), 0.0, ratios
            )
            q, flips = self._long_step(js, ratios, alpha, viol[p], boxed, bland)
            if q is None:
                return "infeasible"
            if flips is not None and len(flips):
                delta = np.where(at_up[flips], lo[flips] - hi[flips], hi[flips] - lo[flips])
                self.at_upper[flips] = ~self.at_upper[flips]
                self.x[flips] = np.where(self.at_upper[flips], hi[flips], lo[flips])
                v = self.K[:, flips] @ delta
                self.x[head] -= self.ftran(v)
            col = self.ftran(self._column(q))
            apq = col[p]
            if abs(apq) < PIVOT_TOL or abs(apq - alpha[q]) > 1e-6 * (1 + abs(apq)):
                # inconsistent pivot element: refresh the factorization and retry
                if not self._etas:
                    raise NumericalError("unstable pivot on a fresh factorization")
                self._factor()
                self._compute_primal()
                self._compute_duals()
                continue
            theta_p = (self.x[leaving] - target) / apq
            self.x[head] -= theta_p * col
            self.x[q] += theta_p
            theta_d = self.d[q] / apq
            self.d -= theta_d * alpha
            self.d[leaving] = -theta_d
            self.d[q] = 0.0
            self.head[p] = q
            self.is_basic[q] = True
            self.is_basic[leaving] = False
            self.d[self.head] = 0.0
            self.x[leaving] = target
            self.at_upper[leaving] = not up and lo[leaving] != hi[leaving]
            self._etas.append((p, col))
            self.iterations += 1
            if abs(theta_d) < 1e-12:
                degenerate += 1
                if degenerate > 50:
                    bland = True
            else:
                degenerate = 0
                bland = False

    def _long_step(self, js, ratios, alpha, slope, boxed, bland):
        """Bound-flipping ratio test.

        Returns the entering column and the boxed columns passed over (to be
        flipped to their opposite bound), or ``(None, None)`` when flipping
        every candidate still leaves the row infeasible.
        """
        if bland:
            t = ratios.min()
            ties = js[ratios <= t + 1e-12]
            return int(ties.min()), None
        absa = np.abs(alpha[js])
        order = np.lexsort((-absa, ratios))
        js, absa = js[order], absa[order]
        width = np.where(boxed[js], self.hi[js] - self.lo[js], np.inf)
        remaining = slope - np.cumsum(absa * width)
        hit = np.flatnonzero(remaining <= PRIMAL_TOL)
        if len(hit) == 0:
            return None, None
        k = int(hit[0])
        return int(js[k]), js[:k]


def solve_lp(model: MilpModel, **kwargs) -> LpSolution:
    """Solve the LP relaxation of ``model`` (integrality dropped)."""
    c, A, rl, ru, lb, ub, _ = model.arrays()
    if np.any(lb > ub) or np.any(rl > ru):
        return LpSolution("infeasible")
    eng = DualSimplex(c, A, rl, ru, lb, ub, **kwargs)
    status = eng.solve()
    if status != "optimal":
        return LpSolution(status, iterations=eng.iterations)
    x = eng.solution()
    return LpSolution("optimal", x, float(c @ x), duals=eng.y.copy(), iterations=eng.iterations)

"""LP-based branch and bound for models whose integers are all binary."""

from __future__ import annotations

import heapq
import logging
import math
import time
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .model import MilpModel, MilpSolution
from .simplex import DualSimplex, NumericalError, TimeLimitReached

log = logging.getLogger(__name__)

INT_TOL = 1e-6
FEAS_TOL = 1e-6


def most_fractional(x: np.ndarray, candidates: np.ndarray) -> int:
    """Binary closest to 0.5; ties go to the lowest variable id."""
    candidates = np.asarray(candidates)
    dist = np.abs(x[candidates] - 0.5)
    return int(candidates[np.lexsort((candidates, dist))[0]])


class DisjunctionsFirst:
    """Branching rule for models built from disjunctions ``P <= sum(ops)``.

    ``groups`` pairs a parent variable with its operand variables.  While
    some group has its parent at 1 in the LP point but no operand at 1, the
    rule picks the operand with the largest value (ties to the lowest id)
    from the group whose best operand is largest; operands are explored
    up-branch first.  Otherwise it splits the most fractional binary.
    """

    def __init__(self, groups, binary: np.ndarray):
        self.binary = np.asarray(binary, dtype=bool)
        groups = [(int(p), np.asarray(ops, dtype=np.int64)) for p, ops in groups if len(ops) > 1]
        self.parent = np.array([p for p, _ in groups], dtype=np.int64)
        self.members = np.concatenate([ops for _, ops in groups]) if groups else np.zeros(0, np.int64)
        self.starts = np.cumsum([0] + [len(ops) for _, ops in groups[:-1]]).astype(np.int64)
        self.implied = np.unique(self.members)

    def __call__(self, x: np.ndarray, candidates: np.ndarray) -> int:
        if len(self.parent):
            vals = x[self.members]
            best = np.maximum.reduceat(vals, self.starts)
            open_ = (x[self.parent] >= 1 - INT_TOL) & (best < 1 - INT_TOL)
            if open_.any():
                g = np.flatnonzero(open_)
                g = g[np.argmax(best[g])]
                end = self.starts[g + 1] if g + 1 < len(self.starts) else len(self.members)
                ops = self.members[self.starts[g]:end]
                ops = ops[np.abs(x[ops] - np.round(x[ops])) > INT_TOL]
                if len(ops):
                    return int(ops[np.lexsort((ops, -x[ops]))[0]])
        bins = candidates[self.binary[candidates]]
        return most_fractional(x, bins if len(bins) else candidates)


class _Propagator:
    """Activity-based bound tightening over the rows ``rl <= A x <= ru``."""

    def __init__(self, A, rl, ru, binary):
        coo = sp.coo_matrix(A)
        self.r, self.c, self.a = coo.row, coo.col, coo.data
        self.m = A.shape[0]
        self.n = A.shape[1]
        self.rl, self.ru = rl, ru
        self.binary = binary

    def __call__(self, lb, ub, passes: int = 8):
        """Tighten ``lb, ub`` in place; returns False if infeasibility is proven."""
        r, c, a, m = self.r, self.c, self.a, self.m
        if len(a) == 0:
            return bool(np.all(lb <= ub + 1e-9))
        for _ in range(passes):
            lo_c = np.where(a > 0, a * lb[c], a * ub[c])
            hi_c = np.where(a > 0, a * ub[c], a * lb[c])
            lo_inf = ~np.isfinite(lo_c)
            hi_inf = ~np.isfinite(hi_c)
            lo_sum = np.bincount(r, np.where(lo_inf, 0.0, lo_c), minlength=m)
            hi_sum = np.bincount(r, np.where(hi_inf, 0.0, hi_c), minlength=m)
            lo_cnt = np.bincount(r, lo_inf, minlength=m)
            hi_cnt = np.bincount(r, hi_inf, minlength=m)
            if np.any((lo_cnt == 0) & (lo_sum > self.ru + 1e-6 * (1 + np.abs(self.ru)))) or np.any(
                (hi_cnt == 0) & (hi_sum < self.rl - 1e-6 * (1 + np.abs(self.rl)))
            ):
                return False
            # activity of the row without the entry itself
            rest_lo = np.where(
                lo_cnt[r] - lo_inf > 0, -np.inf, lo_sum[r] - np.where(lo_inf, 0.0, lo_c)
            )
            rest_hi = np.where(
                hi_cnt[r] - hi_inf > 0, np.inf, hi_sum[r] - np.where(hi_inf, 0.0, hi_c)
            )
            with np.errstate(invalid="ignore", over="ignore"):
                from_ub = (self.ru[r] - rest_lo) / a  # a x_j <= ru - rest_lo
                from_lb = (self.rl[r] - rest_hi) / a  # a x_j >= rl - rest_hi
            new_ub = np.where(a > 0, from_ub, from_lb)
            new_lb = np.where(a > 0, from_lb, from_ub)
            new_ub = np.where(np.isnan(new_ub), np.inf, new_ub)
            new_lb = np.where(np.isnan(new_lb), -np.inf, new_lb)
            ub_col = np.full(self.n, np.inf)
            lb_col = np.full(self.n, -np.inf)
            np.minimum.at(ub_col, c, new_ub)
            np.maximum.at(lb_col, c, new_lb)
            # safety margin against round-off
            ub_col = ub_col + 1e-9 * (1 + np.abs(ub_col))
            lb_col = lb_col - 1e-9 * (1 + np.abs(lb_col))
            b = self.binary
            ub_col[b] = np.where(ub_col[b] < 1 - INT_TOL, 0.0, 1.0)
            lb_col[b] = np.where(lb_col[b] > INT_TOL, 1.0, 0.0)
            scale = 1e-6 * (1 + np.minimum(np.abs(ub), 1e6))
            tighter_ub = ub_col < ub - np.where(np.isfinite(ub), scale, 0.0)
            scale = 1e-6 * (1 + np.minimum(np.abs(lb), 1e6))
            tighter_lb = lb_col > lb + np.where(np.isfinite(lb), scale, 0.0)
            if not (tighter_ub.any() or tighter_lb.any()):
                break
            ub[tighter_ub] = ub_col[tighter_ub]
            lb[tighter_lb] = lb_col[tighter_lb]
            if np.any(lb > ub + 1e-7):
                return False
        # tiny crossings from round-off collapse to a point
        cross = lb > ub
        lb[cross] = ub[cross] = 0.5 * (lb[cross] + ub[cross])
        return True


def branch_and_bound(
    model: MilpModel,
    gap_tol: float = 1e-6,
    node_limit: int | None = None,
    time_limit: float | None = None,
    stop_at_first: bool = False,
    propagate: bool = True,
    branching: Callable[[np.ndarray, np.ndarray], int] = most_fractional,
    log_every: int = 200,
    implied: np.ndarray | None = None,
) -> MilpSolution:
    """Solve ``model`` to a relative gap of ``gap_tol``.

    Until the first incumbent the search dives depth-first, taking the child
    that rounds the branching variable; afterwards open nodes are taken best
    bound first (ties by creation order).  Children start from the parent's
    optimal basis.  ``branching`` picks the variable to split from the LP
    point and the array of fractional candidate ids.

    ``implied`` lists continuous variables in [0, 1] that take integral
    values in every integer-feasible point (the caller's guarantee).  They
    become extra branching candidates, explored up-branch first, but are
    never required to be integral themselves.
    """
    t0 = time.perf_counter()
    c, A, rl, ru, lb0, ub0, binary = model.arrays()
    sol = MilpSolution("infeasible")
    if np.any(lb0 > ub0) or np.any(rl > ru):
        return _finish(sol, t0)
    prop = _Propagator(A, rl, ru, binary) if propagate else None
    root_lb, root_ub = lb0.copy(), ub0.copy()
    if prop is not None and not prop(root_lb, root_ub):
        return _finish(sol, t0)
    bin_ids = np.flatnonzero(binary)
    extra = np.zeros(len(c), dtype=bool)
    if implied is not None and len(implied):
        extra[np.asarray(implied, dtype=np.int64)] = True
        extra &= ~binary
    extra_ids = np.flatnonzero(extra)
    eng = DualSimplex(c, A, rl, ru, root_lb, root_ub)
    if time_limit is not None:
        eng.deadline = t0 + time_limit

    incumbent = math.inf
    incumbent_x = None
    stack: list = []  # dive phase, last in first out
    heap: list = []  # best-bound phase
    seq = 0
    nodes = 0
    incomplete = False
    engine_node = -1  # id of the node whose optimal basis the engine holds

    def node_bounds(path):
        lb, ub = root_lb.copy(), root_ub.copy()
        if path:
            js = np.fromiter((j for j, _ in path), dtype=np.int64, count=len(path))
            vs = np.fromiter((v for _, v in path), dtype=float, count=len(path))
            lb[js] = vs
            ub[js] = vs
            if prop is not None and not prop(lb, ub):
                return None
        return lb, ub

    def solve_node(path, basis):
        bounds = node_bounds(path)
        if bounds is None:
            return "infeasible"
        eng.set_bounds(*bounds)
        if basis is not None:
            eng.set_basis(basis)
        try:
            return eng.solve()
        except NumericalError as exc:
            log.info("LP failed at node %d (%s); retrying from the slack basis", nodes, exc)
        try:
            eng.reset()
            return eng.solve()
        except NumericalError as exc:
            log.warning("LP failed at node %d: %s", nodes, exc)
            return "error"

    def open_bound():
        b = heap[0][0] if heap else math.inf
        if stack:
            b = min(b, min(item[0] for item in stack))
        return b

    def tol():
        return gap_tol * max(1.0, abs(incumbent))

    def accept(x):
        """Fix the binaries at their rounded values, polish, and keep the
        point if it passes an independent feasibility check."""
        nonlocal incumbent, incumbent_x
        fixed = [(int(j), float(round(x[j]))) for j in bin_ids]
        if solve_node(fixed, None) != "optimal":
            return False
        xs = eng.solution()
        xs[bin_ids] = np.round(xs[bin_ids])
        viol = model.violations(xs, FEAS_TOL)
        if viol:
            log.debug("rejected rounded point: %s", viol[0])
            return False
        val = float(c @ xs)
        if val < incumbent:
            incumbent, incumbent_x = val, xs
            sol.log.append((nodes, min(open_bound(), incumbent), incumbent))
            log.info("node %d: incumbent %.6g", nodes, incumbent)
        return True

    # node: (bound, seq, depth, path, basis, parent id)
    stack.append((-math.inf, 0, 0, [], None, -1))
    while stack or heap:
        if incumbent_x is not None and stack:
            for item in stack:
                heapq.heappush(heap, item)
            stack.clear()
        if incumbent_x is not None and incumbent - min(open_bound(), incumbent) <= tol():
            heap.clear()
            break
        if _limits_hit(nodes, node_limit, t0, time_limit):
            break
        bound, nid, depth, path, basis, parent = stack.pop() if stack else heapq.heappop(heap)
        if bound >= incumbent - tol():
            continue
        try:
            nodes += 1
            warm = parent == engine_node and parent >= 0
            status = solve_node(path, None if warm else basis)
            engine_node = nid if status == "optimal" else -1
            if nodes % log_every == 0:
                sol.log.append((nodes, min(open_bound(), bound, incumbent), incumbent))
                log.info("nodes %d open %d bound %.6g incumbent %.6g", nodes, len(heap) + len(stack), min(open_bound(), bound), incumbent)
            if status == "unbounded" and nodes == 1:
                sol.status = "unbounded"
                return _finish(sol, t0, nodes, eng)
            if status == "error":
                incomplete = True
                continue
            if status != "optimal":
                continue
            obj = max(eng.objective, bound)
            if nodes == 1:
                sol.log.append((1, obj, incumbent))
            if obj >= incumbent - tol():
                continue
            x = eng.solution()
            dist = np.abs(x[bin_ids] - np.round(x[bin_ids]))
            frac = bin_ids[dist > INT_TOL]
            if len(frac) == 0:
                branch_basis = eng.get_basis()
                ok = accept(x)
                engine_node = -1
                if ok:
                    if stop_at_first:
                        break
                    continue
                # rounding broke feasibility; split on the least integral binary
                if dist.max() == 0:
                    incomplete = True
                    continue
                frac = bin_ids[[int(np.argmax(dist))]]
                basis_for_children = branch_basis
            else:
                basis_for_children = eng.get_basis()
            if len(extra_ids):
                efrac = extra_ids[np.abs(x[extra_ids] - np.round(x[extra_ids])) > INT_TOL]
                if len(efrac):
                    frac = np.concatenate([efrac, frac])
            j = branching(x, frac)
            up_first = bool(extra[j]) or x[j] >= 0.5
            near = path + [(j, 1.0 if up_first else 0.0)]
            far = path + [(j, 0.0 if up_first else 1.0)]
            if incumbent_x is None:
                seq += 1
                stack.append((obj, seq, depth + 1, far, basis_for_children, -1))
                seq += 1
                stack.append((obj, seq, depth + 1, near, basis_for_children, nid))
            else:
                seq += 1
                heapq.heappush(heap, (obj, seq, depth + 1, near, basis_for_children, nid))
                seq += 1
                heapq.heappush(heap, (obj, seq, depth + 1, far, basis_for_children, nid))
        except TimeLimitReached:
            # the node stays open so the reported bound remains valid
            heapq.heappush(heap, (bound, nid, depth, path, basis, parent))
            break

    sol.nodes = nodes
    open_left = bool(stack or heap)
    if incumbent_x is not None:
        sol.x = incumbent_x
        sol.objective = incumbent
        sol.bound = min(open_bound(), incumbent)
        sol.status = "feasible" if (open_left or incomplete) else "optimal"
        if sol.status == "optimal":
            sol.bound = incumbent
    elif open_left:
        sol.status = "time-limit" if _time_up(t0, time_limit) else "node-limit"
        sol.bound = open_bound()
    elif incomplete:
        raise NumericalError("search abandoned nodes after LP failures and found no solution")
    sol.log.append((nodes, sol.bound, incumbent))
    return _finish(sol, t0, nodes, eng)


def _time_up(t0, time_limit):
    return time_limit is not None and time.perf_counter() - t0 >= time_limit


def _limits_hit(nodes, node_limit, t0, time_limit):
    return (node_limit is not None and nodes >= node_limit) or _time_up(t0, time_limit)


def _finish(sol, t0, nodes=0, eng=None):
    sol.time = time.perf_counter() - t0
    if nodes:
        sol.nodes = nodes
    if eng is not None:
        sol.lp_iterations = eng.iterations
    return sol

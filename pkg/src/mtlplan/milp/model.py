"""Mixed-integer linear model container."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<=", "==", ">="
SENSES = (LE, EQ, GE)


@dataclass
class Violation:
    kind: str  # "row", "bound" or "integrality"
    name: str
    amount: float

    def __str__(self):
        return f"{self.kind} {self.name} violated by {self.amount:.3g}"


class MilpModel:
    """Variables with bounds, linear rows ``a @ x (<=|==|>=) rhs`` and a
    minimization objective.  Only binaries are supported as integers."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.binary: list[bool] = []
        self.rows: list[tuple[np.ndarray, np.ndarray]] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.row_names: list[str] = []
        self.objective: dict[int, float] = {}
        self._var_index: dict[str, int] = {}
        self._row_index: dict[str, int] = {}

    # -- building ---------------------------------------------------------
    def add_var(self, name: str | None = None, lb: float = 0.0, ub: float = math.inf, binary: bool = False) -> int:
        j = len(self.var_names)
        name = name if name is not None else f"v{j}"
        if name in self._var_index:
            raise ValueError(f"duplicate variable name {name!r}")
        if binary:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if lb > ub:
            raise ValueError(f"variable {name!r} has empty bounds [{lb}, {ub}]")
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(bool(binary))
        self._var_index[name] = j
        return j

    def add_constr(self, coeffs, sense: str, rhs: float, name: str | None = None) -> int:
        """Add ``sum(coef * x[var]) sense rhs``; ``coeffs`` maps var id to coefficient."""
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        merged: dict[int, float] = {}
        for j, a in items:
            if not 0 <= j < len(self.var_names):
                raise IndexError(f"constraint references undeclared variable {j}")
            merged[j] = merged.get(j, 0.0) + float(a)
        idx = np.array(sorted(k for k, v in merged.items() if v != 0.0), dtype=np.int64)
        val = np.array([merged[k] for k in idx], dtype=float)
        i = len(self.rows)
        name = name if name is not None else f"r{i}"
        if name in self._row_index:
            raise ValueError(f"duplicate constraint name {name!r}")
        self.rows.append((idx, val))
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(name)
        self._row_index[name] = i
        return i

    def set_objective(self, coeffs) -> None:
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        obj: dict[int, float] = {}
        for j, a in items:
            obj[j] = obj.get(j, 0.0) + float(a)
        self.objective = {j: a for j, a in sorted(obj.items()) if a != 0.0}

    def fix(self, j: int, value: float) -> None:
        self.lb[j] = self.ub[j] = float(value)

    # -- queries ----------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    @property
    def num_binary(self) -> int:
        return sum(self.binary)

    def var(self, name: str) -> int:
        return self._var_index[name]

    def row(self, name: str) -> int:
        return self._row_index[name]

    def copy(self) -> "MilpModel":
        out = MilpModel(self.name)
        out.var_names = list(self.var_names)
        out.lb, out.ub, out.binary = list(self.lb), list(self.ub), list(self.binary)
        out.rows = list(self.rows)
        out.senses, out.rhs, out.row_names = list(self.senses), list(self.rhs), list(self.row_names)
        out.objective = dict(self.objective)
        out._var_index = dict(self._var_index)
        out._row_index = dict(self._row_index)
        return out

    def arrays(self):
        """``(c, A, row_lb, row_ub, lb, ub, binary)`` with ``A`` in CSR form."""
        n, m = self.num_vars, self.num_rows
        c = np.zeros(n)
        for j, a in self.objective.items():
            c[j] = a
        counts = [len(idx) for idx, _ in self.rows]
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        if m:
            indices = np.concatenate([idx for idx, _ in self.rows]) if indptr[-1] else np.zeros(0, np.int64)
            data = np.concatenate([val for _, val in self.rows]) if indptr[-1] else np.zeros(0)
        else:
            indices, data = np.zeros(0, np.int64), np.zeros(0)
        A = sp.csr_matrix((data, indices, indptr), shape=(m, n))
        rhs = np.array(self.rhs, dtype=float)
        senses = np.array(self.senses, dtype=object)
        row_lb = np.where(senses == LE, -np.inf, rhs) if m else np.zeros(0)
        row_ub = np.where(senses == GE, np.inf, rhs) if m else np.zeros(0)
        return (
            c, A, row_lb.astype(float), row_ub.astype(float),
            np.array(self.lb, dtype=float), np.array(self.ub, dtype=float),
            np.array(self.binary, dtype=bool),
        )

    def objective_value(self, x) -> float:
        return float(sum(a * x[j] for j, a in self.objective.items()))

    def violations(self, x, tol: float = 1e-6, int_tol: float = 1e-6) -> list[Violation]:
        """Every bound, row and integrality violation of point ``x`` beyond ``tol``."""
        x = np.asarray(x, dtype=float)
        out = []
        lb, ub = np.array(self.lb), np.array(self.ub)
        for j in np.flatnonzero(x < lb - tol):
            out.append(Violation("bound", self.var_names[j], float(lb[j] - x[j])))
        for j in np.flatnonzero(x > ub + tol):
            out.append(Violation("bound", self.var_names[j], float(x[j] - ub[j])))
        for j in np.flatnonzero(np.array(self.binary, dtype=bool)):
            frac = abs(x[j] - round(x[j]))
            if frac > int_tol:
                out.append(Violation("integrality", self.var_names[j], float(frac)))
        for i, (idx, val) in enumerate(self.rows):
            act = float(val @ x[idx]) if len(idx) else 0.0
            r, s = self.rhs[i], self.senses[i]
            over = act - r if s in (LE, EQ) else 0.0
            under = r - act if s in (GE, EQ) else 0.0
            amount = max(over, under)
            scale = 1.0 + max(abs(r), float(np.abs(val).max()) if len(val) else 0.0)
            if amount > tol * scale:
                out.append(Violation("row", self.row_names[i], amount))
        return out

    def summary(self) -> dict:
        return {
            "variables": self.num_vars,
            "binary": self.num_binary,
            "continuous": self.num_vars - self.num_binary,
            "constraints": self.num_rows,
            "nonzeros": int(sum(len(idx) for idx, _ in self.rows)),
        }

    def __eq__(self, other):
        if not isinstance(other, MilpModel):
            return NotImplemented
        return (
            self.var_names == other.var_names
            and self.lb == other.lb
            and self.ub == other.ub
            and self.binary == other.binary
            and self.senses == other.senses
            and self.rhs == other.rhs
            and self.row_names == other.row_names
            and self.objective == other.objective
            and all(
                np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
                for a, b in zip(self.rows, other.rows)
            )
            and len(self.rows) == len(other.rows)
        )

    def __repr__(self):
        s = self.summary()
        return f"MilpModel({self.name!r}, vars={s['variables']}, binary={s['binary']}, rows={s['constraints']})"


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None = None
    objective: float = math.nan
    duals: np.ndarray | None = None
    iterations: int = 0


@dataclass
class MilpSolution:
    status: str  # optimal | feasible | infeasible | node-limit | time-limit
    x: np.ndarray | None = None
    objective: float = math.nan
    bound: float = -math.inf
    nodes: int = 0
    time: float = 0.0
    lp_iterations: int = 0
    log: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    @property
    def has_solution(self) -> bool:
        return self.x is not None and not self.violations

    @property
    def gap(self) -> float:
        if self.x is None:
            return math.inf
        return (self.objective - self.bound) / max(1.0, abs(self.objective))

    def value(self, model: MilpModel, name: str) -> float:
        return float(self.x[model.var(name)])

"""Free-format MPS export/import and plain-text solution import.

Rows are written in model order, columns in variable order, numbers with
``repr`` so a model survives a round trip bit for bit.  Every variable gets
an explicit bound line, which keeps the reader independent of the MPS
default bound conventions.
"""

from __future__ import annotations

import math

import numpy as np

from .model import EQ, GE, LE, MilpModel, MilpSolution

MAX_NAME = 255
_SENSE_CODE = {LE: "L", GE: "G", EQ: "E"}
_CODE_SENSE = {v: k for k, v in _SENSE_CODE.items()}
OBJ_ROW = "COST"


class MpsError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def _num(v: float) -> str:
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    if v == 0:
        return "0.0"
    return repr(float(v))


def _check_name(name: str, what: str) -> None:
    if not name or len(name) > MAX_NAME or any(ch.isspace() for ch in name):
        raise MpsError(f"{what} name {name!r} must be 1-{MAX_NAME} characters without whitespace")


def export_mps(model: MilpModel) -> str:
    """Free-format MPS text for ``model`` (deterministic, no RANGES section)."""
    for name in model.var_names:
        _check_name(name, "variable")
    for name in model.row_names:
        _check_name(name, "row")
    if OBJ_ROW in model._row_index:
        raise MpsError(f"row name {OBJ_ROW!r} is reserved for the objective")
    _check_name(model.name, "model")
    out = [f"NAME {model.name}", "ROWS", f" N {OBJ_ROW}"]
    for name, sense in zip(model.row_names, model.senses):
        out.append(f" {_SENSE_CODE[sense]} {name}")
    cols: list[list[tuple[str, float]]] = [[] for _ in range(model.num_vars)]
    for j, a in model.objective.items():
        cols[j].append((OBJ_ROW, a))
    for i, (idx, val) in enumerate(model.rows):
        rname = model.row_names[i]
        for j, a in zip(idx, val):
            cols[j].append((rname, float(a)))
    out.append("COLUMNS")
    in_int = False
    marker = 0
    for j, name in enumerate(model.var_names):
        if model.binary[j] != in_int:
            kind = "INTORG" if model.binary[j] else "INTEND"
            out.append(f" MARKER{marker} 'MARKER' '{kind}'")
            marker += 1
            in_int = model.binary[j]
        entries = cols[j]
        if not entries:
            # keep the column declared even without coefficients
            entries = [(OBJ_ROW, 0.0)]
        for rname, a in entries:
            out.append(f" {name} {rname} {_num(a)}")
    if in_int:
        out.append(f" MARKER{marker} 'MARKER' 'INTEND'")
    out.append("RHS")
    for name, r in zip(model.row_names, model.rhs):
        if r != 0:
            out.append(f" RHS {name} {_num(r)}")
    out.append("BOUNDS")
    for j, name in enumerate(model.var_names):
        lb, ub = model.lb[j], model.ub[j]
        if model.binary[j] and lb == 0 and ub == 1:
            out.append(f" BV BND {name}")
        elif lb == ub:
            out.append(f" FX BND {name} {_num(lb)}")
        elif lb == -math.inf and ub == math.inf:
            out.append(f" FR BND {name}")
        else:
            if lb == -math.inf:
                out.append(f" MI BND {name}")
            else:
                out.append(f" LO BND {name} {_num(lb)}")
            if ub == math.inf:
                out.append(f" PL BND {name}")
            else:
                out.append(f" UP BND {name} {_num(ub)}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def read_mps(text: str) -> MilpModel:
    """Parse free-format MPS written by :func:`export_mps` or a compatible tool."""
    model = MilpModel()
    section = None
    obj_name = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    row_coefs: dict[str, dict[int, float]] = {}
    rhs: dict[str, float] = {}
    objective: dict[int, float] = {}
    bounds_seen: set[int] = set()
    in_int = False
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line or line.lstrip().startswith("*"):
            continue
        tok = line.split()
        if not raw[0].isspace():
            head = tok[0].upper()
            if head == "NAME":
                model.name = tok[1] if len(tok) > 1 else ""
                continue
            if head in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"):
                section = head
                if head == "ENDATA":
                    break
                continue
            if head == "RANGES":
                raise MpsError("RANGES section is not supported", ln)
            if head == "OBJSENSE":
                section = "OBJSENSE"
                continue
            raise MpsError(f"unknown section {tok[0]!r}", ln)
        if section == "OBJSENSE":
            if tok[0].upper() not in ("MIN", "MINIMIZE"):
                raise MpsError("only minimization is supported", ln)
        elif section == "ROWS":
            if len(tok) != 2:
                raise MpsError("ROWS entry needs a type and a name", ln)
            code, name = tok[0].upper(), tok[1]
            if code == "N":
                if obj_name is None:
                    obj_name = name
                continue
            if code not in _CODE_SENSE:
                raise MpsError(f"unknown row type {tok[0]!r}", ln)
            if name in row_sense:
                raise MpsError(f"duplicate row {name!r}", ln)
            row_sense[name] = _CODE_SENSE[code]
            row_order.append(name)
            row_coefs[name] = {}
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1].strip("'").upper() == "MARKER":
                kind = tok[2].strip("'").upper()
                if kind not in ("INTORG", "INTEND"):
                    raise MpsError(f"unknown marker {tok[2]!r}", ln)
                in_int = kind == "INTORG"
                continue
            if len(tok) not in (3, 5):
                raise MpsError("COLUMNS entry needs name/row/value pairs", ln)
            name = tok[0]
            if name in model._var_index:
                j = model._var_index[name]
                if j != model.num_vars - 1:
                    raise MpsError(f"column {name!r} is not contiguous", ln)
            else:
                j = model.add_var(name, 0.0, 1.0 if in_int else math.inf, binary=in_int)
            for rname, sval in zip(tok[1::2], tok[2::2]):
                val = _parse_float(sval, ln)
                if rname == obj_name:
                    objective[j] = objective.get(j, 0.0) + val
                elif rname in row_coefs:
                    row_coefs[rname][j] = row_coefs[rname].get(j, 0.0) + val
                else:
                    raise MpsError(f"unknown row {rname!r}", ln)
        elif section == "RHS":
            if len(tok) not in (3, 5):
                raise MpsError("RHS entry needs a set name and row/value pairs", ln)
            for rname, sval in zip(tok[1::2], tok[2::2]):
                if rname == obj_name:
                    raise MpsError("objective constant is not supported", ln)
                if rname not in row_sense:
                    raise MpsError(f"unknown row {rname!r}", ln)
                rhs[rname] = _parse_float(sval, ln)
        elif section == "BOUNDS":
            if len(tok) < 3:
                raise MpsError("BOUNDS entry needs a type, a set name and a column", ln)
            code, name = tok[0].upper(), tok[2]
            if name not in model._var_index:
                raise MpsError(f"unknown column {name!r}", ln)
            j = model._var_index[name]
            if j not in bounds_seen:
                bounds_seen.add(j)
                if not model.binary[j]:
                    model.lb[j], model.ub[j] = 0.0, math.inf
            needs_value = code in ("LO", "UP", "FX")
            if needs_value and len(tok) != 4:
                raise MpsError(f"bound type {code} needs a value", ln)
            v = _parse_float(tok[3], ln) if needs_value else None
            if code == "LO":
                model.lb[j] = v
            elif code == "UP":
                model.ub[j] = v
            elif code == "FX":
                model.lb[j] = model.ub[j] = v
            elif code == "FR":
                model.lb[j], model.ub[j] = -math.inf, math.inf
            elif code == "MI":
                model.lb[j] = -math.inf
            elif code == "PL":
                model.ub[j] = math.inf
            elif code == "BV":
                model.lb[j], model.ub[j] = 0.0, 1.0
                model.binary[j] = True
            else:
                raise MpsError(f"unsupported bound type {tok[0]!r}", ln)
        else:
            raise MpsError("data line outside of a section", ln)
    if section != "ENDATA":
        raise MpsError("missing ENDATA")
    for name in row_order:
        coefs = row_coefs[name]
        model.add_constr(sorted(coefs.items()), row_sense[name], rhs.get(name, 0.0), name)
    model.set_objective(objective)
    for j in range(model.num_vars):
        if model.lb[j] > model.ub[j]:
            raise MpsError(f"column {model.var_names[j]!r} has empty bounds")
    return model


def _parse_float(s: str, ln: int) -> float:
    try:
        return float(s)
    except ValueError:
        raise MpsError(f"bad number {s!r}", ln) from None


def import_solution(text: str, model: MilpModel, tol: float = 1e-6) -> MilpSolution:
    """Read ``name value`` lines into a solution and re-check it against ``model``.

    Unlisted variables are taken as 0; unknown names raise ``KeyError``.
    ``violations`` on the result names every violated row or bound.
    """
    x = np.zeros(model.num_vars)
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) != 2:
            raise ValueError(f"line {ln}: expected 'name value', got {raw!r}")
        name, sval = tok
        if name not in model._var_index:
            raise KeyError(f"line {ln}: unknown variable {name!r}")
        try:
            x[model._var_index[name]] = float(sval)
        except ValueError:
            raise ValueError(f"line {ln}: bad value {sval!r}") from None
    viol = model.violations(x, tol)
    return MilpSolution(
        "infeasible" if viol else "feasible",
        x=x,
        objective=model.objective_value(x),
        violations=viol,
    )


def export_solution(sol: MilpSolution, model: MilpModel) -> str:
    """Inverse of :func:`import_solution`."""
    if sol.x is None:
        raise ValueError("solution has no point")
    return "".join(f"{n} {_num(float(v))}\n" for n, v in zip(model.var_names, sol.x))

"""Metric temporal logic over finite, discretely sampled traces.

Formulas are immutable trees.  Interval bounds are kept in whatever unit the
caller uses: the parser produces seconds, :func:`to_steps` converts them to
sample indices, and :func:`evaluate` works on sample indices only.

Until uses the strict form: ``p U[a,b] q`` holds at ``t`` iff some
``s in [a, b]`` has ``q`` at ``t+s`` and ``p`` at every ``t+s'`` with
``0 <= s' < s``.  This is the form the MILP encoder implements.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

INF = math.inf


class MTLSyntaxError(ValueError):
    def __init__(self, message: str, text: str = "", pos: int = 0):
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.column = col


class HorizonError(ValueError):
    pass


@dataclass(frozen=True)
class Interval:
    lo: float = 0
    hi: float = INF

    def __post_init__(self):
        if self.lo < 0 or self.hi < 0:
            raise ValueError(f"interval bounds must be non-negative: [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"interval lower bound exceeds upper bound: [{self.lo}, {self.hi}]")

    @property
    def bounded(self) -> bool:
        return not math.isinf(self.hi)

    def __str__(self):
        return f"[{_fmt_num(self.lo)},{_fmt_num(self.hi)}]"


def _fmt_num(v) -> str:
    if math.isinf(v):
        return "inf"
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


class Formula:
    """Base class of all formula nodes."""

    children: tuple = ()

    def __str__(self):
        return to_text(self)

    # Operator sugar for building formulas in code.
    def __and__(self, other):
        return And((self, other))

    def __or__(self, other):
        return Or((self, other))

    def __invert__(self):
        return Not(self)


@dataclass(frozen=True, repr=False)
class TrueF(Formula):
    def __repr__(self):
        return "TrueF()"


@dataclass(frozen=True, repr=False)
class FalseF(Formula):
    def __repr__(self):
        return "FalseF()"


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class Not(Formula):
    child: Formula

    @property
    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class And(Formula):
    args: tuple

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if len(self.args) < 2:
            raise ValueError("And needs at least two operands")

    @property
    def children(self):
        return self.args


@dataclass(frozen=True)
class Or(Formula):
    args: tuple

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if len(self.args) < 2:
            raise ValueError("Or needs at least two operands")

    @property
    def children(self):
        return self.args


@dataclass(frozen=True)
class Next(Formula):
    child: Formula

    @property
    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Eventually(Formula):
    interval: Interval
    child: Formula

    @property
    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Always(Formula):
    interval: Interval
    child: Formula

    @property
    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Until(Formula):
    interval: Interval
    left: Formula
    right: Formula

    @property
    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Release(Formula):
    interval: Interval
    left: Formula
    right: Formula

    @property
    def children(self):
        return (self.left, self.right)


TRUE = TrueF()
FALSE = FalseF()

_TEMPORAL_UNARY = (Eventually, Always)
_TEMPORAL_BINARY = (Until, Release)


def conj(args: Iterable[Formula]) -> Formula:
    """And over ``args`` that tolerates zero or one operand."""
    args = tuple(args)
    if not args:
        return TRUE
    return args[0] if len(args) == 1 else And(args)


def disj(args: Iterable[Formula]) -> Formula:
    args = tuple(args)
    if not args:
        return FALSE
    return args[0] if len(args) == 1 else Or(args)


def atoms_of(f: Formula) -> set[str]:
    if isinstance(f, Atom):
        return {f.name}
    out: set[str] = set()
    for c in f.children:
        out |= atoms_of(c)
    return out


def map_intervals(f: Formula, fn) -> Formula:
    """Rebuild ``f`` with every interval replaced by ``fn(interval)``."""
    if isinstance(f, (TrueF, FalseF, Atom)):
        return f
    if isinstance(f, Not):
        return Not(map_intervals(f.child, fn))
    if isinstance(f, Next):
        return Next(map_intervals(f.child, fn))
    if isinstance(f, And):
        return And(tuple(map_intervals(c, fn) for c in f.args))
    if isinstance(f, Or):
        return Or(tuple(map_intervals(c, fn) for c in f.args))
    if isinstance(f, _TEMPORAL_UNARY):
        return type(f)(fn(f.interval), map_intervals(f.child, fn))
    if isinstance(f, _TEMPORAL_BINARY):
        return type(f)(fn(f.interval), map_intervals(f.left, fn), map_intervals(f.right, fn))
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<arrow>->)
  | (?P<op>[!&|()\[\],])
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)

_KEYWORDS = {"true", "false", "inf", "X", "F", "G", "U", "R"}


@dataclass
class _Tok:
    kind: str
    value: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise MTLSyntaxError(f"unknown token {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            value = m.group()
            if kind == "ident" and value in _KEYWORDS:
                kind = value
            elif kind in ("op", "arrow"):
                kind = value
            toks.append(_Tok(kind, value, pos))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return MTLSyntaxError(msg, self.text, tok.pos)

    def take(self, kind) -> _Tok:
        tok = self.tok
        if tok.kind != kind:
            found = tok.value or "end of input"
            raise self.error(f"expected {kind!r}, found {found!r}")
        self.i += 1
        return tok

    def parse(self) -> Formula:
        f = self.temporal_binary()
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.value!r}")
        return f

    # lowest precedence: U, R (right associative)
    def temporal_binary(self) -> Formula:
        left = self.implication()
        if self.tok.kind in ("U", "R"):
            op = self.take(self.tok.kind).kind
            interval = self.interval()
            right = self.temporal_binary()
            return (Until if op == "U" else Release)(interval, left, right)
        return left

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.tok.kind == "->":
            self.take("->")
            right = self.implication()
            return Or((Not(left), right))
        return left

    def disjunction(self) -> Formula:
        args = [self.conjunction()]
        while self.tok.kind == "|":
            self.take("|")
            args.append(self.conjunction())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conjunction(self) -> Formula:
        args = [self.unary()]
        while self.tok.kind == "&":
            self.take("&")
            args.append(self.unary())
        return args[0] if len(args) == 1 else And(tuple(args))

    def unary(self) -> Formula:
        kind = self.tok.kind
        if kind == "!":
            self.take("!")
            return Not(self.unary())
        if kind == "X":
            self.take("X")
            return Next(self.unary())
        if kind in ("F", "G"):
            self.take(kind)
            interval = self.interval()
            return (Eventually if kind == "F" else Always)(interval, self.unary())
        return self.primary()

    def primary(self) -> Formula:
        tok = self.tok
        if tok.kind == "(":
            self.take("(")
            f = self.temporal_binary()
            self.take(")")
            return f
        if tok.kind == "true":
            self.i += 1
            return TRUE
        if tok.kind == "false":
            self.i += 1
            return FALSE
        if tok.kind == "ident":
            self.i += 1
            return Atom(tok.value)
        found = tok.value or "end of input"
        raise self.error(f"expected a proposition or '(', found {found!r}")

    def interval(self) -> Interval:
        if self.tok.kind != "[":
            return Interval(0, INF)
        start = self.take("[")
        lo = self.bound()
        self.take(",")
        hi = self.bound()
        self.take("]")
        if lo > hi:
            raise self.error(f"interval lower bound {_fmt_num(lo)} exceeds upper bound {_fmt_num(hi)}", start)
        return Interval(lo, hi)

    def bound(self):
        tok = self.tok
        if tok.kind == "inf":
            self.i += 1
            return INF
        tok = self.take("num")
        v = float(tok.value)
        return int(v) if v.is_integer() and "." not in tok.value and "e" not in tok.value.lower() else v


def parse(text: str) -> Formula:
    """Parse a specification string into a formula tree.

    Interval bounds are read as seconds; a missing interval means ``[0,inf]``.
    ``a -> b`` is rewritten to ``!a | b``.
    """
    return _Parser(text).parse()


_PREC = {Until: 0, Release: 0, Or: 2, And: 3}


def to_text(f: Formula) -> str:
    """Canonical printer; ``parse(to_text(f)) == f``."""

    def wrap(c, min_prec):
        s = to_text(c)
        p = _PREC.get(type(c), 9)
        return f"({s})" if p < min_prec else s

    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        return "!" + wrap(f.child, 9)
    if isinstance(f, Next):
        return "X " + wrap(f.child, 9)
    if isinstance(f, Eventually):
        return f"F{f.interval} " + wrap(f.child, 9)
    if isinstance(f, Always):
        return f"G{f.interval} " + wrap(f.child, 9)
    if isinstance(f, And):
        # nested And/Or must keep their parentheses or the parser would flatten them
        return " & ".join(wrap(c, 4) for c in f.args)
    if isinstance(f, Or):
        return " | ".join(wrap(c, 3) for c in f.args)
    if isinstance(f, (Until, Release)):
        op = "U" if isinstance(f, Until) else "R"
        return f"{wrap(f.left, 1)} {op}{f.interval} {wrap(f.right, 0)}"
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Rewriting


def to_steps(f: Formula, dt: float) -> Formula:
    """Convert second-valued intervals to sample indices.

    ``[a, b]`` becomes ``[ceil(a/dt), floor(b/dt)]``; ``inf`` stays unbounded.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")

    def conv(iv: Interval) -> Interval:
        lo = math.ceil(iv.lo / dt - 1e-9)
        hi = INF if math.isinf(iv.hi) else math.floor(iv.hi / dt + 1e-9)
        if lo > hi:
            raise ValueError(f"interval {iv} contains no sample at dt={dt}")
        return Interval(lo, hi)

    return map_intervals(f, conv)


def to_nnf(f: Formula) -> Formula:
    """Push negations down to atoms and Boolean constants."""
    return _nnf(f, False)


def _nnf(f: Formula, neg: bool) -> Formula:
    if isinstance(f, TrueF):
        return FALSE if neg else TRUE
    if isinstance(f, FalseF):
        return TRUE if neg else FALSE
    if isinstance(f, Atom):
        return Not(f) if neg else f
    if isinstance(f, Not):
        return _nnf(f.child, not neg)
    if isinstance(f, And):
        args = tuple(_nnf(c, neg) for c in f.args)
        return Or(args) if neg else And(args)
    if isinstance(f, Or):
        args = tuple(_nnf(c, neg) for c in f.args)
        return And(args) if neg else Or(args)
    if isinstance(f, Next):
        return Next(_nnf(f.child, neg))
    if isinstance(f, Eventually):
        return (Always if neg else Eventually)(f.interval, _nnf(f.child, neg))
    if isinstance(f, Always):
        return (Eventually if neg else Always)(f.interval, _nnf(f.child, neg))
    if isinstance(f, Until):
        return (Release if neg else Until)(f.interval, _nnf(f.left, neg), _nnf(f.right, neg))
    if isinstance(f, Release):
        return (Until if neg else Release)(f.interval, _nnf(f.left, neg), _nnf(f.right, neg))
    raise TypeError(f"not a formula: {f!r}")


def is_nnf(f: Formula) -> bool:
    if isinstance(f, Not):
        return isinstance(f.child, Atom)
    return all(is_nnf(c) for c in f.children)


def eliminate_release(f: Formula) -> Formula:
    """Rewrite bounded Release into Always/Eventually/And/Or.

    ``p R[a,b] q`` holds iff ``q`` holds on all of ``[a,b]``, or ``p`` holds
    at some offset ``k < b`` and ``q`` covers ``[a,k]``.  ``F[k,k]`` stands in
    for a ``k``-fold Next.
    """
    if isinstance(f, (TrueF, FalseF, Atom)):
        return f
    if isinstance(f, Release):
        iv = f.interval
        if not iv.bounded:
            raise ValueError("Release needs a bounded interval; truncate first")
        p = eliminate_release(f.left)
        q = eliminate_release(f.right)
        lo, hi = int(iv.lo), int(iv.hi)
        options = [Always(Interval(lo, hi), q)]
        for k in range(hi):
            held = Eventually(Interval(k, k), p)
            options.append(held if k < lo else And((held, Always(Interval(lo, k), q))))
        return disj(options)
    if isinstance(f, Not):
        return Not(eliminate_release(f.child))
    if isinstance(f, Next):
        return Next(eliminate_release(f.child))
    if isinstance(f, And):
        return And(tuple(eliminate_release(c) for c in f.args))
    if isinstance(f, Or):
        return Or(tuple(eliminate_release(c) for c in f.args))
    if isinstance(f, _TEMPORAL_UNARY):
        return type(f)(f.interval, eliminate_release(f.child))
    if isinstance(f, Until):
        return Until(f.interval, eliminate_release(f.left), eliminate_release(f.right))
    raise TypeError(f"not a formula: {f!r}")


def horizon_of(f: Formula, N: int | None = None) -> int:
    """Largest sample offset that ``f`` inspects when evaluated at 0.

    Raises :class:`HorizonError` if an interval is unbounded or if ``N`` is
    given and the horizon exceeds it.
    """
    h = _horizon(f)
    if N is not None and h > N:
        raise HorizonError(f"formula needs longer trajectory: horizon {h} > N = {N}")
    return h


def _horizon(f: Formula) -> int:
    if isinstance(f, (TrueF, FalseF, Atom)):
        return 0
    if isinstance(f, (Not, And, Or)):
        return max(_horizon(c) for c in f.children)
    if isinstance(f, Next):
        return 1 + _horizon(f.child)
    iv = f.interval
    if not iv.bounded:
        raise HorizonError(f"unbounded interval in {to_text(f)!r}; truncate first")
    return int(iv.hi) + max(_horizon(c) for c in f.children)


def truncate(f: Formula, N: int) -> Formula:
    """Bound every ``inf`` upper limit by what still fits in ``N`` samples.

    An unbounded operator over a child of horizon ``h`` gets upper bound
    ``N - h``.  Intervals must already be in samples.
    """
    if isinstance(f, (TrueF, FalseF, Atom)):
        return f
    if isinstance(f, Not):
        return Not(truncate(f.child, N))
    if isinstance(f, Next):
        return Next(truncate(f.child, N - 1))
    if isinstance(f, And):
        return And(tuple(truncate(c, N) for c in f.args))
    if isinstance(f, Or):
        return Or(tuple(truncate(c, N) for c in f.args))
    iv = f.interval
    budget = N - (int(iv.hi) if iv.bounded else int(iv.lo))
    children = [truncate(c, budget) for c in f.children]
    h = max(_horizon(c) for c in children)
    hi = iv.hi
    if not iv.bounded:
        hi = N - h
        if hi < iv.lo:
            raise HorizonError(
                f"formula needs longer trajectory: {to_text(f)!r} does not fit in N = {N}"
            )
    return type(f)(Interval(int(iv.lo), int(hi)), *children)


# ---------------------------------------------------------------------------
# Semantics


class Trace(Sequence):
    """Finite sequence of label sets, one per sample."""

    def __init__(self, steps: Iterable[Iterable[str]], props: Iterable[str] | None = None):
        self.steps = tuple(frozenset(s) for s in steps)
        self.props = frozenset(props) if props is not None else frozenset().union(*self.steps)
        for t, s in enumerate(self.steps):
            extra = s - self.props
            if extra:
                raise ValueError(f"step {t} uses undeclared propositions {sorted(extra)}")

    def __len__(self):
        return len(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    def __repr__(self):
        return f"Trace({[sorted(s) for s in self.steps]!r})"


def evaluate(f: Formula, trace: Sequence, t: int = 0) -> bool:
    """Truth value of ``f`` on ``trace`` at sample ``t`` (intervals in samples)."""
    need = t + horizon_of(f)
    if t < 0 or need > len(trace) - 1:
        raise IndexError(
            f"trace too short: evaluating at t={t} needs samples up to {need}, "
            f"trace has {len(trace)}"
        )
    return _Evaluator(trace).ev(f, t)


class _Evaluator:
    def __init__(self, trace):
        self.trace = trace
        self.cache: dict = {}

    def ev(self, f: Formula, t: int) -> bool:
        key = (id(f), t)
        hit = self.cache.get(key)
        if hit is None:
            hit = self.cache[key] = (self._ev(f, t), f)
        return hit[0]

    def _ev(self, f: Formula, t: int) -> bool:
        if isinstance(f, TrueF):
            return True
        if isinstance(f, FalseF):
            return False
        if isinstance(f, Atom):
            return f.name in self.trace[t]
        if isinstance(f, Not):
            return not self.ev(f.child, t)
        if isinstance(f, And):
            return all(self.ev(c, t) for c in f.args)
        if isinstance(f, Or):
            return any(self.ev(c, t) for c in f.args)
        if isinstance(f, Next):
            return self.ev(f.child, t + 1)
        lo, hi = int(f.interval.lo), int(f.interval.hi)
        if isinstance(f, Eventually):
            return any(self.ev(f.child, t + s) for s in range(lo, hi + 1))
        if isinstance(f, Always):
            return all(self.ev(f.child, t + s) for s in range(lo, hi + 1))
        if isinstance(f, Until):
            return self._until(f.left, f.right, t, lo, hi)
        if isinstance(f, Release):
            return not self._until(Not(f.left), Not(f.right), t, lo, hi)
        raise TypeError(f"not a formula: {f!r}")

    def _until(self, p, q, t, lo, hi) -> bool:
        for s in range(0, hi + 1):
            if s >= lo and self.ev(q, t + s):
                return True
            if not self.ev(p, t + s):
                return False
        return False


def first_violation(f: Formula, trace: Sequence, t: int = 0):
    """Locate the earliest failing obligation of a violated formula.

    Returns ``(step, subformula)`` or ``None`` when ``f`` holds.  Conjunctions
    and Always are descended into; other operators are reported whole.
    """
    ev = _Evaluator(trace)
    horizon_of(f)
    if ev.ev(f, t):
        return None
    return _blame(ev, f, t)


def _blame(ev: _Evaluator, f: Formula, t: int):
    if isinstance(f, Not) and isinstance(f.child, Atom):
        return t, f
    if isinstance(f, And):
        bad = [_blame(ev, c, t) for c in f.args if not ev.ev(c, t)]
        return min(bad, key=lambda b: b[0])
    if isinstance(f, Always):
        lo, hi = int(f.interval.lo), int(f.interval.hi)
        for s in range(lo, hi + 1):
            if not ev.ev(f.child, t + s):
                return _blame(ev, f.child, t + s)
    if isinstance(f, Next):
        return _blame(ev, f.child, t + 1)
    return t, f

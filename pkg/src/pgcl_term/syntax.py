"""pGCL abstract syntax, program states and exact-rational evaluation.

Every value is a :class:`fractions.Fraction`.  Expressions, boolean
expressions and programs are frozen dataclasses, so structural equality
is plain ``==``.
"""

from __future__ import annotations

import threading
from bisect import bisect_left
from collections.abc import Mapping
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Union

from .errors import (
    ArgumentTooLarge,
    DivisionByZero,
    NegativeArgument,
    NonIntegerArgument,
    UnboundVariable,
)

ZERO = Fraction(0)
ONE = Fraction(1)


def as_rational(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        raise TypeError("floats are not accepted; pass an int, str or Fraction")
    return Fraction(x)


# ---------------------------------------------------------------- expressions

class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Lit(Expr):
    value: Fraction


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    args: tuple


@dataclass(frozen=True)
class Ite(Expr):
    cond: "BExpr"
    then: Expr
    orelse: Expr


@dataclass(frozen=True)
class Iverson(Expr):
    cond: "BExpr"


BUILTIN_ARITY = {
    "min": 2,
    "max": 2,
    "monus": 2,
    "abs": 1,
    "pow": 2,
    "mod": 2,
    "harmonic": 1,
    "harmonic_index": 1,
}

# -------------------------------------------------------- boolean expressions

class BExpr:
    __slots__ = ()


@dataclass(frozen=True)
class BoolLit(BExpr):
    value: bool


@dataclass(frozen=True)
class Cmp(BExpr):
    op: str  # one of < <= = != >= >
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Not(BExpr):
    arg: BExpr


@dataclass(frozen=True)
class And(BExpr):
    left: BExpr
    right: BExpr


@dataclass(frozen=True)
class Or(BExpr):
    left: BExpr
    right: BExpr


@dataclass(frozen=True)
class IsInt(BExpr):
    arg: Expr


CMP_OPS = ("<", "<=", "=", "!=", ">=", ">")

# ------------------------------------------------------------------ programs

class Program:
    __slots__ = ()


@dataclass(frozen=True)
class Skip(Program):
    pass


@dataclass(frozen=True)
class Assign(Program):
    var: str
    expr: Expr


@dataclass(frozen=True)
class Seq(Program):
    first: Program
    second: Program


@dataclass(frozen=True)
class If(Program):
    cond: BExpr
    then: Program
    orelse: Program


@dataclass(frozen=True)
class PChoice(Program):
    left: Program
    prob: Expr
    right: Program


@dataclass(frozen=True)
class DChoice(Program):
    left: Program
    right: Program


@dataclass(frozen=True)
class While(Program):
    cond: BExpr
    body: Program


Node = Union[Expr, BExpr, Program]


def seq(*stmts: Program) -> Program:
    """Right-nested sequence, the shape the parser produces."""
    if not stmts:
        return Skip()
    out = stmts[-1]
    for s in reversed(stmts[:-1]):
        out = Seq(s, out)
    return out


# -------------------------------------------------------------------- states

class State(Mapping):
    """Immutable, hashable mapping from variable names to rationals."""

    __slots__ = ("_d", "_hash")

    def __init__(self, items=(), **kw):
        d = dict(items)
        d.update(kw)
        self._d = {k: as_rational(v) for k, v in d.items()}
        self._hash = None

    @classmethod
    def _raw(cls, d):
        s = cls.__new__(cls)
        s._d = d
        s._hash = None
        return s

    def __getitem__(self, name):
        try:
            return self._d[name]
        except KeyError:
            raise UnboundVariable(name) from None

    def __contains__(self, name):
        return name in self._d

    def __iter__(self) -> Iterator[str]:
        return iter(self._d)

    def __len__(self):
        return len(self._d)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._d.items()))
        return self._hash

    def __eq__(self, other):
        if isinstance(other, State):
            return self._d == other._d
        return NotImplemented

    def set(self, name: str, value) -> "State":
        d = dict(self._d)
        d[name] = as_rational(value)
        return State._raw(d)

    def project(self, names) -> "State":
        return State._raw({n: self[n] for n in names})

    def __repr__(self):
        return "State(" + render_state(self) + ")"


def render_rational(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def render_state(s: State) -> str:
    return ",".join(f"{k}={render_rational(s._d[k])}" for k in sorted(s._d))


# ------------------------------------------------------------------ builtins

class _Harmonic:
    """Exact prefix sums H_0, H_1, ... grown on demand."""

    # harmonic_index(v) for v beyond this needs an astronomically long prefix
    MAX_INDEX_ARG = 10

    def __init__(self):
        self._h = [ZERO]
        self._lock = threading.Lock()

    def _grow(self, n):
        with self._lock:
            h = self._h
            while len(h) <= n:
                h.append(h[-1] + Fraction(1, len(h)))

    def value(self, n: int) -> Fraction:
        if n >= len(self._h):
            self._grow(n)
        return self._h[n]

    def index(self, v: Fraction) -> int:
        """Least n >= 0 with H_n >= v."""
        if v <= 0:
            return 0
        if v > self.MAX_INDEX_ARG:
            raise ArgumentTooLarge(f"harmonic_index argument {v} exceeds {self.MAX_INDEX_ARG}")
        while self._h[-1] < v:
            self._grow(2 * len(self._h))
        return bisect_left(self._h, v)


HARMONIC = _Harmonic()
MAX_POW_EXPONENT = 100_000


def _need_int(fn, *vals):
    for v in vals:
        if v.denominator != 1:
            raise NonIntegerArgument(f"{fn} needs an integer argument, got {render_rational(v)}")


def b_pow(a: Fraction, k: Fraction) -> Fraction:
    _need_int("pow", k)
    k = k.numerator
    if abs(k) > MAX_POW_EXPONENT and abs(a) != 1 and a != 0:
        raise ArgumentTooLarge(f"pow exponent {k} too large")
    if k < 0 and a == 0:
        raise DivisionByZero("pow(0, negative)")
    return a ** k


def b_mod(a: Fraction, b: Fraction) -> Fraction:
    _need_int("mod", a, b)
    if b == 0:
        raise DivisionByZero("mod by zero")
    return Fraction(a.numerator % b.numerator)


def b_harmonic(n: Fraction) -> Fraction:
    _need_int("harmonic", n)
    if n < 0:
        raise NegativeArgument(f"harmonic of negative {render_rational(n)}")
    return HARMONIC.value(n.numerator)


def b_harmonic_index(v: Fraction) -> Fraction:
    return Fraction(HARMONIC.index(v))


def monus(a, b) -> Fraction:
    d = as_rational(a) - as_rational(b)
    return d if d > 0 else ZERO


def _div(a, b):
    if b == 0:
        raise DivisionByZero("division by zero")
    return a / b


_BIN = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
}

_CALL = {
    "min": min,
    "max": max,
    "monus": monus,
    "abs": abs,
    "pow": b_pow,
    "mod": b_mod,
    "harmonic": b_harmonic,
    "harmonic_index": b_harmonic_index,
}

_CMP = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


# ---------------------------------------------------------------- evaluation
# Expressions are compiled once into closures; the closure is cached on the
# node itself (outside the dataclass fields, so equality is unaffected).

def _compile(e):
    fn = e.__dict__.get("_fn")
    if fn is not None:
        return fn
    fn = _build(e)
    object.__setattr__(e, "_fn", fn)
    return fn


def _build(e):
    if isinstance(e, Lit):
        v = as_rational(e.value)
        return lambda s: v
    if isinstance(e, Var):
        name = e.name
        return lambda s: s[name]
    if isinstance(e, Neg):
        a = _compile(e.arg)
        return lambda s: -a(s)
    if isinstance(e, BinOp):
        f, a, b = _BIN[e.op], _compile(e.left), _compile(e.right)
        return lambda s: f(a(s), b(s))
    if isinstance(e, Call):
        f = _CALL[e.fn]
        args = [_compile(x) for x in e.args]
        if len(args) == 1:
            a = args[0]
            return lambda s: f(a(s))
        a, b = args
        return lambda s: f(a(s), b(s))
    if isinstance(e, Ite):
        c, t, o = _compile(e.cond), _compile(e.then), _compile(e.orelse)
        return lambda s: t(s) if c(s) else o(s)
    if isinstance(e, Iverson):
        c = _compile(e.cond)
        return lambda s: ONE if c(s) else ZERO
    if isinstance(e, BoolLit):
        v = bool(e.value)
        return lambda s: v
    if isinstance(e, Cmp):
        f, a, b = _CMP[e.op], _compile(e.left), _compile(e.right)
        return lambda s: f(a(s), b(s))
    if isinstance(e, Not):
        a = _compile(e.arg)
        return lambda s: not a(s)
    if isinstance(e, And):
        a, b = _compile(e.left), _compile(e.right)
        return lambda s: a(s) and b(s)
    if isinstance(e, Or):
        a, b = _compile(e.left), _compile(e.right)
        return lambda s: a(s) or b(s)
    if isinstance(e, IsInt):
        a = _compile(e.arg)
        return lambda s: a(s).denominator == 1
    raise TypeError(f"not an expression: {e!r}")


def eval_expr(e: Expr, state: Mapping) -> Fraction:
    return _compile(e)(state)


def eval_bexpr(b: BExpr, state: Mapping) -> bool:
    return _compile(b)(state)


def compiled(e):
    """The cached evaluator of an Expr or BExpr, for hot loops."""
    return _compile(e)


# -------------------------------------------------------------- substitution

def substitute(f, x: str, e: Expr):
    """Replace every occurrence of variable x in f (Expr or BExpr) by e."""
    if isinstance(f, Var):
        return e if f.name == x else f
    if isinstance(f, (Lit, BoolLit)):
        return f
    if isinstance(f, Neg):
        return Neg(substitute(f.arg, x, e))
    if isinstance(f, BinOp):
        return BinOp(f.op, substitute(f.left, x, e), substitute(f.right, x, e))
    if isinstance(f, Call):
        return Call(f.fn, tuple(substitute(a, x, e) for a in f.args))
    if isinstance(f, Ite):
        return Ite(substitute(f.cond, x, e), substitute(f.then, x, e), substitute(f.orelse, x, e))
    if isinstance(f, Iverson):
        return Iverson(substitute(f.cond, x, e))
    if isinstance(f, Cmp):
        return Cmp(f.op, substitute(f.left, x, e), substitute(f.right, x, e))
    if isinstance(f, Not):
        return Not(substitute(f.arg, x, e))
    if isinstance(f, And):
        return And(substitute(f.left, x, e), substitute(f.right, x, e))
    if isinstance(f, Or):
        return Or(substitute(f.left, x, e), substitute(f.right, x, e))
    if isinstance(f, IsInt):
        return IsInt(substitute(f.arg, x, e))
    raise TypeError(f"cannot substitute into {f!r}")


# ------------------------------------------------------------------ traversal

def children(t) -> tuple:
    if isinstance(t, (Lit, Var, BoolLit, Skip)):
        return ()
    if isinstance(t, (Neg, IsInt, Not)):
        return (t.arg,)
    if isinstance(t, (BinOp, Cmp, And, Or)):
        return (t.left, t.right)
    if isinstance(t, Call):
        return t.args
    if isinstance(t, Ite):
        return (t.cond, t.then, t.orelse)
    if isinstance(t, Iverson):
        return (t.cond,)
    if isinstance(t, Assign):
        return (t.expr,)
    if isinstance(t, Seq):
        return (t.first, t.second)
    if isinstance(t, If):
        return (t.cond, t.then, t.orelse)
    if isinstance(t, PChoice):
        return (t.left, t.prob, t.right)
    if isinstance(t, DChoice):
        return (t.left, t.right)
    if isinstance(t, While):
        return (t.cond, t.body)
    raise TypeError(f"not a syntax node: {t!r}")


def walk(t):
    stack = [t]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(children(n)))


def free_vars(t) -> set:
    """Variables read or assigned anywhere in t."""
    out = set()
    for n in walk(t):
        if isinstance(n, Var):
            out.add(n.name)
        elif isinstance(n, Assign):
            out.add(n.var)
    return out


def has_loop(p: Program) -> bool:
    return any(isinstance(n, While) for n in walk(p))


def has_dchoice(p: Program) -> bool:
    return any(isinstance(n, DChoice) for n in walk(p))


def live_in(p: Program, live_out: set) -> set:
    """Variables whose value on entry to p may be read before being written."""
    if isinstance(p, Skip):
        return set(live_out)
    if isinstance(p, Assign):
        return (set(live_out) - {p.var}) | free_vars(p.expr)
    if isinstance(p, Seq):
        return live_in(p.first, live_in(p.second, live_out))
    if isinstance(p, If):
        return free_vars(p.cond) | live_in(p.then, live_out) | live_in(p.orelse, live_out)
    if isinstance(p, PChoice):
        return free_vars(p.prob) | live_in(p.left, live_out) | live_in(p.right, live_out)
    if isinstance(p, DChoice):
        return live_in(p.left, live_out) | live_in(p.right, live_out)
    if isinstance(p, While):
        head = free_vars(p.cond) | set(live_out)
        while True:
            nxt = head | live_in(p.body, head)
            if nxt == head:
                return head
            head = nxt
    raise TypeError(f"not a program: {p!r}")

"""Expectation transformers: wp, angelic awp, and loop value iteration.

Evaluation is pointwise.  A program and an initial state are compiled into a
small DAG whose nodes are constants, weighted sums (probabilistic choice),
and min/max (demonic/angelic choice); evaluating the DAG bottom-up gives the
expected value.  Loops are unrolled a bounded number of times ("fuel"), which
yields a Kleene approximant and therefore a lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm
from typing import Callable, Union

from .errors import LoopNotAllowed, NegativeExpectation, PgclError, ProbabilityOutOfRange
from .parser import Domain
from .syntax import (
    ONE,
    ZERO,
    Assign,
    BExpr,
    BinOp,
    Call,
    Cmp,
    DChoice,
    Expr,
    If,
    Ite,
    Lit,
    PChoice,
    Program,
    Seq,
    Skip,
    State,
    While,
    as_rational,
    compiled,
    free_vars,
    has_loop,
    live_in,
    monus as _monus,
    substitute,
)

DEFAULT_FUEL = 64


def monus(a, b) -> Fraction:
    """a ⊖ b = max(a - b, 0)."""
    return _monus(a, b)


# --------------------------------------------------------------- expectations

class Table:
    """A tabulated expectation over a Domain; reads 0 outside it.

    Lookups project the state onto the domain variables, so auxiliary
    variables that are dead at the loop head (like a probability computed
    afresh in each iteration) do not hide a state from the table.
    """

    def __init__(self, domain: Domain, values: dict):
        self.domain = domain
        self.values = values
        self._names = domain.variables

    def __call__(self, state) -> Fraction:
        return self.values.get(state.project(self._names), ZERO)

    def __getitem__(self, state):
        return self(state)

    def items(self):
        return self.values.items()


Expectation = Union[Expr, Table, Callable]


def as_post(f) -> Callable:
    if isinstance(f, Expr):
        return compiled(f)
    if isinstance(f, (int, Fraction)):
        v = as_rational(f)
        return lambda s: v
    if callable(f):
        return f
    raise TypeError(f"not an expectation: {f!r}")


@dataclass(frozen=True)
class WpResult:
    value: Fraction
    exact: bool


# --------------------------------------------------------------------- graph

_CONST, _SUM, _MIN, _MAX, _LEAF = range(5)


class _Graph:
    def __init__(self):
        self.kind = []
        self.arg = []
        self.inexact = []
        self._consts = {}
        self._leaves = {}

    def _add(self, kind, arg, inexact):
        self.kind.append(kind)
        self.arg.append(arg)
        self.inexact.append(inexact)
        return len(self.kind) - 1

    def const(self, v, inexact=False):
        key = (v, inexact)
        i = self._consts.get(key)
        if i is None:
            i = self._consts[key] = self._add(_CONST, v, inexact)
        return i

    def leaf(self, key):
        i = self._leaves.get(key)
        if i is None:
            i = self._leaves[key] = self._add(_LEAF, key, False)
        return i

    def sum(self, terms):
        if len(terms) == 1 and terms[0][0] == 1:
            return terms[0][1]
        return self._add(_SUM, tuple(terms), any(self.inexact[c] for _, c in terms))

    def choose(self, kind, a, b):
        if a == b:
            return a
        return self._add(kind, (a, b), self.inexact[a] or self.inexact[b])

    def evaluate(self, root):
        val = [None] * (root + 1)
        kind, arg = self.kind, self.arg
        for i in range(root + 1):
            k = kind[i]
            if k == _CONST:
                val[i] = arg[i]
            elif k == _SUM:
                val[i] = sum(w * val[c] for w, c in arg[i])
            elif k == _MIN:
                val[i] = min(val[c] for c in arg[i])
            elif k == _MAX:
                val[i] = max(val[c] for c in arg[i])
            else:
                raise AssertionError("unbound leaf in evaluation")
        return val[root], self.inexact[root]


class _Template:
    """One loop-body execution from a fixed state, with the loop head states
    it can reach left as leaves."""

    def __init__(self, graph, root):
        self.graph = graph
        self.root = root
        self.leaves = list(graph._leaves)

    def instantiate(self, g: _Graph, leaf_node: Callable) -> int:
        t = self.graph
        m = [0] * len(t.kind)
        for i, k in enumerate(t.kind):
            a = t.arg[i]
            if k == _CONST:
                m[i] = g.const(a, t.inexact[i])
            elif k == _LEAF:
                m[i] = leaf_node(a)
            elif k == _SUM:
                m[i] = g.sum([(w, m[c]) for w, c in a])
            else:
                m[i] = g.choose(k, m[a[0]], m[a[1]])
        return m[self.root]


class _Compiler:
    def __init__(self, graph: _Graph, angelic: bool, fuel: int, leaf_fn: Callable):
        self.g = graph
        self.choice = _MAX if angelic else _MIN
        self.angelic = angelic
        self.fuel = fuel
        self.leaf_fn = leaf_fn
        self.memo = {}
        self.templates = {}
        self.zero_inexact = None

    def run(self, cont: tuple, state) -> int:
        key = (tuple(map(id, cont)), state)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        node = self._run(cont, state)
        self.memo[key] = node
        return node

    def _run(self, cont, state):
        # straight-line statements are consumed in a loop to keep recursion shallow
        while cont:
            head, rest = cont[0], cont[1:]
            if isinstance(head, Skip):
                cont = rest
            elif isinstance(head, Assign):
                state = state.set(head.var, compiled(head.expr)(state))
                cont = rest
            elif isinstance(head, Seq):
                cont = (head.first, head.second) + rest
            elif isinstance(head, If):
                cont = ((head.then if compiled(head.cond)(state) else head.orelse),) + rest
            elif isinstance(head, PChoice):
                p = compiled(head.prob)(state)
                if p < 0 or p > 1:
                    raise ProbabilityOutOfRange(p, state)
                terms = []
                if p > 0:
                    terms.append((p, self.run((head.left,) + rest, state)))
                if p < 1:
                    terms.append((1 - p, self.run((head.right,) + rest, state)))
                return self.g.sum(terms)
            elif isinstance(head, DChoice):
                a = self.run((head.left,) + rest, state)
                b = self.run((head.right,) + rest, state)
                return self.g.choose(self.choice, a, b)
            elif isinstance(head, While):
                if self.angelic:
                    raise LoopNotAllowed("awp is defined for loop-free programs only")
                return self._loop(head, rest, state)
            else:
                raise TypeError(f"not a program: {head!r}")
        return self.leaf_fn(state)

    def _template(self, w: While, state) -> _Template:
        key = (id(w), state)
        t = self.templates.get(key)
        if t is None:
            tg = _Graph()
            sub = _Compiler(tg, self.angelic, self.fuel, tg.leaf)
            t = self.templates[key] = _Template(tg, sub.run((w.body,), state))
        return t

    def _loop(self, w: While, rest: tuple, entry) -> int:
        guard = compiled(w.cond)
        fuel = self.fuel
        holds = {}
        depth = {entry: 0}
        frontier = [entry]
        for d in range(fuel):
            nxt = []
            for s in frontier:
                holds[s] = guard(s)
                if holds[s]:
                    for s2 in self._template(w, s).leaves:
                        if s2 not in depth:
                            depth[s2] = d + 1
                            nxt.append(s2)
            frontier = nxt
        for s in frontier:
            holds[s] = guard(s)
        if self.zero_inexact is None:
            self.zero_inexact = self.g.const(ZERO, True)
        prev = {}
        for j in range(fuel + 1):
            cur = {}
            for s, d in depth.items():
                if d > fuel - j:
                    continue
                if not holds[s]:
                    cur[s] = self.run(rest, s)
                elif j == 0:
                    cur[s] = self.zero_inexact
                else:
                    cur[s] = self._template(w, s).instantiate(self.g, prev.__getitem__)
            prev = cur
        return prev[entry]


def _check_fuel(fuel):
    if not isinstance(fuel, int) or fuel < 1:
        raise ValueError("fuel must be a positive integer")


def _const_leaf(graph, post):
    def leaf(state):
        v = post(state)
        if v < 0:
            raise NegativeExpectation(v, state)
        return graph.const(v)

    return leaf


def wp_eval(prog: Program, f: Expectation, state: State, fuel: int = DEFAULT_FUEL) -> WpResult:
    """wp.prog.f at state.  Loops contribute a fuel-bounded lower bound.

    Fuel counts body executions per loop entry: with fuel k every run that
    leaves the loop within k iterations is accounted for exactly, and the
    remaining mass contributes 0.
    """
    _check_fuel(fuel)
    g = _Graph()
    comp = _Compiler(g, False, fuel, _const_leaf(g, as_post(f)))
    root = comp.run((prog,), state)
    value, inexact = g.evaluate(root)
    return WpResult(value, not inexact)


def awp_eval(prog: Program, f: Expectation, state: State) -> Fraction:
    """Angelic wp (demonic choice read as max) of a loop-free program."""
    if has_loop(prog):
        raise LoopNotAllowed("awp is defined for loop-free programs only")
    g = _Graph()
    comp = _Compiler(g, True, 1, _const_leaf(g, as_post(f)))
    root = comp.run((prog,), state)
    return g.evaluate(root)[0]


# ------------------------------------------------------------ symbolic lookahead

def wp_symbolic(prog: Program, f: Expr, angelic: bool = False) -> Expr:
    """wp.prog.f as an expression, for loop-free programs.

    Probabilistic choice is kept lazy, so a branch taken with probability 0
    is never evaluated, matching the pointwise engine.
    """
    if isinstance(prog, Skip):
        return f
    if isinstance(prog, Assign):
        return substitute(f, prog.var, prog.expr)
    if isinstance(prog, Seq):
        return wp_symbolic(prog.first, wp_symbolic(prog.second, f, angelic), angelic)
    if isinstance(prog, If):
        return Ite(prog.cond, wp_symbolic(prog.then, f, angelic), wp_symbolic(prog.orelse, f, angelic))
    if isinstance(prog, PChoice):
        a = wp_symbolic(prog.left, f, angelic)
        b = wp_symbolic(prog.right, f, angelic)
        p = prog.prob
        mix = BinOp("+", BinOp("*", p, a), BinOp("*", BinOp("-", Lit(ONE), p), b))
        return Ite(Cmp("=", p, Lit(ZERO)), b, Ite(Cmp("=", p, Lit(ONE)), a, mix))
    if isinstance(prog, DChoice):
        fn = "max" if angelic else "min"
        return Call(fn, (wp_symbolic(prog.left, f, angelic), wp_symbolic(prog.right, f, angelic)))
    if isinstance(prog, While):
        raise LoopNotAllowed("symbolic wp is defined for loop-free programs only")
    raise TypeError(f"not a program: {prog!r}")


# ------------------------------------------------------------ value iteration
# Iterates X_k are stored as integer numerators over one shared denominator.
# Each body template is flattened into a linear form (or min/max of linear
# forms) whose coefficients are pre-multiplied by a common factor L, so a
# whole iteration is integer multiply-adds: D_{k+1} = L * D_k.

def _flatten(t: _Template, index: dict):
    g = t.graph

    def conv(i, m):
        k = g.kind[i]
        if m == 0:
            return ("lin", ZERO, {})
        if k == _CONST:
            return ("lin", g.arg[i] * m, {})
        if k == _LEAF:
            j = index.get(g.arg[i])
            return ("lin", ZERO, {} if j is None else {j: m})
        if k == _SUM:
            parts = [conv(c, m * w) for w, c in g.arg[i]]
            if all(p[0] == "lin" for p in parts):
                const = sum((p[1] for p in parts), ZERO)
                coefs = {}
                for p in parts:
                    for j, a in p[2].items():
                        coefs[j] = coefs.get(j, ZERO) + a
                return ("lin", const, coefs)
            return ("add", parts)
        return ("min" if k == _MIN else "max", [conv(c, m) for c in g.arg[i]])

    return conv(t.root, ONE)


def _denominators(form, out):
    if form[0] == "lin":
        out.append(form[1].denominator)
        out.extend(a.denominator for a in form[2].values())
    else:
        for p in form[1]:
            _denominators(p, out)


def _integerize(form, scale):
    if form[0] == "lin":
        return ("lin", int(form[1] * scale), tuple((j, int(a * scale)) for j, a in form[2].items()))
    return (form[0], [_integerize(p, scale) for p in form[1]])


def _run_form(form, nums, d):
    tag = form[0]
    if tag == "lin":
        acc = form[1] * d
        for j, a in form[2]:
            acc += a * nums[j]
        return acc
    vals = [_run_form(p, nums, d) for p in form[1]]
    if tag == "add":
        return sum(vals)
    return min(vals) if tag == "min" else max(vals)


class ValueIteration:
    """Kleene iteration X_0 = 0, X_{k+1} = [¬G]·f + [G]·wp.body.X_k on a domain."""

    def __init__(self, guard: BExpr, body: Program, f: Expectation, dom: Domain, fuel: int = DEFAULT_FUEL):
        _check_fuel(fuel)
        names = dom.variables
        post_vars = set(names) if not isinstance(f, Expr) else free_vars(f)
        live = live_in(While(guard, body), post_vars)
        missing = live - set(names)
        if missing:
            raise PgclError(
                "variables " + ", ".join(sorted(missing)) + " are read at the loop head but not covered by the domain"
            )
        self.domain = dom
        self.states = dom.states()
        index = {s: i for i, s in enumerate(self.states)}
        self.index = index
        post = as_post(f)
        g_fn = compiled(guard)
        forms = []
        dens = [1]
        for s in self.states:
            if g_fn(s):
                tg = _Graph()
                comp = _Compiler(tg, False, fuel, lambda s2, tg=tg: tg.leaf(s2.project(names)))
                form = _flatten(_Template(tg, comp.run((body,), s)), index)
            else:
                v = post(s)
                if v < 0:
                    raise NegativeExpectation(v, s)
                form = ("lin", v, {})
            _denominators(form, dens)
            forms.append(form)
        self.scale = lcm(*dens)
        self.forms = [_integerize(fm, self.scale) for fm in forms]
        self.nums = [0] * len(self.states)
        self.den = 1
        self.k = 0

    def step(self, n: int = 1):
        forms, L = self.forms, self.scale
        for _ in range(n):
            nums, d = self.nums, self.den
            self.nums = [_run_form(fm, nums, d) for fm in forms]
            self.den = d * L
            self.k += 1
            if self.k % 32 == 0:
                self._reduce()
        return self

    def _reduce(self):
        g = self.den
        for x in self.nums:
            g = gcd(g, x)
            if g == 1:
                return
        self.den //= g
        self.nums = [x // g for x in self.nums]

    def value(self, state) -> Fraction:
        i = self.index.get(state.project(self.domain.variables))
        return ZERO if i is None else Fraction(self.nums[i], self.den)

    def table(self) -> Table:
        return Table(self.domain, {s: Fraction(n, self.den) for s, n in zip(self.states, self.nums)})


def loop_value_iteration(
    guard: BExpr, body: Program, f: Expectation, dom: Domain, iters: int, fuel: int = DEFAULT_FUEL
) -> Table:
    if iters < 0:
        raise ValueError("iters must be non-negative")
    return ValueIteration(guard, body, f, dom, fuel).step(iters).table()


class StateSet:
    """An explicit finite set of states sharing one set of variables; usable
    wherever a Domain is expected."""

    def __init__(self, variables, states):
        self.variables = tuple(variables)
        self._states = list(states)
        self._set = set(self._states)

    def states(self) -> list:
        return list(self._states)

    def __len__(self):
        return len(self._states)

    def __contains__(self, state) -> bool:
        try:
            return state.project(self.variables) in self._set
        except KeyError:
            return False


def reachable_states(w: While, init: State, depth: int, fuel: int = DEFAULT_FUEL, limit: int = 200_000) -> StateSet:
    """Loop-head states reachable from init within depth iterations.

    The k-th value iterate at init only reads states in this set, so using it
    as the domain gives exactly the same value as any larger domain.
    """
    names = tuple(sorted(init))
    guard = compiled(w.cond)
    seen = {init.project(names): 0}
    frontier = list(seen)
    for d in range(depth):
        nxt = []
        for s in frontier:
            if not guard(s):
                continue
            tg = _Graph()
            _Compiler(tg, False, fuel, tg.leaf).run((w.body,), s)
            for s2 in tg._leaves:
                s2 = s2.project(names)
                if s2 not in seen:
                    seen[s2] = d + 1
                    nxt.append(s2)
                    if len(seen) > limit:
                        raise PgclError(f"more than {limit} reachable states; give an explicit domain")
        frontier = nxt
        if not frontier:
            break
    return StateSet(names, seen)

"""Compiled simulation backend.

A program plus scheduler is translated into Python source over int64
rationals (numerator, denominator pairs kept in lowest terms below 2**62)
and jitted with numba.  The generated code counts steps exactly like the
reference interpreter and draws random numbers from the same splitmix64
streams.  Whenever a value would leave the int64 range, or a runtime fault
occurs, the trial is rerun by the reference interpreter, which is
authoritative; the fast path only ever saves time.
"""

from __future__ import annotations

import threading
from fractions import Fraction

from .errors import PgclError
from .operational import Tally, run_trial, trial_seed
from .syntax import (
    And,
    Assign,
    BinOp,
    BoolLit,
    Call,
    Cmp,
    DChoice,
    If,
    IsInt,
    Ite,
    Iverson,
    Lit,
    Neg,
    Not,
    Or,
    PChoice,
    Seq,
    Skip,
    Var,
    While,
    free_vars,
    has_loop,
)

try:
    import numba
    import numpy as np

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

TERMINATED, CENSORED, BAIL, ERROR = 1, 2, 3, 4
LIM = 1 << 62
HARMONIC_INDEX_MAX = 10  # must match the reference builtin


class Unsupported(PgclError):
    pass


# ------------------------------------------------------------------ runtime

if HAVE_NUMBA:
    _jit = numba.njit(nogil=True, cache=True)

    @_jit
    def _gcd(a, b):
        if a < 0:
            a = -a
        if b < 0:
            b = -b
        while b:
            a, b = b, a % b
        return a

    @_jit
    def _mulc(a, b):
        # product with overflow check against LIM
        if a == 0 or b == 0:
            return 0, True
        aa = a if a > 0 else -a
        bb = b if b > 0 else -b
        if aa > (LIM - 1) // bb:
            return 0, False
        return a * b, True

    @_jit
    def _norm(n, d):
        if d < 0:
            n = -n
            d = -d
        if d != 1:
            g = _gcd(n, d)
            if g > 1:
                n //= g
                d //= g
        if n >= LIM or n <= -LIM or d >= LIM:
            return 0, 1, BAIL
        return n, d, 0

    @_jit
    def r_add(an, ad, bn, bd):
        if ad == bd:
            return _norm(an + bn, ad)
        x, o1 = _mulc(an, bd)
        y, o2 = _mulc(bn, ad)
        z, o3 = _mulc(ad, bd)
        if not (o1 and o2 and o3):
            return 0, 1, BAIL
        return _norm(x + y, z)

    @_jit
    def r_sub(an, ad, bn, bd):
        return r_add(an, ad, -bn, bd)

    @_jit
    def r_mul(an, ad, bn, bd):
        g1 = _gcd(an, bd)
        g2 = _gcd(bn, ad)
        if g1 > 1:
            an //= g1
            bd //= g1
        if g2 > 1:
            bn //= g2
            ad //= g2
        n, o1 = _mulc(an, bn)
        d, o2 = _mulc(ad, bd)
        if not (o1 and o2):
            return 0, 1, BAIL
        if n == 0:
            return 0, 1, 0
        return n, d, 0

    @_jit
    def r_div(an, ad, bn, bd):
        if bn == 0:
            return 0, 1, ERROR
        if bn < 0:
            return r_mul(an, ad, -bd, -bn)
        return r_mul(an, ad, bd, bn)

    @_jit
    def r_cmp(an, ad, bn, bd):
        # sign of a - b, plus status
        if ad == bd:
            x, y = an, bn
        else:
            x, o1 = _mulc(an, bd)
            y, o2 = _mulc(bn, ad)
            if not (o1 and o2):
                return 0, BAIL
        if x < y:
            return -1, 0
        if x > y:
            return 1, 0
        return 0, 0

    @_jit
    def r_min(an, ad, bn, bd):
        c, st = r_cmp(an, ad, bn, bd)
        if c <= 0:
            return an, ad, st
        return bn, bd, st

    @_jit
    def r_max(an, ad, bn, bd):
        c, st = r_cmp(an, ad, bn, bd)
        if c >= 0:
            return an, ad, st
        return bn, bd, st

    @_jit
    def r_monus(an, ad, bn, bd):
        n, d, st = r_sub(an, ad, bn, bd)
        if st:
            return 0, 1, st
        if n < 0:
            return 0, 1, 0
        return n, d, 0

    @_jit
    def r_abs(an, ad):
        return (an if an >= 0 else -an), ad, 0

    @_jit
    def r_pow(an, ad, kn, kd):
        if kd != 1:
            return 0, 1, ERROR
        k = kn
        if k < 0:
            if an == 0:
                return 0, 1, ERROR
            if an < 0:
                an, ad = -ad, -an
            else:
                an, ad = ad, an
            k = -k
        rn, rd = 1, 1
        bn, bd = an, ad
        while k > 0:
            if k & 1:
                rn, rd, st = r_mul(rn, rd, bn, bd)
                if st:
                    return 0, 1, st
            k >>= 1
            if k > 0:
                bn, bd, st = r_mul(bn, bd, bn, bd)
                if st:
                    return 0, 1, st
        return rn, rd, 0

    @_jit
    def r_mod(an, ad, bn, bd):
        if ad != 1 or bd != 1:
            return 0, 1, ERROR
        if bn == 0:
            return 0, 1, ERROR
        return an % bn, 1, 0

    @_jit
    def r_harmonic(nn, nd):
        if nd != 1 or nn < 0:
            return 0, 1, ERROR
        hn, hd = 0, 1
        for k in range(1, nn + 1):
            hn, hd, st = r_add(hn, hd, 1, k)
            if st:
                return 0, 1, st
        return hn, hd, 0

    @_jit
    def r_harmonic_index(vn, vd):
        if vn <= 0:
            return 0, 1, 0
        c, st = r_cmp(vn, vd, HARMONIC_INDEX_MAX, 1)
        if st:
            return 0, 1, st
        if c > 0:
            return 0, 1, ERROR
        hn, hd = 0, 1
        k = 0
        while True:
            c, st = r_cmp(hn, hd, vn, vd)
            if st:
                return 0, 1, st
            if c >= 0:
                return k, 1, 0
            k += 1
            hn, hd, st = r_add(hn, hd, 1, k)
            if st:
                return 0, 1, st

    _GAMMA = np.uint64(0x9E3779B97F4A7C15)
    _M1 = np.uint64(0xBF58476D1CE4E5B9)
    _M2 = np.uint64(0x94D049BB133111EB)
    _MAXU = np.uint64(0xFFFFFFFFFFFFFFFF)
    _ZEROU = np.uint64(0)

    @_jit
    def sm_mix(z):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))

    @_jit
    def sm_seed(master, i):
        return sm_mix(master + np.uint64(i + 1) * _GAMMA)

    @_jit
    def bernoulli(pn, pd, rs):
        # returns (outcome, new rng state); pn/pd in lowest terms, 0 <= pn <= pd
        if pn == 0:
            return False, rs
        if pn == pd:
            return True, rs
        b = np.uint64(pd)
        r = (_ZEROU - b) % b
        top = _MAXU - r
        while True:
            rs = rs + _GAMMA
            x = sm_mix(rs)
            if x <= top:
                return (x % b) < np.uint64(pn), rs


# ------------------------------------------------------------------ codegen

_BIN = {"+": "r_add", "-": "r_sub", "*": "r_mul", "/": "r_div"}
_CALL = {
    "min": "r_min",
    "max": "r_max",
    "monus": "r_monus",
    "abs": "r_abs",
    "pow": "r_pow",
    "mod": "r_mod",
    "harmonic": "r_harmonic",
    "harmonic_index": "r_harmonic_index",
}
_CMP = {"<": "c < 0", "<=": "c <= 0", "=": "c == 0", "!=": "c != 0", ">=": "c >= 0", ">": "c > 0"}


class _Gen:
    def __init__(self, varnames, sch):
        self.vars = {n: i for i, n in enumerate(varnames)}
        self.sch = sch
        self.lines = []
        self.ind = 1
        self.k = 0

    def emit(self, line):
        self.lines.append("    " * self.ind + line)

    def fresh(self, prefix="t"):
        self.k += 1
        return f"{prefix}{self.k}"

    def check(self, st):
        self.emit(f"if {st}:")
        self.emit(f"    return {st}, steps, dec")

    # expressions: return names of (num, den) locals
    def expr(self, e):
        if isinstance(e, Lit):
            v = Fraction(e.value)
            if abs(v.numerator) >= LIM or v.denominator >= LIM:
                raise Unsupported("literal too large for the compiled engine")
            return str(v.numerator), str(v.denominator)
        if isinstance(e, Var):
            i = self.vars[e.name]
            self.emit(f"if not b{i}:")
            self.emit(f"    return {ERROR}, steps, dec")
            return f"n{i}", f"d{i}"
        t = self.fresh()
        if isinstance(e, Neg):
            an, ad = self.expr(e.arg)
            self.emit(f"{t}n, {t}d = -{an}, {ad}")
            return f"{t}n", f"{t}d"
        if isinstance(e, (BinOp, Call)):
            fn = _BIN[e.op] if isinstance(e, BinOp) else _CALL[e.fn]
            args = (e.left, e.right) if isinstance(e, BinOp) else e.args
            parts = []
            for a in args:
                parts.extend(self.expr(a))
            st = self.fresh("s")
            self.emit(f"{t}n, {t}d, {st} = {fn}({', '.join(parts)})")
            self.check(st)
            return f"{t}n", f"{t}d"
        if isinstance(e, Ite):
            c = self.bexpr(e.cond)
            self.emit(f"if {c}:")
            self.ind += 1
            an, ad = self.expr(e.then)
            self.emit(f"{t}n, {t}d = {an}, {ad}")
            self.ind -= 1
            self.emit("else:")
            self.ind += 1
            bn, bd = self.expr(e.orelse)
            self.emit(f"{t}n, {t}d = {bn}, {bd}")
            self.ind -= 1
            return f"{t}n", f"{t}d"
        if isinstance(e, Iverson):
            c = self.bexpr(e.cond)
            self.emit(f"{t}n, {t}d = (1 if {c} else 0), 1")
            return f"{t}n", f"{t}d"
        raise Unsupported(f"cannot compile {e!r}")

    def bexpr(self, b):
        t = self.fresh("c")
        if isinstance(b, BoolLit):
            self.emit(f"{t} = {b.value}")
        elif isinstance(b, Cmp):
            an, ad = self.expr(b.left)
            bn, bd = self.expr(b.right)
            st = self.fresh("s")
            self.emit(f"c, {st} = r_cmp({an}, {ad}, {bn}, {bd})")
            self.check(st)
            self.emit(f"{t} = {_CMP[b.op]}")
        elif isinstance(b, Not):
            a = self.bexpr(b.arg)
            self.emit(f"{t} = not {a}")
        elif isinstance(b, (And, Or)):
            a = self.bexpr(b.left)
            self.emit(f"{t} = {a}")
            self.emit(f"if {t}:" if isinstance(b, And) else f"if not {t}:")
            self.ind += 1
            r = self.bexpr(b.right)
            self.emit(f"{t} = {r}")
            self.ind -= 1
        elif isinstance(b, IsInt):
            _, ad = self.expr(b.arg)
            self.emit(f"{t} = {ad} == 1")
        else:
            raise Unsupported(f"cannot compile {b!r}")
        return t

    # statements
    def dispatch(self):
        self.emit("if steps >= cap:")
        self.emit(f"    return {CENSORED}, steps, dec")
        self.emit("steps += 1")

    def block(self, p):
        self.ind += 1
        self.stmt(p)
        self.emit("pass")
        self.ind -= 1

    def stmt(self, p):
        if isinstance(p, While):
            self.emit("while True:")
            self.ind += 1
            self.dispatch()
            c = self.bexpr(p.cond)
            self.emit(f"if not {c}:")
            self.emit("    break")
            self.stmt(p.body)
            self.ind -= 1
            return
        self.dispatch()
        if isinstance(p, Skip):
            return
        if isinstance(p, Assign):
            n, d = self.expr(p.expr)
            i = self.vars[p.var]
            self.emit(f"n{i}, d{i}, b{i} = {n}, {d}, True")
        elif isinstance(p, Seq):
            self.stmt(p.first)
            self.stmt(p.second)
        elif isinstance(p, If):
            c = self.bexpr(p.cond)
            self.emit(f"if {c}:")
            self.block(p.then)
            self.emit("else:")
            self.block(p.orelse)
        elif isinstance(p, PChoice):
            n, d = self.expr(p.prob)
            self.emit(f"if {n} < 0 or {n} > {d}:")
            self.emit(f"    return {ERROR}, steps, dec")
            c = self.fresh("c")
            self.emit(f"{c}, rs = bernoulli({n}, {d}, rs)")
            self.emit(f"if {c}:")
            self.block(p.left)
            self.emit("else:")
            self.block(p.right)
        elif isinstance(p, DChoice):
            c = self.decide(p)
            self.emit("dec += 1")
            self.emit(f"if {c}:")
            self.block(p.left)
            self.emit("else:")
            self.block(p.right)
        else:
            raise Unsupported(f"cannot compile {p!r}")

    def decide(self, node):
        c = self.fresh("c")
        pol = self.sch.policy
        if pol == "left":
            self.emit(f"{c} = True")
        elif pol == "right":
            self.emit(f"{c} = False")
        elif pol == "alternate":
            self.emit(f"{c} = dec % 2 == 0")
        elif pol == "random":
            self.emit(f"{c}, rs = bernoulli(1, 2, rs)")
        else:
            if has_loop(node.left) or has_loop(node.right):
                # the reference interpreter reports this as a runtime fault
                self.emit(f"return {ERROR}, steps, dec")
                self.emit(f"{c} = True")
                return c
            left, right = self.sch.lookahead(node)
            ln, ld = self.expr(left)
            rn, rd = self.expr(right)
            st = self.fresh("s")
            self.emit(f"c, {st} = r_cmp({ln}, {ld}, {rn}, {rd})")
            self.check(st)
            self.emit(f"{c} = c <= 0")
        return c


def _source(prog, sch, varnames) -> str:
    g = _Gen(varnames, sch)
    for i in range(len(varnames)):
        g.emit(f"n{i} = init_n[{i}]")
        g.emit(f"d{i} = init_d[{i}]")
        g.emit(f"b{i} = init_b[{i}]")
    g.emit("rs = seed")
    g.emit("steps = 0")
    g.emit("dec = 0")
    g.emit("c = 0")
    g.stmt(prog)
    g.emit(f"return {TERMINATED}, steps, dec")
    head = "def run_one(init_n, init_d, init_b, seed, cap):\n"
    batch = (
        "\n\ndef run_batch(init_n, init_d, init_b, master, start, end, cap, out_status, out_steps):\n"
        "    for i in range(start, end):\n"
        "        st, steps, _ = run_one(init_n, init_d, init_b, sm_seed(master, i), cap)\n"
        "        out_status[i - start] = st\n"
        "        out_steps[i - start] = steps\n"
    )
    return head + "\n".join(g.lines) + batch


# ------------------------------------------------------------------- driver

class CompiledProgram:
    def __init__(self, prog, sch, init, varnames):
        self.varnames = varnames
        src = _source(prog, sch, varnames)
        self.source = src
        ns = {name: globals()[name] for name in (
            "r_add", "r_sub", "r_mul", "r_div", "r_cmp", "r_min", "r_max", "r_monus", "r_abs",
            "r_pow", "r_mod", "r_harmonic", "r_harmonic_index", "bernoulli", "sm_seed",
        )}
        with _CACHE_LOCK:
            batch = _JITTED.get(src)
        if batch is None:
            exec(compile(src, "<pgcl-compiled>", "exec"), ns)
            run_one = numba.njit(nogil=True)(ns["run_one"])
            ns["run_one"] = run_one
            batch = numba.njit(nogil=True)(ns["run_batch"])
            with _CACHE_LOCK:
                batch = _JITTED.setdefault(src, batch)
        self._batch = batch
        k = len(varnames)
        self.init_n = np.zeros(max(k, 1), dtype=np.int64)
        self.init_d = np.ones(max(k, 1), dtype=np.int64)
        self.init_b = np.zeros(max(k, 1), dtype=np.bool_)
        for i, name in enumerate(varnames):
            if name in init:
                v = init[name]
                if abs(v.numerator) >= LIM or v.denominator >= LIM:
                    raise Unsupported("initial value too large for the compiled engine")
                self.init_n[i], self.init_d[i], self.init_b[i] = v.numerator, v.denominator, True
        self._lock = threading.Lock()
        self._compiled = False

    def _warm(self):
        # compile once, outside the worker threads
        with self._lock:
            if not self._compiled:
                st = np.zeros(1, dtype=np.int64)
                sp = np.zeros(1, dtype=np.int64)
                self._batch(self.init_n, self.init_d, self.init_b, np.uint64(0), 0, 1, 1, st, sp)
                self._compiled = True

    def run_range(self, master_seed, start, end, cap, prog, init, sch) -> Tally:
        self._warm()
        m = end - start
        status = np.zeros(m, dtype=np.int64)
        steps = np.zeros(m, dtype=np.int64)
        self._batch(self.init_n, self.init_d, self.init_b, np.uint64(master_seed & ((1 << 64) - 1)),
                    start, end, cap, status, steps)
        tally = Tally()
        done = status == TERMINATED
        tally.terminated = int(done.sum())
        tally.steps = int(steps[done].sum())
        tally.censored = int((status == CENSORED).sum())
        for j in np.nonzero((status == BAIL) | (status == ERROR))[0]:
            i = start + int(j)
            tally.add(i, run_trial(prog, init, sch, cap, trial_seed(master_seed, i)))
        return tally


_CACHE = {}
_JITTED = {}  # generated source -> jitted batch runner
_CACHE_LOCK = threading.Lock()


def compile_program(prog, sch, init, strict=False):
    """A CompiledProgram, or None when the compiled engine cannot be used
    (raises instead when strict)."""
    if not HAVE_NUMBA:
        if strict:
            raise Unsupported("numba is not installed")
        return None
    varnames = tuple(sorted(free_vars(prog) | set(init)))
    key = (prog, sch.name(), tuple(sorted(init.items())))
    with _CACHE_LOCK:
        hit = _CACHE.get(key)
    if hit is not None:
        return hit
    try:
        cp = CompiledProgram(prog, sch, init, varnames)
    except Unsupported:
        if strict:
            raise
        return None
    with _CACHE_LOCK:
        _CACHE[key] = cp
    return cp

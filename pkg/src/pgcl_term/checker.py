"""Certificate checking over a finite domain of states.

Three kinds of certificate are supported:

* ``ast-new``: invariant I, variant V, antitone p and d over the variant
  value.  Obligations: I is preserved; G∧I ⇒ V>0; from every G∧I state the
  variant drops by at least d(V) with probability at least p(V); and V is a
  super-martingale.
* ``ast-old``: an integer variant bounded between Low and High that drops
  with probability at least ε.
* ``non-termination``: a bounded, non-constant exact martingale.

Every verdict is relative to the domain that was enumerated.  A PASS says the
obligations hold at each of those states, which is evidence, not a proof
over the infinite state space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil
from typing import Optional

from .errors import InvalidParameters, LoopNotAllowed, PgclError
from .parser import (
    RESERVED_ARG,
    CertificateNew,
    CertificateNonTerm,
    CertificateOld,
    Domain,
)
from .syntax import (
    ONE,
    ZERO,
    BExpr,
    BinOp,
    Cmp,
    Ite,
    Lit,
    Program,
    Seq,
    State,
    Var,
    While,
    compiled,
    free_vars,
    has_loop,
    live_in,
    monus,
    render_rational,
    render_state,
)
from .transformer import DEFAULT_FUEL, awp_eval, wp_eval

PASS = "PASS-ON-DOMAIN"
FAIL = "FAIL"
INCONCLUSIVE = "INCONCLUSIVE"
_RANK = {PASS: 0, INCONCLUSIVE: 1, FAIL: 2}

DEFAULT_H_SAMPLES = (Fraction(1), Fraction(10), Fraction(100), Fraction(1000), Fraction(10000))


@dataclass(frozen=True)
class LoopSpec:
    guard: BExpr
    body: Program

    @classmethod
    def of(cls, w: While) -> "LoopSpec":
        return cls(w.cond, w.body)

    def program(self) -> While:
        return While(self.guard, self.body)


@dataclass(frozen=True)
class PdGrid:
    step: Fraction = Fraction(1, 4)
    max: Fraction = Fraction(10000)

    def points(self):
        n = int(self.max // self.step)
        return [self.step * k for k in range(1, n + 1)]


@dataclass(frozen=True)
class CheckConfig:
    domain: Domain
    h_samples: tuple = DEFAULT_H_SAMPLES
    pd_grid: PdGrid = PdGrid()
    fuel: int = DEFAULT_FUEL

    def __post_init__(self):
        if not self.h_samples or any(h <= 0 for h in self.h_samples):
            raise ValueError("h_samples must be a nonempty list of positive rationals")
        if self.pd_grid.step <= 0:
            raise ValueError("pd grid step must be positive")
        if self.fuel < 1:
            raise ValueError("fuel must be a positive integer")


@dataclass
class Entry:
    name: str
    verdict: str
    counterexample: Optional[State] = None
    detail: str = ""

    def line(self) -> str:
        out = f"condition {self.name} {self.verdict}"
        if self.counterexample is not None:
            out += f" state {render_state(self.counterexample)}"
        return out


@dataclass
class Report:
    kind: str
    entries: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    states_checked: int = 0

    @property
    def verdict(self) -> str:
        worst = PASS
        for e in self.entries:
            if _RANK[e.verdict] > _RANK[worst]:
                worst = e.verdict
        return worst

    def entry(self, name) -> Entry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def machine_lines(self) -> list:
        return [e.line() for e in self.entries]

    def render(self) -> str:
        lines = [f"certificate {self.kind}", f"states {self.states_checked}"]
        lines += [f"warning {w}" for w in self.warnings]
        for e in self.entries:
            lines.append(e.line())
            if e.detail:
                lines.append(f"  {e.detail}")
        lines.append(f"verdict {self.verdict}")
        return "\n".join(lines)


class _Cond:
    """Accumulates one obligation over many states; keeps the first witness."""

    def __init__(self, name, detail="", unit="states"):
        self.name = name
        self.detail = detail
        self.unit = unit
        self.fail = None
        self.inconclusive = None
        self.checked = 0

    def record(self, state, ok: bool, exact: bool = True, why: str = ""):
        self.checked += 1
        if ok:
            return
        if exact:
            if self.fail is None:
                self.fail = (state, why)
        elif self.inconclusive is None:
            self.inconclusive = (state, why + " (against a fuel-limited lower bound)")

    def error(self, state, err):
        self.checked += 1
        if self.fail is None:
            self.fail = (state, f"evaluation error: {err}")

    def entry(self) -> Entry:
        if self.fail is not None:
            return Entry(self.name, FAIL, self.fail[0], self.fail[1])
        if self.inconclusive is not None:
            return Entry(self.name, INCONCLUSIVE, self.inconclusive[0], self.inconclusive[1])
        detail = f"held at {self.checked} {self.unit}"
        if self.detail:
            detail += f"; {self.detail}"
        return Entry(self.name, PASS, None, detail)


def _r(q) -> str:
    return render_rational(q)


# ------------------------------------------------------------------ p/d shape

def check_pd_shape(p, d, grid: PdGrid) -> Report:
    """p must map into (0,1], d into (0,∞), both antitone, on every grid point."""
    for name, e in (("prob", p), ("decrease", d)):
        extra = free_vars(e) - {RESERVED_ARG}
        if extra:
            raise InvalidParameters(f"{name} may only mention {RESERVED_ARG!r}, not {sorted(extra)}")
    pf, df = compiled(p), compiled(d)
    conds = {n: _Cond(n, unit="grid points") for n in ("p-range", "d-positive", "p-antitone", "d-antitone")}
    prev_p = prev_d = None
    for v in grid.points():
        s = State._raw({RESERVED_ARG: v})
        try:
            pv = pf(s)
        except PgclError as err:
            conds["p-range"].error(s, err)
            break
        try:
            dv = df(s)
        except PgclError as err:
            conds["d-positive"].error(s, err)
            break
        conds["p-range"].record(s, 0 < pv <= 1, why=f"p({_r(v)}) = {_r(pv)} is outside (0,1]")
        conds["d-positive"].record(s, dv > 0, why=f"d({_r(v)}) = {_r(dv)} is not positive")
        if prev_p is not None:
            conds["p-antitone"].record(s, pv <= prev_p, why=f"p increases to {_r(pv)} at v={_r(v)}")
            conds["d-antitone"].record(s, dv <= prev_d, why=f"d increases to {_r(dv)} at v={_r(v)}")
        prev_p, prev_d = pv, dv
    rep = Report("pd-shape")
    grid_note = f"grid step {_r(grid.step)} up to {_r(grid.max)}"
    for c in conds.values():
        c.detail = grid_note
        rep.entries.append(c.entry())
    rep.states_checked = len(grid.points())
    return rep


# ------------------------------------------------------------------- helpers

def _validate_vars(loop: LoopSpec, exprs, dom: Domain):
    prog_vars = free_vars(loop.body) | free_vars(loop.guard)
    if RESERVED_ARG in prog_vars:
        raise InvalidParameters(f"{RESERVED_ARG!r} is reserved for the variant argument and may not be a program variable")
    used = set()
    for e in exprs:
        used |= free_vars(e)
    stray = used - prog_vars
    if stray:
        raise InvalidParameters("certificate mentions variables the loop does not use: " + ", ".join(sorted(stray)))
    needed = live_in(loop.program(), used) | used
    missing = needed - set(dom.variables)
    if missing:
        raise InvalidParameters("domain does not bind " + ", ".join(sorted(missing)))


def _scan(loop: LoopSpec, inv: BExpr, dom: Domain, rep: Report):
    """Yield (state, guard, invariant) over the domain; evaluation faults are
    recorded against a 'well-defined' obligation."""
    g, i = compiled(loop.guard), compiled(inv)
    wd = _Cond("well-defined")
    out = []
    for s in dom.states():
        try:
            out.append((s, g(s), i(s)))
            wd.record(s, True)
        except PgclError as err:
            wd.error(s, err)
    rep.entries.append(wd.entry())
    rep.states_checked = len(out)
    return out


def _invariant_check(cond: _Cond, body, inv_fn, s, fuel):
    try:
        r = wp_eval(body, lambda t: ONE if inv_fn(t) else ZERO, s, fuel)
    except PgclError as err:
        cond.error(s, err)
        return
    cond.record(s, r.value >= 1, r.exact, f"invariant is kept only with probability {_r(r.value)}")


# ------------------------------------------------------------------ new rule

def check_new_rule(loop: LoopSpec, cert: CertificateNew, cfg: CheckConfig) -> Report:
    _validate_vars(loop, (cert.invariant, cert.variant), cfg.domain)
    rep = Report("ast-new")
    rows = _scan(loop, cert.invariant, cfg.domain, rep)
    vf, inv_fn = compiled(cert.variant), compiled(cert.invariant)
    pf, df = compiled(cert.prob), compiled(cert.decrease)
    body, fuel = loop.body, cfg.fuel

    positivity = _Cond("positivity")
    active = []
    for s, g, i in rows:
        if g and i:
            try:
                v = vf(s)
            except PgclError as err:
                positivity.error(s, err)
                continue
            positivity.record(s, v > 0, why=f"variant is {_r(v)} on a guard and invariant state")
            active.append((s, v))

    grid = cfg.pd_grid
    if active:
        top = max(v for _, v in active)
        if top > grid.max:
            new_max = ceil(top / grid.step) * grid.step
            rep.warnings.append(
                f"pd grid max {_r(grid.max)} is below the largest variant value {_r(top)}; grid extended to {_r(new_max)}"
            )
            grid = PdGrid(grid.step, new_max)
    rep.entries.extend(check_pd_shape(cert.prob, cert.decrease, grid).entries)

    loop_free = not has_loop(body)
    invariant = _Cond("invariant")
    progress = _Cond("progress")
    if loop_free:
        smart = _Cond("supermartingale", "angelic wp of the variant, covering every H at once")
    else:
        ladder = ",".join(_r(h) for h in cfg.h_samples)
        smart = _Cond("supermartingale-sampled-H", f"H sampled from {ladder}")

    for s, v in active:
        _invariant_check(invariant, body, inv_fn, s, fuel)

        try:
            vs = State._raw({RESERVED_ARG: v})
            pr, dr = pf(vs), df(vs)
            target = v - dr
            r = wp_eval(body, lambda t: ONE if vf(t) <= target else ZERO, s, fuel)
            progress.record(
                s, pr <= r.value, r.exact,
                f"variant falls to {_r(target)} or below with probability {_r(r.value)} < p({_r(v)}) = {_r(pr)}",
            )
        except PgclError as err:
            progress.error(s, err)

        try:
            if loop_free:
                a = awp_eval(body, cert.variant, s)
                smart.record(s, a <= v, why=f"angelic expected variant {_r(a)} exceeds {_r(v)}")
            else:
                for h in cfg.h_samples:
                    r = wp_eval(body, lambda t, h=h: monus(h, vf(t)), s, fuel)
                    lhs = monus(h, v)
                    if not lhs <= r.value:
                        smart.record(s, False, r.exact, f"H={_r(h)}: {_r(lhs)} > wp = {_r(r.value)}")
                        break
                else:
                    smart.record(s, True)
        except PgclError as err:
            smart.error(s, err)

    rep.entries += [invariant.entry(), positivity.entry(), progress.entry(), smart.entry()]
    return rep


# ------------------------------------------------------------------ old rule

def check_old_rule(loop: LoopSpec, cert: CertificateOld, cfg: CheckConfig) -> Report:
    _validate_vars(loop, (cert.invariant, cert.vint), cfg.domain)
    rep = Report("ast-old")
    rows = _scan(loop, cert.invariant, cfg.domain, rep)
    vf, inv_fn = compiled(cert.vint), compiled(cert.invariant)
    body, fuel = loop.body, cfg.fuel
    invariant, bounds = _Cond("invariant"), _Cond("bounds")
    integral, progress = _Cond("integer-variant"), _Cond("progress")
    for s, g, i in rows:
        if not (g and i):
            continue
        _invariant_check(invariant, body, inv_fn, s, fuel)
        try:
            n = vf(s)
        except PgclError as err:
            for c in (bounds, integral, progress):
                c.error(s, err)
            continue
        bounds.record(
            s, cert.low < n <= cert.high,
            why=f"variant {_r(n)} is outside ({_r(cert.low)}, {_r(cert.high)}]",
        )
        integral.record(s, n.denominator == 1, why=f"variant {_r(n)} is not an integer")
        try:
            r = wp_eval(body, lambda t: ONE if vf(t) < n else ZERO, s, fuel)
            progress.record(
                s, cert.eps <= r.value, r.exact,
                f"variant decreases with probability {_r(r.value)} < eps = {_r(cert.eps)}",
            )
        except PgclError as err:
            progress.error(s, err)
    rep.entries += [invariant.entry(), bounds.entry(), integral.entry(), progress.entry()]
    return rep


# ----------------------------------------------------------- non-termination

def check_nonterm(loop: LoopSpec, cert: CertificateNonTerm, cfg: CheckConfig) -> Report:
    if has_loop(loop.body):
        raise LoopNotAllowed("the non-termination check needs a loop-free body")
    _validate_vars(loop, (cert.invariant, cert.martingale), cfg.domain)
    rep = Report("non-termination")
    rows = _scan(loop, cert.invariant, cfg.domain, rep)
    vf, inv_fn = compiled(cert.martingale), compiled(cert.invariant)
    body, fuel = loop.body, cfg.fuel
    invariant, positivity = _Cond("invariant"), _Cond("positivity")
    bounded = _Cond("bounded-on-domain", f"bound {_r(cert.bound)}; boundedness off the domain is not checked")
    martingale, nonconst = _Cond("exact-martingale"), _Cond("non-constant")
    seen = {}
    first_i = None
    for s, g, i in rows:
        if not i:
            continue
        if first_i is None:
            first_i = s
        try:
            v = vf(s)
        except PgclError as err:
            nonconst.error(s, err)
            continue
        seen.setdefault(v, s)
        if not g:
            continue
        positivity.record(s, v > 0, why=f"value {_r(v)} is not positive on a guard and invariant state")
        bounded.record(s, 0 <= v <= cert.bound, why=f"value {_r(v)} is outside [0, {_r(cert.bound)}]")
        _invariant_check(invariant, body, inv_fn, s, fuel)
        try:
            w = wp_eval(body, cert.martingale, s, fuel).value
            a = awp_eval(body, cert.martingale, s)
            martingale.record(
                s, w == v == a, why=f"wp = {_r(w)}, value = {_r(v)}, awp = {_r(a)} are not all equal"
            )
        except PgclError as err:
            martingale.error(s, err)
    if nonconst.fail is None:
        if len(seen) >= 2:
            nonconst.record(first_i, True)
            nonconst.checked = len(seen)
            nonconst.unit = "distinct values"
        else:
            witness = first_i if first_i is not None else (rows[0][0] if rows else State())
            why = "no domain state satisfies the invariant" if first_i is None else (
                "takes the single value " + _r(next(iter(seen))) + " on every invariant state"
            )
            nonconst.record(witness, False, why=why)
    rep.entries += [invariant.entry(), positivity.entry(), bounded.entry(), martingale.entry(), nonconst.entry()]
    return rep


# -------------------------------------------------------- ranking to (p, d)

def derive_pd_from_ranking(eps, r_star):
    """(p, d) for a ranking super-martingale that drops by eps on average.

    d = eps/2, and p(v) = eps/(2v - eps) for v >= r_star, eps/(2 r_star - eps)
    below it.
    """
    eps, r_star = Fraction(eps), Fraction(r_star)
    if not (eps > 0 and r_star >= eps):
        raise InvalidParameters("need r_star >= eps > 0")
    v = Var(RESERVED_ARG)
    d = Lit(eps / 2)
    tail = BinOp("/", Lit(eps), BinOp("-", BinOp("*", Lit(Fraction(2)), v), Lit(eps)))
    p = Ite(Cmp(">=", v, Lit(r_star)), tail, Lit(eps / (2 * r_star - eps)))
    return p, d


# ---------------------------------------------------------------- dispatch

def check_certificate(loop: LoopSpec, cert, cfg: CheckConfig) -> Report:
    if isinstance(cert, CertificateNew):
        return check_new_rule(loop, cert, cfg)
    if isinstance(cert, CertificateOld):
        return check_old_rule(loop, cert, cfg)
    if isinstance(cert, CertificateNonTerm):
        return check_nonterm(loop, cert, cfg)
    raise TypeError(f"not a certificate: {cert!r}")


def split_loop(prog: Program):
    """Split a program into its leading statements and its final top-level loop."""
    parts = []
    p = prog
    while isinstance(p, Seq):
        parts.append(p.first)
        p = p.second
    parts.append(p)
    if not isinstance(parts[-1], While):
        raise PgclError("the program's last top-level statement must be a while loop")
    return parts[:-1], parts[-1]

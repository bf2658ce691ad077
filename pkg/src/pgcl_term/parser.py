"""Concrete syntax: programs, certificates, state domains, and printing.

Program grammar::

    prog  := stmt
    stmt  := atom (';' stmt)?
    atom  := 'skip' | ident ':=' expr
           | 'if' '(' bexpr ')' block 'else' block
           | block '[' expr ']' block          # probabilistic choice
           | block '[' ']' block               # demonic choice
           | 'while' '(' bexpr ')' block
    block := '{' stmt '}'

``#`` starts a comment that runs to the end of the line.  A literal such as
``1/2`` is read as the rational one half, except directly to the right of a
``/`` where it keeps its arithmetic reading (``x/2/3`` is ``(x/2)/3``).
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import EmptyRange, MissingField, PgclSyntaxError, WrongKindField
from .syntax import (
    BUILTIN_ARITY,
    CMP_OPS,
    And,
    Assign,
    BExpr,
    BinOp,
    BoolLit,
    Call,
    Cmp,
    DChoice,
    Expr,
    If,
    IsInt,
    Ite,
    Iverson,
    Lit,
    Neg,
    Not,
    Or,
    PChoice,
    Program,
    Seq,
    Skip,
    State,
    Var,
    While,
    free_vars,
    render_rational,
)

KEYWORDS = {"skip", "if", "else", "while", "true", "false", "is_int", "ite", "iverson"} | set(BUILTIN_ARITY)

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|<=|>=|!=|==|[-+*/<>=!&|(){}\[\];,])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num, ident, op, eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list:
    toks = []
    pos, line, line_start = 0, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None:
            raise PgclSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok = m.group()
        if kind != "ws":
            toks.append(Token(kind, tok, line, pos - line_start + 1))
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rindex("\n") + 1
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0

    # -- helpers
    @property
    def tok(self):
        return self.toks[self.i]

    def peek(self, k=1):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text, k=0):
        t = self.peek(k) if k else self.tok
        return t.kind in ("op", "ident") and t.text == text

    def fail(self, msg, tok=None):
        t = tok or self.tok
        found = t.text if t.kind != "eof" else "end of input"
        raise PgclSyntaxError(f"{msg}, found {found!r}", t.line, t.col)

    def expect(self, text):
        if not self.at(text):
            self.fail(f"expected {text!r}")
        self.i += 1

    def expect_eof(self):
        if self.tok.kind != "eof":
            self.fail("expected end of input")

    # -- programs
    def stmt(self) -> Program:
        a = self.atom()
        if self.at(";"):
            self.i += 1
            return Seq(a, self.stmt())
        if not (self.at("}") or self.tok.kind == "eof"):
            self.fail("expected ';' between statements")
        return a

    def block(self) -> Program:
        self.expect("{")
        s = self.stmt()
        self.expect("}")
        return s

    def atom(self) -> Program:
        t = self.tok
        if self.at("skip"):
            self.i += 1
            return Skip()
        if self.at("if"):
            self.i += 1
            self.expect("(")
            c = self.bexpr()
            self.expect(")")
            a = self.block()
            self.expect("else")
            return If(c, a, self.block())
        if self.at("while"):
            self.i += 1
            self.expect("(")
            c = self.bexpr()
            self.expect(")")
            return While(c, self.block())
        if self.at("{"):
            left = self.block()
            self.expect("[")
            if self.at("]"):
                self.i += 1
                return DChoice(left, self.block())
            p = self.expr()
            self.expect("]")
            return PChoice(left, p, self.block())
        if t.kind == "ident" and t.text not in KEYWORDS:
            self.i += 1
            self.expect(":=")
            return Assign(t.text, self.expr())
        self.fail("expected a statement")

    # -- arithmetic
    def expr(self) -> Expr:
        e = self.term()
        while self.at("+") or self.at("-"):
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary(fold=True)
        while self.at("*") or self.at("/"):
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.unary(fold=op == "*"))
        return e

    def unary(self, fold) -> Expr:
        if self.at("-"):
            self.i += 1
            return Neg(self.unary(fold))
        return self.primary(fold)

    def primary(self, fold) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            v = Fraction(int(t.text))
            if fold and self.at("/") and self.peek().kind == "num":
                d = int(self.peek().text)
                if d == 0:
                    self.fail("zero denominator in rational literal", self.peek())
                self.i += 2
                v = v / d
            return Lit(v)
        if self.at("("):
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            name = t.text
            if name in BUILTIN_ARITY:
                self.i += 1
                self.expect("(")
                args = [self.expr()]
                for _ in range(BUILTIN_ARITY[name] - 1):
                    self.expect(",")
                    args.append(self.expr())
                self.expect(")")
                return Call(name, tuple(args))
            if name == "ite":
                self.i += 1
                self.expect("(")
                c = self.bexpr()
                self.expect(",")
                a = self.expr()
                self.expect(",")
                b = self.expr()
                self.expect(")")
                return Ite(c, a, b)
            if name == "iverson":
                self.i += 1
                self.expect("(")
                c = self.bexpr()
                self.expect(")")
                return Iverson(c)
            if name in KEYWORDS:
                self.fail("expected an arithmetic expression")
            self.i += 1
            return Var(name)
        self.fail("expected an arithmetic expression")

    # -- booleans
    def bexpr(self) -> BExpr:
        b = self.bconj()
        while self.at("|"):
            self.i += 1
            b = Or(b, self.bconj())
        return b

    def bconj(self) -> BExpr:
        b = self.bunary()
        while self.at("&"):
            self.i += 1
            b = And(b, self.bunary())
        return b

    def bunary(self) -> BExpr:
        if self.at("!"):
            self.i += 1
            return Not(self.bunary())
        return self.batom()

    def batom(self) -> BExpr:
        if self.at("true"):
            self.i += 1
            return BoolLit(True)
        if self.at("false"):
            self.i += 1
            return BoolLit(False)
        if self.at("is_int"):
            self.i += 1
            self.expect("(")
            e = self.expr()
            self.expect(")")
            return IsInt(e)
        if self.at("("):
            # Either a parenthesised boolean or the start of "(e) cmp e".
            save = self.i
            try:
                self.i += 1
                b = self.bexpr()
                self.expect(")")
                if not self._at_cmp() and not self._at_arith_op():
                    return b
            except PgclSyntaxError:
                pass
            self.i = save
        left = self.expr()
        if not self._at_cmp():
            self.fail("expected a comparison operator")
        op = self.tok.text
        self.i += 1
        op = "=" if op == "==" else op
        return Cmp(op, left, self.expr())

    def _at_cmp(self):
        return self.tok.kind == "op" and (self.tok.text in CMP_OPS or self.tok.text == "==")

    def _at_arith_op(self):
        return self.tok.kind == "op" and self.tok.text in ("+", "-", "*", "/")


def parse_program(text: str) -> Program:
    p = _Parser(text)
    prog = p.stmt()
    p.expect_eof()
    return prog


def parse_expr(text: str) -> Expr:
    p = _Parser(text)
    e = p.expr()
    p.expect_eof()
    return e


def parse_bexpr(text: str) -> BExpr:
    p = _Parser(text)
    b = p.bexpr()
    p.expect_eof()
    return b


def parse_rational(text: str) -> Fraction:
    t = text.strip()
    if not re.fullmatch(r"-?\d+(/\d+)?", t):
        raise PgclSyntaxError(f"expected a rational literal such as 3 or -1/2, found {text!r}")
    try:
        return Fraction(t)
    except ZeroDivisionError:
        raise PgclSyntaxError(f"zero denominator in {text!r}") from None


def parse_state(text: str) -> State:
    """A concrete state written as "x=1, y=1/2" (empty text gives the empty state)."""
    out = {}
    for part in filter(None, (s.strip() for s in text.split(","))):
        name, eq, val = part.partition("=")
        name = name.strip()
        if not eq or not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
            raise PgclSyntaxError(f"expected name=value, found {part!r}")
        if name in out:
            raise PgclSyntaxError(f"variable {name!r} given twice")
        out[name] = parse_rational(val)
    return State(out)


# ------------------------------------------------------------------- domains

@dataclass(frozen=True)
class Range:
    lo: Fraction
    hi: Fraction
    step: Fraction = Fraction(1)

    def values(self) -> list:
        n = int((self.hi - self.lo) // self.step)
        return [self.lo + k * self.step for k in range(n + 1)]

    def __len__(self):
        return int((self.hi - self.lo) // self.step) + 1


@dataclass(frozen=True)
class Domain:
    """A finite box of states: the cartesian product of per-variable ranges."""

    ranges: tuple  # of (name, Range), in declaration order

    @property
    def variables(self) -> tuple:
        return tuple(n for n, _ in self.ranges)

    def __len__(self):
        out = 1
        for _, r in self.ranges:
            out *= len(r)
        return out

    def states(self) -> list:
        names = self.variables
        cols = [r.values() for _, r in self.ranges]
        return [State(zip(names, vals)) for vals in itertools.product(*cols)]

    def __contains__(self, state) -> bool:
        try:
            for name, r in self.ranges:
                v = state[name]
                if v < r.lo or v > r.hi or (v - r.lo) % r.step != 0:
                    return False
        except KeyError:
            return False
        return True

    def render(self) -> str:
        parts = []
        for name, r in self.ranges:
            s = f"{name}={render_rational(r.lo)}..{render_rational(r.hi)}"
            if r.step != 1:
                s += f":{render_rational(r.step)}"
            parts.append(s)
        return ", ".join(parts)


_RANGE = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(-?\d+(?:/\d+)?)\s*\.\.\s*(-?\d+(?:/\d+)?)\s*(?::\s*(\d+(?:/\d+)?))?\s*")


def parse_domain(text: str) -> Domain:
    ranges = []
    seen = set()
    for part in text.split(","):
        m = _RANGE.fullmatch(part)
        if m is None:
            raise PgclSyntaxError(f"expected var=lo..hi or var=lo..hi:step, found {part.strip()!r}")
        name, lo, hi, step = m.groups()
        if name in seen:
            raise PgclSyntaxError(f"variable {name!r} given twice in domain")
        seen.add(name)
        lo, hi = parse_rational(lo), parse_rational(hi)
        step = parse_rational(step) if step else Fraction(1)
        if step <= 0:
            raise PgclSyntaxError(f"step for {name!r} must be positive")
        if lo > hi:
            raise EmptyRange(f"empty range for {name!r}: {render_rational(lo)} > {render_rational(hi)}")
        ranges.append((name, Range(lo, hi, step)))
    return Domain(tuple(ranges))


# -------------------------------------------------------------- certificates

RESERVED_ARG = "v"


@dataclass(frozen=True)
class CertificateNew:
    invariant: BExpr
    variant: Expr
    prob: Expr
    decrease: Expr
    kind: str = field(default="ast-new", init=False)


@dataclass(frozen=True)
class CertificateOld:
    invariant: BExpr
    vint: Expr
    low: Fraction
    high: Fraction
    eps: Fraction
    kind: str = field(default="ast-old", init=False)


@dataclass(frozen=True)
class CertificateNonTerm:
    invariant: BExpr
    martingale: Expr
    bound: Fraction
    kind: str = field(default="non-termination", init=False)


_FIELDS = {
    "ast-new": {"invariant": "bexpr", "variant": "expr", "prob": "vexpr", "decrease": "vexpr"},
    "ast-old": {"invariant": "bexpr", "vint": "expr", "low": "rat", "high": "rat", "eps": "rat"},
    "non-termination": {"invariant": "bexpr", "martingale": "expr", "bound": "rat"},
}
_ALL_FIELDS = set().union(*_FIELDS.values())


def parse_certificate(text: str):
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, eq, val = body.partition("=")
        key = key.strip()
        if not eq or not key:
            raise PgclSyntaxError("expected 'key = value'", lineno, 1)
        if key in raw:
            raise PgclSyntaxError(f"duplicate key {key!r}", lineno, 1)
        raw[key] = (val.strip(), lineno)
    if "kind" not in raw:
        raise MissingField("kind")
    kind, kind_line = raw.pop("kind")
    if kind not in _FIELDS:
        raise PgclSyntaxError(f"unknown certificate kind {kind!r}", kind_line, 1)
    spec = _FIELDS[kind]
    for key, (_, lineno) in raw.items():
        if key not in spec:
            if key in _ALL_FIELDS:
                raise WrongKindField(key, kind)
            raise PgclSyntaxError(f"unknown key {key!r}", lineno, 1)
    vals = {}
    for key, how in spec.items():
        if key not in raw:
            raise MissingField(key)
        text_val, lineno = raw[key]
        try:
            if how == "bexpr":
                vals[key] = parse_bexpr(text_val)
            elif how == "rat":
                vals[key] = parse_rational(text_val)
            else:
                vals[key] = parse_expr(text_val)
        except PgclSyntaxError as err:
            raise PgclSyntaxError(f"in field {key!r}: {err.message}", lineno, 1) from None
        if how == "vexpr":
            extra = free_vars(vals[key]) - {RESERVED_ARG}
            if extra:
                raise PgclSyntaxError(
                    f"field {key!r} may only mention {RESERVED_ARG!r}, not {sorted(extra)}", lineno, 1
                )
        elif how != "rat" and RESERVED_ARG in free_vars(vals[key]):
            raise PgclSyntaxError(
                f"field {key!r} ranges over program variables; {RESERVED_ARG!r} is reserved", lineno, 1
            )
    if kind == "ast-new":
        return CertificateNew(**vals)
    if kind == "ast-old":
        if not 0 < vals["eps"] <= 1:
            raise PgclSyntaxError("eps must satisfy 0 < eps <= 1", raw["eps"][1], 1)
        if not vals["low"] < vals["high"]:
            raise PgclSyntaxError("low must be strictly below high", raw["low"][1], 1)
        return CertificateOld(**vals)
    if not vals["bound"] > 0:
        raise PgclSyntaxError("bound must be positive", raw["bound"][1], 1)
    return CertificateNonTerm(**vals)


# ------------------------------------------------------------------ printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_ATOM = 4


def _pe(e):
    """Return (text, precedence, ends_foldable).

    ends_foldable is true when the text ends in a bare integer literal the
    parser would fold with a following "/ n" into a single rational.
    """
    if isinstance(e, Lit):
        v = e.value
        if v < 0:
            inner, ip, fe = _pe(Lit(-v))
            if ip < 3:
                inner, fe = f"({inner})", False
            return "-" + inner, 3, fe
        if v.denominator == 1:
            return str(v.numerator), _ATOM, True
        return render_rational(v), 2, False
    if isinstance(e, Var):
        return e.name, _ATOM, False
    if isinstance(e, Neg):
        inner, ip, fe = _pe(e.arg)
        if ip < 3:
            inner, fe = f"({inner})", False
        return "-" + inner, 3, fe
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        left, lp, lfe = _pe(e.left)
        if lp < p:
            left, lfe = f"({left})", False
        right, rp, rfe = _pe(e.right)
        if rp <= p:
            right, rfe = f"({right})", False
        if e.op == "/" and lfe and re.match(r"\d", right):
            left = f"({left})"
        return f"{left} {e.op} {right}", p, (rfe if e.op == "*" else False)
    if isinstance(e, Call):
        return f"{e.fn}(" + ", ".join(print_expr(a) for a in e.args) + ")", _ATOM, False
    if isinstance(e, Ite):
        return f"ite({print_bexpr(e.cond)}, {print_expr(e.then)}, {print_expr(e.orelse)})", _ATOM, False
    if isinstance(e, Iverson):
        return f"iverson({print_bexpr(e.cond)})", _ATOM, False
    raise TypeError(f"not an expression: {e!r}")


def print_expr(e: Expr) -> str:
    return _pe(e)[0]


def _bprec(b) -> int:
    if isinstance(b, Or):
        return 1
    if isinstance(b, And):
        return 2
    if isinstance(b, Not):
        return 3
    return 4


def print_bexpr(b: BExpr) -> str:
    if isinstance(b, BoolLit):
        return "true" if b.value else "false"
    if isinstance(b, Cmp):
        return f"{print_expr(b.left)} {b.op} {print_expr(b.right)}"
    if isinstance(b, IsInt):
        return f"is_int({print_expr(b.arg)})"
    if isinstance(b, Not):
        inner = print_bexpr(b.arg)
        return "!" + (inner if _bprec(b.arg) >= 3 else f"({inner})")
    if isinstance(b, (And, Or)):
        p, sym = (2, "&") if isinstance(b, And) else (1, "|")
        left = print_bexpr(b.left)
        if _bprec(b.left) < p:
            left = f"({left})"
        right = print_bexpr(b.right)
        if _bprec(b.right) <= p:
            right = f"({right})"
        return f"{left} {sym} {right}"
    raise TypeError(f"not a boolean expression: {b!r}")


def _simple(p: Program) -> bool:
    return isinstance(p, (Skip, Assign))


def _flat(p: Program, out: list) -> list:
    # sequencing is associative; any nesting prints as one flat list
    if isinstance(p, Seq):
        _flat(p.first, out)
        _flat(p.second, out)
    else:
        out.append(p)
    return out


def _stmt_lines(p: Program, ind: str) -> list:
    out = []
    for k, a in enumerate(_flat(p, [])):
        if k:
            out[-1] += ";"
        out.extend(_atom_lines(a, ind))
    return out


def _block(p: Program, ind: str) -> list:
    """A braced block; returns lines where the first opens and the last closes."""
    if _simple(p):
        return ["{" + _atom_lines(p, "")[0] + "}"]
    return ["{"] + _stmt_lines(p, ind + "  ") + [ind + "}"]


def _join_blocks(head: str, blocks: list, seps: list, ind: str) -> list:
    lines = [ind + head]
    for k, blk in enumerate(blocks):
        if k:
            lines[-1] += seps[k - 1]
        lines[-1] += blk[0]
        lines.extend(blk[1:])
    return lines


def _atom_lines(p: Program, ind: str) -> list:
    if isinstance(p, Skip):
        return [ind + "skip"]
    if isinstance(p, Assign):
        return [f"{ind}{p.var} := {print_expr(p.expr)}"]
    if isinstance(p, If):
        return _join_blocks(
            f"if ({print_bexpr(p.cond)}) ", [_block(p.then, ind), _block(p.orelse, ind)], [" else "], ind
        )
    if isinstance(p, While):
        return _join_blocks(f"while ({print_bexpr(p.cond)}) ", [_block(p.body, ind)], [], ind)
    if isinstance(p, PChoice):
        return _join_blocks("", [_block(p.left, ind), _block(p.right, ind)], [f" [{print_expr(p.prob)}] "], ind)
    if isinstance(p, DChoice):
        return _join_blocks("", [_block(p.left, ind), _block(p.right, ind)], [" [] "], ind)
    raise TypeError(f"not a program: {p!r}")


def pretty_print(p: Program) -> str:
    return "\n".join(_stmt_lines(p, ""))


def print_certificate(cert) -> str:
    lines = [f"kind = {cert.kind}"]
    for name in _FIELDS[cert.kind]:
        v = getattr(cert, name)
        if isinstance(v, Fraction):
            lines.append(f"{name} = {render_rational(v)}")
        elif isinstance(v, BExpr):
            lines.append(f"{name} = {print_bexpr(v)}")
        else:
            lines.append(f"{name} = {print_expr(v)}")
    return "\n".join(lines) + "\n"

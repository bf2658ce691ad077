"""The bundled fixture corpus and its golden expectations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .checker import CheckConfig, LoopSpec, PdGrid, check_certificate, split_loop
from .parser import parse_certificate, parse_domain, parse_expr, parse_program, parse_rational, parse_state
from .syntax import Assign, If, Program, Seq, Skip, State, compiled, render_rational
from .errors import PgclError
from .transformer import ValueIteration, reachable_states, wp_eval

FIXTURES = Path(__file__).with_name("fixtures")
MANIFEST = "corpus.json"


@dataclass
class Fixture:
    id: str
    program_file: str
    notes: str
    checks: list = field(default_factory=list)
    wp: list = field(default_factory=list)
    viter: list = field(default_factory=list)
    simulate: list = field(default_factory=list)
    root: Path = FIXTURES

    @property
    def path(self) -> Path:
        return self.root / self.program_file

    def source(self) -> str:
        return self.path.read_text()

    def program(self) -> Program:
        return parse_program(self.source())


def load_corpus(root=FIXTURES) -> list:
    root = Path(root)
    raw = json.loads((root / MANIFEST).read_text())
    return [
        Fixture(
            id=e["id"],
            program_file=e["program"],
            notes=e.get("notes", ""),
            checks=e.get("checks", []),
            wp=e.get("wp", []),
            viter=e.get("viter", []),
            simulate=e.get("simulate", []),
            root=root,
        )
        for e in raw
    ]


def get_fixture(fid: str, root=FIXTURES) -> Fixture:
    for fx in load_corpus(root):
        if fx.id == fid:
            return fx
    raise KeyError(fid)


# ----------------------------------------------------------- shared parsing

def parse_pd_grid(text: str) -> PdGrid:
    vals = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, eq, val = part.partition("=")
        key = key.strip()
        if not eq or key not in ("step", "max") or key in vals:
            raise PgclError(f"bad pd grid {text!r}; expected step=<q>,max=<q>")
        vals[key] = parse_rational(val)
    grid = PdGrid(vals.get("step", PdGrid.step), vals.get("max", PdGrid.max))
    if grid.step <= 0:
        raise PgclError("pd grid step must be positive")
    return grid


def parse_h_samples(text: str) -> tuple:
    out = tuple(parse_rational(t) for t in text.split(",") if t.strip())
    if not out or any(h <= 0 for h in out):
        raise PgclError("H samples must be a nonempty list of positive rationals")
    return out


def run_prefix(prefix: list, state: State) -> State:
    """Execute leading deterministic statements (skip, assignment, if)."""
    todo = list(prefix)
    while todo:
        s = todo.pop(0)
        if isinstance(s, Skip):
            continue
        if isinstance(s, Assign):
            state = state.set(s.var, compiled(s.expr)(state))
        elif isinstance(s, Seq):
            todo[:0] = [s.first, s.second]
        elif isinstance(s, If):
            todo.insert(0, s.then if compiled(s.cond)(state) else s.orelse)
        else:
            raise PgclError("statements before the loop must be deterministic (skip, assignment, if)")
    return state


def loop_entry(prog: Program, init: State):
    prefix, w = split_loop(prog)
    return w, run_prefix(prefix, init)


def viter_value(prog: Program, init: State, iters: int, post, domain=None, fuel: int = 64) -> Fraction:
    w, start = loop_entry(prog, init)
    dom = domain if domain is not None else reachable_states(w, start, iters, fuel)
    return ValueIteration(w.cond, w.body, post, dom, fuel).step(iters).value(start)


# ----------------------------------------------------------------- golden

def run_golden(root=FIXTURES, echo=print) -> list:
    """Re-check every stored expectation; returns the list of mismatches."""
    bad = []
    for fx in load_corpus(root):
        try:
            prog = fx.program()
        except (PgclError, OSError) as err:
            bad.append(f"{fx.id}: program does not load: {err}")
            echo(f"MISMATCH {fx.id} program: {err}")
            continue
        for c in fx.checks:
            what = f"check {c['certificate']}"
            try:
                _, w = split_loop(prog)
                cert = parse_certificate((fx.root / c["certificate"]).read_text())
                cfg = CheckConfig(
                    parse_domain(c["domain"]),
                    pd_grid=parse_pd_grid(c["pd_grid"]) if "pd_grid" in c else PdGrid(),
                    fuel=c.get("fuel", 64),
                )
                got = check_certificate(LoopSpec.of(w), cert, cfg).verdict
            except (PgclError, OSError) as err:
                got = f"error ({err})"
            _note(echo, bad, fx.id, what, got, c["expect"])
        for c in fx.wp:
            what = f"wp {c['post']}"
            try:
                r = wp_eval(prog, parse_expr(c["post"]), parse_state(c["state"]), c.get("fuel", 64))
                got = f"{render_rational(r.value)} exact={r.exact}"
            except PgclError as err:
                got = f"error ({err})"
            _note(echo, bad, fx.id, what, got, f"{c['expect']} exact={c['exact']}")
        for c in fx.viter:
            what = f"viter {c['post']} iters={c['iters']}"
            try:
                v = viter_value(prog, parse_state(c["init"]), c["iters"], parse_expr(c["post"]),
                                parse_domain(c["domain"]) if "domain" in c else None)
                if "expect" in c:
                    got, want = render_rational(v), c["expect"]
                else:
                    lo, hi = (parse_rational(x) for x in c["expect_between"])
                    got = "in range" if lo <= v <= hi else f"{float(v):.6f}"
                    want = "in range"
            except PgclError as err:
                got, want = f"error ({err})", c.get("expect", "in range")
            _note(echo, bad, fx.id, what, got, want)
    return bad


def _note(echo, bad, fid, what, got, want):
    if got == want:
        echo(f"ok {fid} {what}: {got}")
    else:
        bad.append(f"{fid}: {what}: expected {want}, got {got}")
        echo(f"MISMATCH {fid} {what}: expected {want}, got {got}")

"""Forward semantics: small-step execution, schedulers, Monte-Carlo estimates.

The interpreter here is the reference.  :mod:`pgcl_term._fastsim` compiles
programs to machine code for speed and hands any trial it cannot finish with
64-bit rationals back to this interpreter, so both always agree.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from .errors import EvalError, LoopNotAllowed, PgclError, ProbabilityOutOfRange, PgclSyntaxError
from .syntax import (
    Assign,
    DChoice,
    Expr,
    If,
    PChoice,
    Program,
    Seq,
    Skip,
    State,
    While,
    compiled,
    render_rational,
)

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


# ----------------------------------------------------------------------- rng

def splitmix64_mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(master_seed: int, trial_index: int) -> int:
    """The (trial_index+1)-th output of a splitmix64 stream seeded with master_seed."""
    return splitmix64_mix((master_seed + (trial_index + 1) * GAMMA) & MASK64)


class RngStream:
    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return splitmix64_mix(self.state)


def rng_bernoulli(p: Fraction, rng: RngStream) -> bool:
    """Exact Bernoulli(p) by rejection sampling a uniform integer below the denominator."""
    if p < 0 or p > 1:
        raise ProbabilityOutOfRange(p)
    if p == 0:
        return False
    if p == 1:
        return True
    a, b = p.numerator, p.denominator
    words = (b.bit_length() + 63) // 64
    m = 1 << (64 * words)
    limit = m - m % b
    while True:
        x = 0
        for _ in range(words):
            x = (x << 64) | rng.next_u64()
        if x < limit:
            return x % b < a


# ---------------------------------------------------------------- schedulers

POLICIES = ("left", "right", "alternate", "random", "greedy-min")


@dataclass(frozen=True)
class Scheduler:
    """How demonic choices are resolved during simulation.

    greedy-min(e) picks the branch whose own expected value of e (computed
    by loop-free lookahead, demonic choices inside read as min) is smaller,
    preferring the left branch on ties.
    """

    policy: str
    expr: Optional[Expr] = None
    _lookahead: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown scheduler policy {self.policy!r}")
        if (self.policy == "greedy-min") != (self.expr is not None):
            raise ValueError("greedy-min needs an expression, other policies take none")

    def name(self) -> str:
        if self.policy == "greedy-min":
            from .parser import print_expr

            return f"greedy-min({print_expr(self.expr)})"
        return self.policy

    def lookahead(self, node: DChoice):
        hit = self._lookahead.get(id(node))
        if hit is None:
            from .transformer import wp_symbolic

            hit = (node, wp_symbolic(node.left, self.expr), wp_symbolic(node.right, self.expr))
            self._lookahead[id(node)] = hit
        return hit[1], hit[2]

    def choose_left(self, node: DChoice, state, rng: RngStream, position: int) -> bool:
        if self.policy == "left":
            return True
        if self.policy == "right":
            return False
        if self.policy == "alternate":
            return position % 2 == 0
        if self.policy == "random":
            return rng_bernoulli(Fraction(1, 2), rng)
        left, right = self.lookahead(node)
        return compiled(left)(state) <= compiled(right)(state)


def parse_scheduler(text: str) -> Scheduler:
    t = text.strip()
    m = re.fullmatch(r"greedy-min\((.*)\)", t, re.S)
    if m:
        from .parser import parse_expr

        return Scheduler("greedy-min", parse_expr(m.group(1)))
    if t in POLICIES and t != "greedy-min":
        return Scheduler(t)
    raise PgclSyntaxError(f"unknown scheduler {text!r}; expected one of left, right, alternate, random, greedy-min(e)")


# -------------------------------------------------------------- small steps

@dataclass(frozen=True)
class Config:
    continuation: tuple  # pending statements, next one first
    state: State
    steps_taken: int = 0
    decisions: int = 0  # demonic choices resolved so far


@dataclass(frozen=True)
class Terminated:
    state: State
    steps: int


@dataclass(frozen=True)
class Censored:
    state: State
    steps: int


@dataclass(frozen=True)
class Errored:
    reason: str
    steps: int


TrialOutcome = Union[Terminated, Censored, Errored]


class ExecutionError(PgclError):
    """A trial hit a runtime fault (unbound variable, bad probability, ...)."""


def step_config(c: Config, sch: Scheduler, rng: RngStream):
    """Dispatch one statement.  Returns the next Config or Terminated."""
    if not c.continuation:
        raise ValueError("configuration already terminated")
    head, rest = c.continuation[0], c.continuation[1:]
    state, decisions = c.state, c.decisions
    try:
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
            cont = ((head.left if rng_bernoulli(p, rng) else head.right),) + rest
        elif isinstance(head, DChoice):
            left = sch.choose_left(head, state, rng, decisions)
            decisions += 1
            cont = ((head.left if left else head.right),) + rest
        elif isinstance(head, While):
            cont = ((head.body, head) + rest) if compiled(head.cond)(state) else rest
        else:
            raise TypeError(f"not a program: {head!r}")
    except (EvalError, LoopNotAllowed) as err:
        raise ExecutionError(str(err)) from err
    steps = c.steps_taken + 1
    if not cont:
        return Terminated(state, steps)
    return Config(cont, state, steps, decisions)


def run_trial(prog: Program, init: State, sch: Scheduler, max_steps: int, seed: int) -> TrialOutcome:
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    rng = RngStream(seed)
    c = Config((prog,), init)
    while True:
        if c.steps_taken >= max_steps:
            return Censored(c.state, c.steps_taken)
        try:
            c = step_config(c, sch, rng)
        except ExecutionError as err:
            return Errored(str(err), c.steps_taken + 1)
        if isinstance(c, Terminated):
            return c


# ---------------------------------------------------------------- summaries

Z95 = 1.959963984540054


def wilson95(successes: int, n: int) -> tuple:
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    z2 = Z95 * Z95
    denom = 1 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = Z95 * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return (lo, hi)


@dataclass(frozen=True)
class SimSummary:
    trials: int
    terminated: int
    censored: int
    errored: int
    termination_fraction: Fraction
    wilson95: tuple
    mean_steps_terminated: Optional[Fraction]
    first_error: Optional[str] = None

    def render(self) -> str:
        tf = self.termination_fraction
        lines = [
            f"trials = {self.trials}",
            f"terminated = {self.terminated}",
            f"censored = {self.censored}",
            f"errored = {self.errored}",
            f"termination_fraction = {render_rational(tf)} ({float(tf):.6f})",
            f"wilson95 = [{self.wilson95[0]:.6f}, {self.wilson95[1]:.6f}]",
        ]
        m = self.mean_steps_terminated
        if m is None:
            lines.append("mean_steps_terminated = n/a")
        else:
            lines.append(f"mean_steps_terminated = {render_rational(m)} ({float(m):.6f})")
        if self.first_error is not None:
            lines.append(f"first_error = {self.first_error}")
        return "\n".join(lines)


class Tally:
    """Counts for a contiguous block of trials; blocks merge in index order."""

    __slots__ = ("terminated", "censored", "errored", "steps", "first_error")

    def __init__(self):
        self.terminated = self.censored = self.errored = self.steps = 0
        self.first_error = None  # (trial index, reason)

    def add(self, index: int, outcome: TrialOutcome):
        if isinstance(outcome, Terminated):
            self.add_terminated(outcome.steps)
        elif isinstance(outcome, Censored):
            self.censored += 1
        else:
            self.add_error(index, outcome.reason)

    def add_terminated(self, steps: int):
        self.terminated += 1
        self.steps += steps

    def add_error(self, index: int, reason: str):
        self.errored += 1
        if self.first_error is None or index < self.first_error[0]:
            self.first_error = (index, reason)

    def merge(self, other: "Tally"):
        self.terminated += other.terminated
        self.censored += other.censored
        self.steps += other.steps
        self.errored += other.errored
        if other.first_error is not None and (self.first_error is None or other.first_error[0] < self.first_error[0]):
            self.first_error = other.first_error

    def summary(self) -> SimSummary:
        n = self.terminated + self.censored + self.errored
        term = self.terminated
        return SimSummary(
            trials=n,
            terminated=term,
            censored=self.censored,
            errored=self.errored,
            termination_fraction=Fraction(term, n),
            wilson95=wilson95(term, n),
            mean_steps_terminated=Fraction(self.steps, term) if term else None,
            first_error=None if self.first_error is None else self.first_error[1],
        )


def _python_chunk(prog, init, sch, max_steps, master_seed, start, end) -> Tally:
    t = Tally()
    for i in range(start, end):
        t.add(i, run_trial(prog, init, sch, max_steps, trial_seed(master_seed, i)))
    return t


def _chunks(trials, threads):
    size = max(1, min(4096, -(-trials // (threads * 8))))
    return [(s, min(trials, s + size)) for s in range(0, trials, size)]


def simulate(
    prog: Program,
    init: State,
    sch: Scheduler,
    trials: int,
    max_steps: int,
    master_seed: int,
    threads: int = 1,
    engine: str = "auto",
) -> SimSummary:
    """Run trials 0..trials-1 with seeds derived from master_seed.

    engine is "python" (reference interpreter only), "compiled" (require the
    compiled engine) or "auto" (compiled when available).  The result does
    not depend on the engine or on the thread count.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    threads = max(1, int(threads))
    fast = None
    if engine != "python":
        from . import _fastsim

        fast = _fastsim.compile_program(prog, sch, init, strict=engine == "compiled")

    def work(bounds):
        start, end = bounds
        if fast is None:
            return _python_chunk(prog, init, sch, max_steps, master_seed, start, end)
        return fast.run_range(master_seed, start, end, max_steps, prog, init, sch)

    chunks = _chunks(trials, threads)
    if threads == 1:
        results = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    total = Tally()
    for part in results:
        total.merge(part)
    return total.summary()

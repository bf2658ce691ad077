"""Command-line entry point: ``pgcl-term check|wp|viter|simulate|corpus``.

Exit codes are fixed: 0 pass, 1 fail, 2 inconclusive, 3 usage or input
error.  Commands other than ``check`` only use 0 and 3 (``corpus
--run-golden`` exits 1 on a mismatch).
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import corpus as _corpus
from .checker import FAIL, INCONCLUSIVE, PASS, CheckConfig, LoopSpec, check_certificate, split_loop
from .errors import PgclError
from .operational import parse_scheduler, simulate
from .parser import parse_certificate, parse_domain, parse_expr, parse_program, parse_state
from .syntax import State, has_loop, render_rational
from .transformer import DEFAULT_FUEL, ValueIteration, awp_eval, reachable_states, wp_eval

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_ERROR = 0, 1, 2, 3
VERDICT_EXIT = {PASS: EXIT_PASS, FAIL: EXIT_FAIL, INCONCLUSIVE: EXIT_INCONCLUSIVE}

if hasattr(sys, "set_int_max_str_digits"):
    # exact values such as 2^10000 / 3^6000 are printed in full
    sys.set_int_max_str_digits(0)


class _Group(click.Group):
    """Maps click's own usage errors to exit code 3 (2 means INCONCLUSIVE)."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            code = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
        except click.exceptions.Exit as e:
            code = e.exit_code
        except click.ClickException as e:
            e.show()
            code = EXIT_ERROR
        except click.Abort:
            click.echo("Aborted!", err=True)
            code = EXIT_ERROR
        code = code or 0
        if standalone_mode:
            sys.exit(code)
        return code


def _fail(msg: str) -> int:
    click.echo(f"error: {msg}", err=True)
    return EXIT_ERROR


def _read(path: str) -> str:
    return Path(path).read_text()


def _decimal(q) -> str:
    return f"{render_rational(q)} ({float(q):.6f})"


def _guard(fn):
    """Turn input problems into exit 3 with a one-line message."""

    def wrapper(*a, **kw):
        try:
            return fn(*a, **kw)
        except (PgclError, OSError, ValueError, RecursionError) as err:
            return _fail(str(err) or type(err).__name__)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@click.group(cls=_Group, context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(package_name="artifact", prog_name="pgcl-term")
def main():
    """Termination certificates, expectation transformers and simulation for pGCL."""


@main.command("check")
@click.argument("prog_path")
@click.argument("cert_path")
@click.option("--domain", required=True, help='Finite domain, e.g. "x=0..200, y=-3..3".')
@click.option("--h-samples", default="1,10,100,1000,10000", show_default=True,
              help="H ladder for sampled super-martingale checks.")
@click.option("--pd-grid", default="step=1/4,max=10000", show_default=True,
              help="Grid on which p and d are checked.")
@click.option("--fuel", default=DEFAULT_FUEL, show_default=True, type=int,
              help="Loop unrolling bound for nested loops.")
@_guard
def cmd_check(prog_path, cert_path, domain, h_samples, pd_grid, fuel):
    """Check a termination certificate for the program's final loop."""
    prog = parse_program(_read(prog_path))
    cert = parse_certificate(_read(cert_path))
    _, w = split_loop(prog)
    cfg = CheckConfig(
        parse_domain(domain),
        h_samples=_corpus.parse_h_samples(h_samples),
        pd_grid=_corpus.parse_pd_grid(pd_grid),
        fuel=fuel,
    )
    report = check_certificate(LoopSpec.of(w), cert, cfg)
    click.echo(report.render())
    return VERDICT_EXIT[report.verdict]


@main.command("wp")
@click.argument("prog_path")
@click.option("--post", default="1", show_default=True, help="Post-expectation.")
@click.option("--state", "state_text", default="", help='Initial state, e.g. "x=0, y=1/2".')
@click.option("--fuel", default=DEFAULT_FUEL, show_default=True, type=int)
@_guard
def cmd_wp(prog_path, post, state_text, fuel):
    """Weakest pre-expectation at one state (and awp when loop-free)."""
    prog = parse_program(_read(prog_path))
    f = parse_expr(post)
    s = parse_state(state_text)
    r = wp_eval(prog, f, s, fuel)
    tag = "exact" if r.exact else f"lower bound, fuel {fuel}"
    click.echo(f"wp = {render_rational(r.value)} ({tag})")
    if not has_loop(prog):
        click.echo(f"awp = {render_rational(awp_eval(prog, f, s))} (exact)")
    return EXIT_PASS


@main.command("viter")
@click.argument("prog_path")
@click.option("--domain", default=None,
              help="Finite domain; defaults to the states reachable from --init.")
@click.option("--iters", default=1000, show_default=True, type=int)
@click.option("--post", default="1", show_default=True)
@click.option("--fuel", default=DEFAULT_FUEL, show_default=True, type=int)
@click.option("--init", "init_text", default=None, help="Print only the value at this state.")
@_guard
def cmd_viter(prog_path, domain, iters, post, fuel, init_text):
    """Value iteration X_k for the program's final loop, starting from X_0 = 0."""
    if iters < 0:
        return _fail("--iters must be non-negative")
    prog = parse_program(_read(prog_path))
    f = parse_expr(post)
    dom = parse_domain(domain) if domain is not None else None
    if init_text is None:
        if dom is None:
            return _fail("give --domain or --init")
        prefix, w = split_loop(prog)
        if prefix:
            return _fail("leading statements need --init so they can be folded into the initial state")
        table = ValueIteration(w.cond, w.body, f, dom, fuel).step(iters).table()
        for s, v in table.items():
            click.echo(f"{_state_text(s)}: {_decimal(v)}")
        return EXIT_PASS
    w, start = _corpus.loop_entry(prog, parse_state(init_text))
    if dom is None:
        dom = reachable_states(w, start, iters, fuel)
    elif start not in dom:
        return _fail(f"initial state {_state_text(start)} lies outside the domain")
    v = ValueIteration(w.cond, w.body, f, dom, fuel).step(iters).value(start)
    click.echo(_decimal(v))
    return EXIT_PASS


def _state_text(s: State) -> str:
    from .syntax import render_state

    return render_state(s) or "(empty)"


@main.command("simulate")
@click.argument("prog_path")
@click.option("--init", "init_text", default="", help="Initial state.")
@click.option("--scheduler", default="left", show_default=True,
              help="left, right, alternate, random or greedy-min(<expr>).")
@click.option("--trials", default=10000, show_default=True, type=int)
@click.option("--max-steps", default=100000, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--threads", default=1, show_default=True, type=int,
              help="Worker threads; the output does not depend on this.")
@click.option("--engine", type=click.Choice(["auto", "python", "compiled"]), default="auto", show_default=True)
@_guard
def cmd_simulate(prog_path, init_text, scheduler, trials, max_steps, seed, threads, engine):
    """Monte-Carlo estimate of the termination probability under a scheduler."""
    prog = parse_program(_read(prog_path))
    summary = simulate(
        prog, parse_state(init_text), parse_scheduler(scheduler), trials, max_steps, seed, threads, engine
    )
    click.echo(summary.render())
    return EXIT_PASS


@main.command("corpus")
@click.option("--list", "do_list", is_flag=True, help="List the bundled fixtures.")
@click.option("--run-golden", is_flag=True, help="Re-check every stored expectation.")
@click.option("--fixtures-dir", default=None, help="Use another fixture directory.")
@_guard
def cmd_corpus(do_list, run_golden, fixtures_dir):
    """The bundled fixture corpus."""
    root = Path(fixtures_dir) if fixtures_dir else _corpus.FIXTURES
    if do_list == run_golden:
        return _fail("give exactly one of --list and --run-golden")
    if do_list:
        for fx in _corpus.load_corpus(root):
            click.echo(f"{fx.id} ({fx.notes})")
        return EXIT_PASS
    bad = _corpus.run_golden(root, echo=click.echo)
    if bad:
        click.echo(f"{len(bad)} golden mismatch(es):", err=True)
        for b in bad:
            click.echo(f"  {b}", err=True)
        return EXIT_FAIL
    click.echo("all golden expectations hold")
    return EXIT_PASS

"""Acceptance criteria, one test each.

Every test prints a single line "criterion N PASS|FAIL  <what>  (<seconds>)"
straight to the terminal, whatever pytest's capture mode.
"""

import time
from contextlib import contextmanager
from fractions import Fraction

import pytest
from click.testing import CliRunner

import test_transformer
from oracles import gamblers_ruin, geometric_halting, golden_ratio_conjugate
from pgcl_term.checker import FAIL, PASS, CheckConfig, LoopSpec, PdGrid, check_certificate, split_loop
from pgcl_term.cli import main
from pgcl_term.corpus import FIXTURES, get_fixture, viter_value
from pgcl_term.parser import parse_certificate, parse_domain, parse_expr, parse_state
from pgcl_term.transformer import ValueIteration, reachable_states
from runs import sim

ONE = parse_expr("1")


@pytest.fixture
def report(capsys):
    @contextmanager
    def criterion(n, what):
        t0 = time.perf_counter()
        ok = False
        try:
            yield
            ok = True
        finally:
            dt = time.perf_counter() - t0
            with capsys.disabled():
                print(f"\ncriterion {n} {'PASS' if ok else 'FAIL'}  {what}  ({dt:.1f} s)")

    return criterion


def _check(prog_file, cert_file, domain, pd_grid=None):
    _, w = split_loop(get_fixture_by_file(prog_file).program())
    cert = parse_certificate((FIXTURES / cert_file).read_text())
    cfg = CheckConfig(parse_domain(domain), pd_grid=pd_grid or PdGrid())
    t0 = time.perf_counter()
    rep = check_certificate(LoopSpec.of(w), cert, cfg)
    return rep, time.perf_counter() - t0


def get_fixture_by_file(name):
    from pgcl_term.corpus import load_corpus

    return next(fx for fx in load_corpus() if fx.program_file == name)


def _entry(rep, name):
    return next(e for e in rep.entries if e.name == name)


NEW_RULE = [
    ("negative_binomial.pgcl", "negative_binomial.cert", "x=0..500", None),
    ("demonic_fair_walk.pgcl", "demonic_fair_walk.cert", "x=0..500", None),
    ("fair_in_the_limit.pgcl", "fair_in_the_limit_harmonic.cert", "x=0..300", PdGrid(Fraction(1, 4), Fraction(8))),
    ("escaping_spline.pgcl", "escaping_spline.cert", "x=0..500", None),
    ("lazy_loper.pgcl", "lazy_loper.cert", "x=0..300", None),
    ("srw1d.pgcl", "srw1d_new.cert", "x=-200..200", None),
]


def test_criterion_1_certificate_suite(report):
    with report(1, "six new-rule certificates pass on their domains, each under 10 s"):
        for prog, cert, dom, grid in NEW_RULE:
            rep, dt = _check(prog, cert, dom, grid)
            assert rep.verdict == PASS, (cert, rep.render())
            assert dt < 10, (cert, dt)


def test_criterion_2_negative_controls(report):
    with report(2, "affine variant, vanishing decrease and unbounded walk all fail with witnesses"):
        rep, _ = _check("fair_in_the_limit.pgcl", "fair_in_the_limit_affine.cert", "x=0..300")
        e = _entry(rep, "supermartingale")
        assert rep.verdict == FAIL and e.verdict == FAIL and e.counterexample is not None

        rep, _ = _check("biased_walk.pgcl", "biased_walk_bad_decrease.cert", "x=0..60")
        e = _entry(rep, "d-positive")
        assert rep.verdict == FAIL and e.verdict == FAIL
        assert e.counterexample == parse_state("v=2")

        rep, _ = _check("srw1d.pgcl", "srw1d_old.cert", "x=0..200")
        e = _entry(rep, "bounds")
        assert rep.verdict == FAIL and e.verdict == FAIL and e.counterexample is not None


def test_criterion_3_nontermination_certificate(report):
    with report(3, "bounded exact martingale on the biased walk passes on x=0..60"):
        rep, _ = _check("biased_walk.pgcl", "biased_walk_martingale.cert", "x=0..60")
        assert rep.verdict == PASS, rep.render()


def test_criterion_4_old_rule(report):
    with report(4, "mod-3 walk passes the bounded-variant rule"):
        rep, _ = _check("mod3_walk.pgcl", "mod3_walk_old.cert", "x=0..2")
        assert rep.verdict == PASS, rep.render()


def test_criterion_5_value_iteration(report):
    with report(5, "value iteration: 1/2 exactly, biased walk within 5e-3 below 1/2, 1023/1024 exactly"):
        appc = get_fixture("appC-counterexample").program()
        for iters in (2, 3, 10, 100):
            t0 = time.perf_counter()
            assert viter_value(appc, parse_state("x=1"), iters, ONE) == Fraction(1, 2)
            assert time.perf_counter() - t0 < 60

        walk = get_fixture("biased-walk").program()
        t0 = time.perf_counter()
        v = viter_value(walk, parse_state("x=1"), 10**4, ONE, parse_domain("x=0..200"))
        assert time.perf_counter() - t0 < 60
        target = gamblers_ruin(Fraction(2, 3), 1)
        assert target - Fraction(5, 1000) <= v <= target

        geo = get_fixture("geometric").program()
        # fuel counts body runs, so "10 unfoldings" is iterate 11 of X_0 = 0
        assert viter_value(geo, parse_state("x=1"), 11, ONE) == geometric_halting(10) == Fraction(1023, 1024)


def test_criterion_6_simulation(report):
    with report(6, "stack walk within 0.01 of golden ratio conjugate; 1d walk within 0.01 of the oracle"):
        t0 = time.perf_counter()
        s = sim("demonic-stack-walk", "x=1", "greedy-min(-x)", 200_000, 100_000, 42)
        assert time.perf_counter() - t0 < 120
        assert abs(float(s.termination_fraction) - golden_ratio_conjugate()) <= 0.01

        cap = 10_000
        t0 = time.perf_counter()
        s = sim("1d-srw", "x=1", "left", 100_000, cap, 42)
        assert time.perf_counter() - t0 < 120
        # one body run costs 3 steps and leaving the loop 1, so the cap allows (cap-1)//3 runs
        iters = (cap - 1) // 3 + 1
        w, start = split_loop(get_fixture("1d-srw").program())[1], parse_state("x=1")
        oracle = ValueIteration(w.cond, w.body, ONE, reachable_states(w, start, iters)).step(iters).value(start)
        assert abs(float(s.termination_fraction) - float(oracle)) <= 0.01


def test_criterion_7_flat_and_nested_loops_agree(report):
    with report(7, "flat and nested very lazy loper: overlapping Wilson intervals (cap 10^7)"):
        # the nested form spends more steps per dawdle, so small caps censor it
        # more often: at 10^4..10^5 the intervals separate, at 10^7 they do not
        cap = 10**7
        flat = sim("very-lazy-loper-flat", "n=1", "left", 50_000, cap, 11)
        nested = sim("very-lazy-loper-nested", "n=1", "left", 50_000, cap, 11)
        (a, b), (c, d) = flat.wilson95, nested.wilson95
        assert max(a, c) <= min(b, d), (flat.wilson95, nested.wilson95)


PROPERTIES = [
    test_transformer.test_monotonicity,
    test_transformer.test_scaling,
    test_transformer.test_demonic_below_angelic,
    test_transformer.test_demonic_equals_angelic_without_choice,
    test_transformer.test_truncated_variant_inequality,
    test_transformer.test_supermartingale_iff_truncations_rise,
    test_transformer.test_value_iteration_is_monotone_and_bounded,
    test_transformer.test_feasibility,
]


def test_criterion_8_property_suites(report):
    with report(8, f"{len(PROPERTIES)} randomized property suites, 1000 cases each"):
        for prop in PROPERTIES:
            assert prop._hypothesis_internal_use_settings.max_examples >= 1000
            prop()


def test_criterion_9_demonic_additivity_via_cli(report):
    with report(9, "wp prints 1/3, 1/3 and 1 for the demonic coin program"):
        runner = CliRunner()
        got = []
        for post in ("iverson(x=1)", "iverson(x=0)", "iverson(x=1)+iverson(x=0)"):
            r = runner.invoke(main, ["wp", str(FIXTURES / "appD_additivity.pgcl"), "--post", post, "--state", "x=0"])
            assert r.exit_code == 0
            got.append(r.output.splitlines()[0])
        assert got == ["wp = 1/3 (exact)", "wp = 1/3 (exact)", "wp = 1 (exact)"]


def test_criterion_10_determinism(report):
    with report(10, "simulate output is byte-identical across repeats and thread counts"):
        runner = CliRunner()
        base = ["simulate", str(FIXTURES / "demonic_stack_walk.pgcl"), "--init", "x=1",
                "--scheduler", "greedy-min(-x)", "--trials", "20000", "--max-steps", "10000", "--seed", "42"]
        outs = [runner.invoke(main, base + ["--threads", str(t)]).output for t in (1, 1, 2, 4, 8)]
        assert len(set(outs)) == 1 and outs[0].startswith("trials = 20000")

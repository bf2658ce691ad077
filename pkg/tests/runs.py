"""Long simulation runs shared by several test modules (computed once)."""

from functools import lru_cache

from pgcl_term.corpus import get_fixture
from pgcl_term.operational import parse_scheduler, simulate
from pgcl_term.parser import parse_state


@lru_cache(maxsize=None)
def sim(fixture_id, init, scheduler, trials, max_steps, seed, threads=1, engine="auto"):
    prog = get_fixture(fixture_id).program()
    return simulate(prog, parse_state(init), parse_scheduler(scheduler), trials, max_steps, seed, threads, engine)

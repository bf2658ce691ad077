"""Almost-sure termination tooling for probabilistic guarded commands.

Exact rational wp/awp transformers, value iteration, a certificate checker
for variant-based termination rules, and a seeded Monte-Carlo simulator.
"""

from .checker import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    CheckConfig,
    LoopSpec,
    PdGrid,
    Report,
    check_certificate,
    check_new_rule,
    check_nonterm,
    check_old_rule,
    check_pd_shape,
    derive_pd_from_ranking,
)
from .errors import LoopNotAllowed, PgclError, PgclSyntaxError
from .operational import Scheduler, parse_scheduler, run_trial, simulate
from .parser import (
    parse_bexpr,
    parse_certificate,
    parse_domain,
    parse_expr,
    parse_program,
    parse_state,
    pretty_print,
)
from .syntax import State
from .transformer import ValueIteration, awp_eval, loop_value_iteration, wp_eval, wp_symbolic

__all__ = [
    "FAIL", "INCONCLUSIVE", "PASS", "CheckConfig", "LoopSpec", "PdGrid", "Report",
    "check_certificate", "check_new_rule", "check_nonterm", "check_old_rule", "check_pd_shape",
    "derive_pd_from_ranking", "LoopNotAllowed", "PgclError", "PgclSyntaxError", "Scheduler",
    "parse_scheduler", "run_trial", "simulate", "parse_bexpr", "parse_certificate", "parse_domain",
    "parse_expr", "parse_program", "parse_state", "pretty_print", "State", "ValueIteration",
    "awp_eval", "loop_value_iteration", "wp_eval", "wp_symbolic",
]

from hypothesis import HealthCheck, settings

from pgcl_term.syntax import DChoice, If, PChoice, Seq, While

# every randomized invariant runs at least this many cases
PROPERTY = settings(
    max_examples=1000,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large, HealthCheck.filter_too_much],
)


def right_assoc(p):
    """The parser's shape: sequences nested to the right."""
    if isinstance(p, Seq):
        items = []

        def flat(q):
            if isinstance(q, Seq):
                flat(q.first)
                flat(q.second)
            else:
                items.append(right_assoc(q))

        flat(p)
        out = items[-1]
        for s in reversed(items[:-1]):
            out = Seq(s, out)
        return out
    if isinstance(p, If):
        return If(p.cond, right_assoc(p.then), right_assoc(p.orelse))
    if isinstance(p, PChoice):
        return PChoice(right_assoc(p.left), p.prob, right_assoc(p.right))
    if isinstance(p, DChoice):
        return DChoice(right_assoc(p.left), right_assoc(p.right))
    if isinstance(p, While):
        return While(p.cond, right_assoc(p.body))
    return p

"""Shared test utilities that do touch the package under test."""

import random

from cplearn.cp import ConstraintKind, Model

KIND_BY_NAME = {k.name: k for k in ConstraintKind}


def build_csp(domains, constraints, objective_index):
    """Model from the same plain description the oracle consumes."""
    model = Model()
    for i, values in enumerate(domains):
        model.add_variable(values, objective=i == objective_index)
    for kind_name, scope, params in constraints:
        model.add_constraint(KIND_BY_NAME[kind_name], scope, params)
    return model


def random_csp(rng: random.Random, max_vars=5, max_dom=5):
    """Small random model description: (domains, constraints, obj index).

    Mixes all four constraint kinds; reification variables get 0/1 domains.
    Always includes an objective variable.
    """
    n = rng.randint(2, max_vars)
    domains = []
    for _ in range(n):
        lo = rng.randint(-3, 3)
        domains.append(range(lo, lo + rng.randint(1, max_dom)))
    domains = [list(d) for d in domains]
    constraints = []
    for _ in range(rng.randint(1, n + 1)):
        kind = rng.choice(["NOT_EQUAL", "LESS_OR_EQUAL", "SUM_EQUALS", "REIFIED_NOT_EQUAL"])
        if kind in ("NOT_EQUAL", "LESS_OR_EQUAL"):
            x, y = rng.sample(range(n), 2) if n >= 2 else (0, 0)
            constraints.append((kind, (x, y), ()))
        elif kind == "SUM_EQUALS":
            k = rng.randint(2, min(3, n))
            scope = tuple(rng.sample(range(n), k))
            coeffs = tuple(rng.choice((-2, -1, 1, 2)) for _ in scope)
            # Pick a constant some assignment can reach so not everything is
            # trivially infeasible.
            sample = [rng.choice(domains[v]) for v in scope]
            const = sum(c * v for c, v in zip(coeffs, sample))
            constraints.append((kind, scope, coeffs + (const,)))
        else:
            if n < 3:
                continue
            b, x, y = rng.sample(range(n), 3)
            domains[b] = [0, 1]
            constraints.append((kind, (b, x, y), ()))
    return domains, constraints, rng.randrange(n)

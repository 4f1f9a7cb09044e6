"""Shared fixtures: paper-style example programs and random input generators."""

from __future__ import annotations

import random

import pytest

from gtsat.deps import TGD, is_guarded
from gtsat.terms import Atom, Const, Var
from gtsat.textio import parse_instance, parse_program

RUNNING_EXAMPLE = """
a(X1,X2) -> b(X1,Y), c(X1,Y).
c(X1,X2) -> d(X1,X2).
b(X1,X2), d(X1,X2) -> e(X1).
a(X1,X2), e(X1) -> f(X1,Y1), f(Y1,Y2).
e(X1), f(X1,X2) -> g(X1).
b(X1,X2), g(X1) -> h(X1).
"""

CIM_EXAMPLE = """
acequipment(X) -> hasterminal(X,Y), acterminal(Y).
acterminal(X) -> terminal(X).
hasterminal(X,Z), terminal(Z) -> equipment(X).
acterminal(X) -> partof(X,Y), acequipment(Y).
"""

CIM_FACTS = """
acequipment(sw1).
acequipment(sw2).
hasterminal(sw1,trm1).
acterminal(trm1).
"""


def T(text: str) -> TGD:
    """Parse a single dependency statement."""
    tgds = parse_program(text if text.rstrip().endswith(".") else text + ".").tgds
    assert len(tgds) == 1
    return tgds[0]


def P(text: str) -> list[TGD]:
    return parse_program(text).tgds


def I(text: str) -> frozenset[Atom]:
    return parse_instance(text)


@pytest.fixture
def running_example() -> list[TGD]:
    return P(RUNNING_EXAMPLE)


@pytest.fixture
def cim_example() -> list[TGD]:
    return P(CIM_EXAMPLE)


def random_guarded_tgd(rng: random.Random, relations: list[tuple[str, int]],
                       consts: list[str], max_body: int = 3, max_head: int = 2) -> TGD:
    """A random guarded TGD over the given signature."""
    n_vars = rng.randint(1, min(3, max(r[1] for r in relations)))
    xs = [Var(f"X{i}") for i in range(1, n_vars + 1)]
    guard_rel = rng.choice([r for r in relations if r[1] >= n_vars])
    guard_args = xs + [rng.choice(xs) for _ in range(guard_rel[1] - n_vars)]
    rng.shuffle(guard_args)
    body = [Atom(guard_rel[0], tuple(guard_args))]
    for _ in range(rng.randint(0, max_body - 1)):
        rel = rng.choice(relations)
        args = tuple(
            Const(rng.choice(consts)) if consts and rng.random() < 0.15 else rng.choice(xs)
            for _ in range(rel[1])
        )
        body.append(Atom(rel[0], args))
    ys = [Var(f"Y{i}") for i in range(1, rng.randint(0, 2) + 1)]
    head = []
    for _ in range(rng.randint(1, max_head)):
        rel = rng.choice(relations)
        pool = xs + ys if ys else xs
        args = tuple(rng.choice(pool) for _ in range(rel[1]))
        head.append(Atom(rel[0], args))
    tgd = TGD(body, head)
    assert is_guarded(tgd)
    return tgd


def random_signature(rng: random.Random, max_relations: int = 6, max_arity: int = 3):
    n = rng.randint(2, max_relations)
    return [(f"r{i}", rng.randint(1, max_arity)) for i in range(n)]


def random_program(rng: random.Random, max_tgds: int = 10, max_relations: int = 6,
                   max_arity: int = 3, n_consts: int = 2) -> list[TGD]:
    relations = random_signature(rng, max_relations, max_arity)
    consts = [f"c{i}" for i in range(rng.randint(0, n_consts))]
    return [
        random_guarded_tgd(rng, relations, consts)
        for _ in range(rng.randint(1, max_tgds))
    ]


def random_instance(rng: random.Random, tgds: list[TGD], max_facts: int = 8) -> frozenset[Atom]:
    relations = sorted({(a.relation, a.arity) for t in tgds for a in list(t.body) + list(t.head)})
    consts = [Const("a"), Const("b"), Const("c")]
    facts = set()
    for _ in range(rng.randint(1, max_facts)):
        rel, arity = rng.choice(relations)
        facts.add(Atom(rel, tuple(rng.choice(consts) for _ in range(arity))))
    return frozenset(facts)

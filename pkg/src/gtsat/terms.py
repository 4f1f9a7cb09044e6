"""Terms, atoms, substitutions, and unification.

Terms are constants, variables, labeled nulls, or Skolem compounds of depth
one.  Atoms apply a relation name to a tuple of terms.  Substitutions are
plain ``dict[Var, Term]`` maps; most general unifiers returned here are
idempotent (applying one twice equals applying it once).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Union


@dataclass(frozen=True)
class Const:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return "?" + self.name


@dataclass(frozen=True)
class Null:
    """Labeled null; ids come from a per-chase counter."""

    id: int

    def __str__(self) -> str:
        return f"_:{self.id}"


@dataclass(frozen=True)
class Fn:
    """Skolem compound term.  Arguments are function-free in guarded rules."""

    symbol: str
    args: tuple[Term, ...]

    def __str__(self) -> str:
        return f"{self.symbol}({', '.join(str(a) for a in self.args)})"


Term = Union[Const, Var, Null, Fn]


@dataclass(frozen=True)
class Atom:
    """A relation applied to terms.  Ground atoms double as facts."""

    relation: str
    args: tuple[Term, ...]

    def __str__(self) -> str:
        if not self.args:
            return self.relation
        return f"{self.relation}({', '.join(str(a) for a in self.args)})"

    @property
    def arity(self) -> int:
        return len(self.args)


def atom(relation: str, *args: Term) -> Atom:
    return Atom(relation, tuple(args))


Substitution = Mapping[Var, Term]


def term_vars(t: Term) -> Iterator[Var]:
    if isinstance(t, Var):
        yield t
    elif isinstance(t, Fn):
        for a in t.args:
            yield from term_vars(a)


def atom_vars(a: Atom) -> set[Var]:
    out: set[Var] = set()
    for t in a.args:
        out.update(term_vars(t))
    return out


def atoms_vars(atoms: Iterable[Atom]) -> set[Var]:
    out: set[Var] = set()
    for a in atoms:
        out.update(atom_vars(a))
    return out


def atom_terms(a: Atom) -> set[Term]:
    """All terms of the atom, including subterms of compounds."""
    out: set[Term] = set()
    stack = list(a.args)
    while stack:
        t = stack.pop()
        out.add(t)
        if isinstance(t, Fn):
            stack.extend(t.args)
    return out


def atom_consts(a: Atom) -> set[Const]:
    return {t for t in atom_terms(a) if isinstance(t, Const)}


def term_has_fn(t: Term) -> bool:
    return isinstance(t, Fn)


def atom_has_fn(a: Atom) -> bool:
    return any(isinstance(t, Fn) for t in a.args)


def term_is_ground(t: Term) -> bool:
    if isinstance(t, Var):
        return False
    if isinstance(t, Fn):
        return all(term_is_ground(a) for a in t.args)
    return True


def atom_is_ground(a: Atom) -> bool:
    return all(term_is_ground(t) for t in a.args)


def atom_is_base(a: Atom) -> bool:
    """Base facts contain constants only."""
    return all(isinstance(t, Const) for t in a.args)


def subst_term(sigma: Substitution, t: Term) -> Term:
    if isinstance(t, Var):
        return sigma.get(t, t)
    if isinstance(t, Fn):
        return Fn(t.symbol, tuple(subst_term(sigma, a) for a in t.args))
    return t


def subst_atom(sigma: Substitution, a: Atom) -> Atom:
    return Atom(a.relation, tuple(subst_term(sigma, t) for t in a.args))


def subst_atoms(sigma: Substitution, atoms: Iterable[Atom]) -> tuple[Atom, ...]:
    return tuple(subst_atom(sigma, a) for a in atoms)


def compose(outer: Substitution, inner: Substitution) -> dict[Var, Term]:
    """(outer . inner)(x) = outer(inner(x))."""
    out: dict[Var, Term] = {v: subst_term(outer, t) for v, t in inner.items()}
    for v, t in outer.items():
        out.setdefault(v, t)
    return out


def _occurs(v: Var, t: Term) -> bool:
    if isinstance(t, Var):
        return v == t
    if isinstance(t, Fn):
        return any(_occurs(v, a) for a in t.args)
    return False


def _bind(subst: dict[Var, Term], v: Var, t: Term) -> bool:
    if _occurs(v, t):
        return False
    one = {v: t}
    for u in list(subst):
        subst[u] = subst_term(one, subst[u])
    subst[v] = t
    return True


def _unify_terms(s: Term, t: Term, subst: dict[Var, Term], frozen: frozenset[Var]) -> bool:
    s = subst_term(subst, s)
    t = subst_term(subst, t)
    if s == t:
        return True
    if isinstance(s, Var) and s not in frozen:
        return _bind(subst, s, t)
    if isinstance(t, Var) and t not in frozen:
        return _bind(subst, t, s)
    if isinstance(s, Fn) and isinstance(t, Fn):
        if s.symbol != t.symbol or len(s.args) != len(t.args):
            return False
        return all(_unify_terms(a, b, subst, frozen) for a, b in zip(s.args, t.args))
    return False


def x_mgu(frozen: Iterable[Var], pairs: Iterable[tuple[Atom, Atom]]) -> dict[Var, Term] | None:
    """MGU of atom pairs treating the given variables as constants.

    Returns an idempotent substitution theta with theta(a) = theta(b) for
    every pair and theta(x) = x for frozen x, or None if none exists.
    """
    fz = frozenset(frozen)
    subst: dict[Var, Term] = {}
    for a, b in pairs:
        if a.relation != b.relation or len(a.args) != len(b.args):
            return None
        for s, t in zip(a.args, b.args):
            if not _unify_terms(s, t, subst, fz):
                return None
    return subst


def mgu(pairs: Iterable[tuple[Atom, Atom]]) -> dict[Var, Term] | None:
    """Most general unifier of atom pairs, with occurs check; None on failure."""
    return x_mgu((), pairs)


def match_term(pattern: Term, target: Term, subst: dict[Var, Term]) -> bool:
    """One-way matching: bind pattern variables so the pattern equals target."""
    if isinstance(pattern, Var):
        bound = subst.get(pattern)
        if bound is None:
            subst[pattern] = target
            return True
        return bound == target
    if isinstance(pattern, Fn):
        if not isinstance(target, Fn) or pattern.symbol != target.symbol:
            return False
        return all(match_term(p, t, subst) for p, t in zip(pattern.args, target.args))
    return pattern == target


def match_atom(pattern: Atom, target: Atom, subst: Substitution | None = None) -> dict[Var, Term] | None:
    if pattern.relation != target.relation or len(pattern.args) != len(target.args):
        return None
    out = dict(subst) if subst else {}
    for p, t in zip(pattern.args, target.args):
        if not match_term(p, t, out):
            return None
    return out


def rename_apart(vars_to_rename: Iterable[Var], avoid: Iterable[Var], prefix: str = "r") -> dict[Var, Term]:
    """Fresh renaming of the given variables away from the avoid set."""
    taken = {v.name for v in avoid}
    out: dict[Var, Term] = {}
    i = 0
    for v in sorted(vars_to_rename, key=lambda u: u.name):
        while f"{prefix}{i}" in taken:
            i += 1
        fresh = Var(f"{prefix}{i}")
        taken.add(fresh.name)
        out[v] = fresh
        i += 1
    return out

"""Dependencies (TGDs and single-head rules) and the operations on them.

Covers head-normal form, Skolemization, guardedness, variable normalization,
syntactic tautologies, and both the approximate and the exact subsumption
checks.  The exact check is a test oracle and may take exponential time.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence, Union

from .terms import (
    Atom,
    Const,
    Fn,
    Null,
    Substitution,
    Term,
    Var,
    atom_consts,
    atom_has_fn,
    atom_vars,
    atoms_vars,
    match_atom,
    subst_atom,
    subst_atoms,
    subst_term,
)


def _dedupe(atoms: Iterable[Atom]) -> tuple[Atom, ...]:
    return tuple(dict.fromkeys(atoms))


def _no_nulls(atoms: Iterable[Atom]) -> bool:
    return not any(isinstance(t, Null) for a in atoms for t in _walk_terms(a))


def _walk_terms(a: Atom):
    stack = list(a.args)
    while stack:
        t = stack.pop()
        yield t
        if isinstance(t, Fn):
            stack.extend(t.args)


@dataclass(frozen=True)
class TGD:
    """body -> exists y. head, with y the head variables absent from the body."""

    body: tuple[Atom, ...]
    head: tuple[Atom, ...]

    def __init__(self, body: Iterable[Atom], head: Iterable[Atom]):
        object.__setattr__(self, "body", _dedupe(body))
        object.__setattr__(self, "head", _dedupe(head))
        if not self.head:
            raise ValueError("TGD head must be nonempty")
        if not _no_nulls(self.body) or not _no_nulls(self.head):
            raise ValueError("TGD must not contain labeled nulls")

    @cached_property
    def universals(self) -> frozenset[Var]:
        return frozenset(atoms_vars(self.body))

    @cached_property
    def existentials(self) -> frozenset[Var]:
        return frozenset(atoms_vars(self.head)) - self.universals

    @property
    def is_full(self) -> bool:
        return not self.existentials

    def __str__(self) -> str:
        b = " & ".join(str(a) for a in self.body)
        h = " & ".join(str(a) for a in self.head)
        return f"{b} -> {h}"


@dataclass(frozen=True)
class Rule:
    """Single-head rule; the head may contain Skolem terms, never existentials."""

    body: tuple[Atom, ...]
    head: Atom

    def __init__(self, body: Iterable[Atom], head: Atom):
        object.__setattr__(self, "body", _dedupe(body))
        object.__setattr__(self, "head", head)
        if not _no_nulls(self.body) or not _no_nulls([head]):
            raise ValueError("rule must not contain labeled nulls")
        if not atom_vars(head) <= atoms_vars(self.body):
            raise ValueError("rule head variables must occur in the body")

    @cached_property
    def variables(self) -> frozenset[Var]:
        return frozenset(atoms_vars(self.body))

    def __str__(self) -> str:
        b = " & ".join(str(a) for a in self.body)
        return f"{b} -> {self.head}"


Dependency = Union[TGD, Rule]


def apply_substitution(sigma: Substitution, target):
    """Apply a substitution to a term, atom, TGD, or rule."""
    if isinstance(target, TGD):
        return TGD(subst_atoms(sigma, target.body), subst_atoms(sigma, target.head))
    if isinstance(target, Rule):
        return Rule(subst_atoms(sigma, target.body), subst_atom(sigma, target.head))
    if isinstance(target, Atom):
        return subst_atom(sigma, target)
    return subst_term(sigma, target)


def head_normal_form(tgd: TGD) -> list[TGD]:
    """Split a TGD into head-normal parts.

    Head atoms without existential variables become single-atom full TGDs;
    the remaining atoms stay together in one non-full TGD.
    """
    ex = tgd.existentials
    full_atoms = [a for a in tgd.head if not (atom_vars(a) & ex)]
    ex_atoms = [a for a in tgd.head if atom_vars(a) & ex]
    out = []
    if ex_atoms:
        out.append(TGD(tgd.body, ex_atoms))
    out.extend(TGD(tgd.body, [a]) for a in full_atoms)
    return out


def head_normalize_all(tgds: Iterable[TGD]) -> list[TGD]:
    seen: set[str] = set()
    out: list[TGD] = []
    for tgd in tgds:
        for part in head_normal_form(tgd):
            key = serialize(normalize_variables(part))
            if key not in seen:
                seen.add(key)
                out.append(part)
    return out


def is_head_normal(tgd: TGD) -> bool:
    if tgd.is_full:
        return len(tgd.head) == 1
    ex = tgd.existentials
    return all(atom_vars(a) & ex for a in tgd.head)


def find_guards(tgd: TGD) -> list[Atom]:
    """All body atoms containing every universal variable."""
    xs = tgd.universals
    return [a for a in tgd.body if xs <= atom_vars(a)]


def is_guarded(tgd: TGD) -> bool:
    return bool(find_guards(tgd))


def rule_guards(rule: Rule) -> list[Atom]:
    xs = rule.variables
    return [a for a in rule.body if not atom_has_fn(a) and atom_vars(a) == xs]


def is_guarded_rule(rule: Rule) -> bool:
    """Skolem-free guard with all variables; Skolem terms flat and all-variable."""
    if not rule_guards(rule):
        return False
    xs = rule.variables
    for a in list(rule.body) + [rule.head]:
        for t in a.args:
            if isinstance(t, Fn):
                if any(isinstance(s, Fn) for s in t.args):
                    return False
                if frozenset(s for s in t.args if isinstance(s, Var)) != xs:
                    return False
    return True


def rule_has_skolem(rule: Rule) -> bool:
    return atom_has_fn(rule.head) or any(atom_has_fn(a) for a in rule.body)


def is_datalog_rule(rule: Rule) -> bool:
    return not rule_has_skolem(rule)


def sigma_guarded(terms: Iterable[Term], by, sigma_consts: Iterable[Const] = ()) -> bool:
    """True iff the ground terms are covered by one fact's terms plus consts(Sigma).

    ``by`` is a single fact or an iterable of facts; for an iterable, some
    member must cover the whole set.
    """
    need = set(terms) - set(sigma_consts)
    if isinstance(by, Atom):
        return need <= set(by.args)
    return any(need <= set(f.args) for f in by)


def fact_sigma_guarded(fact: Atom, by, sigma_consts: Iterable[Const] = ()) -> bool:
    return sigma_guarded(fact.args, by, sigma_consts)


# ---------------------------------------------------------------- normalization

_BRANCH_CAP = 4096

_PREFIX_TAG = {"x": 0, "y": 1}


def _term_key(t: Term, naming: dict[Var, tuple[str, int]], local: dict[Var, int]) -> tuple:
    # named variables carry numeric indexes so key order is stable once an
    # unnamed variable (tag 2) later receives a name (tag 1, larger index)
    if isinstance(t, Var):
        if t in naming:
            prefix, idx = naming[t]
            return (1, _PREFIX_TAG[prefix], idx)
        if t not in local:
            local[t] = len(local)
        return (2, local[t])
    if isinstance(t, Const):
        return (0, t.name)
    if isinstance(t, Fn):
        return (3, t.symbol, tuple(_term_key(a, naming, local) for a in t.args))
    return (4, t.id)  # nulls never occur here; keep total order anyway


def _atom_key(a: Atom, naming: dict[Var, tuple[str, int]]) -> tuple:
    local: dict[Var, int] = {}
    return (a.relation, len(a.args), tuple(_term_key(t, naming, local) for t in a.args))


def _name_atom_vars(a: Atom, naming: dict[Var, tuple[str, int]], prefix: str, counters: dict[str, int]) -> None:
    for t in a.args:
        stack = [t]
        while stack:
            s = stack.pop(0)
            if isinstance(s, Var) and s not in naming:
                counters[prefix] += 1
                naming[s] = (prefix, counters[prefix])
            elif isinstance(s, Fn):
                stack = list(s.args) + stack


def _order_segments(segments, seg_idx, remaining, naming, counters, budget):
    """Order atoms segment by segment, minimizing the full key sequence.

    Greedily takes an atom with the least key; ties are branched (bounded by
    the budget) and the branch with the least overall serialization wins, so
    the result does not depend on input atom order or variable names.
    """
    if seg_idx == len(segments):
        return (), (), naming
    atoms, prefix = segments[seg_idx]
    if not remaining:
        nxt_len = len(segments[seg_idx + 1][0]) if seg_idx + 1 < len(segments) else 0
        return _order_segments(
            segments, seg_idx + 1, list(range(nxt_len)), naming, counters, budget
        )
    keys = [(_atom_key(atoms[i], naming), i) for i in remaining]
    best_key = min(k for k, _ in keys)
    picks = [i for k, i in keys if k == best_key]
    if len(picks) > 1:
        picks = picks[: max(1, budget[0])]
        budget[0] -= len(picks) - 1
    best = None
    for idx in picks:
        naming2 = dict(naming)
        counters2 = dict(counters)
        _name_atom_vars(atoms[idx], naming2, prefix, counters2)
        head_key = _atom_key(atoms[idx], naming2)
        tail_key, tail_order, nm = _order_segments(
            segments, seg_idx, [i for i in remaining if i != idx], naming2, counters2, budget
        )
        cand = ((seg_idx, head_key),) + tail_key
        if best is None or cand < best[0]:
            best = (cand, ((seg_idx, idx),) + tail_order, nm)
    return best


def normalize_variables(dep: Dependency) -> Dependency:
    """Canonical variable renaming: idempotent and invariant under renaming.

    Atoms are sorted by relation name, arity, and structure; the i-th fresh
    universal (existential) variable scanning body then head becomes x_i
    (y_i).  Ties between structurally identical atoms are resolved by trying
    each order and keeping the least full serialization, head included.
    """
    budget = [_BRANCH_CAP]
    if isinstance(dep, Rule):
        segments = [(list(dep.body), "x"), ([dep.head], "x")]
    else:
        segments = [(list(dep.body), "x"), (list(dep.head), "y")]
    _, order, naming = _order_segments(
        segments, 0, list(range(len(segments[0][0]))), {}, {"x": 0, "y": 0}, budget
    )
    per_segment: dict[int, list[int]] = {0: [], 1: []}
    for seg_idx, atom_idx in order:
        per_segment[seg_idx].append(atom_idx)
    ren = {v: Var(f"{p}{i}") for v, (p, i) in naming.items()}
    body = subst_atoms(ren, [dep.body[i] for i in per_segment[0]])
    if isinstance(dep, Rule):
        return Rule(body, subst_atom(ren, dep.head))
    head = subst_atoms(ren, [dep.head[i] for i in per_segment[1]])
    return TGD(body, head)


def serialize(dep: Dependency) -> str:
    return str(dep)


def normalized_key(dep: Dependency) -> str:
    return serialize(normalize_variables(dep))


# ------------------------------------------------------------------ redundancy

def is_syntactic_tautology(dep: Dependency) -> bool:
    if isinstance(dep, Rule):
        return dep.head in dep.body
    return bool(set(dep.body) & set(dep.head))


def subsumes_approx(d1: Dependency, d2: Dependency) -> bool:
    """Polynomial subsumption check on variable-normalized inputs.

    Sound for exact subsumption but intentionally incomplete: body inclusion
    and head containment are tested as plain atom sets.
    """
    if isinstance(d1, Rule) != isinstance(d2, Rule):
        return False
    if not set(d1.body) <= set(d2.body):
        return False
    if isinstance(d1, Rule):
        return d1.head == d2.head
    return set(d1.head) >= set(d2.head)


def _match_into(patterns: Sequence[Atom], targets: Sequence[Atom], subst: dict[Var, Term]):
    """Yield extensions of subst mapping each pattern atom onto some target atom."""
    if not patterns:
        yield subst
        return
    first, rest = patterns[0], patterns[1:]
    for t in targets:
        ext = match_atom(first, t, subst)
        if ext is not None:
            yield from _match_into(rest, targets, ext)


def _cover_targets(targets: Sequence[Atom], patterns: Sequence[Atom], subst: dict[Var, Term]):
    """Yield extensions of subst under which every target is some pattern's image."""
    if not targets:
        yield subst
        return
    first, rest = targets[0], targets[1:]
    for p in patterns:
        ext = match_atom(p, first, subst)
        if ext is not None:
            yield from _cover_targets(rest, patterns, ext)


def subsumes_exact(d1: Dependency, d2: Dependency) -> bool:
    """Exhaustive subsumption test (test oracle; exponential in the worst case)."""
    if isinstance(d1, Rule) != isinstance(d2, Rule):
        return False
    if isinstance(d1, Rule):
        base = match_atom(d1.head, d2.head)
        if base is None:
            return False
        return any(True for _ in _match_into(list(d1.body), list(d2.body), base))
    x1, y1 = d1.universals, d1.existentials
    x2, y2 = d2.universals, d2.existentials
    for mu in _match_into(list(d1.body), list(d2.body), {}):
        for full in _cover_targets(list(d2.head), list(d1.head), mu):
            if _tgd_mu_ok(full, x1, y1, x2, y2):
                return True
    return False


def _tgd_mu_ok(mu: dict[Var, Term], x1, y1, x2, y2) -> bool:
    for x in x1:
        if not (isinstance(mu.get(x, None), Var) and mu[x] in x2):
            return False
    images: list[Term] = []
    for y in y1:
        t = mu.get(y)
        if t is None:
            # an existential matched by no head atom can always be mapped
            # injectively into the remaining pool, which is never smaller
            continue
        if not (isinstance(t, Var) and (t in y1 or t in y2)):
            return False
        images.append(t)
    return len(set(images)) == len(images)


# -------------------------------------------------------------------- skolemize

def skolemize(tgds: Iterable[TGD]) -> list[Rule]:
    """Replace existentials with Skolem terms over the universal variables.

    TGDs are normalized and sorted first so Skolem symbol names, which encode
    the TGD index and variable name, are reproducible across runs.  Full TGDs
    in head-normal form pass through unchanged.
    """
    normalized = sorted((normalize_variables(t) for t in tgds), key=serialize)
    out: list[Rule] = []
    seen: set[str] = set()
    for i, tgd in enumerate(normalized):
        xs = sorted(tgd.universals, key=_var_index)
        sk: dict[Var, Term] = {
            y: Fn(f"sk_{i}_{y.name}", tuple(xs)) for y in sorted(tgd.existentials, key=_var_index)
        }
        for h in tgd.head:
            rule = Rule(tgd.body, subst_atom(sk, h))
            key = normalized_key(rule)
            if key not in seen:
                seen.add(key)
                out.append(rule)
    return out


def _var_index(v: Var):
    head = v.name.rstrip("0123456789")
    tail = v.name[len(head):]
    return (head, int(tail) if tail else -1)


# ---------------------------------------------------------------------- stats

@dataclass(frozen=True)
class SignatureStats:
    """Vocabulary statistics used for indexing and termination bounds."""

    arities: dict[str, int]
    consts: frozenset[Const]
    bwidth: int
    hwidth: int
    skolem_count: int
    body_occurrences: Counter
    head_occurrences: Counter

    @property
    def relations(self) -> set[str]:
        return set(self.arities)

    @property
    def body_relations(self) -> set[str]:
        return set(self.body_occurrences)


def signature_stats(tgds: Iterable[TGD]) -> SignatureStats:
    arities: dict[str, int] = {}
    consts: set[Const] = set()
    bwidth = 0
    hwidth = 0
    skolems = 0
    body_occ: Counter = Counter()
    head_occ: Counter = Counter()
    for tgd in tgds:
        bwidth = max(bwidth, len(atoms_vars(tgd.body)))
        hwidth = max(hwidth, len(atoms_vars(tgd.head)))
        skolems += len(tgd.existentials)
        for a in tgd.body:
            arities.setdefault(a.relation, a.arity)
            consts.update(atom_consts(a))
            body_occ[a.relation] += 1
        for a in tgd.head:
            arities.setdefault(a.relation, a.arity)
            consts.update(atom_consts(a))
            head_occ[a.relation] += 1
    return SignatureStats(arities, frozenset(consts), bwidth, hwidth, skolems, body_occ, head_occ)

"""Tree-like chase machinery: steps, one-pass validation, bounded proof
search, loop decomposition, and Datalog materialization.

The chase here is oblivious: a non-full dependency may fire repeatedly on the
same facts, each time creating a fresh child vertex.  Proof search does not
build chase trees blindly; it computes, per vertex content, the set of facts
derivable there (a memoized closure) and then replays the closure's log as an
actual one-pass sequence.  A closure miss is inconclusive, not a refutation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

from .deps import (
    Rule,
    TGD,
    fact_sigma_guarded,
    head_normalize_all,
    is_guarded,
    sigma_guarded,
    signature_stats,
)
from .terms import (
    Atom,
    Const,
    Null,
    Substitution,
    Term,
    Var,
    atom_is_base,
    atom_is_ground,
    atom_terms,
    match_atom,
    subst_atom,
)


class ChaseStepError(ValueError):
    """A chase or propagation step whose precondition does not hold."""


@dataclass(frozen=True)
class Vertex:
    parent: int | None
    facts: frozenset[Atom]


@dataclass(frozen=True)
class ChaseTree:
    vertices: dict[int, Vertex]
    recently_updated: int
    next_null: int
    next_vertex: int
    sigma_consts: frozenset[Const]

    @staticmethod
    def initial(instance: Iterable[Atom], sigma_consts: Iterable[Const] = ()) -> "ChaseTree":
        facts = frozenset(instance)
        if not all(atom_is_ground(f) for f in facts):
            raise ChaseStepError("instance facts must be ground")
        return ChaseTree({0: Vertex(None, facts)}, 0, 1, 1, frozenset(sigma_consts))

    def facts(self, vertex: int) -> frozenset[Atom]:
        return self.vertices[vertex].facts

    @property
    def root(self) -> int:
        return 0


def apply_chase_step(tree: ChaseTree, vertex: int, tgd: TGD, sigma: Substitution) -> ChaseTree:
    """Apply a chase step with a head-normal GTGD at the given vertex.

    Full dependencies extend the vertex; non-full ones create a fresh child
    holding the instantiated head plus every vertex fact it guards.
    """
    if vertex not in tree.vertices:
        raise ChaseStepError(f"no vertex {vertex}")
    base = tree.facts(vertex)
    grounded = [subst_atom(sigma, a) for a in tgd.body]
    if not set(grounded) <= base:
        raise ChaseStepError(f"body of {tgd} not matched at vertex {vertex}")
    if tgd.is_full:
        fact = subst_atom(sigma, tgd.head[0])
        if not atom_is_ground(fact):
            raise ChaseStepError("substitution does not ground the head")
        vertices = dict(tree.vertices)
        vertices[vertex] = Vertex(tree.vertices[vertex].parent, base | {fact})
        return replace(tree, vertices=vertices, recently_updated=vertex)
    sprime = dict(sigma)
    null = tree.next_null
    for y in sorted(tgd.existentials, key=lambda v: v.name):
        sprime[y] = Null(null)
        null += 1
    head_facts = frozenset(subst_atom(sprime, a) for a in tgd.head)
    pushed = frozenset(
        f for f in base if fact_sigma_guarded(f, head_facts, tree.sigma_consts)
    )
    vertices = dict(tree.vertices)
    child = tree.next_vertex
    vertices[child] = Vertex(vertex, head_facts | pushed)
    return replace(
        tree,
        vertices=vertices,
        recently_updated=child,
        next_null=null,
        next_vertex=child + 1,
    )


def apply_propagation(tree: ChaseTree, source: int, target: int, fact: Atom) -> ChaseTree:
    """Copy one fact between vertices; the fact must be guarded at the target."""
    if source not in tree.vertices or target not in tree.vertices:
        raise ChaseStepError("unknown vertex")
    if fact not in tree.facts(source):
        raise ChaseStepError(f"{fact} not present at vertex {source}")
    if not fact_sigma_guarded(fact, tree.facts(target), tree.sigma_consts):
        raise ChaseStepError(f"{fact} not guarded by the facts of vertex {target}")
    vertices = dict(tree.vertices)
    vertices[target] = Vertex(tree.vertices[target].parent, tree.facts(target) | {fact})
    return replace(tree, vertices=vertices, recently_updated=target)


@dataclass(frozen=True)
class ChaseStepRecord:
    kind: str  # "full" | "nonfull" | "propagation"
    vertex: int
    tgd: TGD | None = None
    sigma: tuple[tuple[Var, Term], ...] = ()
    child: int | None = None  # nonfull only
    target: int | None = None  # propagation only
    fact: Atom | None = None  # full: derived fact; propagation: copied fact

    def substitution(self) -> dict[Var, Term]:
        return dict(self.sigma)


@dataclass(frozen=True)
class ChaseProof:
    initial: frozenset[Atom]
    steps: tuple[ChaseStepRecord, ...]
    target: Atom
    sigma_consts: frozenset[Const] = frozenset()


def replay(proof: ChaseProof) -> list[ChaseTree]:
    """All trees T_0..T_n of the proof; raises ChaseStepError if a step is invalid."""
    tree = ChaseTree.initial(proof.initial, proof.sigma_consts)
    trees = [tree]
    for rec in proof.steps:
        if rec.kind == "propagation":
            tree = apply_propagation(tree, rec.vertex, rec.target, rec.fact)
        else:
            tree = apply_chase_step(tree, rec.vertex, rec.tgd, rec.substitution())
            if rec.kind == "nonfull" and tree.recently_updated != rec.child:
                raise ChaseStepError(
                    f"record expects child {rec.child}, tree created {tree.recently_updated}"
                )
        trees.append(tree)
    return trees


@dataclass(frozen=True)
class OnePassViolation:
    step: int  # 1-based index of the offending step
    reason: str


def _parentward_propagation_applicable(tree: ChaseTree, vertex: int) -> Atom | None:
    parent = tree.vertices[vertex].parent
    if parent is None:
        return None
    target_facts = tree.facts(parent)
    for fact in sorted(tree.facts(vertex) - target_facts, key=str):
        if fact_sigma_guarded(fact, target_facts, tree.sigma_consts):
            return fact
    return None


def validate_one_pass(proof: ChaseProof) -> OnePassViolation | None:
    """Check the one-pass discipline; None means the proof satisfies it.

    Every step must apply to the recently updated vertex; propagations go
    parent-ward one fact at a time; a chase step is allowed only when no
    parent-ward propagation of a new fact is possible.
    """
    trees = replay(proof)
    for i, rec in enumerate(proof.steps, start=1):
        before = trees[i - 1]
        focus = before.recently_updated
        if rec.vertex != focus:
            return OnePassViolation(i, f"step applies to v{rec.vertex}, not the recently updated v{focus}")
        if rec.kind == "propagation":
            parent = before.vertices[rec.vertex].parent
            if parent is None or rec.target != parent:
                return OnePassViolation(
                    i, f"propagation from v{rec.vertex} to v{rec.target} is not parent-ward"
                )
        else:
            blocking = _parentward_propagation_applicable(before, focus)
            if blocking is not None:
                return OnePassViolation(
                    i, f"chase step fired while {blocking} could be propagated to the parent"
                )
    return None


@dataclass(frozen=True)
class Loop:
    start: int  # i: the loop spans trees T_start .. T_end
    end: int
    vertex: int
    output: Atom

    @property
    def length(self) -> int:
        return self.end - self.start


def decompose_loops(proof: ChaseProof) -> list[Loop]:
    """All loops of a one-pass proof, via their closing propagation steps.

    Also asserts the loop-shape property: at every point of a loop, the terms
    of the child other than its creation nulls stay guarded by the facts the
    loop started from.
    """
    violation = validate_one_pass(proof)
    if violation is not None:
        raise ChaseStepError(f"not a one-pass proof: {violation.reason} (step {violation.step})")
    trees = replay(proof)
    created_at: dict[int, int] = {}
    for i, rec in enumerate(proof.steps, start=1):
        if rec.kind == "nonfull":
            created_at[rec.child] = i
    loops = []
    for j, rec in enumerate(proof.steps, start=1):
        if rec.kind != "propagation":
            continue
        child = rec.vertex
        start = created_at[child] - 1
        loop = Loop(start, j, rec.target, rec.fact)
        _assert_loop_shape(trees, loop, child)
        loops.append(loop)
    return loops


def _assert_loop_shape(trees: list[ChaseTree], loop: Loop, child: int) -> None:
    base = trees[loop.start].facts(loop.vertex)
    creation_nulls = {
        t for f in trees[loop.start + 1].facts(child) for t in atom_terms(f) if isinstance(t, Null)
    }
    consts = trees[0].sigma_consts
    for k in range(loop.start + 1, loop.end + 1):
        if child not in trees[k].vertices:
            continue
        terms = {
            t for fact in trees[k].facts(child) for t in atom_terms(fact)
        } - creation_nulls
        assert sigma_guarded(terms, base, consts), (
            f"loop-shape violation at T_{k}: child terms escape the loop input"
        )


# --------------------------------------------------------------- materialization

def _facts_by_relation(facts: Iterable[Atom]) -> dict[str, list[Atom]]:
    out: dict[str, list[Atom]] = {}
    for f in facts:
        out.setdefault(f.relation, []).append(f)
    return out


def iter_body_matches(
    body: Sequence[Atom],
    facts_by_rel: dict[str, list[Atom]],
    partial: dict[Var, Term] | None = None,
) -> Iterator[dict[Var, Term]]:
    """All substitutions matching every body atom to a fact, most-bound first."""
    subst = dict(partial) if partial else {}

    def rec(remaining: list[Atom], bound: dict[Var, Term]) -> Iterator[dict[Var, Term]]:
        if not remaining:
            yield bound
            return
        ranked = sorted(
            remaining,
            key=lambda a: (-sum(1 for v in a.args if isinstance(v, Var) and v in bound), str(a)),
        )
        first = ranked[0]
        rest = ranked[1:]
        for fact in facts_by_rel.get(first.relation, ()):
            ext = match_atom(first, fact, bound)
            if ext is not None:
                yield from rec(rest, ext)

    yield from rec(list(body), subst)


def datalog_fixpoint(program: Iterable[Rule], instance: Iterable[Atom]) -> frozenset[Atom]:
    """Least fixpoint of a function-free program, computed semi-naively."""
    rules = list(program)
    for r in rules:
        if any(not isinstance(t, (Var, Const)) for a in list(r.body) + [r.head] for t in a.args):
            raise ValueError(f"not function-free: {r}")
    facts: set[Atom] = set(instance)
    index = _facts_by_relation(facts)
    delta = set(facts)
    while delta:
        delta_index = _facts_by_relation(delta)
        new: set[Atom] = set()
        for rule in rules:
            body = list(rule.body)
            for i, pivot in enumerate(body):
                if pivot.relation not in delta_index:
                    continue
                others = body[:i] + body[i + 1 :]
                for fact in delta_index[pivot.relation]:
                    start = match_atom(pivot, fact)
                    if start is None:
                        continue
                    for sigma in iter_body_matches(others, index, start):
                        derived = subst_atom(sigma, rule.head)
                        if derived not in facts:
                            new.add(derived)
        facts.update(new)
        for f in new:
            index.setdefault(f.relation, []).append(f)
        delta = new
    return frozenset(facts)


def datalog_fixpoint_naive(program: Iterable[Rule], instance: Iterable[Atom]) -> frozenset[Atom]:
    """Reference implementation: re-match every rule until nothing changes."""
    rules = list(program)
    facts: set[Atom] = set(instance)
    while True:
        index = _facts_by_relation(facts)
        new = {
            subst_atom(sigma, rule.head)
            for rule in rules
            for sigma in iter_body_matches(rule.body, index)
        }
        if new <= facts:
            return frozenset(facts)
        facts.update(new)


# ----------------------------------------------------------------- proof search

@dataclass(frozen=True)
class ChaseBounds:
    max_depth: int = 3
    max_facts_per_vertex: int = 64
    max_steps: int = 100_000


class BudgetExhausted(Exception):
    pass


@dataclass
class _ScriptEntry:
    fact: Atom
    kind: str  # "full" | "loop"
    tgd: TGD
    sigma: dict[Var, Term]


@dataclass
class _Script:
    entries: list[_ScriptEntry]
    all_facts: frozenset[Atom]
    truncated: bool


class _ChaseSearch:
    """Memoized per-vertex closures over head-normal guarded dependencies."""

    def __init__(self, tgds: Sequence[TGD], bounds: ChaseBounds):
        hnf = head_normalize_all(tgds)
        for tgd in hnf:
            if not is_guarded(tgd):
                raise ValueError(f"not guarded: {tgd}")
        self.full = [t for t in hnf if t.is_full]
        self.nonfull = [t for t in hnf if not t.is_full]
        self.consts = signature_stats(hnf).consts
        self.bounds = bounds
        self.memo: dict[tuple, _Script] = {}
        self.steps = 0
        self.local_nulls = itertools.count(10_000_000)

    def _tick(self) -> None:
        self.steps += 1
        if self.steps > self.bounds.max_steps:
            raise BudgetExhausted()

    def _canonical(self, facts: frozenset[Atom]) -> tuple[tuple, dict[Null, Null]]:
        ordered = sorted(facts, key=str)
        mapping: dict[Null, Null] = {}
        for f in ordered:
            for t in f.args:
                if isinstance(t, Null) and t not in mapping:
                    mapping[t] = Null(len(mapping))
        renamed = tuple(
            Atom(f.relation, tuple(mapping.get(t, t) for t in f.args)) for f in ordered
        )
        return tuple(sorted(renamed, key=str)), mapping

    def closure(self, facts: frozenset[Atom], depth: int) -> _Script:
        """Closure of a vertex content; the script is in the caller's term space."""
        key_facts, mapping = self._canonical(facts)
        memo_key = (key_facts, depth)
        hit = self.memo.get(memo_key)
        if hit is None:
            hit = self._compute(frozenset(key_facts), depth)
            self.memo[memo_key] = hit
        inverse = {v: k for k, v in mapping.items()}
        if not inverse:
            return hit
        def back(a: Atom) -> Atom:
            return Atom(a.relation, tuple(inverse.get(t, t) for t in a.args))
        entries = [
            _ScriptEntry(
                back(e.fact),
                e.kind,
                e.tgd,
                {v: inverse.get(t, t) for v, t in e.sigma.items()},
            )
            for e in hit.entries
        ]
        return _Script(entries, frozenset(back(f) for f in hit.all_facts), hit.truncated)

    def _child_content(self, tgd: TGD, sigma: dict[Var, Term], parent: set[Atom]):
        sprime = dict(sigma)
        for y in sorted(tgd.existentials, key=lambda v: v.name):
            sprime[y] = Null(next(self.local_nulls))
        head_facts = frozenset(subst_atom(sprime, a) for a in tgd.head)
        pushed = frozenset(
            f for f in parent if fact_sigma_guarded(f, head_facts, self.consts)
        )
        return head_facts | pushed, head_facts

    def _compute(self, seed: frozenset[Atom], depth: int) -> _Script:
        current: set[Atom] = set(seed)
        entries: list[_ScriptEntry] = []
        truncated = False

        def room() -> bool:
            return len(current) < self.bounds.max_facts_per_vertex

        changed = True
        while changed:
            changed = False
            # full dependencies to a local fixpoint first
            inner = True
            while inner:
                inner = False
                for tgd in self.full:
                    index = _facts_by_relation(current)
                    for sigma in sorted(
                        iter_body_matches(tgd.body, index), key=lambda s: str(sorted(s.items(), key=str))
                    ):
                        fact = subst_atom(sigma, tgd.head[0])
                        if fact in current:
                            continue
                        if not room():
                            truncated = True
                            continue
                        self._tick()
                        current.add(fact)
                        entries.append(_ScriptEntry(fact, "full", tgd, sigma))
                        inner = changed = True
            if depth <= 0:
                break
            for tgd in self.nonfull:
                index = _facts_by_relation(current)
                for sigma in sorted(
                    iter_body_matches(tgd.body, index), key=lambda s: str(sorted(s.items(), key=str))
                ):
                    self._tick()
                    child0, head_facts = self._child_content(tgd, sigma, current)
                    script = self.closure(frozenset(child0), depth - 1)
                    truncated = truncated or script.truncated
                    fresh = {
                        t
                        for f in head_facts
                        for t in atom_terms(f)
                        if isinstance(t, Null)
                    } - {t for f in current for t in atom_terms(f)}
                    for entry in script.entries:
                        out = entry.fact
                        if out in current:
                            continue
                        if any(t in fresh for t in atom_terms(out)):
                            continue
                        if not fact_sigma_guarded(out, current, self.consts):
                            continue
                        if not room():
                            truncated = True
                            continue
                        current.add(out)
                        entries.append(_ScriptEntry(out, "loop", tgd, sigma))
                        changed = True
        return _Script(entries, frozenset(current), truncated)


def entailed_base_facts(
    instance: Iterable[Atom], tgds: Sequence[TGD], bounds: ChaseBounds = ChaseBounds()
) -> frozenset[Atom]:
    """Base facts with a one-pass proof within the bounds (sound, not complete)."""
    search = _ChaseSearch(tgds, bounds)
    facts = frozenset(instance)
    try:
        script = search.closure(facts, bounds.max_depth)
        all_facts = script.all_facts
    except BudgetExhausted:
        return frozenset(f for f in facts if atom_is_base(f))
    return frozenset(f for f in all_facts if atom_is_base(f))


class _TargetFound(Exception):
    pass


class _ProofBuilder:
    def __init__(self, search: _ChaseSearch, instance: frozenset[Atom], target: Atom):
        self.search = search
        self.tree = ChaseTree.initial(instance, search.consts)
        self.records: list[ChaseStepRecord] = []
        self.target = target

    def _emit(self, record: ChaseStepRecord, tree: ChaseTree) -> None:
        self.records.append(record)
        self.tree = tree
        if self.target in tree.facts(tree.recently_updated):
            raise _TargetFound()

    def derive(self, vertex: int, goal: Atom, depth: int) -> None:
        """Replay the closure log of the vertex until the goal is derived."""
        script = self.search.closure(self.tree.facts(vertex), depth)
        for entry in script.entries:
            if entry.fact in self.tree.facts(vertex):
                if entry.fact == goal:
                    return
                continue
            if entry.kind == "full":
                tree = apply_chase_step(self.tree, vertex, entry.tgd, entry.sigma)
                rec = ChaseStepRecord(
                    "full", vertex, entry.tgd, tuple(sorted(entry.sigma.items(), key=str)),
                    fact=entry.fact,
                )
                self._emit(rec, tree)
            else:
                tree = apply_chase_step(self.tree, vertex, entry.tgd, entry.sigma)
                child = tree.recently_updated
                rec = ChaseStepRecord(
                    "nonfull", vertex, entry.tgd, tuple(sorted(entry.sigma.items(), key=str)),
                    child=child,
                )
                self._emit(rec, tree)
                self.derive(child, entry.fact, depth - 1)
                tree = apply_propagation(self.tree, child, vertex, entry.fact)
                self._emit(
                    ChaseStepRecord("propagation", child, target=vertex, fact=entry.fact), tree
                )
            if entry.fact == goal:
                return
        raise BudgetExhausted()  # goal vanished: budget interfered with the log


def find_one_pass_proof(
    instance: Iterable[Atom],
    tgds: Sequence[TGD],
    fact: Atom,
    bounds: ChaseBounds = ChaseBounds(),
) -> ChaseProof | None:
    """A one-pass tree-like chase proof of the fact, or None (inconclusive).

    Depths are tried in increasing order, so the returned proof uses the
    smallest child depth that suffices within the bounds.
    """
    facts = frozenset(instance)
    search = _ChaseSearch(tgds, bounds)
    if fact in facts:
        return ChaseProof(facts, (), fact, search.consts)
    for depth in range(bounds.max_depth + 1):
        try:
            script = search.closure(facts, depth)
        except BudgetExhausted:
            return None
        if fact not in script.all_facts:
            continue
        builder = _ProofBuilder(search, facts, fact)
        try:
            builder.derive(0, fact, depth)
        except _TargetFound:
            pass
        except BudgetExhausted:
            return None
        return ChaseProof(facts, tuple(builder.records), fact, search.consts)
    return None

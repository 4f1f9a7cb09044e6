"""Chase steps, the one-pass discipline, loops, proof search, and fixpoints."""

from __future__ import annotations

import random

import pytest

from gtsat.chase import (
    ChaseBounds,
    ChaseProof,
    ChaseStepRecord,
    ChaseStepError,
    ChaseTree,
    apply_chase_step,
    apply_propagation,
    datalog_fixpoint,
    datalog_fixpoint_naive,
    decompose_loops,
    entailed_base_facts,
    find_one_pass_proof,
    replay,
    validate_one_pass,
)
from gtsat.deps import head_normalize_all, skolemize
from gtsat.terms import Atom, Const, Null, Var, atom
from gtsat.textio import parse_datalog, rules_from_tgds

from conftest import (
    CIM_EXAMPLE,
    CIM_FACTS,
    I,
    P,
    RUNNING_EXAMPLE,
    T,
    random_instance,
    random_program,
)

a, b = Const("a"), Const("b")


class _SequenceBuilder:
    """Applies steps to a tree while collecting the records of a proof."""

    def __init__(self, instance):
        self.tree = ChaseTree.initial(instance)
        self.records = []

    def full(self, vertex, tgd, sigma):
        from gtsat.terms import subst_atom

        self.tree = apply_chase_step(self.tree, vertex, tgd, sigma)
        fact = subst_atom(sigma, tgd.head[0])
        self.records.append(
            ChaseStepRecord("full", vertex, tgd, tuple(sorted(sigma.items(), key=str)), fact=fact)
        )
        return self.tree

    def nonfull(self, vertex, tgd, sigma):
        self.tree = apply_chase_step(self.tree, vertex, tgd, sigma)
        child = self.tree.recently_updated
        self.records.append(
            ChaseStepRecord(
                "nonfull", vertex, tgd, tuple(sorted(sigma.items(), key=str)), child=child
            )
        )
        return child

    def propagate(self, source, target, fact):
        self.tree = apply_propagation(self.tree, source, target, fact)
        self.records.append(ChaseStepRecord("propagation", source, target=target, fact=fact))
        return self.tree

    def as_proof(self, instance, target) -> ChaseProof:
        return ChaseProof(frozenset(instance), tuple(self.records), target)


def _figure_sequences():
    """The two chase sequences for the six-dependency running example.

    Returns (invalid, valid): the first propagates between siblings, the
    second repairs it by going through the root and regrowing the subtree.
    """
    tgds = P(RUNNING_EXAMPLE)
    g1, g2, g3, g4, g5, g6 = tgds
    X1, X2 = Var("X1"), Var("X2")
    instance = I("a(a,b).")
    n1, n2, n3 = Null(1), Null(2), Null(3)

    def common(builder):
        v1 = builder.nonfull(0, g1, {X1: a, X2: b})  # {B(a,n1), C(a,n1)}
        builder.full(v1, g2, {X1: a, X2: n1})  # D(a,n1)
        builder.full(v1, g3, {X1: a, X2: n1})  # E(a)
        builder.propagate(v1, 0, atom("e", a))
        v2 = builder.nonfull(0, g4, {X1: a, X2: b})  # {F(a,n2), F(n2,n3), E(a)}
        builder.full(v2, g5, {X1: a, X2: n2})  # G(a)
        return v1, v2

    bad = _SequenceBuilder(instance)
    v1, v2 = common(bad)
    bad.propagate(v2, v1, atom("g", a))  # sibling propagation: not one-pass
    bad.full(v1, g6, {X1: a, X2: n1})  # H(a)
    invalid = bad.as_proof(instance, atom("h", a))

    good = _SequenceBuilder(instance)
    v1, v2 = common(good)
    good.propagate(v2, 0, atom("g", a))
    v3 = good.nonfull(0, g1, {X1: a, X2: b})  # {B(a,n4), C(a,n4), E(a), G(a)}
    n4 = Null(4)
    good.full(v3, g6, {X1: a, X2: n4})  # H(a)
    good.propagate(v3, 0, atom("h", a))
    valid = good.as_proof(instance, atom("h", a))
    return invalid, valid


class TestChaseSteps:
    def test_nonfull_step_creates_child_with_guarded_copies(self):
        tgds = P(RUNNING_EXAMPLE)
        tree = ChaseTree.initial(I("a(a,b)."))
        tree = apply_chase_step(tree, 0, tgds[0], {Var("X1"): a, Var("X2"): b})
        child = tree.recently_updated
        assert tree.facts(child) == frozenset({atom("b", a, Null(1)), atom("c", a, Null(1))})

    def test_full_step_extends_vertex(self):
        tgds = P(RUNNING_EXAMPLE)
        tree = ChaseTree.initial(frozenset({atom("c", a, Null(7))}))
        tree = apply_chase_step(tree, 0, tgds[1], {Var("X1"): a, Var("X2"): Null(7)})
        assert atom("d", a, Null(7)) in tree.facts(0)

    def test_nonfull_pushes_guarded_parent_facts(self):
        tgds = P(RUNNING_EXAMPLE)
        tree = ChaseTree.initial(I("a(a,b). e(a). g(a)."))
        tree = apply_chase_step(tree, 0, tgds[0], {Var("X1"): a, Var("X2"): b})
        child = tree.recently_updated
        assert atom("e", a) in tree.facts(child)
        assert atom("g", a) in tree.facts(child)
        assert atom("a", a, b) not in tree.facts(child)

    def test_unmatched_body_rejected(self):
        tgds = P(RUNNING_EXAMPLE)
        tree = ChaseTree.initial(I("a(a,b)."))
        with pytest.raises(ChaseStepError):
            apply_chase_step(tree, 0, tgds[1], {Var("X1"): a, Var("X2"): b})

    def test_propagation_of_null_fact_rejected(self):
        tgds = P(RUNNING_EXAMPLE)
        tree = ChaseTree.initial(I("a(a,b)."))
        tree = apply_chase_step(tree, 0, tgds[0], {Var("X1"): a, Var("X2"): b})
        child = tree.recently_updated
        with pytest.raises(ChaseStepError):
            apply_propagation(tree, child, 0, atom("b", a, Null(1)))

    def test_propagation_of_present_fact_is_noop(self):
        tree = ChaseTree.initial(I("a(a,b)."))
        tgd = T("a(X1,X2) -> e(X1), f(X1,Y)")
        tree = apply_chase_step(tree, 0, tgd, {Var("X1"): a, Var("X2"): b})
        child = tree.recently_updated
        before = tree.facts(0)
        tree = apply_propagation(tree, child, 0, atom("e", a))
        tree2 = apply_propagation(tree, child, 0, atom("e", a))
        assert tree2.facts(0) == tree.facts(0) == before | {atom("e", a)}


class TestOnePass:
    def test_figure_one_sibling_propagation_flagged(self):
        invalid, _ = _figure_sequences()
        violation = validate_one_pass(invalid)
        assert violation is not None
        assert violation.step == 7
        assert "not parent-ward" in violation.reason

    def test_figure_two_repair_passes(self):
        _, valid = _figure_sequences()
        assert validate_one_pass(valid) is None

    def test_single_vertex_full_steps_ok(self):
        tgds = P("a(X,Z) -> e(X).\n e(X) -> p(X).")
        builder = _SequenceBuilder(I("a(a,b)."))
        builder.full(0, tgds[0], {Var("X"): a, Var("Z"): b})
        builder.full(0, tgds[1], {Var("X"): a})
        proof = builder.as_proof(I("a(a,b)."), atom("p", a))
        assert validate_one_pass(proof) is None

    def test_chase_step_blocked_by_applicable_propagation(self):
        # after E(a) appears in the child, a chase step there violates one-pass
        tgds = P(RUNNING_EXAMPLE)
        g1, g2, g3 = tgds[0], tgds[1], tgds[2]
        X1, X2 = Var("X1"), Var("X2")
        n1 = Null(1)
        builder = _SequenceBuilder(I("a(a,b)."))
        v1 = builder.nonfull(0, g1, {X1: a, X2: b})
        builder.full(v1, g2, {X1: a, X2: n1})
        builder.full(v1, g3, {X1: a, X2: n1})  # E(a), now propagatable
        builder.full(v1, g2, {X1: a, X2: n1})  # no-op-ish full step, still illegal
        proof = builder.as_proof(I("a(a,b)."), atom("e", a))
        violation = validate_one_pass(proof)
        assert violation is not None and violation.step == 4
        assert "propagated" in violation.reason

    def test_replay_rejects_broken_records(self):
        tgds = P(RUNNING_EXAMPLE)
        rec = ChaseStepRecord("full", 0, tgds[1], ((Var("X1"), a), (Var("X2"), b)))
        proof = ChaseProof(I("a(a,b)."), (rec,), atom("d", a))
        with pytest.raises(ChaseStepError):
            replay(proof)


class TestLoops:
    def test_figure_two_decomposes_into_three_root_loops(self):
        _, valid = _figure_sequences()
        loops = decompose_loops(valid)
        assert [(l.start, l.end, l.vertex, str(l.output)) for l in loops] == [
            (0, 4, 0, "e(a)"),
            (4, 7, 0, "g(a)"),
            (7, 10, 0, "h(a)"),
        ]
        assert [l.length for l in loops] == [4, 3, 3]

    def test_no_nonfull_steps_no_loops(self):
        tgds = P("a(X,Z) -> e(X).")
        builder = _SequenceBuilder(I("a(a,b)."))
        builder.full(0, tgds[0], {Var("X"): a, Var("Z"): b})
        proof = builder.as_proof(I("a(a,b)."), atom("e", a))
        assert decompose_loops(proof) == []


class TestDatalogFixpoint:
    def test_running_example_rewriting_fixpoint(self):
        # Datalog rules of the running example plus its three shortcut rules
        program = parse_datalog(
            """
            c(X1,X2) -> d(X1,X2).
            b(X1,X2), d(X1,X2) -> e(X1).
            e(X1), f(X1,X2) -> g(X1).
            b(X1,X2), g(X1) -> h(X1).
            a(X1,X2) -> e(X1).
            a(X1,X2), e(X1) -> g(X1).
            a(X1,X2), g(X1) -> h(X1).
            """
        )
        result = datalog_fixpoint(program, I("a(a,b)."))
        assert result == I("a(a,b). e(a). g(a). h(a).")

    def test_empty_program(self):
        facts = I("a(a,b). e(b).")
        assert datalog_fixpoint([], facts) == facts

    def test_constants_in_rules(self):
        program = parse_datalog("p(X, a) -> q(X).")
        assert datalog_fixpoint(program, I("p(b,a). p(b,b).")) == I("p(b,a). p(b,b). q(b).")

    def test_seminaive_equals_naive_on_random_programs(self):
        rng = random.Random(41)
        for _ in range(200):
            tgds = [t for t in random_program(rng, max_tgds=6) if t.is_full]
            program = rules_from_tgds(head_normalize_all(tgds))
            if not program:
                continue
            instance = random_instance(rng, tgds)
            assert datalog_fixpoint(program, instance) == datalog_fixpoint_naive(program, instance)

    def test_monotone_and_idempotent(self):
        rng = random.Random(43)
        for _ in range(100):
            tgds = [t for t in random_program(rng, max_tgds=5) if t.is_full]
            program = rules_from_tgds(head_normalize_all(tgds))
            if not program:
                continue
            instance = random_instance(rng, tgds)
            out = datalog_fixpoint(program, instance)
            assert instance <= out
            assert datalog_fixpoint(program, out) == out
            smaller = datalog_fixpoint(program[:-1], instance)
            assert smaller <= out


class TestEntailment:
    def test_running_example_base_facts(self):
        facts = entailed_base_facts(I("a(a,b)."), P(RUNNING_EXAMPLE), ChaseBounds(max_depth=2))
        assert facts == I("a(a,b). e(a). g(a). h(a).")

    def test_depth_zero_only_full_consequences(self):
        tgds = P("a(X,Z) -> e(X).\n a(X1,X2) -> b(X1,Y), c(X1,Y).\n b(X1,X2) -> p(X1).")
        facts = entailed_base_facts(I("a(a,b)."), tgds, ChaseBounds(max_depth=0))
        assert facts == I("a(a,b). e(a).")

    def test_full_rules_only_equals_fixpoint(self):
        rng = random.Random(47)
        for _ in range(50):
            tgds = [t for t in random_program(rng, max_tgds=5) if t.is_full]
            if not tgds:
                continue
            program = rules_from_tgds(head_normalize_all(tgds))
            instance = random_instance(rng, tgds)
            chase_result = entailed_base_facts(instance, tgds, ChaseBounds(max_depth=2))
            assert chase_result == datalog_fixpoint(program, instance)

    def test_monotone_in_depth(self):
        rng = random.Random(53)
        for _ in range(40):
            tgds = random_program(rng, max_tgds=5)
            instance = random_instance(rng, tgds)
            previous = frozenset()
            for depth in range(3):
                now = entailed_base_facts(instance, tgds, ChaseBounds(max_depth=depth))
                assert previous <= now
                previous = now


class TestProofSearch:
    def test_running_example_proof_of_h(self):
        tgds = P(RUNNING_EXAMPLE)
        proof = find_one_pass_proof(I("a(a,b)."), tgds, atom("h", a), ChaseBounds(max_depth=2))
        assert proof is not None
        assert validate_one_pass(proof) is None
        trees = replay(proof)
        assert any(atom("h", a) in trees[-1].facts(v) for v in trees[-1].vertices)

    def test_fact_already_present_gives_empty_proof(self):
        tgds = P(RUNNING_EXAMPLE)
        proof = find_one_pass_proof(I("a(a,b)."), tgds, atom("a", a, b))
        assert proof is not None and proof.steps == ()

    def test_cim_equipment_proof(self):
        tgds = P(CIM_EXAMPLE)
        facts = I(CIM_FACTS)
        for const in ("sw1", "sw2"):
            proof = find_one_pass_proof(facts, tgds, atom("equipment", Const(const)))
            assert proof is not None
            assert validate_one_pass(proof) is None

    def test_unprovable_fact_returns_none(self):
        tgds = P(RUNNING_EXAMPLE)
        assert find_one_pass_proof(I("a(a,b)."), tgds, atom("e", b), ChaseBounds(max_depth=2)) is None

    def test_found_proofs_validate_on_random_inputs(self):
        rng = random.Random(59)
        bounds = ChaseBounds(max_depth=2, max_steps=20_000)
        for _ in range(30):
            tgds = random_program(rng, max_tgds=5, max_relations=4)
            instance = random_instance(rng, tgds, max_facts=4)
            for fact in sorted(entailed_base_facts(instance, tgds, bounds), key=str):
                proof = find_one_pass_proof(instance, tgds, fact, bounds)
                assert proof is not None, f"{fact} entailed but no proof found"
                assert validate_one_pass(proof) is None
                trees = replay(proof)
                assert any(fact in trees[-1].facts(v) for v in trees[-1].vertices)
                decompose_loops(proof)  # loop-shape assertions run inside


class TestGuardPreservation:
    def test_guarded_sets_stay_guarded_backwards(self):
        # terms guarded at a vertex later are guarded there in every earlier tree
        rng = random.Random(61)
        for _ in range(25):
            tgds = random_program(rng, max_tgds=4, max_relations=4)
            instance = random_instance(rng, tgds, max_facts=4)
            facts = sorted(entailed_base_facts(instance, tgds, ChaseBounds(max_depth=2)), key=str)
            if not facts:
                continue
            proof = find_one_pass_proof(instance, tgds, facts[-1], ChaseBounds(max_depth=2))
            if proof is None:
                continue
            trees = replay(proof)
            from gtsat.deps import sigma_guarded
            from gtsat.terms import atom_terms

            for i, tree in enumerate(trees):
                for v in tree.vertices:
                    terms = sorted(
                        {t for f in tree.facts(v) for t in atom_terms(f)}, key=str
                    )
                    for t in terms:
                        if sigma_guarded([t], tree.facts(v), tree.sigma_consts):
                            for j in range(i):
                                if v in trees[j].vertices:
                                    assert sigma_guarded(
                                        [t], trees[j].facts(v), tree.sigma_consts
                                    )

from __future__ import annotations

import random

import pytest

from tamc import corpus
from tamc.checker import check_safety
from tamc.gen import GenConfig, gen_network, horizon_of, perturb
from tamc.oracle import bounded_simulates, replay
from tamc.rules import RuleApplication
from tamc.syntax import parse_plan, write_report
from tamc.tree import Plan, TreeError, annotate, auto_plan, build_tree, refine_node, traverse_bfs

CASE_NODES = ["Pedestrian0_1", "Pedestrian0_2", "Pedestrian1_1", "Pedestrian1_2",
              "Pedestrian2_1", "Pedestrian3_1"]


@pytest.fixture(scope="module")
def tree():
    return corpus.crossing_tree()


@pytest.fixture(scope="module")
def report(tree):
    return traverse_bfs(tree, corpus.faulty_car(), corpus.collision())


def test_case_study_tree_shape(tree):
    assert sorted(tree.nodes) == CASE_NODES
    assert tree.root == "Pedestrian3_1" and tree.abstract == "P"
    assert tree.node("Pedestrian3_1").children == ("Pedestrian1_1", "Pedestrian2_1")
    assert tree.node("Pedestrian2_1").children == ("Pedestrian1_2",)
    assert sorted(tree.leaves()) == ["Pedestrian0_1", "Pedestrian0_2"]
    assert tree.parents("Pedestrian1_2") == ["Pedestrian2_1"]


def test_single_base_is_a_single_node_tree():
    plan = parse_plan("abstract P\nonly = base(pedestrian0_2.ta)")
    t = build_tree(corpus.load_bases(plan), plan)
    assert t.root == "only" and list(t.nodes) == ["only"]


def test_merging_different_structures_fails_at_its_step():
    plan = parse_plan("a = base(pedestrian0_1.ta)\nb = base(pedestrian0_2.ta)\nm = r2(a, b)")
    with pytest.raises(TreeError, match="step 3"):
        build_tree(corpus.load_bases(plan), plan)


def test_two_roots_rejected():
    plan = parse_plan("a = base(pedestrian0_1.ta)\nb = base(pedestrian0_2.ta)")
    with pytest.raises(TreeError, match="exactly one root"):
        build_tree(corpus.load_bases(plan), plan)


def test_bases_must_agree_outside_the_abstracted_automaton():
    plan = parse_plan("a = base(pedestrian0_1.ta)\nb = base(pedestrian0_2.ta)\nm = r1(a)\n")
    bases = corpus.load_bases(plan)
    bases["b"] = bases["b"].compose(corpus.faulty_car())
    plan = Plan(plan.steps[:2] + (RuleApplication("r2", ("a", "b"), "m"),), "P")
    with pytest.raises(TreeError, match="other than P"):
        build_tree(bases, plan)


def test_case_study_traversal(report):
    assert list(report.visited) == ["Pedestrian3_1", "Pedestrian1_1", "Pedestrian2_1",
                                    "Pedestrian0_1", "Pedestrian1_2", "Pedestrian0_2"]
    assert {n: report.status(n) for n in report.visited} == {
        n: ("satisfied" if n == "Pedestrian0_2" else "violated") for n in CASE_NODES}
    assert [n for n, _ in report.counterexamples] == ["Pedestrian0_1", "Pedestrian1_2"]
    assert not report.satisfied and report.skipped == ()


def test_counterexamples_replay_on_their_nodes(tree, report):
    car = corpus.faulty_car()
    for nid, cex in report.counterexamples:
        assert cex.node == nid
        final = replay(tree.node(nid).model.compose(car), cex.witness).final
        assert "Crossing" in final.locations


def test_correct_controller_stops_at_root(tree):
    r = traverse_bfs(tree, corpus.model("safecar.ta"), corpus.collision())
    assert r.satisfied and r.visited == ("Pedestrian3_1",)
    assert r.counterexamples == () and len(r.skipped) == 5


def test_single_violated_node_returns_its_counterexample():
    plan = parse_plan("abstract P\nonly = base(pedestrian0_1.ta)")
    t = build_tree(corpus.load_bases(plan), plan)
    r = traverse_bfs(t, corpus.faulty_car(), corpus.collision())
    assert [n for n, _ in r.counterexamples] == ["only"]


def test_pruning_is_sound_on_the_corpus(tree):
    for system in (corpus.faulty_car(), corpus.model("safecar.ta")):
        pruned = traverse_bfs(tree, system, corpus.collision(), force_all=True)
        for nid in tree.nodes:
            direct = check_safety(tree.node(nid).model.compose(system), corpus.collision())
            assert pruned.status(nid) == direct.status
        assert all(v.satisfied for v in pruned.forced.values())


def test_parallel_traversal_matches_sequential(tree, report):
    par = traverse_bfs(tree, corpus.faulty_car(), corpus.collision(), jobs=2)
    assert write_report(par, "json") == write_report(report, "json")


def test_parents_simulate_children(tree):
    for nid, node in tree.nodes.items():
        for c in node.children:
            child = tree.node(c).model
            assert bounded_simulates(node.model, child, horizon_of(node.model, child)), (nid, c)


def test_refine_case_study(tree, report):
    props = refine_node(annotate(tree, report), "Pedestrian1_2")
    assert [p.id for p in props] == ["Pedestrian1_2_sub1", "Pedestrian1_2_sub2"]
    assert [p.intervals for p in props] == [(("P.Crossing->Idle#0", "t", 0, 0),),
                                            (("P.Crossing->Idle#0", "t", 5, 10),)]
    car = corpus.faulty_car()
    assert check_safety(props[0].model.compose(car), corpus.collision()).satisfied
    v = check_safety(props[1].model.compose(car), corpus.collision())
    assert not v.satisfied
    assert corpus.green_green_switch(props[1].model.compose(car), v.counterexample)


def test_refine_leaf_is_an_error(tree):
    with pytest.raises(TreeError, match="leaf"):
        refine_node(tree, "Pedestrian0_1")


def test_refine_without_satisfied_children(tree, report):
    with pytest.raises(TreeError, match="no satisfied child"):
        refine_node(annotate(tree, report), "Pedestrian3_1")


def test_refine_does_not_mutate(tree, report):
    annotated = annotate(tree, report)
    before = {nid: n.model for nid, n in annotated.nodes.items()}
    refine_node(annotated, "Pedestrian1_2")
    assert {nid: n.model for nid, n in annotated.nodes.items()} == before
    assert tree.node("Pedestrian1_2").verdict is None


def test_refine_tiled_node_proposes_nothing():
    plan = parse_plan("abstract P\na = base(pedestrian0_2.ta)\nb = r1(a)")
    t = build_tree(corpus.load_bases(plan), plan)
    assert refine_node(t, "b") == []


def test_auto_plan_on_generated_bases():
    rng = random.Random(3)
    n = gen_network(GenConfig(seed=3), rng, want_r3=True)
    env = n.replace_automaton(n.automaton("A"))
    bases = {"b1": env, "b2": env.replace_automaton(perturb(rng, env.automaton("A"), 4))}
    plan = auto_plan(bases, "A", 1, 1)
    t = build_tree(bases, plan)
    assert set(t.leaves()) == {"b1", "b2"}
    for nid, node in t.nodes.items():
        for c in node.children:
            child = t.node(c).model
            assert bounded_simulates(node.model, child, horizon_of(node.model, child))

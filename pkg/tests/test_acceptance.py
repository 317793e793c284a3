"""Acceptance criteria 1-9.

Each test prints one ``[criterion N] PASS|FAIL`` line; run with ``-s`` or
look at the captured output to see them.
"""

from __future__ import annotations

import contextlib
import random
import subprocess
import sys
import time

import pytest

from tamc import corpus
from tamc.checker import check_safety
from tamc.dbm import includes
from tamc.gen import GenConfig, gen_network, theorem_suite
from tamc.model import enabled_interval
from tamc.oracle import bounded_reachable, replay
from tamc.rules import apply_r2, subtract_models
from tamc.tree import traverse_bfs

import zone_oracle as zo
from test_checker import _random_property
from test_dbm import random_zone

CROSS = "P.Crossing->Idle#0"


@contextlib.contextmanager
def criterion(num, title):
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        print(f"\n[criterion {num}] FAIL {title}: {exc!s:.200}", file=sys.__stdout__)
        raise
    print(f"\n[criterion {num}] PASS {title} ({time.perf_counter() - start:.1f}s)",
          file=sys.__stdout__)


@pytest.fixture(scope="module")
def tree():
    return corpus.crossing_tree()


@pytest.fixture(scope="module")
def car():
    return corpus.faulty_car()


@pytest.fixture(scope="module")
def report(tree, car):
    return traverse_bfs(tree, car, corpus.collision())


def test_criterion_1_case_study_traversal(tree, car):
    with criterion(1, "case-study traversal"):
        start = time.perf_counter()
        r = traverse_bfs(tree, car, corpus.collision())
        assert set(r.visited) == {"Pedestrian3_1", "Pedestrian1_1", "Pedestrian2_1",
                                  "Pedestrian0_1", "Pedestrian1_2", "Pedestrian0_2"}
        assert {n for n, _ in r.counterexamples} == {"Pedestrian0_1", "Pedestrian1_2"}
        assert r.status("Pedestrian0_2") == "satisfied"
        assert r.status("Pedestrian3_1") == "violated"
        assert time.perf_counter() - start < 5


def test_criterion_2_counterexample_mechanisms(tree, car, report):
    with criterion(2, "counter-example mechanisms"):
        ces = dict(report.counterexamples)
        n01 = tree.node("Pedestrian0_1").model.compose(car)
        n12 = tree.node("Pedestrian1_2").model.compose(car)
        replay(n01, ces["Pedestrian0_1"].witness)
        replay(n12, ces["Pedestrian1_2"].witness)
        assert corpus.red_light_crossing(n01, ces["Pedestrian0_1"])
        assert corpus.green_green_switch(n12, ces["Pedestrian1_2"])


def test_criterion_3_refinement(tree, car):
    with criterion(3, "refinement by subtraction"):
        out = subtract_models(tree.automaton("Pedestrian1_2"), [tree.automaton("Pedestrian0_2")])
        hits = [m for m in out if enabled_interval(m.automaton, CROSS)["t"] == (5, 10)]
        assert len(hits) == 1
        n = tree.node("Pedestrian1_2").model.replace_automaton(hits[0].automaton).compose(car)
        v = check_safety(n, corpus.collision())
        assert not v.satisfied
        assert corpus.green_green_switch(n, v.counterexample)


def test_criterion_4_rule_widening(tree):
    with criterion(4, "rule widening intervals"):
        assert enabled_interval(tree.automaton("Pedestrian1_1"), CROSS)["t"] == (1, 15)
        assert enabled_interval(tree.automaton("Pedestrian1_2"), CROSS)["t"] == (0, 10)
        merged = apply_r2(tree.automaton("Pedestrian1_1"), tree.automaton("Pedestrian2_1"))
        assert enabled_interval(merged, CROSS)["t"] == (0, 15)
        assert enabled_interval(tree.automaton("Pedestrian3_1"), CROSS)["t"] == (0, 15)


def test_criterion_5_theorem_suite():
    with criterion(5, "rule soundness suite, 500 trials per rule"):
        s = theorem_suite(GenConfig(seed=0), trials=500)
        for line in s.lines():
            print(f"    {line}", file=sys.__stdout__)
        assert s.trials == {"r1": 500, "r2": 500, "r3": 500}
        assert s.failures == [], str(s.failures[0])
        assert s.mutation_failures >= 1
        assert s.seconds < 600


def test_criterion_6_checker_matches_oracle(tree):
    with criterion(6, "checker vs brute-force reachability"):
        prop = corpus.collision()
        cases = [("casestudy", corpus.model("casestudy.ta"), prop)]
        for system in ("car.ta", "safecar.ta"):
            for nid in tree.nodes:
                cases.append((f"{nid}|{system}",
                              tree.node(nid).model.compose(corpus.model(system)), prop))
        for seed in range(200):
            rng = random.Random(seed)
            n = gen_network(GenConfig(seed=seed, max_constant=8, max_locations=4, max_edges=8,
                                    mixed=True, connected=True), rng)
            cases.append((f"generated {seed}", n, _random_property(rng, n)))
        bad = []
        for name, n, p in cases:
            if check_safety(n, p).satisfied == bounded_reachable(n, p.forbidden):
                bad.append(name)
        assert bad == [], bad


def test_criterion_7_dbm_algebra():
    with criterion(7, "DBM algebra vs enumeration oracle"):
        bad = [p for s in range(1000) for p in zo.random_sequence(random.Random(s))]
        assert bad == [], bad[:3]
        for s in range(300):
            n = random.Random(s).randint(1, 3)
            x, y, z = (random_zone(s * 3 + k, n) for k in range(3))
            assert includes(x, x)
            if includes(x, y) and includes(y, x):
                assert x == y
            if includes(x, y) and includes(y, z):
                assert includes(x, z)


def test_criterion_8_pruning_soundness(tree):
    with criterion(8, "pruning soundness"):
        for system in (corpus.faulty_car(), corpus.model("safecar.ta")):
            pruned = traverse_bfs(tree, system, corpus.collision(), force_all=True)
            for nid in tree.nodes:
                direct = check_safety(tree.node(nid).model.compose(system), corpus.collision())
                if nid in pruned.verdicts:
                    assert pruned.verdicts[nid].status == direct.status, nid
                else:
                    assert direct.satisfied and pruned.forced[nid].satisfied, nid


def test_criterion_9_determinism(tmp_path):
    with criterion(9, "byte-identical reports"):
        cdir = corpus.corpus_dir()
        tree_file = tmp_path / "tree.json"
        subprocess.run([sys.executable, "-m", "tamc", "tree", "build", str(cdir / "crossing.plan"),
                        "-o", str(tree_file)], check=True)
        outputs = []
        for k in range(2):
            t = tmp_path / f"traverse{k}.json"
            c = tmp_path / f"check{k}.json"
            subprocess.run([sys.executable, "-m", "tamc", "tree", "traverse", str(tree_file),
                            str(cdir / "car.ta"), str(cdir / "collision.prop"), "--report", str(t)],
                           capture_output=True)
            subprocess.run([sys.executable, "-m", "tamc", "check", str(cdir / "casestudy.ta"),
                            str(cdir / "collision.prop"), "--report", str(c)], capture_output=True)
            outputs.append((t.read_bytes(), c.read_bytes()))
        assert outputs[0] == outputs[1]
        assert outputs[0][0] and outputs[0][1]

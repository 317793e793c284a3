from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from tamc import corpus
from tamc.checker import (ResourceError, SafetyProperty, WitnessStep, check_safety,
                          concretize_trace, extract_timed_word)
from tamc.gen import GenConfig, gen_network
from tamc.model import ModelError
from tamc.oracle import bounded_reachable, replay

from conftest import speaker_translator


def prop(*pairs):
    return SafetyProperty(tuple(p.split(".") for p in pairs))


def test_initial_state_forbidden(st):
    v = check_safety(st, prop("Speaker.L0"))
    assert not v.satisfied
    assert v.counterexample.witness == ()


def test_translator_reaches_sent_after_five(st):
    v = check_safety(st, prop("Translator.Sent"))
    w = v.counterexample.witness
    assert [(s.delay, s.channel) for s in w] == [(5, "a1")]
    assert replay(st, w).final.locations == ("L0", "Sent")


def test_rule_compliant_pedestrian_is_safe():
    n = corpus.model("pedestrian0_2.ta").compose(corpus.faulty_car())
    v = check_safety(n, corpus.collision())
    assert v.satisfied and v.counterexample is None
    assert v.statistics.states_explored > 0


def test_widened_pedestrian_crosses_longer_than_four():
    n = corpus.crossing_tree().node("Pedestrian1_2").model.compose(corpus.faulty_car())
    cex = check_safety(n, corpus.collision()).counterexample
    states = replay(n, cex.witness).states
    times = [Fraction(0)]
    for s in cex.witness:
        times.append(times[-1] + s.delay)
    p = n.index_of("P")
    entered = next(t for t, s in zip(times, states) if s.locations[p] == "Crossing")
    assert times[-1] - entered > 4


def test_concretize_matches_witness(st):
    cex = check_safety(st, prop("Translator.Sent")).counterexample
    assert tuple(concretize_trace(cex.symbolic)) == tuple(cex.witness)


def test_all_zero_delays_when_none_needed():
    n = corpus.model("pedestrian0_1.ta").compose(corpus.faulty_car())
    cex = check_safety(n, prop("C.Crossing")).counterexample
    assert [s.delay for s in cex.witness] == [0]


def test_unknown_location_in_property(st):
    with pytest.raises(ModelError, match="Translator.Nowhere"):
        check_safety(st, prop("Translator.Nowhere"))


def test_state_cap():
    n = corpus.model("pedestrian0_2.ta").compose(corpus.faulty_car())
    with pytest.raises(ResourceError, match="3"):
        check_safety(n, corpus.collision(), max_states=3)


def test_state_cap_from_environment(monkeypatch):
    monkeypatch.setenv("TAMC_MAX_STATES", "3")
    n = corpus.model("pedestrian0_2.ta").compose(corpus.faulty_car())
    with pytest.raises(ResourceError):
        check_safety(n, corpus.collision())


def test_timed_word_examples():
    w = (WitnessStep(Fraction(5), ("Speaker.L0->L0#0",), "a1"),)
    word = extract_timed_word(w, ("a1",))
    assert word.sigma == ((1,),) and word.tau == (5,)
    assert len(extract_timed_word(w, ())) == 0
    both = w + (WitnessStep(Fraction(0), ("Translator.Sent->Idle#0",), "a2"),)
    word = extract_timed_word(both, ("a1", "a2"))
    assert word.sigma == ((1, 1),) and word.tau == (5,)


def test_counterexample_word_is_projection():
    n = speaker_translator(observable=("a1", "a2"))
    cex = check_safety(n, prop("Translator.Sent", "Speaker.L0")).counterexample
    assert cex.word == extract_timed_word(cex.witness, n.observable_channels())


def test_checking_is_deterministic():
    n = corpus.model("casestudy.ta")
    a = check_safety(n, corpus.collision())
    b = check_safety(n, corpus.collision())
    assert a.counterexample.witness == b.counterexample.witness
    assert a.statistics.states_explored == b.statistics.states_explored


def _pick_location(rng, a):
    # avoid the initial location when possible so the check has to explore
    names = [l for l in a.location_names() if l != a.initial] or a.location_names()
    return rng.choice(names)


def _random_property(rng, n):
    a = n.automata[rng.randrange(len(n.automata))]
    pairs = [(a.name, _pick_location(rng, a))]
    if rng.random() < 0.5:
        b = n.automata[1 - n.index_of(a.name)]
        pairs.append((b.name, _pick_location(rng, b)))
    return SafetyProperty(tuple(pairs))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6), st.booleans())
def test_agrees_with_brute_force(seed, mixed):
    rng = random.Random(seed)
    n = gen_network(GenConfig(seed=seed, mixed=mixed, connected=True), rng)
    p = _random_property(rng, n)
    v = check_safety(n, p)
    assert v.satisfied == (not bounded_reachable(n, p.forbidden))
    if not v.satisfied:
        final = replay(n, v.counterexample.witness).final
        assert all(final.locations[n.index_of(a)] == l for a, l in p.forbidden)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_options_do_not_change_verdicts(seed):
    rng = random.Random(seed)
    n = gen_network(GenConfig(seed=seed, mixed=True), rng)
    p = _random_property(rng, n)
    base = check_safety(n, p).satisfied
    assert check_safety(n, p, subsumption=False).satisfied == base
    try:
        plain = check_safety(n, p, extrapolation=False, max_states=1000)
    except ResourceError:
        return      # without extrapolation the zone graph may be infinite
    assert plain.satisfied == base


def test_extrapolation_keeps_corpus_violations():
    tree = corpus.crossing_tree()
    for nid in ("Pedestrian0_1", "Pedestrian1_2", "Pedestrian3_1"):
        n = tree.node(nid).model.compose(corpus.faulty_car())
        assert not check_safety(n, corpus.collision(), extrapolation=False, max_states=5000).satisfied

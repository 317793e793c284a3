from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from tamc.checker import ResourceError, TimedWord
from tamc.gen import GenConfig, gen_network
from tamc.oracle import (DELAY, ReplayError, State, bounded_inclusion, bounded_language,
                         bounded_reachable, bounded_simulates, discrete_successors, initial_state,
                         replay)

from conftest import speaker, speaker_translator

F = Fraction


def word(*events, channels=("a1",)):
    return TimedWord(tuple((1,) for _ in events), tuple(F(t) for t in events), channels)


def test_speaker_at_five_can_delay_or_fire(spk):
    succ = discrete_successors(spk, State(("L0",), (F(5),)))
    assert (DELAY, State(("L0",), (F(6),))) in succ
    fired = [(lab, s) for lab, s in succ if lab != DELAY]
    assert len(fired) == 1
    lab, s = fired[0]
    assert lab.channel == "a1" and lab.observable and s == State(("L0",), (F(0),))


def test_speaker_at_ten_cannot_delay(spk):
    succ = discrete_successors(spk, State(("L0",), (F(10),)))
    assert [lab.channel for lab, _ in succ] == ["a1"]


def test_binary_sync_moves_the_translator(st):
    succ = discrete_successors(st, State(("L0", "Idle"), (F(5), F(5))))
    fired = [(lab, s) for lab, s in succ if lab != DELAY]
    assert len(fired) == 1
    lab, s = fired[0]
    assert lab.edges == ("Speaker.L0->L0#0", "Translator.Idle->Sent#0")
    assert s.locations == ("L0", "Sent") and s.valuation == (F(0), F(0))


def test_speaker_language():
    lang = bounded_language(speaker(), 10)
    want = {word()} | {word(t) for t in range(5, 11)} | {word(5, 10)}
    assert set(lang.words) == want


def test_no_observable_channels_gives_only_the_empty_word(st):
    lang = bounded_language(st, 20)
    assert set(lang.words) == {TimedWord((), (), ())}


def test_unobservable_sync_triggers_observable_broadcast_at_once():
    n = speaker_translator(observable=("a2",))
    lang = bounded_language(n, 10)
    assert word(5, channels=("a2",)) in lang
    assert word(4, channels=("a2",)) not in lang


def test_inclusion_reflexive(spk):
    assert bounded_inclusion(spk, spk, 12) == (True, None)


def test_widened_speaker_includes_original():
    assert bounded_inclusion(speaker(5, 10), speaker(3, 13), 26)[0]


def test_original_speaker_misses_early_word():
    ok, w = bounded_inclusion(speaker(3, 13), speaker(5, 10), 26)
    assert not ok and w == word(3)


def test_simulation_examples():
    assert bounded_simulates(speaker(), speaker(), 20)
    assert bounded_simulates(speaker(3, 13), speaker(5, 10), 26)
    assert not bounded_simulates(speaker(6, 9), speaker(5, 10), 20)


def test_inclusion_requires_same_alphabet():
    with pytest.raises(Exception, match="observable"):
        bounded_inclusion(speaker(), speaker_translator(), 10)


def test_language_cap_is_enforced(spk):
    with pytest.raises(ResourceError):
        bounded_language(spk, 30, F(1, 4), cap=20)


def test_replay_examples(spk):
    res = replay(spk, [(5, ["Speaker.L0->L0#0"])])
    assert res.final == State(("L0",), (F(0),)) and res.time == 5
    with pytest.raises(ReplayError) as e:
        replay(spk, [(4, ["Speaker.L0->L0#0"])])
    assert e.value.step == 1 and "t>=5" in str(e.value)
    with pytest.raises(ReplayError) as e:
        replay(spk, [(11, [])])
    assert e.value.step == 1 and "t<=10" in str(e.value)


def test_replay_rejects_missing_receiver(st):
    with pytest.raises(ReplayError, match="step 1"):
        replay(st, [(5, ["Speaker.L0->L0#0"])])


def test_bounded_reachable(st):
    assert bounded_reachable(st, [("Translator", "Sent")])
    assert bounded_reachable(st, [("Translator", "Sent")], horizon=5)
    assert not bounded_reachable(st, [("Translator", "Sent")], horizon=4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_languages_monotone_in_horizon_and_step(seed):
    n = gen_network(GenConfig(seed=seed), random.Random(seed))
    small = bounded_language(n, 4).words
    big = bounded_language(n, 6).words
    fine = bounded_language(n, 6, F(1, 2)).words
    assert small <= big <= fine


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_simulation_implies_inclusion(seed):
    rng = random.Random(seed)
    a = gen_network(GenConfig(seed=seed), rng)
    b = gen_network(GenConfig(seed=seed + 1), rng)
    if a.observable_channels() != b.observable_channels():
        return
    if bounded_simulates(b, a, 6):
        assert bounded_inclusion(a, b, 6)[0]
    assert bounded_simulates(a, a, 6)


def test_initial_state_is_origin(st):
    assert initial_state(st) == State(("L0", "Idle"), (F(0), F(0)))


def test_identity_shortcut_agrees_with_fixpoint():
    from tamc.gen import _instance, horizon_of
    pairs = [(speaker(3, 13), speaker(5, 10)), (speaker(6, 9), speaker(5, 10)),
             (speaker(5, 10), speaker(3, 13))]
    for rule in ("r1", "r2", "r3", "mut"):
        for seed in range(25):
            inputs, out = _instance(rule, seed, GenConfig())
            pairs += [(out, i) for i in inputs] + [(i, out) for i in inputs]
    verdicts = set()
    for big, small in pairs:
        h = horizon_of(big, small)
        try:
            slow = bounded_simulates(big, small, h, identity_first=False, cap=200_000)
        except ResourceError:
            continue
        assert bounded_simulates(big, small, h) == slow
        verdicts.add(slow)
    assert verdicts == {True, False}

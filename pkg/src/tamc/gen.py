"""Random paper-shape networks and the rule soundness suite.

Every trial is a pure function of ``(rule, seed, cfg)``: a failure report
carries the seed and the models, and :func:`run_trial` reproduces it.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .model import (BINARY, BROADCAST, GE, INTERNAL, LE, RECEIVE, SEND, Action, Automaton,
                    ClockAtom, Edge, Location, Network, check_applicability, max_constants,
                    normalize_automaton, validate_network)
from .oracle import bounded_inclusion, bounded_simulates, discrete_successors, initial_state
from .rules import DeltaVector, _shift, apply_r1, apply_r2, apply_r3, r3_eligible

RETRIES = 200


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    max_locations: int = 3
    max_clocks: int = 2
    max_constant: int = 4
    max_edges: int = 5
    channels: int = 2
    mixed: bool = False     # allow any atom shape (system-style automata)
    connected: bool = False  # every location gets an edge from an earlier one

    def __post_init__(self):
        if not (1 <= self.max_locations <= 5 and 1 <= self.max_clocks <= 2
                and 1 <= self.max_constant <= 8 and 1 <= self.max_edges <= 8
                and 0 <= self.channels <= 3):
            raise ValueError(f"generator caps out of range: {self}")


CLOCKS = ("x", "y")


def _bound(rng, k, lo=0):
    return rng.randint(lo, k)


def _raw_automaton(rng: random.Random, cfg: GenConfig, name: str, channels) -> Automaton:
    nloc = rng.randint(1, cfg.max_locations)
    clocks = CLOCKS[:rng.randint(1, cfg.max_clocks)]
    k = cfg.max_constant
    locs = []
    for i in range(nloc):
        inv = []
        for c in clocks:
            if rng.random() < 0.5:
                # a lower bound on the initial location would empty the initial zone
                op = GE if cfg.mixed and i and rng.random() < 0.25 else LE
                inv.append(ClockAtom(c, op, _bound(rng, k, 1 if op == LE else 0)))
        locs.append(Location(f"l{i}", tuple(inv)))
    highs = [{at.clock: at.bound for at in loc.invariant if at.op == LE} for loc in locs]
    pairs = [(rng.randrange(i), i) for i in range(1, nloc)] if cfg.connected else []
    for _ in range(max(1, rng.randint(1, cfg.max_edges) - len(pairs))):
        pairs.append((rng.randrange(nloc), rng.randrange(nloc)))
    edges = []
    for s, t in pairs:
        r = rng.random()
        if channels and r < 0.3:
            ch, kind = rng.choice(channels)
            action = Action(SEND, ch)
        elif channels and r < 0.55:
            ch, kind = rng.choice(channels)
            action = Action(RECEIVE, ch)
        else:
            kind = None
            action = Action()
        guard = []
        if not (action.kind == RECEIVE and kind == BROADCAST):
            for c in clocks:
                if rng.random() < 0.5:
                    op = rng.choice((GE, LE)) if cfg.mixed else GE
                    b = _bound(rng, min(k, highs[s].get(c, k)), 1 if op == GE else 0)
                    guard.append(ClockAtom(c, op, b))
        resets = tuple(c for c in clocks if rng.random() < 0.4)
        edges.append(Edge(f"l{s}", f"l{t}", action, resets, tuple(guard)))
    a = Automaton(name, tuple(locs), "l0", clocks, tuple(edges))
    return normalize_automaton(a)[0]


def _live(n: Network) -> bool:
    """The initial state can delay or take a step."""
    try:
        return bool(discrete_successors(n, initial_state(n)))
    except ValueError:
        return False


def _channels(rng, cfg, want_r3):
    chans = []
    observable = set()
    for i in range(cfg.channels):
        name = f"c{i}"
        if i == 0 and want_r3:
            chans.append((name, BROADCAST))
            continue
        chans.append((name, rng.choice((BINARY, BROADCAST))))
        if rng.random() < 0.6:
            observable.add(name)
    return tuple(chans), frozenset(observable)


def gen_automaton(cfg: GenConfig, name: str = "A", channels=(), rng: random.Random | None = None) -> Automaton:
    """A valid automaton whose initial state is not deadlocked.

    ``channels`` is a sequence of ``(name, kind)`` pairs the edges may use.
    """
    rng = rng or random.Random(cfg.seed)
    chans = tuple(channels)
    for _ in range(RETRIES):
        a = _raw_automaton(rng, cfg, name, chans)
        n = Network((a,), chans)
        if cfg.mixed:
            ok = not any(d.is_error for d in validate_network(n))
        else:
            ok = check_applicability(n)[0] is not None
        if ok and _live(n):
            return a
    raise RuntimeError(f"no valid automaton after {RETRIES} attempts (seed {cfg.seed})")


def gen_network(cfg: GenConfig, rng: random.Random | None = None, want_r3: bool = False) -> Network:
    """Environment automaton ``A`` composed with a partner ``B`` (a system automaton)."""
    rng = rng or random.Random(cfg.seed)
    for _ in range(RETRIES):
        chans, obs = _channels(rng, cfg, want_r3)
        a = gen_automaton(cfg, "A", chans, rng)
        b = gen_automaton(replace(cfg, mixed=cfg.mixed), "B", chans, rng)
        n = Network((a, b), chans, obs, frozenset({"B"}))
        if want_r3 and "c0" not in r3_eligible(n, "A"):
            continue
        if _live(n):
            return n
    raise RuntimeError(f"no valid network after {RETRIES} attempts (seed {cfg.seed})")


def gen_deltas(rng: random.Random, a: Automaton, top: int = 3, positive: bool = False) -> DeltaVector:
    lo = 1 if positive else 0
    guard = tuple((addr, at.clock, rng.randint(lo, top))
                  for addr, e in zip(a.edge_addresses(), a.edges) for at in e.guard if at.op == GE)
    inv = tuple((a.name, loc.name, at.clock, rng.randint(lo, top))
                for loc in a.locations for at in loc.invariant if at.op == LE)
    return DeltaVector(guard, inv)


def perturb(rng: random.Random, a: Automaton, k: int) -> Automaton:
    """A same-structure sibling: fresh bounds for every paper-shape atom."""
    locs = []
    for loc in a.locations:
        locs.append(replace(loc, invariant=tuple(
            ClockAtom(at.clock, at.op, rng.randint(1, k)) for at in loc.invariant)))
    highs = {loc.name: {at.clock: at.bound for at in loc.invariant} for loc in locs}
    edges = []
    for e in a.edges:
        edges.append(replace(e, guard=tuple(
            ClockAtom(at.clock, at.op, rng.randint(1, min(k, highs[e.source].get(at.clock, k))))
            for at in e.guard)))
    return replace(a, locations=tuple(locs), edges=tuple(edges))


def horizon_of(*nets: Network) -> int:
    k = max([1] + [v for n in nets for v in max_constants(n).values()])
    return 2 * k


# ---------------------------------------------------------------------------
# the suite


@dataclass
class TrialFailure:
    rule: str
    seed: int
    check: str
    step: Fraction
    models: str
    witness: str = ""

    def __str__(self):
        w = f" witness {self.witness}" if self.witness else ""
        return f"{self.rule} seed {self.seed}: {self.check} failed at step {self.step}{w}\n{self.models}"


@dataclass
class SuiteSummary:
    trials: dict = field(default_factory=dict)      # rule -> trial count
    failures: list = field(default_factory=list)
    mutation_trials: int = 0
    mutation_failures: int = 0
    mutation_seed: int | None = None
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures and (self.mutation_trials == 0 or self.mutation_failures > 0)

    def lines(self) -> list[str]:
        out = []
        for rule, n in self.trials.items():
            bad = sum(1 for f in self.failures if f.rule == rule)
            out.append(f"{rule}: {n} trials, {bad} failures")
        if self.mutation_trials:
            out.append(f"r1 sign mutation: {self.mutation_failures} inclusion failures "
                       f"in {self.mutation_trials} trials"
                       + (f" (first at seed {self.mutation_seed})" if self.mutation_seed is not None else ""))
        return out


STEPS = (Fraction(1), Fraction(1, 2))


def trial_seed(base: int, rule: str, i: int) -> int:
    return base * 1_000_003 + {"r1": 0, "r2": 1, "r3": 2, "mut": 3}[rule] * 100_000 + i


def _dump(*nets) -> str:
    from .syntax import unparse_model
    return "\n".join(unparse_model(n) for n in nets)


def _instance(rule: str, seed: int, cfg: GenConfig):
    """``(inputs, output)`` networks for one trial of ``rule``."""
    rng = random.Random(seed)
    n = gen_network(replace(cfg, seed=seed), rng, want_r3=(rule == "r3"))
    a = n.automaton("A")
    if rule == "r1":
        return [n], n.replace_automaton(apply_r1(a, gen_deltas(rng, a)))
    if rule == "r2":
        n2 = n.replace_automaton(perturb(rng, a, cfg.max_constant))
        return [n, n2], n.replace_automaton(apply_r2(a, n2.automaton("A")))
    if rule == "r3":
        return [n], apply_r3(n, "c0", only={"A"})
    if rule == "mut":
        return [n], n.replace_automaton(_shift(a, gen_deltas(rng, a, positive=True), -1))
    raise ValueError(rule)


def run_trial(rule: str, seed: int, cfg: GenConfig = GenConfig(), steps=STEPS) -> list[TrialFailure]:
    """Check simulation and language inclusion of one rule application."""
    inputs, out = _instance(rule, seed, cfg)
    h = horizon_of(out, *inputs)
    failures = []
    for step in steps:
        for inp in inputs:
            if not bounded_simulates(out, inp, h, step):
                failures.append(TrialFailure(rule, seed, "simulation", step, _dump(inp, out)))
            ok, w = bounded_inclusion(inp, out, h, step)
            if not ok:
                failures.append(TrialFailure(rule, seed, "inclusion", step, _dump(inp, out), str(w)))
    return failures


def mutation_fails(seed: int, cfg: GenConfig = GenConfig()) -> bool:
    inputs, out = _instance("mut", seed, cfg)
    ok, _ = bounded_inclusion(inputs[0], out, horizon_of(out, *inputs), 1)
    return not ok


def theorem_suite(cfg: GenConfig = GenConfig(), trials: int = 500, rules=("r1", "r2", "r3"),
                  mutation: bool = True, progress=None) -> SuiteSummary:
    """Soundness of each rule on ``trials`` generated instances, plus the sign-mutation control.

    The mutation control stops at the first inclusion failure it finds.
    """
    start = time.perf_counter()
    summary = SuiteSummary()
    for rule in rules:
        for i in range(trials):
            summary.failures += run_trial(rule, trial_seed(cfg.seed, rule, i), cfg)
        summary.trials[rule] = trials
        if progress:
            progress(summary.lines()[-1])
    if mutation:
        for i in range(trials):
            summary.mutation_trials += 1
            seed = trial_seed(cfg.seed, "mut", i)
            if mutation_fails(seed, cfg):
                summary.mutation_failures += 1
                summary.mutation_seed = seed
                break
    summary.seconds = time.perf_counter() - start
    return summary

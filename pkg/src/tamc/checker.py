"""Forward zone-graph reachability for ``A[] not (P1.l1 and ... and Pk.lk)``.

Exploration is breadth-first with a FIFO waiting list; successors are
generated with automata and edges in declaration order, so the returned
counter-example is reproducible and has the fewest discrete steps.
"""

from __future__ import annotations

import itertools
import os
import time
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from . import dbm
from .model import (BINARY, BROADCAST, GE, INTERNAL, RECEIVE, SEND,
                    ModelError, Network, max_constants, validate_network)

DEFAULT_MAX_STATES = 10 ** 6


class ResourceError(Exception):
    """The configured state cap was exceeded."""

    def __init__(self, cap: int, what: str = "states"):
        super().__init__(f"state cap of {cap} {what} exceeded")
        self.cap = cap
        self.what = what

    def __reduce__(self):
        return type(self), (self.cap, self.what)


class InternalError(Exception):
    pass


def default_max_states() -> int:
    env = os.environ.get("TAMC_MAX_STATES")
    if env:
        try:
            return int(env)
        except ValueError:
            pass
    return DEFAULT_MAX_STATES


@dataclass(frozen=True)
class SafetyProperty:
    forbidden: tuple  # ((automaton, location), ...)

    def __post_init__(self):
        if not self.forbidden:
            raise ValueError("a safety property needs at least one predicate")

    def resolve(self, n: Network) -> list[tuple[int, str]]:
        out = []
        for aut, loc in self.forbidden:
            a = n.automaton(aut)
            if loc not in a.location_names():
                raise ModelError(f"property refers to unknown location {aut}.{loc}")
            out.append((n.index_of(aut), loc))
        return out

    def __str__(self):
        return "A[] not (" + " and ".join(f"{a}.{l}" for a, l in self.forbidden) + ")"


@dataclass(frozen=True)
class Transition:
    """One discrete step: the participating edges and the synchronising channel."""

    edges: tuple  # ((automaton index, edge index), ...) sender first
    channel: str | None = None


@dataclass(frozen=True)
class SymbolicTrace:
    network: Network
    locations: tuple  # tuple of location-name tuples, one per state
    zones: tuple
    transitions: tuple  # len(locations) - 1 Transition records


@dataclass(frozen=True)
class WitnessStep:
    delay: Fraction
    edges: tuple = ()  # edge addresses; empty for a pure delay
    channel: str | None = None


@dataclass(frozen=True)
class TimedWord:
    sigma: tuple = ()  # bit-vectors over the observable channels
    tau: tuple = ()    # strictly increasing timestamps
    channels: tuple = ()

    def __post_init__(self):
        if len(self.sigma) != len(self.tau):
            raise ValueError("sigma and tau must have the same length")
        for a, b in zip(self.tau, self.tau[1:]):
            if not a < b:
                raise ValueError("timestamps must increase strictly")
        for s in self.sigma:
            if not any(s):
                raise ValueError("empty observation in timed word")

    def __len__(self):
        return len(self.sigma)

    def __str__(self):
        if not self.sigma:
            return "<empty>"
        parts = []
        for s, t in zip(self.sigma, self.tau):
            names = [c for c, bit in zip(self.channels, s) if bit] if self.channels else [str(s)]
            parts.append(f"{'+'.join(names)}@{t}")
        return " ".join(parts)


@dataclass
class CounterExample:
    symbolic: SymbolicTrace
    witness: tuple
    word: TimedWord
    node: str | None = None


@dataclass
class Statistics:
    states_explored: int = 0
    states_stored: int = 0
    peak_waiting: int = 0
    wall_time: float = 0.0


@dataclass
class Verdict:
    satisfied: bool
    counterexample: CounterExample | None = None
    statistics: Statistics = field(default_factory=Statistics)

    @property
    def status(self) -> str:
        return "satisfied" if self.satisfied else "violated"


# ---------------------------------------------------------------------------
# compiled network


class CompiledNetwork:
    """Index-based view of a network used by the symbolic engine."""

    def __init__(self, n: Network):
        self.network = n
        self.clock_names = []
        self.clock_index = {}
        for a in n.automata:
            for c in a.clocks:
                self.clock_index[(a.name, c)] = len(self.clock_names) + 1
                self.clock_names.append(f"{a.name}.{c}")
        self.kinds = dict(n.channels)
        self.loc_names = [a.location_names() for a in n.automata]
        self.loc_index = [{name: i for i, name in enumerate(names)} for names in self.loc_names]
        self.addresses = [a.edge_addresses() for a in n.automata]
        self.initial = tuple(self.loc_index[i][a.initial] for i, a in enumerate(n.automata))
        self.invariants = []
        self.outgoing = []
        for ai, a in enumerate(n.automata):
            invs = [self._raw(a.name, loc.invariant) for loc in a.locations]
            self.invariants.append(invs)
            out = [[] for _ in a.locations]
            for ei, e in enumerate(a.edges):
                out[self.loc_index[ai][e.source]].append((
                    ei,
                    e.action.kind,
                    e.action.channel,
                    self._raw(a.name, e.guard),
                    tuple(self.clock_index[(a.name, c)] for c in e.resets),
                    self.loc_index[ai][e.target],
                ))
            self.outgoing.append(out)
        mc = max_constants(n)
        self.kmax = [mc[(a.name, c)] for a in n.automata for c in a.clocks]

    def _raw(self, aut, atoms):
        out = []
        for at in atoms:
            i = self.clock_index[(aut, at.clock)]
            if at.op == GE:
                out.append((0, i, dbm.pack(-at.bound)))
            else:
                out.append((i, 0, dbm.pack(at.bound)))
        return tuple(out)

    def names(self, locs) -> tuple:
        return tuple(self.loc_names[i][l] for i, l in enumerate(locs))

    def moves(self, locs):
        """Enabled-by-structure transitions from a location vector.

        Yields ``(parts, channel)`` where ``parts`` lists
        ``(automaton, edge tuple)`` with the initiating edge first.
        """
        n = len(locs)
        for ai in range(n):
            for edge in self.outgoing[ai][locs[ai]]:
                kind, ch = edge[1], edge[2]
                if kind == INTERNAL:
                    yield ((ai, edge),), None
                elif kind == SEND:
                    if self.kinds[ch] == BINARY:
                        for bj in range(n):
                            if bj == ai:
                                continue
                            for r in self.outgoing[bj][locs[bj]]:
                                if r[1] == RECEIVE and r[2] == ch:
                                    yield ((ai, edge), (bj, r)), ch
                    else:
                        options = []
                        for bj in range(n):
                            if bj == ai:
                                continue
                            rs = [(bj, r) for r in self.outgoing[bj][locs[bj]]
                                  if r[1] == RECEIVE and r[2] == ch]
                            if rs:
                                options.append(rs)
                        for combo in itertools.product(*options):
                            yield ((ai, edge),) + combo, ch

    def invariant_zone(self, z, locs):
        for ai, li in enumerate(locs):
            for i, j, raw in self.invariants[ai][li]:
                z = dbm.constrain_raw(z, i, j, raw)
                if z.empty:
                    return z
        return z

    def fire(self, z, locs, parts):
        """Discrete successor zone (before delay) and target location vector."""
        for _, edge in parts:
            for i, j, raw in edge[3]:
                z = dbm.constrain_raw(z, i, j, raw)
                if z.empty:
                    return z, locs
        resets = [c for _, edge in parts for c in edge[4]]
        z = dbm.reset(z, resets)
        new = list(locs)
        for ai, edge in parts:
            new[ai] = edge[5]
        new = tuple(new)
        return self.invariant_zone(z, new), new

    def initial_zone(self):
        z = dbm.DBM.zero(self.clock_names)
        z = self.invariant_zone(z, self.initial)
        if z.empty:
            return z
        return self.invariant_zone(dbm.delay_up(z), self.initial)

    def transition_record(self, parts, ch) -> Transition:
        return Transition(tuple((ai, edge[0]) for ai, edge in parts), ch)


# ---------------------------------------------------------------------------
# exploration


def check_safety(n: Network, prop: SafetyProperty, max_states: int | None = None,
                 subsumption: bool = True, extrapolation: bool = True) -> Verdict:
    """Decide whether the forbidden location combination is unreachable."""
    errors = [d for d in validate_network(n) if d.is_error]
    if errors:
        raise ModelError("; ".join(str(d) for d in errors))
    targets = prop.resolve(n)
    cap = default_max_states() if max_states is None else max_states
    started = time.perf_counter()
    cn = CompiledNetwork(n)
    forbidden = [(ai, cn.loc_index[ai][loc]) for ai, loc in targets]
    stats = Statistics()

    def bad(locs):
        return all(locs[ai] == li for ai, li in forbidden)

    def finish(verdict):
        stats.wall_time = time.perf_counter() - started
        verdict.statistics = stats
        return verdict

    z0 = cn.initial_zone()
    if z0.empty:
        return finish(Verdict(True))
    if extrapolation:
        z0 = dbm.extrapolate(z0, cn.kmax)
    # node: (locs, zone, parent index, Transition)
    nodes = [(cn.initial, z0, -1, None)]
    stats.states_stored = 1
    if bad(cn.initial):
        return finish(Verdict(False, _counterexample(cn, nodes, 0)))
    passed: dict[tuple, list] = {cn.initial: [z0]}
    waiting = deque([0])
    while waiting:
        stats.peak_waiting = max(stats.peak_waiting, len(waiting))
        idx = waiting.popleft()
        stats.states_explored += 1
        locs, z, _, _ = nodes[idx]
        for parts, ch in cn.moves(locs):
            z1, new = cn.fire(z, locs, parts)
            if z1.empty:
                continue
            z1 = cn.invariant_zone(dbm.delay_up(z1), new)
            if extrapolation:
                z1 = dbm.extrapolate(z1, cn.kmax)
            seen = passed.setdefault(new, [])
            if subsumption:
                if any(dbm.includes(old, z1) for old in seen):
                    continue
                seen[:] = [old for old in seen if not dbm.includes(z1, old)]
            elif z1 in seen:
                continue
            seen.append(z1)
            nodes.append((new, z1, idx, cn.transition_record(parts, ch)))
            stats.states_stored += 1
            if bad(new):
                return finish(Verdict(False, _counterexample(cn, nodes, len(nodes) - 1)))
            if stats.states_stored > cap:
                raise ResourceError(cap)
            waiting.append(len(nodes) - 1)
    return finish(Verdict(True))


def _counterexample(cn: CompiledNetwork, nodes, idx) -> CounterExample:
    chain = []
    while idx >= 0:
        chain.append(nodes[idx])
        idx = nodes[idx][2]
    chain.reverse()
    trace = SymbolicTrace(
        network=cn.network,
        locations=tuple(cn.names(node[0]) for node in chain),
        zones=tuple(node[1] for node in chain),
        transitions=tuple(node[3] for node in chain[1:]),
    )
    witness = concretize_trace(trace)
    word = extract_timed_word(witness, cn.network.observable_channels())
    return CounterExample(trace, witness, word)


# ---------------------------------------------------------------------------
# concretization


def concretize_trace(trace: SymbolicTrace) -> tuple:
    """Earliest-feasible delays for the discrete path of ``trace``.

    Firing times ``t_1 <= ... <= t_k`` satisfy difference constraints (each
    clock value is the time since its last reset), so the pointwise least
    solution is ``-dist(v -> 0)`` in the constraint graph.
    """
    cn = CompiledNetwork(trace.network)
    k = len(trace.transitions)
    # constraint t_a - t_b <= c  is stored as edge b -> a with weight c
    edges: list[tuple[int, int, int]] = []
    last = [0] * (len(cn.clock_names) + 1)

    def at_point(p, raws):
        for i, j, raw in raws:
            c = raw >> 1
            if i == 0:   # x_j >= -c   ->  t_r - t_p <= c
                edges.append((p, last[j], c))
            else:        # x_i <= c    ->  t_p - t_r <= c
                edges.append((last[i], p, c))

    def invariants(p, locs):
        for ai, li in enumerate(locs):
            at_point(p, cn.invariants[ai][li])

    locs = cn.initial
    invariants(0, locs)
    for p, tr in enumerate(trace.transitions, start=1):
        edges.append((p, p - 1, 0))  # t_{p-1} <= t_p
        invariants(p, locs)
        new = list(locs)
        resets = []
        for ai, ei in tr.edges:
            edge = next(e for e in cn.outgoing[ai][locs[ai]] if e[0] == ei)
            at_point(p, edge[3])
            resets += edge[4]
            new[ai] = edge[5]
        for c in resets:
            last[c] = p
        locs = tuple(new)
        invariants(p, locs)
    # shortest distance from every node to node 0 (Bellman-Ford on reversed edges)
    inf = float("inf")
    dist = [inf] * (k + 1)
    dist[0] = 0
    for _ in range(k + 1):
        changed = False
        for b, a, c in edges:
            # edge b -> a: dist(b) <= c + dist(a)
            if dist[a] != inf and c + dist[a] < dist[b]:
                dist[b] = c + dist[a]
                changed = True
        if not changed:
            break
    else:
        raise InternalError("counter-example path is infeasible (negative cycle)")
    times = [-d for d in dist]
    if times[0] != 0:
        raise InternalError("counter-example path is infeasible at time zero")
    steps = []
    for p, tr in enumerate(trace.transitions, start=1):
        steps.append(WitnessStep(
            delay=Fraction(times[p] - times[p - 1]),
            edges=tuple(cn.addresses[ai][ei] for ai, ei in tr.edges),
            channel=tr.channel,
        ))
    return tuple(steps)


def extract_timed_word(witness, observable) -> TimedWord:
    """Observable projection of a witness.

    ``observable`` is the ordered tuple of observable channels; events that
    happen at the same instant are merged into one bit-vector.
    """
    observable = tuple(observable)
    pos = {c: i for i, c in enumerate(observable)}
    sigma: list[list[int]] = []
    tau: list[Fraction] = []
    now = Fraction(0)
    for step in witness:
        now += Fraction(step.delay)
        if step.channel is None or step.channel not in pos:
            continue
        if tau and tau[-1] == now:
            sigma[-1][pos[step.channel]] = 1
        else:
            bits = [0] * len(observable)
            bits[pos[step.channel]] = 1
            sigma.append(bits)
            tau.append(now)
    return TimedWord(tuple(tuple(s) for s in sigma), tuple(tau), observable)

"""Timed automata and networks.

Clock constraints are conjunctions of non-strict atoms ``x >= n`` / ``x <= n``
with natural-number bounds.  Environment automata fed to the abstraction
rules must be in *paper shape*: guards carry only lower bounds, invariants
only upper bounds.  System automata are unrestricted.

Edges are addressed as ``automaton.source->target#k`` where ``k`` counts
parallel edges between the same pair of locations, in declaration order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

GE = ">="
LE = "<="

SEND = "send"
RECEIVE = "receive"
INTERNAL = "internal"

BINARY = "binary"
BROADCAST = "broadcast"

INF = math.inf


class ModelError(Exception):
    """Raised when a model or model query is malformed."""


class ShapeError(ModelError):
    """A constraint is outside the lower-bound guard / upper-bound invariant shape."""


@dataclass(frozen=True)
class ClockAtom:
    clock: str
    op: str
    bound: int

    def __post_init__(self):
        if self.op not in (GE, LE):
            raise ModelError(f"unknown comparison {self.op!r}")
        if not isinstance(self.bound, int) or self.bound < 0:
            raise ModelError(f"bound must be a natural number, got {self.bound!r}")

    def holds(self, value) -> bool:
        return value >= self.bound if self.op == GE else value <= self.bound

    def __str__(self):
        return f"{self.clock}{self.op}{self.bound}"


Constraint = tuple  # tuple[ClockAtom, ...]


@dataclass(frozen=True)
class Action:
    kind: str = INTERNAL
    channel: str | None = None

    def __post_init__(self):
        if self.kind not in (SEND, RECEIVE, INTERNAL):
            raise ModelError(f"unknown action kind {self.kind!r}")
        if (self.channel is None) != (self.kind == INTERNAL):
            raise ModelError("a channel is required exactly for send/receive actions")

    def __str__(self):
        if self.kind == INTERNAL:
            return "tau"
        return self.channel + ("!" if self.kind == SEND else "?")


@dataclass(frozen=True)
class Location:
    name: str
    invariant: Constraint = ()


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    action: Action = Action()
    resets: tuple = ()
    guard: Constraint = ()


@dataclass(frozen=True)
class Automaton:
    name: str
    locations: tuple
    initial: str
    clocks: tuple
    edges: tuple = ()

    def location(self, name: str) -> Location:
        for loc in self.locations:
            if loc.name == name:
                return loc
        raise ModelError(f"{self.name}: no location {name!r}")

    def location_names(self) -> list[str]:
        return [loc.name for loc in self.locations]

    def edge_addresses(self) -> list[str]:
        """Canonical addresses of all edges, parallel to ``self.edges``."""
        seen: dict[tuple[str, str], int] = {}
        out = []
        for e in self.edges:
            k = seen.get((e.source, e.target), 0)
            seen[(e.source, e.target)] = k + 1
            out.append(f"{self.name}.{e.source}->{e.target}#{k}")
        return out

    def edge_index(self, address: str) -> int:
        addrs = self.edge_addresses()
        if address in addrs:
            return addrs.index(address)
        # "#0" may be omitted when the edge has no parallel twin
        if "#" not in address and address + "#0" in addrs:
            return addrs.index(address + "#0")
        raise ModelError(f"no edge {address!r}")

    def edge(self, address: str) -> Edge:
        return self.edges[self.edge_index(address)]


@dataclass(frozen=True)
class Network:
    automata: tuple
    channels: tuple = ()  # ((name, kind), ...) in declaration order
    observable: frozenset = frozenset()
    system: frozenset = frozenset()

    def automaton(self, name: str) -> Automaton:
        for a in self.automata:
            if a.name == name:
                return a
        raise ModelError(f"no automaton {name!r}")

    def index_of(self, name: str) -> int:
        for i, a in enumerate(self.automata):
            if a.name == name:
                return i
        raise ModelError(f"no automaton {name!r}")

    def channel_kind(self, name: str) -> str:
        for n, kind in self.channels:
            if n == name:
                return kind
        raise ModelError(f"undeclared channel {name!r}")

    def observable_channels(self) -> tuple:
        """Observable channels in declaration order (the bit order of timed words)."""
        return tuple(n for n, _ in self.channels if n in self.observable)

    def environment(self) -> tuple:
        return tuple(a for a in self.automata if a.name not in self.system)

    def replace_automaton(self, a: Automaton) -> "Network":
        idx = self.index_of(a.name)
        automata = self.automata[:idx] + (a,) + self.automata[idx + 1:]
        return replace(self, automata=automata)

    def compose(self, other: "Network") -> "Network":
        """Parallel composition; channel declarations must agree."""
        names = {a.name for a in self.automata}
        for a in other.automata:
            if a.name in names:
                raise ModelError(f"automaton {a.name!r} appears on both sides of a composition")
        channels = list(self.channels)
        kinds = dict(self.channels)
        for n, kind in other.channels:
            if n in kinds:
                if kinds[n] != kind:
                    raise ModelError(f"channel {n!r} declared {kinds[n]} and {kind}")
                if (n in self.observable) != (n in other.observable):
                    raise ModelError(f"channel {n!r} has conflicting observability")
            else:
                channels.append((n, kind))
                kinds[n] = kind
        return Network(
            automata=self.automata + other.automata,
            channels=tuple(channels),
            observable=self.observable | other.observable,
            system=self.system | other.system,
        )


# ---------------------------------------------------------------------------
# diagnostics and normalization


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning" | "info"
    address: str
    message: str
    span: object = None

    @property
    def is_error(self) -> bool:
        return self.severity == "error"

    def __str__(self):
        where = f"{self.span}: " if self.span is not None else ""
        addr = f"{self.address}: " if self.address else ""
        return f"{where}{self.severity}: {addr}{self.message}"


def normalize_constraint(atoms: Iterable[ClockAtom], clocks=None) -> tuple[Constraint, list[str]]:
    """Merge duplicate atoms per (clock, op) and drop trivially true ``x>=0``.

    Atoms are ordered by ``clocks`` (declaration order) when given, lower
    bounds first.  Returns the atoms and notes on what changed.
    """
    merged: dict[tuple[str, str], int] = {}
    notes = []
    for at in atoms:
        key = (at.clock, at.op)
        if key in merged:
            old = merged[key]
            new = max(old, at.bound) if at.op == GE else min(old, at.bound)
            notes.append(f"duplicate atoms on {at.clock}{at.op} merged to {at.clock}{at.op}{new}")
            merged[key] = new
        else:
            merged[key] = at.bound
    out = []
    for (clock, op), bound in merged.items():
        if op == GE and bound == 0:
            notes.append(f"trivially true atom {clock}>=0 dropped")
            continue
        out.append(ClockAtom(clock, op, bound))
    if clocks is not None:
        rank = {c: i for i, c in enumerate(clocks)}
        out.sort(key=lambda at: (rank.get(at.clock, len(rank)), at.op != GE))
    return tuple(out), notes


def normalize_automaton(a: Automaton) -> tuple[Automaton, list[Diagnostic]]:
    diags = []
    locs = []
    for loc in a.locations:
        inv, notes = normalize_constraint(loc.invariant, a.clocks)
        diags += [Diagnostic("info", f"{a.name}.{loc.name}", n) for n in notes]
        locs.append(replace(loc, invariant=inv))
    edges = []
    for addr, e in zip(a.edge_addresses(), a.edges):
        guard, notes = normalize_constraint(e.guard, a.clocks)
        diags += [Diagnostic("info", addr, n) for n in notes]
        resets = tuple(dict.fromkeys(e.resets))
        edges.append(replace(e, guard=guard, resets=resets))
    return replace(a, locations=tuple(locs), edges=tuple(edges)), diags


def normalize_network(n: Network) -> tuple[Network, list[Diagnostic]]:
    diags = []
    automata = []
    for a in n.automata:
        na, d = normalize_automaton(a)
        automata.append(na)
        diags += d
    return replace(n, automata=tuple(automata)), diags


def validate_automaton(a: Automaton) -> list[Diagnostic]:
    """Check the structural invariants of one automaton.

    Errors are reported for undeclared names; duplicate atoms produce
    informational diagnostics describing the normalization that applies.
    """
    diags = []
    names = a.location_names()
    seen = set()
    for name in names:
        if name in seen:
            diags.append(Diagnostic("error", f"{a.name}.{name}", "duplicate location"))
        seen.add(name)
    if len(set(a.clocks)) != len(a.clocks):
        diags.append(Diagnostic("error", a.name, "duplicate clock declaration"))
    if a.initial not in seen:
        diags.append(Diagnostic("error", a.name, f"initial location {a.initial!r} is not declared"))
    clocks = set(a.clocks)
    for loc in a.locations:
        for at in loc.invariant:
            if at.clock not in clocks:
                diags.append(Diagnostic("error", f"{a.name}.{loc.name}", f"undeclared clock {at.clock!r}"))
    for addr, e in zip(a.edge_addresses(), a.edges):
        if e.source not in seen:
            diags.append(Diagnostic("error", addr, f"source location {e.source!r} is not declared"))
        if e.target not in seen:
            diags.append(Diagnostic("error", addr, f"target location {e.target!r} is not declared"))
        for c in e.resets:
            if c not in clocks:
                diags.append(Diagnostic("error", addr, f"reset of undeclared clock {c!r}"))
        for at in e.guard:
            if at.clock not in clocks:
                diags.append(Diagnostic("error", addr, f"undeclared clock {at.clock!r}"))
    _, norm = normalize_automaton(a)
    return diags + norm


def validate_network(n: Network) -> list[Diagnostic]:
    diags = []
    names = [a.name for a in n.automata]
    if len(set(names)) != len(names):
        diags.append(Diagnostic("error", "network", "duplicate automaton names"))
    kinds = {}
    for name, kind in n.channels:
        if name in kinds:
            diags.append(Diagnostic("error", name, "channel declared twice"))
        if kind not in (BINARY, BROADCAST):
            diags.append(Diagnostic("error", name, f"unknown channel kind {kind!r}"))
        kinds[name] = kind
    for c in sorted(n.observable - set(kinds)):
        diags.append(Diagnostic("error", c, "observable channel is not declared"))
    for s in sorted(n.system - set(names)):
        diags.append(Diagnostic("error", s, "system marker names an unknown automaton"))
    for a in n.automata:
        diags += validate_automaton(a)
        for addr, e in zip(a.edge_addresses(), a.edges):
            ch = e.action.channel
            if ch is None:
                continue
            if ch not in kinds:
                diags.append(Diagnostic("error", addr, f"undeclared channel {ch!r}"))
            elif kinds[ch] == BROADCAST and e.action.kind == RECEIVE and e.guard:
                diags.append(Diagnostic(
                    "error", addr, "clock guards are not allowed on broadcast receiving edges"))
    return diags


# ---------------------------------------------------------------------------
# paper-shape queries


def lower_bounds(guard: Constraint, where: str = "guard") -> dict[str, int]:
    out: dict[str, int] = {}
    for at in guard:
        if at.op != GE:
            raise ShapeError(f"{where}: atom {at} is not a lower bound")
        out[at.clock] = max(out.get(at.clock, 0), at.bound)
    return out


def upper_bounds(inv: Constraint, where: str = "invariant") -> dict[str, int]:
    out: dict[str, int] = {}
    for at in inv:
        if at.op != LE:
            raise ShapeError(f"{where}: atom {at} is not an upper bound")
        out[at.clock] = min(out.get(at.clock, at.bound), at.bound)
    return out


def enabled_interval(a: Automaton, address: str) -> dict[str, tuple]:
    """Per-clock window ``(N, M)`` in which the edge can fire.

    ``N`` is the guard lower bound (0 when absent) and ``M`` the source
    invariant upper bound (``math.inf`` when absent).
    """
    e = a.edge(address)
    lows = lower_bounds(e.guard, f"{address} guard")
    highs = upper_bounds(a.location(e.source).invariant, f"{a.name}.{e.source} invariant")
    return {c: (lows.get(c, 0), highs.get(c, INF)) for c in a.clocks}


@dataclass
class TimingIntervalReport:
    intervals: dict = field(default_factory=dict)  # address -> {clock: (N, M)}

    def __getitem__(self, address):
        return self.intervals[address]

    def __len__(self):
        return len(self.intervals)


def check_applicability(n: Network) -> tuple[TimingIntervalReport | None, list[Diagnostic]]:
    """Check the syntactic prerequisites on every environment automaton.

    Returns ``(report, [])`` on success and ``(None, diagnostics)`` otherwise.
    Only the shape of constraints and the non-emptiness of each enabled
    interval can be checked mechanically.
    """
    diags = [d for d in validate_network(n) if d.is_error]
    report = TimingIntervalReport()
    for a in n.environment():
        for addr, e in zip(a.edge_addresses(), a.edges):
            for at in e.guard:
                if at.op != GE:
                    diags.append(Diagnostic("error", addr, f"guard atom {at} is not a lower bound"))
            try:
                src = a.location(e.source)
            except ModelError:
                continue
            for at in src.invariant:
                if at.op != LE:
                    diags.append(Diagnostic(
                        "error", addr, f"source invariant atom {at} is not an upper bound"))
            try:
                iv = enabled_interval(a, addr)
            except ShapeError:
                continue
            for c, (lo, hi) in iv.items():
                if lo > hi:
                    diags.append(Diagnostic("error", addr, f"dead edge: {c} in [{lo},{hi}] is empty"))
            report.intervals[addr] = iv
    if diags:
        return None, _dedupe(diags)
    return report, []


def _dedupe(diags):
    return list(dict.fromkeys(diags))


def structure_key(a: Automaton):
    """The automaton with every paper-shape bound erased."""
    def erase(atoms, keep_op):
        return tuple(sorted(str(at) for at in atoms if at.op == keep_op))

    locs = tuple((loc.name, erase(loc.invariant, GE)) for loc in a.locations)
    edges = tuple(
        (e.source, e.target, e.action, tuple(e.resets), erase(e.guard, LE))
        for e in a.edges
    )
    return (a.name, locs, a.initial, tuple(a.clocks), edges)


def same_structure(a1: Automaton, a2: Automaton) -> bool:
    return structure_key(a1) == structure_key(a2)


def first_structural_difference(a1: Automaton, a2: Automaton) -> str | None:
    if a1.name != a2.name:
        return f"automaton names differ: {a1.name} vs {a2.name}"
    if a1.initial != a2.initial:
        return f"initial locations differ: {a1.initial} vs {a2.initial}"
    if tuple(a1.clocks) != tuple(a2.clocks):
        return f"clock sets differ: {a1.clocks} vs {a2.clocks}"
    k1, k2 = structure_key(a1), structure_key(a2)
    if k1[1] != k2[1]:
        for l1, l2 in zip(k1[1], k2[1]):
            if l1 != l2:
                return f"location {l1[0]} differs from {l2[0]}"
        return "location lists differ in length"
    e1, e2 = k1[4], k2[4]
    addrs = a1.edge_addresses()
    for i, (x, y) in enumerate(zip(e1, e2)):
        if x != y:
            return f"edge {addrs[i]} differs ({_edge_str(x)} vs {_edge_str(y)})"
    if len(e1) != len(e2):
        return f"edge counts differ: {len(e1)} vs {len(e2)}"
    return None


def _edge_str(k):
    src, dst, act, resets, _ = k
    return f"{src}->{dst} {act} reset {{{', '.join(resets)}}}"


def iter_atoms(a: Automaton) -> Iterator[ClockAtom]:
    for loc in a.locations:
        yield from loc.invariant
    for e in a.edges:
        yield from e.guard


def max_constants(n: Network) -> dict[tuple[str, str], int]:
    """Largest constant compared with each (automaton, clock)."""
    out = {}
    for a in n.automata:
        for c in a.clocks:
            out[(a.name, c)] = 0
        for at in iter_atoms(a):
            key = (a.name, at.clock)
            out[key] = max(out.get(key, 0), at.bound)
    return out

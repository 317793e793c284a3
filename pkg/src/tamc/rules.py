"""Abstraction rules R1 (widen), R2 (merge), R3 (drop receptions) and subtraction.

All rules work on models in paper shape.  Guard lower bounds never go below
zero and a guard atom that reaches zero is dropped (``x >= 0`` holds
trivially); a missing invariant atom means "unbounded".
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

from .model import (BROADCAST, GE, INF, INTERNAL, LE, RECEIVE, Action, Automaton,
                    ClockAtom, ModelError, Network, enabled_interval,
                    first_structural_difference, lower_bounds, same_structure,
                    upper_bounds)


class RuleError(ModelError):
    """A rule was applied outside its prerequisites."""


class AddressError(RuleError):
    pass


@dataclass(frozen=True)
class DeltaVector:
    guard: tuple = ()  # ((edge address, clock, delta), ...)
    inv: tuple = ()    # ((automaton, location, clock, delta), ...)

    def __post_init__(self):
        for *_, d in self.guard + self.inv:
            if not isinstance(d, int) or d < 0:
                raise RuleError(f"deltas must be natural numbers, got {d!r}")

    def __add__(self, other):
        return DeltaVector(self.guard + other.guard, self.inv + other.inv)

    @classmethod
    def uniform(cls, a: Automaton, guard_delta: int, inv_delta: int) -> "DeltaVector":
        """The same delta on every guard lower bound and invariant upper bound."""
        g = tuple((addr, at.clock, guard_delta)
                  for addr, e in zip(a.edge_addresses(), a.edges)
                  for at in e.guard if at.op == GE and guard_delta)
        i = tuple((a.name, loc.name, at.clock, inv_delta)
                  for loc in a.locations for at in loc.invariant if at.op == LE and inv_delta)
        return cls(g, i)


@dataclass(frozen=True)
class RuleApplication:
    rule: str           # "base" | "r1" | "r2" | "r3" | "subtract"
    inputs: tuple
    output: str
    parameters: object = None

    def describe(self) -> str:
        if self.rule == "base":
            return f"{self.output} = base({self.parameters})"
        args = ", ".join(self.inputs)
        if self.rule == "r3":
            args += f", {self.parameters}"
        text = f"{self.output} = {self.rule}({args})"
        if self.rule == "r1" and self.parameters is not None:
            d = self.parameters
            if d.guard:
                text += " guard " + " ".join(f"{a} {c} -{v}" for a, c, v in d.guard)
            if d.inv:
                text += " inv " + " ".join(f"{a}.{l} {c} +{v}" for a, l, c, v in d.inv)
        return text


def _build(a: Automaton, lows: list[dict], highs: list[dict]) -> Automaton:
    """Rebuild ``a`` with the given per-edge lower and per-location upper bounds.

    Atoms come out in clock declaration order, which is also the order
    :func:`~tamc.model.normalize_automaton` produces.
    """
    locs = []
    for loc, hi in zip(a.locations, highs):
        rest = tuple(at for at in loc.invariant if at.op != LE)
        atoms = tuple(ClockAtom(c, LE, int(hi[c])) for c in a.clocks if hi.get(c, INF) != INF)
        locs.append(replace(loc, invariant=atoms + rest))
    edges = []
    for e, lo in zip(a.edges, lows):
        rest = tuple(at for at in e.guard if at.op != GE)
        atoms = tuple(ClockAtom(c, GE, lo[c]) for c in a.clocks if lo.get(c, 0) > 0)
        edges.append(replace(e, guard=atoms + rest))
    return replace(a, locations=tuple(locs), edges=tuple(edges))


def _bounds(a: Automaton):
    lows = [lower_bounds(tuple(at for at in e.guard if at.op == GE)) for e in a.edges]
    highs = [upper_bounds(tuple(at for at in loc.invariant if at.op == LE)) for loc in a.locations]
    return lows, highs


def _require_paper_shape(a: Automaton):
    for addr, e in zip(a.edge_addresses(), a.edges):
        for at in e.guard:
            if at.op != GE:
                raise RuleError(f"{addr}: guard atom {at} is not a lower bound")
    for loc in a.locations:
        for at in loc.invariant:
            if at.op != LE:
                raise RuleError(f"{a.name}.{loc.name}: invariant atom {at} is not an upper bound")


def _shift(a: Automaton, d: DeltaVector, inv_sign: int) -> Automaton:
    _require_paper_shape(a)
    lows, highs = _bounds(a)
    clocks = set(a.clocks)
    for addr, clock, delta in d.guard:
        try:
            i = a.edge_index(addr)
        except ModelError as exc:
            raise AddressError(str(exc)) from None
        if clock not in clocks:
            raise AddressError(f"{addr}: no clock {clock!r}")
        lows[i][clock] = max(0, lows[i].get(clock, 0) - delta)
    names = a.location_names()
    for aut, loc, clock, delta in d.inv:
        if aut != a.name or loc not in names:
            raise AddressError(f"no location {aut}.{loc}")
        if clock not in clocks:
            raise AddressError(f"{aut}.{loc}: no clock {clock!r}")
        h = highs[names.index(loc)]
        if h.get(clock, INF) != INF:
            h[clock] = max(0, h[clock] + inv_sign * delta)
    return _build(a, lows, highs)


def apply_r1(a: Automaton, d: DeltaVector) -> Automaton:
    """Widen enabled intervals: lower every guard bound, raise every invariant bound."""
    return _shift(a, d, +1)


def apply_r2(a1: Automaton, a2: Automaton) -> Automaton:
    """Merge two same-structure automata: min of lower bounds, max of upper bounds."""
    _require_paper_shape(a1)
    _require_paper_shape(a2)
    if not same_structure(a1, a2):
        raise RuleError(f"r2 needs models with the same structure: "
                        f"{first_structural_difference(a1, a2)}")
    l1, h1 = _bounds(a1)
    l2, h2 = _bounds(a2)
    lows = [{c: min(x.get(c, 0), y.get(c, 0)) for c in set(x) | set(y)} for x, y in zip(l1, l2)]
    highs = [{c: max(x.get(c, INF), y.get(c, INF)) for c in set(x) | set(y)} for x, y in zip(h1, h2)]
    return _build(a1, lows, highs)


def r2_as_r1_deltas(a1: Automaton, a2: Automaton) -> DeltaVector:
    """The deltas that turn ``a1`` into ``apply_r2(a1, a2)`` via R1.

    Invariants that become unbounded cannot be expressed by a finite delta;
    such locations raise :class:`RuleError`.
    """
    l1, h1 = _bounds(a1)
    l2, h2 = _bounds(a2)
    guard = []
    for addr, x, y in zip(a1.edge_addresses(), l1, l2):
        for c in a1.clocks:
            dg = x.get(c, 0) - min(x.get(c, 0), y.get(c, 0))
            if dg:
                guard.append((addr, c, dg))
    inv = []
    for loc, x, y in zip(a1.locations, h1, h2):
        for c in a1.clocks:
            m1, m2 = x.get(c, INF), y.get(c, INF)
            if m1 == INF:
                continue
            if m2 == INF:
                raise RuleError(f"{a1.name}.{loc.name}: bound on {c} would become unbounded")
            if m2 > m1:
                inv.append((a1.name, loc.name, c, m2 - m1))
    return DeltaVector(tuple(guard), tuple(inv))


def apply_r3(n: Network, channel: str, only: set | None = None) -> Network:
    """Turn every reception on an unobservable broadcast channel into an internal edge.

    ``only`` restricts the rewrite to the named automata.
    """
    try:
        kind = n.channel_kind(channel)
    except ModelError as exc:
        raise RuleError(str(exc)) from None
    if channel in n.observable:
        raise RuleError(f"r3: channel {channel} is observable")
    if kind != BROADCAST:
        raise RuleError(f"r3: channel {channel} is not a broadcast channel")
    automata = []
    for a in n.automata:
        if only is not None and a.name not in only:
            automata.append(a)
            continue
        edges = []
        for addr, e in zip(a.edge_addresses(), a.edges):
            if e.action.kind == RECEIVE and e.action.channel == channel:
                if e.guard:
                    raise RuleError(f"r3: receiving edge {addr} has a guard")
                e = replace(e, action=Action(INTERNAL))
            edges.append(e)
        automata.append(replace(a, edges=tuple(edges)))
    return replace(n, automata=tuple(automata))


def r3_eligible(n: Network, automaton: str | None = None) -> list[str]:
    """Unobservable broadcast channels that have unguarded receptions."""
    out = []
    for ch, kind in n.channels:
        if kind != BROADCAST or ch in n.observable:
            continue
        rx = [e for a in n.automata if automaton is None or a.name == automaton
              for e in a.edges if e.action.kind == RECEIVE and e.action.channel == ch]
        if rx and not any(e.guard for e in rx):
            out.append(ch)
    return out


# ---------------------------------------------------------------------------
# subtraction


@dataclass(frozen=True)
class SubtractedModel:
    automaton: Automaton
    intervals: tuple  # ((edge address, clock, lo, hi), ...)


def _interval_table(a: Automaton) -> dict:
    out = {}
    for addr in a.edge_addresses():
        for c, iv in enabled_interval(a, addr).items():
            out[(addr, c)] = iv
    return out


def integer_complement(parent: tuple, holes: list[tuple]) -> list[tuple]:
    """Maximal integer intervals of ``parent`` not covered by any of ``holes``."""
    lo, hi = parent
    out = []
    cur = lo
    for a, b in sorted(holes):
        if b < cur:
            continue
        if a > cur:
            out.append((cur, a - 1))
        cur = max(cur, b + 1 if b != INF else INF)
        if cur == INF or cur > hi:
            break
    if cur != INF and cur <= hi:
        out.append((cur, hi))
    return out


def subtract_models(parent: Automaton, children: list[Automaton]) -> list[SubtractedModel]:
    """Models covering the parts of ``parent``'s enabled intervals that no child covers.

    Every edge-clock dimension on which some child differs from the parent
    contributes the integer complement of the children's intervals; the
    result is the cross product of these complements, one model each.
    Dimensions whose complement is empty stay at the parent's interval.
    """
    _require_paper_shape(parent)
    for ch in children:
        _require_paper_shape(ch)
        if not same_structure(parent, ch):
            raise RuleError(f"subtract: {first_structural_difference(parent, ch)}")
    ptab = _interval_table(parent)
    ctabs = [_interval_table(ch) for ch in children]
    dims = []
    for key, piv in ptab.items():
        civs = [t[key] for t in ctabs]
        for civ in civs:
            if civ[0] < piv[0] or civ[1] > piv[1]:
                raise RuleError(f"subtract: child interval {list(civ)} of {key[0]} on {key[1]} "
                                f"is not contained in the parent's {list(piv)}")
        if any(civ != piv for civ in civs):
            dims.append((key, integer_complement(piv, civs)))
    if not dims:
        return []
    live = [(key, comp) for key, comp in dims if comp]
    if not live:
        return []
    out = []
    lows, highs = _bounds(parent)
    names = parent.location_names()
    for choice in itertools.product(*[comp for _, comp in live]):
        lo_t = [dict(x) for x in lows]
        hi_t = [dict(x) for x in highs]
        pinned = {}
        for ((addr, clock), _), (lo, hi) in zip(live, choice):
            i = parent.edge_index(addr)
            lo_t[i][clock] = lo
            li = names.index(parent.edges[i].source)
            if pinned.get((li, clock), hi) != hi:
                raise RuleError(f"subtract: conflicting invariant bounds for "
                                f"{parent.name}.{names[li]} on {clock}")
            pinned[(li, clock)] = hi
            hi_t[li][clock] = hi
        tags = tuple((addr, clock, lo, hi) for ((addr, clock), _), (lo, hi) in zip(live, choice))
        out.append(SubtractedModel(_build(parent, lo_t, hi_t), tags))
    return out


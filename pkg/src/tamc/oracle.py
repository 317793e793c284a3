"""Bounded, step-granular executor for networks of timed automata.

This is a falsifier for language and simulation claims: every run is
explored with delays that are multiples of ``step`` up to a time horizon.
It shares no code with the zone engine.

Clock values are kept as integers counting ``step`` units and are capped
one unit above the largest constant, which preserves every comparison.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .checker import ResourceError, TimedWord, WitnessStep, default_max_states
from .model import BINARY, GE, INTERNAL, RECEIVE, SEND, ModelError, Network

DEFAULT_ORACLE_CAP = 10 ** 6


class State(NamedTuple):
    locations: tuple      # location names, one per automaton
    valuation: tuple      # clock values (Fractions) in global clock order


class Label(NamedTuple):
    channel: str | None
    observable: bool
    edges: tuple          # edge addresses, initiating edge first


DELAY = Label(None, False, ())


class _Stepper:
    """Integer-unit semantics of a network for one step size."""

    def __init__(self, n: Network, step, horizon=None, min_cap: int = 0):
        self.network = n
        self.step = Fraction(step)
        if self.step <= 0:
            raise ValueError("step must be positive")
        self.horizon = None if horizon is None else math.floor(Fraction(horizon) / self.step)
        self.kinds = dict(n.channels)
        obs = n.observable_channels()
        self.obs_bit = {c: 1 << i for i, c in enumerate(obs)}
        self.obs = obs
        self.clocks = []
        cidx = {}
        for a in n.automata:
            for c in a.clocks:
                cidx[(a.name, c)] = len(self.clocks)
                self.clocks.append(f"{a.name}.{c}")
        biggest = 0
        for a in n.automata:
            for loc in a.locations:
                for at in loc.invariant:
                    biggest = max(biggest, at.bound)
            for e in a.edges:
                for at in e.guard:
                    biggest = max(biggest, at.bound)
        # any cap above the largest constant is exact; a shared one makes
        # states of two networks comparable
        self.cap = max(math.floor(Fraction(biggest) / self.step) + 1, min_cap)
        self.lnames = [a.location_names() for a in n.automata]
        self.lidx = [{x: i for i, x in enumerate(names)} for names in self.lnames]
        self.addrs = [a.edge_addresses() for a in n.automata]
        self.init_locs = tuple(self.lidx[i][a.initial] for i, a in enumerate(n.automata))

        def conv(aut, atoms):
            out = []
            for at in atoms:
                q = Fraction(at.bound) / self.step
                if at.op == GE:
                    out.append((cidx[(aut, at.clock)], True, math.ceil(q)))
                else:
                    out.append((cidx[(aut, at.clock)], False, math.floor(q)))
            return tuple(out)

        self.inv = [[conv(a.name, loc.invariant) for loc in a.locations] for a in n.automata]
        self.out = []
        for ai, a in enumerate(n.automata):
            per = [[] for _ in a.locations]
            for ei, e in enumerate(a.edges):
                per[self.lidx[ai][e.source]].append((
                    ei, e.action.kind, e.action.channel, conv(a.name, e.guard),
                    tuple(cidx[(a.name, c)] for c in e.resets), self.lidx[ai][e.target]))
            self.out.append(per)

    @staticmethod
    def sat(atoms, vals) -> bool:
        for c, ge, b in atoms:
            if ge:
                if vals[c] < b:
                    return False
            elif vals[c] > b:
                return False
        return True

    def inv_ok(self, locs, vals) -> bool:
        for ai, li in enumerate(locs):
            if not self.sat(self.inv[ai][li], vals):
                return False
        return True

    def initial(self):
        """Initial state ``(locs, vals, time)`` or None when it violates invariants."""
        vals = (0,) * len(self.clocks)
        if not self.inv_ok(self.init_locs, vals):
            return None
        return (self.init_locs, vals, 0)

    def delay(self, s):
        locs, vals, t = s
        if self.horizon is not None and t + 1 > self.horizon:
            return None
        cap = self.cap
        nv = tuple(v + 1 if v < cap else cap for v in vals)
        if not self.inv_ok(locs, nv):
            return None
        return (locs, nv, t + 1 if self.horizon is not None else 0)

    def discrete(self, s):
        """All discrete successors as ``(channel, [(ai, ei), ...], state)``."""
        locs, vals, t = s
        n = len(locs)
        out = []
        for ai in range(n):
            for edge in self.out[ai][locs[ai]]:
                ei, kind, ch, guard, resets, tgt = edge
                if kind == RECEIVE or not self.sat(guard, vals):
                    continue
                if kind == INTERNAL:
                    groups = [[(ai, edge)]]
                elif self.kinds[ch] == BINARY:
                    groups = []
                    for bj in range(n):
                        if bj == ai:
                            continue
                        for r in self.out[bj][locs[bj]]:
                            if r[1] == RECEIVE and r[2] == ch and self.sat(r[3], vals):
                                groups.append([(ai, edge), (bj, r)])
                else:
                    groups = [[(ai, edge)]]
                    for bj in range(n):
                        if bj == ai:
                            continue
                        rs = [r for r in self.out[bj][locs[bj]]
                              if r[1] == RECEIVE and r[2] == ch and self.sat(r[3], vals)]
                        if rs:
                            groups = [g + [(bj, r)] for g in groups for r in rs]
                for g in groups:
                    nl = list(locs)
                    nv = list(vals)
                    for bj, r in g:
                        nl[bj] = r[5]
                    for bj, r in g:
                        for c in r[4]:
                            nv[c] = 0
                    nl = tuple(nl)
                    nv = tuple(nv)
                    if self.inv_ok(nl, nv):
                        out.append((ch if kind != INTERNAL else None,
                                    tuple((bj, r[0]) for bj, r in g), (nl, nv, t)))
        return out

    def public(self, s) -> State:
        locs, vals, _ = s
        return State(tuple(self.lnames[i][l] for i, l in enumerate(locs)),
                     tuple(Fraction(v) * self.step for v in vals))

    def internal(self, st: State):
        locs = tuple(self.lidx[i][x] for i, x in enumerate(st.locations))
        vals = []
        for v in st.valuation:
            q = Fraction(v) / self.step
            if q.denominator != 1:
                raise ValueError("valuation is not a multiple of the step")
            vals.append(min(int(q), self.cap))
        return (locs, tuple(vals), 0)


# ---------------------------------------------------------------------------
# single-step successors


def discrete_successors(n: Network, state: State, step=1) -> list[tuple[Label, State]]:
    """The ``+step`` delay successor (if invariants allow) and every discrete successor."""
    sp = _Stepper(n, step)
    s = sp.internal(state)
    out = []
    d = sp.delay(s)
    if d is not None:
        out.append((DELAY, State(state.locations,
                                 tuple(Fraction(v) + sp.step for v in state.valuation))))
    for ch, parts, s2 in sp.discrete(s):
        label = Label(ch, ch in sp.obs_bit,
                      tuple(sp.addrs[ai][ei] for ai, ei in parts))
        # report unclipped values for clocks that were not reset
        vals = list(state.valuation)
        for ai, ei in parts:
            for c in n.automata[ai].edges[ei].resets:
                vals[sp.clocks.index(f"{n.automata[ai].name}.{c}")] = Fraction(0)
        out.append((label, State(sp.public(s2).locations, tuple(vals))))
    return out


def initial_state(n: Network) -> State:
    sp = _Stepper(n, 1)
    return State(tuple(a.initial for a in n.automata), (Fraction(0),) * len(sp.clocks))


# ---------------------------------------------------------------------------
# instant-level view: all discrete steps at one time point, then one delay


class _Instants:
    def __init__(self, sp: _Stepper, cap: int):
        self.sp = sp
        self.cap = cap
        self._closure = {}
        self._moves = {}
        self._delay = {}
        self.seen = 0

    def delay(self, s):
        d = self._delay.get(s, 0)
        if d == 0:
            d = self.sp.delay(s)
            self._delay[s] = d
        return d

    def charge(self, k=1):
        self.seen += k
        if self.seen > self.cap:
            raise ResourceError(self.cap)

    def moves(self, s):
        m = self._moves.get(s)
        if m is None:
            m = [(self.sp.obs_bit.get(ch, 0) if ch else 0, s2)
                 for ch, _, s2 in self.sp.discrete(s)]
            self._moves[s] = m
        return m

    def closure(self, s):
        """``{(state, observed bits)}`` reachable at the current instant."""
        c = self._closure.get(s)
        if c is not None:
            return c
        start = (s, 0)
        seen = {start}
        queue = deque([start])
        while queue:
            q, bits = queue.popleft()
            for b, q2 in self.moves(q):
                item = (q2, bits | b)
                if item not in seen:
                    seen.add(item)
                    queue.append(item)
        self.charge()
        c = frozenset(seen)
        self._closure[s] = c
        return c

    def inv_ok(self, s) -> bool:
        return self.sp.inv_ok(s[0], s[1])

    def tau_closure(self, s):
        seen = {s}
        queue = deque([s])
        while queue:
            q = queue.popleft()
            for b, q2 in self.moves(q):
                if b == 0 and q2 not in seen:
                    seen.add(q2)
                    queue.append(q2)
        return seen


def _word(sp: _Stepper, events) -> TimedWord:
    sigma = tuple(tuple(1 if bits >> i & 1 else 0 for i in range(len(sp.obs))) for _, bits in events)
    tau = tuple(Fraction(t) * sp.step for t, _ in events)
    return TimedWord(sigma, tau, sp.obs)


@dataclass(frozen=True)
class BoundedLanguage:
    horizon: Fraction
    step: Fraction
    words: frozenset

    def __contains__(self, w):
        return w in self.words

    def __len__(self):
        return len(self.words)


def bounded_language(n: Network, horizon, step=1, cap: int | None = None) -> BoundedLanguage:
    """All observable words of runs that stay within ``horizon``.

    The language is prefix-closed: every finite run contributes its word.
    """
    if Fraction(horizon) <= 0:
        raise ValueError("horizon must be positive")
    sp = _Stepper(n, step, horizon)
    ins = _Instants(sp, cap or DEFAULT_ORACLE_CAP)
    s0 = sp.initial()
    words = set()
    if s0 is None:
        return BoundedLanguage(Fraction(horizon), sp.step, frozenset())
    start = (s0, ())
    seen = {start}
    queue = deque([start])
    while queue:
        s, events = queue.popleft()
        t = s[2]
        for s2, bits in ins.closure(s):
            ev = events + ((t, bits),) if bits else events
            words.add(ev)
            d = sp.delay(s2)
            if d is None:
                continue
            item = (d, ev)
            if item not in seen:
                seen.add(item)
                ins.charge()
                queue.append(item)
    return BoundedLanguage(Fraction(horizon), sp.step, frozenset(_word(sp, w) for w in words))


def _check_alphabets(n1: Network, n2: Network):
    if n1.observable_channels() != n2.observable_channels():
        raise ModelError("networks must share the same observable channels")


def bounded_inclusion(n1: Network, n2: Network, horizon, step=1,
                      cap: int | None = None) -> tuple[bool, TimedWord | None]:
    """Is every bounded word of ``n1`` a word of ``n2``?

    Explores ``n1`` against the subset of ``n2`` states consistent with the
    observations so far; returns ``(False, word)`` with a shortest word
    of ``n1`` that ``n2`` cannot produce.
    """
    _check_alphabets(n1, n2)
    sp1 = _Stepper(n1, step, horizon)
    sp2 = _Stepper(n2, step, horizon)
    cap = cap or DEFAULT_ORACLE_CAP
    i1, i2 = _Instants(sp1, cap), _Instants(sp2, cap)
    s1 = sp1.initial()
    if s1 is None:
        return True, None
    s2 = sp2.initial()
    start = (s1, frozenset([s2]) if s2 is not None else frozenset())
    parents = {s1: [start[1]]}
    queue = deque([(start, ())])
    after: dict = {}    # group -> {bits: group after the instant and one delay}
    present: dict = {}  # group -> bits observable at the instant
    while queue:
        (a, group), events = queue.popleft()
        t = a[2]
        succ = after.get(group)
        if succ is None:
            by_bits: dict[int, set] = {}
            for q in group:
                for q2, bits in i2.closure(q):
                    by_bits.setdefault(bits, set()).add(q2)
            present[group] = frozenset(by_bits)
            succ = {bits: frozenset(x for x in map(i2.delay, qs) if x is not None)
                    for bits, qs in by_bits.items()}
            after[group] = succ
        have = present[group]
        for a2, bits in i1.closure(a):
            ev = events + ((t, bits),) if bits else events
            if bits and bits not in have:
                return False, _word(sp1, ev)
            d = i1.delay(a2)
            if d is None:
                continue
            g2 = succ.get(bits, frozenset())
            # antichain: a larger group at the same state accepts more words
            known = parents.setdefault(d, [])
            if any(g <= g2 for g in known):
                continue
            known.append(g2)
            i1.charge()
            queue.append(((d, g2), ev))
    return True, None


def _identity_simulates(i1: _Instants, i2: _Instants, p0) -> bool:
    """Is ``{(s, s)}`` over the states of ``n1`` a weak simulation?

    Rule outputs keep locations and clocks, so this relation is the usual
    witness; it is checked in time linear in the states of ``n1``. A False
    answer only means the cheap witness does not work.
    """
    seen = {p0}
    stack = [p0]
    while stack:
        p = stack.pop()
        if not i2.inv_ok(p):
            return False
        taus = i2.tau_closure(p)
        succ = [(b, p2) for b, p2 in i1.moves(p)]
        d = i1.delay(p)
        if d is not None:
            succ.append((-1, d))
        for b, p2 in succ:
            if b == 0:
                ok = p2 in taus
            elif b < 0:
                ok = any(i2.delay(x) == p2 for x in taus)
            else:
                ok = any(y == p2 for x in taus for b2, y in i2.moves(x) if b2 == b)
            if not ok:
                return False
            if p2 not in seen:
                seen.add(p2)
                i1.charge()
                stack.append(p2)
    return True


def bounded_simulates(n2: Network, n1: Network, horizon, step=1, cap: int | None = None,
                      identity_first: bool = True) -> bool:
    """Does ``n2`` weakly simulate ``n1`` on the bounded step-granular unfolding?

    Delays must be matched by equal delays, observable steps by the same
    channel, and unobservable steps by zero or more unobservable steps;
    ``n2`` may interleave unobservable steps before any matched move.
    The identity relation is tried before the full fixpoint computation.
    """
    _check_alphabets(n1, n2)
    sp1 = _Stepper(n1, step, horizon)
    sp2 = _Stepper(n2, step, horizon, sp1.cap)
    sp1 = _Stepper(n1, step, horizon, sp2.cap)
    cap = cap or DEFAULT_ORACLE_CAP
    i1, i2 = _Instants(sp1, cap), _Instants(sp2, cap)
    p0 = sp1.initial()
    if p0 is None:
        return True
    q0 = sp2.initial()
    if q0 is None:
        return False
    if (identity_first and sp1.lnames == sp2.lnames and sp1.clocks == sp2.clocks
            and _identity_simulates(i1, i2, p0)):
        return True

    # states are interned as integers; a pair (p, q) is the int p << 32 | q
    ids1: dict = {}
    states1: list = []
    ids2: dict = {}
    states2: list = []

    def intern(s, ids, states):
        k = ids.get(s)
        if k is None:
            k = len(states)
            ids[s] = k
            states.append(s)
        return k

    moves1: dict = {}

    def moves_of(pid):
        m = moves1.get(pid)
        if m is None:
            p = states1[pid]
            m = [(b, intern(p2, ids1, states1)) for b, p2 in i1.moves(p)]
            d = i1.delay(p)
            if d is not None:
                m.append((-1, intern(d, ids1, states1)))
            moves1[pid] = m
        return m

    tau_cache: dict = {}

    def taus(q):
        r = tau_cache.get(q)
        if r is None:
            r = tuple(i2.tau_closure(q))
            tau_cache[q] = r
        return r

    match_cache: dict = {}

    def matches(qid, bits):
        # the greatest weak simulation is closed under unobservable
        # predecessors of its right component, so trailing unobservable
        # steps never need to be matched and stuttering answers a tau move
        if bits == 0:
            return (qid,)
        key = (qid, bits)
        r = match_cache.get(key)
        if r is not None:
            return r
        q = states2[qid]
        out = set()
        if bits < 0:
            for x in taus(q):
                d = i2.delay(x)
                if d is not None:
                    out.add(intern(d, ids2, states2))
        else:
            for x in taus(q):
                for b, y in i2.moves(x):
                    if b == bits:
                        out.add(intern(y, ids2, states2))
        r = tuple(out)
        match_cache[key] = r
        return r

    # candidate relation: pairs reachable through (move, matching move);
    # count[pair][k] is the number of matching successors of move k still in it
    start = intern(p0, ids1, states1) << 32 | intern(q0, ids2, states2)
    count: dict = {start: None}
    preds: dict = {}
    doomed = []
    queue = deque([start])
    while queue:
        pair = queue.popleft()
        pid, qid = pair >> 32, pair & 0xFFFFFFFF
        counts = []
        for k, (bits, p2) in enumerate(moves_of(pid)):
            ms = matches(qid, bits)
            counts.append(len(ms))
            if not ms:
                doomed.append(pair)
            base = p2 << 32
            for q2 in ms:
                nxt = base | q2
                lst = preds.get(nxt)
                if lst is None:
                    preds[nxt] = [(pair, k)]
                else:
                    lst.append((pair, k))
                if nxt not in count:
                    count[nxt] = None
                    queue.append(nxt)
                    if len(count) > cap:
                        raise ResourceError(cap, "state pairs")
        count[pair] = counts
    # greatest fixpoint: a pair dies when some move has no surviving match
    removed = set()
    while doomed:
        pair = doomed.pop()
        if pair in removed:
            continue
        removed.add(pair)
        if pair == start:
            return False
        for pp, k in preds.get(pair, ()):
            if pp in removed:
                continue
            c = count[pp]
            c[k] -= 1
            if c[k] == 0:
                doomed.append(pp)
    return True


def bounded_reachable(n: Network, forbidden, step=1, horizon=None, cap: int | None = None) -> bool:
    """Brute-force reachability of a location combination.

    ``forbidden`` is a sequence of ``(automaton, location)`` pairs.  Without
    a horizon the capped clock values make the state space finite.
    """
    sp = _Stepper(n, step, horizon)
    want = [(n.index_of(a), sp.lidx[n.index_of(a)][l]) for a, l in forbidden]
    cap = cap or default_max_states()
    s0 = sp.initial()
    if s0 is None:
        return False
    seen = {s0}
    queue = deque([s0])
    while queue:
        s = queue.popleft()
        if all(s[0][ai] == li for ai, li in want):
            return True
        succ = [x for _, _, x in sp.discrete(s)]
        d = sp.delay(s)
        if d is not None:
            succ.append(d)
        for x in succ:
            if x not in seen:
                seen.add(x)
                if len(seen) > cap:
                    raise ResourceError(cap)
                queue.append(x)
    return False


# ---------------------------------------------------------------------------
# replay of concrete witnesses


class ReplayError(Exception):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step
        self.reason = message


@dataclass(frozen=True)
class ReplayResult:
    states: tuple      # State after the initial point and after every step
    time: Fraction

    @property
    def final(self) -> State:
        return self.states[-1]


def replay(n: Network, witness) -> ReplayResult:
    """Execute a witness exactly, checking every guard, invariant and sync rule.

    Steps are numbered from 1; a failing step raises :class:`ReplayError`.
    """
    names = []
    index = {}
    for a in n.automata:
        for c in a.clocks:
            index[(a.name, c)] = len(names)
            names.append(f"{a.name}.{c}")
    kinds = dict(n.channels)
    addr_map = {}
    for ai, a in enumerate(n.automata):
        for ei, addr in enumerate(a.edge_addresses()):
            addr_map[addr] = (ai, ei)
            if addr.endswith("#0"):
                addr_map.setdefault(addr[:-2], (ai, ei))

    def holds(aut, atoms, vals):
        for at in atoms:
            if not at.holds(vals[index[(aut.name, at.clock)]]):
                return at
        return None

    locs = [a.initial for a in n.automata]
    vals = [Fraction(0)] * len(names)
    for a, l in zip(n.automata, locs):
        bad = holds(a, a.location(l).invariant, vals)
        if bad is not None:
            raise ReplayError(0, f"initial invariant {a.name}: {bad} fails")
    states = [State(tuple(locs), tuple(vals))]
    now = Fraction(0)
    for k, step in enumerate(witness, start=1):
        if isinstance(step, WitnessStep):
            delay, addrs = Fraction(step.delay), tuple(step.edges)
        else:
            delay, addrs = Fraction(step[0]), tuple(step[1])
        if delay < 0:
            raise ReplayError(k, "negative delay")
        if delay:
            after = [v + delay for v in vals]
            for a, l in zip(n.automata, locs):
                bad = holds(a, a.location(l).invariant, after)
                if bad is not None:
                    raise ReplayError(k, f"invariant {a.name}.{l}: {bad} violated during delay {delay}")
            vals = after
            now += delay
        if not addrs:
            states.append(State(tuple(locs), tuple(vals)))
            continue
        parts = []
        for addr in addrs:
            if addr not in addr_map:
                raise ReplayError(k, f"unknown edge {addr}")
            parts.append(addr_map[addr])
        owners = [ai for ai, _ in parts]
        if len(set(owners)) != len(owners):
            raise ReplayError(k, "an automaton fires two edges in one step")
        edges = [n.automata[ai].edges[ei] for ai, ei in parts]
        for (ai, ei), e in zip(parts, edges):
            if e.source != locs[ai]:
                raise ReplayError(k, f"{addrs[parts.index((ai, ei))]} does not leave "
                                     f"current location {locs[ai]}")
            bad = holds(n.automata[ai], e.guard, vals)
            if bad is not None:
                raise ReplayError(k, f"guard {bad} of {n.automata[ai].edge_addresses()[ei]} fails")
        first = edges[0].action
        if first.kind == RECEIVE:
            raise ReplayError(k, "a step cannot be initiated by a receiving edge")
        if first.kind == INTERNAL:
            if len(edges) != 1:
                raise ReplayError(k, "internal step with extra participants")
        else:
            ch = first.channel
            for e in edges[1:]:
                if e.action.kind != RECEIVE or e.action.channel != ch:
                    raise ReplayError(k, f"participant is not a receiver on {ch}")
            if kinds[ch] == BINARY:
                if len(edges) != 2:
                    raise ReplayError(k, f"binary channel {ch} needs exactly one receiver")
            else:
                for bj, b in enumerate(n.automata):
                    if bj == owners[0] or bj in owners:
                        continue
                    for e in b.edges:
                        if (e.source == locs[bj] and e.action.kind == RECEIVE
                                and e.action.channel == ch and holds(b, e.guard, vals) is None):
                            raise ReplayError(k, f"{b.name} can receive {ch} but does not take part")
        for (ai, _), e in zip(parts, edges):
            for c in e.resets:
                vals[index[(n.automata[ai].name, c)]] = Fraction(0)
            locs[ai] = e.target
        for a, l in zip(n.automata, locs):
            bad = holds(a, a.location(l).invariant, vals)
            if bad is not None:
                raise ReplayError(k, f"target invariant {a.name}.{l}: {bad} fails")
        states.append(State(tuple(locs), tuple(vals)))
    return ReplayResult(tuple(states), now)

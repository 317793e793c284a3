"""Difference bound matrices over a fixed set of clocks.

Entry ``(i, j)`` bounds ``x_i - x_j``; index 0 is the reference clock that is
always zero.  A bound ``(v, strict)`` is packed into one integer
``2*v + (0 if strict else 1)`` so that integer order equals bound order and
addition stays exact; ``INF`` is a sentinel that absorbs addition.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .model import GE, ClockAtom

INF = 1 << 62
LE_ZERO = 1  # (0, <=)
LT_ZERO = 0  # (0, <)


def pack(value: int, strict: bool = False) -> int:
    return (value << 1) | (0 if strict else 1)


def unpack(raw: int) -> tuple[int, bool] | None:
    if raw >= INF:
        return None
    return raw >> 1, not (raw & 1)


def add(a: int, b: int) -> int:
    if a >= INF or b >= INF:
        return INF
    return (((a >> 1) + (b >> 1)) << 1) | (a & b & 1)


@dataclass(frozen=True, order=False)
class Bound:
    """A readable ``(value, strict)`` bound; ``value is None`` means +infinity."""

    value: int | None
    strict: bool = False

    def __post_init__(self):
        if self.value is None and self.strict:
            raise ValueError("(+inf, strict) is not a bound")

    @classmethod
    def from_raw(cls, raw: int) -> "Bound":
        u = unpack(raw)
        return cls(None) if u is None else cls(*u)

    def raw(self) -> int:
        return INF if self.value is None else pack(self.value, self.strict)

    def __lt__(self, other):
        return self.raw() < other.raw()

    def __le__(self, other):
        return self.raw() <= other.raw()

    def __add__(self, other):
        return Bound.from_raw(add(self.raw(), other.raw()))

    def __str__(self):
        if self.value is None:
            return "<inf"
        return f"{'<' if self.strict else '<='}{self.value}"


class DBM:
    """An immutable zone.  ``clocks`` names indices ``1..n``."""

    __slots__ = ("clocks", "dim", "m", "empty")

    def __init__(self, clocks: Sequence[str], m, empty: bool = False):
        self.clocks = tuple(clocks)
        self.dim = len(self.clocks) + 1
        self.m = tuple(m)
        self.empty = empty

    # constructors -------------------------------------------------------

    @classmethod
    def zero(cls, clocks: Sequence[str]) -> "DBM":
        d = len(clocks) + 1
        return cls(clocks, [LE_ZERO] * (d * d))

    @classmethod
    def universe(cls, clocks: Sequence[str]) -> "DBM":
        d = len(clocks) + 1
        m = [INF] * (d * d)
        for i in range(d):
            m[i * d + i] = LE_ZERO
            m[i] = LE_ZERO  # row 0: -x_j <= 0
        return cls(clocks, m)

    @classmethod
    def from_bounds(cls, clocks: Sequence[str], rows) -> "DBM":
        """Build an uncanonical DBM from a square table of :class:`Bound`."""
        flat = [b.raw() if isinstance(b, Bound) else b for row in rows for b in row]
        return cls(clocks, flat)

    # access --------------------------------------------------------------

    def index(self, clock: str) -> int:
        return self.clocks.index(clock) + 1

    def raw(self, i: int, j: int) -> int:
        return self.m[i * self.dim + j]

    def bound(self, i: int, j: int) -> Bound:
        return Bound.from_raw(self.raw(i, j))

    def upper(self, clock: str) -> Bound:
        i = self.index(clock)
        return self.bound(i, 0)

    def lower(self, clock: str) -> Bound:
        """The constraint on ``-x``; ``Bound(-5)`` means ``x >= 5``."""
        return self.bound(0, self.index(clock))

    def contains(self, valuation) -> bool:
        """Membership of a valuation (mapping or sequence indexed like ``clocks``)."""
        if self.empty:
            return False
        if isinstance(valuation, dict):
            vals = [Fraction(0)] + [Fraction(valuation[c]) for c in self.clocks]
        else:
            vals = [Fraction(0)] + [Fraction(v) for v in valuation]
        if any(v < 0 for v in vals):
            return False
        d = self.dim
        for i in range(d):
            for j in range(d):
                raw = self.m[i * d + j]
                if raw >= INF:
                    continue
                diff = vals[i] - vals[j]
                lim = raw >> 1
                if diff > lim or (diff == lim and not raw & 1):
                    return False
        return True

    def __eq__(self, other):
        if not isinstance(other, DBM):
            return NotImplemented
        if self.empty or other.empty:
            return self.empty and other.empty and self.clocks == other.clocks
        return self.clocks == other.clocks and self.m == other.m

    def __hash__(self):
        return hash((self.clocks, None if self.empty else self.m))

    def __repr__(self):
        if self.empty:
            return "DBM(empty)"
        return f"DBM({self.describe()})"

    def describe(self) -> str:
        names = ("0",) + self.clocks
        parts = []
        d = self.dim
        for i in range(d):
            for j in range(d):
                if i == j:
                    continue
                raw = self.m[i * d + j]
                if raw >= INF or (i == 0 and raw == LE_ZERO):
                    continue
                v, strict = unpack(raw)
                op = "<" if strict else "<="
                if j == 0:
                    parts.append(f"{names[i]}{op}{v}")
                elif i == 0:
                    parts.append(f"{names[j]}{'>' if strict else '>='}{-v}")
                else:
                    parts.append(f"{names[i]}-{names[j]}{op}{v}")
        return ", ".join(parts) or "true"


def _closure(m: list, d: int) -> bool:
    """Floyd-Warshall in place; returns False when a negative cycle exists."""
    for k in range(d):
        rk = k * d
        for i in range(d):
            ik = m[i * d + k]
            if ik >= INF:
                continue
            ri = i * d
            for j in range(d):
                kj = m[rk + j]
                if kj >= INF:
                    continue
                s = (((ik >> 1) + (kj >> 1)) << 1) | (ik & kj & 1)
                if s < m[ri + j]:
                    m[ri + j] = s
        if m[k * d + k] < LE_ZERO:
            return False
    return all(m[i * d + i] >= LE_ZERO for i in range(d))


def canonicalize(z: DBM) -> DBM:
    """Tightest equivalent matrix; empty zones come back with ``empty`` set."""
    if z.empty:
        return z
    m = list(z.m)
    if not _closure(m, z.dim):
        return DBM(z.clocks, m, empty=True)
    return DBM(z.clocks, m)


def is_canonical(z: DBM) -> bool:
    if z.empty:
        return True
    d = z.dim
    m = z.m
    for i in range(d):
        if m[i * d + i] != LE_ZERO:
            return False
        for j in range(d):
            for k in range(d):
                if add(m[i * d + k], m[k * d + j]) < m[i * d + j]:
                    return False
    return True


def delay_up(z: DBM) -> DBM:
    if z.empty:
        return z
    m = list(z.m)
    d = z.dim
    for i in range(1, d):
        m[i * d] = INF
    return DBM(z.clocks, m)


def constrain_raw(z: DBM, i: int, j: int, raw: int) -> DBM:
    """Intersect with ``x_i - x_j <= raw`` and restore canonical form."""
    if z.empty:
        return z
    d = z.dim
    m = z.m
    if raw >= m[i * d + j]:
        return z
    if add(raw, m[j * d + i]) < LE_ZERO:
        return DBM(z.clocks, m, empty=True)
    m = list(m)
    m[i * d + j] = raw
    for k in range(d):
        ki = m[k * d + i]
        if ki >= INF:
            continue
        via = add(ki, raw)
        rk = k * d
        for l in range(d):
            s = add(via, m[j * d + l])
            if s < m[rk + l]:
                m[rk + l] = s
    return DBM(z.clocks, m)


def constrain(z: DBM, atom: ClockAtom) -> DBM:
    i = z.index(atom.clock)
    if atom.op == GE:
        return constrain_raw(z, 0, i, pack(-atom.bound))
    return constrain_raw(z, i, 0, pack(atom.bound))


def constrain_all(z: DBM, atoms, clock_index=None) -> DBM:
    for at in atoms:
        if z.empty:
            break
        i = clock_index(at) if clock_index else z.index(at.clock)
        if at.op == GE:
            z = constrain_raw(z, 0, i, pack(-at.bound))
        else:
            z = constrain_raw(z, i, 0, pack(at.bound))
    return z


def reset(z: DBM, clocks) -> DBM:
    """Pin the given clocks (names or indices) to zero."""
    if z.empty:
        return z
    idx = [c if isinstance(c, int) else z.index(c) for c in clocks]
    if not idx:
        return z
    m = list(z.m)
    d = z.dim
    for i in idx:
        for j in range(d):
            m[i * d + j] = m[j]          # x_i - x_j  <=  0 - x_j
            m[j * d + i] = m[j * d]      # x_j - x_i  <=  x_j - 0
        m[i * d + i] = LE_ZERO
    return DBM(z.clocks, m)


def includes(z1: DBM, z2: DBM) -> bool:
    """True iff every valuation of ``z2`` lies in ``z1`` (both canonical)."""
    if z2.empty:
        return True
    if z1.empty:
        return False
    return all(b <= a for a, b in zip(z1.m, z2.m))


def extrapolate(z: DBM, max_const) -> DBM:
    """Classic maximal-constant normalization.

    ``max_const`` maps clock name (or is a sequence indexed like ``clocks``)
    to the largest constant the clock is ever compared with.
    """
    if z.empty:
        return z
    if isinstance(max_const, dict):
        k = [0] + [max_const.get(c, 0) for c in z.clocks]
    else:
        k = [0] + list(max_const)
    d = z.dim
    m = list(z.m)
    changed = False
    for i in range(d):
        upper = pack(k[i])
        for j in range(d):
            if i == j:
                continue
            raw = m[i * d + j]
            if raw >= INF:
                continue
            if raw > upper:
                m[i * d + j] = INF
                changed = True
            else:
                lower = pack(-k[j], strict=True)
                if raw < lower:
                    m[i * d + j] = lower
                    changed = True
    if not changed:
        return z
    return canonicalize(DBM(z.clocks, m))

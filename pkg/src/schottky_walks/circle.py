"""Points, arcs and finite unions of arcs on the circle R/Z, plus measures.

An :class:`ElementarySet` is stored as a cell complex. The sorted
breakpoints ``p_0 < ... < p_{k-1}`` in [0, 1) cut the circle into points and
open gaps; every cell carries a membership flag. A set with no breakpoints
is either the full circle or empty. Normalization drops every breakpoint
whose flag agrees with both neighbouring gaps, so equal sets have equal
representations.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Sequence

from .numeric import FLOAT_TOL, Q, encode_number, exact, is_exact, mod1, parse_number


def circle_point(x):
    """Normalize a number (or ``"p/q"`` string) to a point of [0, 1)."""
    if isinstance(x, str):
        x = exact(x)
    elif isinstance(x, int):
        x = exact(x)
    return mod1(x)


def ccw(x, y, z) -> bool:
    """True iff x, y, z are met in this order going counterclockwise."""
    x, y, z = mod1(x), mod1(y), mod1(z)
    if x == y or y == z or x == z:
        raise ValueError("ccw needs three distinct points")
    return mod1(y - x) < mod1(z - x)


def circle_distance(x, y):
    d = mod1(x - y)
    return min(d, 1 - d)


@dataclass(frozen=True)
class Arc:
    """One connected piece running counterclockwise from ``a`` to ``b``.

    ``a == b`` is either a single point (both ends closed) or the circle
    minus that point (both ends open).
    """

    a: object
    b: object
    closed_a: bool = False
    closed_b: bool = False

    def __post_init__(self):
        object.__setattr__(self, "a", circle_point(self.a))
        object.__setattr__(self, "b", circle_point(self.b))
        if self.a == self.b and self.closed_a != self.closed_b:
            raise ValueError("degenerate arc needs matching endpoint flags")

    @property
    def length(self):
        if self.a == self.b:
            return self.a * 0 if self.closed_a else self.a * 0 + 1
        return mod1(self.b - self.a)

    def contains(self, z) -> bool:
        z = mod1(z)
        if self.a == self.b:
            return (z == self.a) == self.closed_a
        if z == self.a:
            return self.closed_a
        if z == self.b:
            return self.closed_b
        return mod1(z - self.a) < mod1(self.b - self.a)

    def to_set(self) -> "ElementarySet":
        return ElementarySet.from_arcs([self])


class ElementarySet:
    """Finite union of arcs, stored as flagged breakpoints (see module docstring)."""

    __slots__ = ("pts", "pin", "gin", "_hash")

    def __init__(self, pts: Sequence, pin: Sequence[bool], gin: Sequence[bool]):
        self.pts, self.pin, self.gin = _normalize(tuple(pts), tuple(pin), tuple(gin))
        self._hash = None

    # constructors -----------------------------------------------------
    @classmethod
    def full(cls) -> "ElementarySet":
        return FULL

    @classmethod
    def empty(cls) -> "ElementarySet":
        return EMPTY

    @classmethod
    def point(cls, x) -> "ElementarySet":
        return cls((circle_point(x),), (True,), (False,))

    @classmethod
    def finite(cls, xs: Iterable) -> "ElementarySet":
        pts = sorted({circle_point(x) for x in xs})
        return cls(pts, [True] * len(pts), [False] * len(pts))

    @classmethod
    def arc(cls, a, b, closed_a: bool = False, closed_b: bool = False) -> "ElementarySet":
        return cls.from_arcs([Arc(a, b, closed_a, closed_b)])

    @classmethod
    def closed_arc(cls, a, b) -> "ElementarySet":
        return cls.from_arcs([Arc(a, b, True, True)])

    @classmethod
    def from_arcs(cls, arcs: Iterable[Arc]) -> "ElementarySet":
        """Union of arbitrary (possibly overlapping) arcs in O(m log m)."""
        arcs = list(arcs)
        if not arcs:
            return EMPTY
        pts = sorted({arc.a for arc in arcs} | {arc.b for arc in arcs})
        index = {p: i for i, p in enumerate(pts)}
        k = len(pts)
        cells = 2 * k
        diff = [0] * (cells + 1)

        def cover(s, e):
            s %= cells
            e %= cells
            if s <= e:
                diff[s] += 1
                diff[e + 1] -= 1
            else:
                diff[s] += 1
                diff[cells] -= 1
                diff[0] += 1
                diff[e + 1] -= 1

        for arc in arcs:
            ia, ib = index[arc.a], index[arc.b]
            if arc.a == arc.b:
                if arc.closed_a:
                    cover(2 * ia, 2 * ia)
                elif k == 1:
                    cover(1, 1)
                else:
                    cover(2 * ia + 1, 2 * ia - 1)
                continue
            s = 2 * ia if arc.closed_a else 2 * ia + 1
            e = 2 * ib if arc.closed_b else 2 * ib - 1
            cover(s, e)
        flags = []
        run = 0
        for c in range(cells):
            run += diff[c]
            flags.append(run > 0)
        return cls(pts, flags[0::2], flags[1::2])

    # cell lookups -----------------------------------------------------
    def contains(self, z) -> bool:
        z = mod1(z)
        k = len(self.pts)
        if k == 0:
            return self.gin[0]
        i = bisect_right(self.pts, z) - 1
        if i >= 0 and self.pts[i] == z:
            return self.pin[i]
        return self.gin[i % k]

    def _gap_after(self, u) -> bool:
        k = len(self.pts)
        if k == 0:
            return self.gin[0]
        return self.gin[(bisect_right(self.pts, u) - 1) % k]

    def _combine(self, other: "ElementarySet", op) -> "ElementarySet":
        if not self.pts and not other.pts:
            return ElementarySet((), (), (op(self.gin[0], other.gin[0]),))
        pts = sorted(set(self.pts).union(other.pts))
        pin = [op(self.contains(p), other.contains(p)) for p in pts]
        gin = [op(self._gap_after(p), other._gap_after(p)) for p in pts]
        return ElementarySet(pts, pin, gin)

    # boolean algebra --------------------------------------------------
    def union(self, other: "ElementarySet") -> "ElementarySet":
        return self._combine(other, lambda a, b: a or b)

    def intersection(self, other: "ElementarySet") -> "ElementarySet":
        return self._combine(other, lambda a, b: a and b)

    def difference(self, other: "ElementarySet") -> "ElementarySet":
        return self._combine(other, lambda a, b: a and not b)

    def complement(self) -> "ElementarySet":
        return ElementarySet(self.pts, [not f for f in self.pin], [not f for f in self.gin])

    __or__ = union
    __and__ = intersection
    __sub__ = difference
    __invert__ = complement

    def closure(self) -> "ElementarySet":
        k = len(self.pts)
        pin = [self.pin[i] or self.gin[i - 1] or self.gin[i] for i in range(k)]
        return ElementarySet(self.pts, pin, self.gin)

    def interior(self) -> "ElementarySet":
        k = len(self.pts)
        pin = [self.pin[i] and self.gin[i - 1] and self.gin[i] for i in range(k)]
        return ElementarySet(self.pts, pin, self.gin)

    def is_empty(self) -> bool:
        return not self.pts and not self.gin[0]

    def is_full(self) -> bool:
        return not self.pts and self.gin[0]

    def subset(self, other: "ElementarySet", tol=None) -> bool:
        """self ⊆ other. With ``tol`` the test is self ⊆ N_tol(other)."""
        if tol:
            other = eps_neighborhood(other, tol)
        if not self.pts and not other.pts:
            return not (self.gin[0] and not other.gin[0])
        for p in set(self.pts).union(other.pts):
            if self.contains(p) and not other.contains(p):
                return False
            if self._gap_after(p) and not other._gap_after(p):
                return False
        return True

    def intersects(self, other: "ElementarySet") -> bool:
        if not self.pts and not other.pts:
            return self.gin[0] and other.gin[0]
        for p in set(self.pts).union(other.pts):
            if self.contains(p) and other.contains(p):
                return True
            if self._gap_after(p) and other._gap_after(p):
                return True
        return False

    # components -------------------------------------------------------
    def components(self) -> list[Arc]:
        """Connected components in counterclockwise order. Not defined for the full circle."""
        if self.is_full():
            raise ValueError("the full circle is not an arc")
        k = len(self.pts)
        if k == 0:
            return []
        cells = [None] * (2 * k)
        cells[0::2] = self.pin
        cells[1::2] = self.gin
        n = 2 * k
        start = cells.index(False)
        out = []
        c = 1
        while c <= n:
            idx = (start + c) % n
            if not cells[idx]:
                c += 1
                continue
            s = idx
            while c + 1 <= n and cells[(start + c + 1) % n]:
                c += 1
            e = (start + c) % n
            c += 1
            if s % 2 == 0:
                a, ca = self.pts[s // 2], True
            else:
                a, ca = self.pts[(s - 1) // 2], False
            if e % 2 == 0:
                b, cb = self.pts[e // 2], True
            else:
                b, cb = self.pts[((e + 1) // 2) % k], False
            out.append(Arc(a, b, ca, cb))
        out.sort(key=lambda arc: arc.a)
        return out

    def intervals(self) -> list[tuple]:
        """Components as ``(start, length)`` pairs; the full circle is ``[(0, 1)]``."""
        if self.is_full():
            zero = self.pts[0] * 0 if self.pts else 0
            return [(zero, zero + 1)]
        return [(arc.a, arc.length) for arc in self.components()]

    @property
    def n_components(self) -> int:
        if not self.pts:
            return int(self.gin[0])
        cells = [None] * (2 * len(self.pts))
        cells[0::2] = self.pin
        cells[1::2] = self.gin
        return sum(1 for i, c in enumerate(cells) if c and not cells[i - 1])

    @property
    def length(self):
        """Lebesgue measure."""
        if self.is_full():
            return 1
        total = 0
        for arc in self.components():
            total = total + arc.length
        return total

    def sample_point(self):
        """Some point of the set (midpoint of the first component)."""
        if self.is_full():
            return exact(0)
        comps = self.components()
        if not comps:
            raise ValueError("empty set has no points")
        arc = comps[0]
        if arc.a == arc.b and arc.closed_a:
            return arc.a
        return mod1(arc.a + arc.length / 2)

    # conversions ------------------------------------------------------
    def to_float(self) -> "ElementarySet":
        return ElementarySet([float(p) for p in self.pts], self.pin, self.gin)

    def to_exact(self) -> "ElementarySet":
        return ElementarySet([exact(p) for p in self.pts], self.pin, self.gin)

    def to_json(self) -> dict:
        if self.is_full():
            return {"arcs": [], "full": True}
        return {
            "arcs": [
                {"a": encode_number(c.a), "b": encode_number(c.b),
                 "closed_a": c.closed_a, "closed_b": c.closed_b}
                for c in self.components()
            ]
        }

    @classmethod
    def from_json(cls, data: dict) -> "ElementarySet":
        if data.get("full"):
            return FULL
        arcs = []
        for i, item in enumerate(data["arcs"]):
            try:
                arcs.append(Arc(parse_number(item["a"]), parse_number(item["b"]),
                                bool(item.get("closed_a", False)), bool(item.get("closed_b", False))))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"arcs[{i}]: {exc}") from exc
        return cls.from_arcs(arcs)

    # dunder -----------------------------------------------------------
    def __eq__(self, other) -> bool:
        if not isinstance(other, ElementarySet):
            return NotImplemented
        return self.pts == other.pts and self.pin == other.pin and self.gin == other.gin

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.pts, self.pin, self.gin))
        return self._hash

    def __repr__(self) -> str:
        if self.is_full():
            return "ElementarySet(Full)"
        if self.is_empty():
            return "ElementarySet(Empty)"
        parts = []
        for c in self.components():
            lo = "[" if c.closed_a else "("
            hi = "]" if c.closed_b else ")"
            parts.append(f"{lo}{c.a}, {c.b}{hi}")
        return "ElementarySet(" + " ∪ ".join(parts) + ")"


def _normalize(pts, pin, gin):
    k = len(pts)
    if k == 0:
        return (), (), (bool(gin[0]) if gin else False,)
    keep = [i for i in range(k) if not (pin[i] == gin[i - 1] == gin[i])]
    if len(keep) == k:
        return pts, tuple(bool(f) for f in pin), tuple(bool(f) for f in gin)
    if not keep:
        return (), (), (bool(gin[0]),)
    return (tuple(pts[i] for i in keep), tuple(bool(pin[i]) for i in keep),
            tuple(bool(gin[i]) for i in keep))


FULL = ElementarySet((), (), (True,))
EMPTY = ElementarySet((), (), (False,))


def essentially_disjoint(A: ElementarySet, B: ElementarySet) -> bool:
    return not A.closure().intersects(B.closure())


def essentially_contains(A: ElementarySet, B: ElementarySet) -> bool:
    """closure(B) ⊆ interior(A)."""
    return B.closure().subset(A.interior())


def eps_neighborhood(A: ElementarySet, eps, closed: bool = True) -> ElementarySet:
    """Points within distance ``eps`` of A (``<= eps`` by default, ``< eps`` if not closed)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if A.is_empty():
        return EMPTY
    if A.is_full():
        return FULL
    arcs = []
    for start, length in A.intervals():
        span = length + 2 * eps
        if span > 1 or (closed and span == 1):
            return FULL
        a = start - eps
        if span == 1:
            arcs.append(Arc(a, a, False, False))
        else:
            arcs.append(Arc(a, start + length + eps, closed, closed))
    return ElementarySet.from_arcs(arcs)


def closed_gap(A: ElementarySet, B: ElementarySet):
    """Distance between the closures of two nonempty sets (0 when they meet)."""
    if A.closure().intersects(B.closure()):
        return 0
    best = None
    for sa, la in A.intervals():
        for sb, lb in B.intervals():
            d = min(mod1(sb - (sa + la)), mod1(sa - (sb + lb)))
            if best is None or d < best:
                best = d
    return best


# measures ---------------------------------------------------------------

@dataclass(frozen=True)
class Lebesgue:
    def cdf(self, x):
        return x

    def quantile(self, c, right: bool = True):
        return c

    def of(self, A: ElementarySet):
        return A.length if not A.is_full() else 1


@dataclass(frozen=True)
class Atomic:
    """Finitely many atoms given as ``(point, weight)`` pairs."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple((circle_point(p), w) for p, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        total = sum(w for _, w in atoms)
        if any(w < 0 for _, w in atoms):
            raise ValueError("atom weights must be non-negative")
        if all(is_exact(w) for _, w in atoms):
            if total != 1:
                raise ValueError(f"atom weights sum to {total}, not 1")
        elif abs(total - 1) > 1e-12:
            raise ValueError(f"atom weights sum to {total}, not 1")

    def of(self, A: ElementarySet):
        return sum((w for p, w in self.atoms if A.contains(p)), 0 * self.atoms[0][1] if self.atoms else 0)


@dataclass(frozen=True)
class CantorCdf:
    """Cantor distribution approximated by its level-``depth`` ternary construction."""

    depth: int = 40

    def cdf(self, x):
        if x >= 1:
            return x * 0 + 1
        if x <= 0:
            return x * 0
        if is_exact(x):
            return self._cdf_exact(exact(x))
        total = x * 0
        scale = x * 0 + 1
        for _ in range(self.depth):
            x = x * 3
            digit = int(x // 1)
            x = x - digit
            scale = scale / 2
            if digit == 1:
                return total + scale
            if digit == 2:
                total = total + scale
        return total + x * scale

    def quantile(self, c, right: bool = True):
        """Inverse of :meth:`cdf` on [0, 1]; flat pieces resolve to their right (or left) end."""
        if c >= 1:
            return c * 0 + 1
        if c <= 0:
            return c * 0
        if is_exact(c):
            return self._quantile_exact(exact(c), right)
        y = c * 0
        scale = c * 0 + 1
        for _ in range(self.depth):
            scale = scale / 3
            c2 = 2 * c
            if c2 < 1:
                c = c2
            elif c2 > 1:
                y = y + 2 * scale
                c = c2 - 1
            else:
                return y + (2 * scale if right else scale)
        return y + c * scale

    # the exact digit loops run on integer numerators and build one rational at the end

    def _cdf_exact(self, x):
        p, q = int(x.numerator), int(x.denominator)
        total = 0
        for k in range(1, self.depth + 1):
            digit, p = divmod(3 * p, q)
            total <<= 1
            if digit == 1:
                return Q(total + 1, 2 ** k)
            if digit == 2:
                total += 1
        k = self.depth
        return Q(total, 2 ** k) + Q(p, q * 2 ** k)

    def _quantile_exact(self, c, right):
        p, q = int(c.numerator), int(c.denominator)
        y = 0
        for k in range(1, self.depth + 1):
            p *= 2
            y *= 3
            if p > q:
                y += 2
                p -= q
            elif p == q:
                return Q(y + (2 if right else 1), 3 ** k)
        k = self.depth
        return Q(y, 3 ** k) + Q(p, q * 3 ** k)

    def of(self, A: ElementarySet):
        total = 0
        for start, length in A.intervals():
            total = total + _arc_cdf_mass(self.cdf, start, length)
        return total


def _arc_cdf_mass(cdf, start, length):
    end = start + length
    if end <= 1:
        return cdf(end) - cdf(start)
    return (1 - cdf(start)) + cdf(end - 1)


def measure_of(m, A: ElementarySet):
    return m.of(A)


def open_arc_mass(m, start, length):
    """Measure of the open arc (start, start+length) with 0 ≤ length ≤ 1."""
    if isinstance(m, Lebesgue):
        return length
    if isinstance(m, CantorCdf):
        return _arc_cdf_mass(m.cdf, mod1(start), length)
    if length <= 0:
        return 0
    s = mod1(start)
    total = 0
    for p, w in m.atoms:
        d = mod1(p - s)
        if 0 < d < length:
            total = total + w
    return total


def within_tolerance(A: ElementarySet, B: ElementarySet) -> bool:
    """A ⊆ B up to the float predicate tolerance."""
    return A.subset(B, tol=FLOAT_TOL)

"""Piecewise-linear circle homeomorphisms.

A map is stored through a lift ``F: R -> R`` with ``F(x + 1) = F(x) + degree``.
Breakpoints ``xs`` are sorted in [0, 1) and ``ys[i] = F(xs[i])`` are lifted
values, with ``ys[0]`` normalized into [0, 1). Between consecutive
breakpoints (cyclically) the lift is affine.
"""
from __future__ import annotations

import json
import math
from bisect import bisect_right
from typing import Iterable, Sequence

from .circle import Arc, ElementarySet, FULL, EMPTY
from .numeric import Q, encode_number, exact, mod1, parse_number

BREAKPOINT_CAP = 100_000


class BreakpointLimitError(RuntimeError):
    pass


class UnsupportedModeError(ValueError):
    pass


class PLHomeo:
    __slots__ = ("xs", "ys", "degree", "slopes", "_inverse", "_hash")

    def __init__(self, xs: Sequence, ys: Sequence, degree: int = 1, *,
                 simplify: bool = True, check: bool = True, cap: int = BREAKPOINT_CAP):
        if degree not in (1, -1):
            raise ValueError("degree must be +1 or -1")
        xs = list(xs)
        ys = list(ys)
        if not xs or len(xs) != len(ys):
            raise ValueError("need at least one breakpoint and matching lifts")
        if check:
            for i in range(len(xs) - 1):
                if not xs[i] < xs[i + 1]:
                    raise ValueError("breakpoints must be strictly increasing")
            if not (0 <= xs[0] and xs[-1] < 1):
                raise ValueError("breakpoints must lie in [0, 1)")
        slopes = _slopes(xs, ys, degree)
        if check:
            strict = not isinstance(xs[0], float)
            for s in slopes:
                if (s * degree <= 0) if strict else (s * degree < 0):
                    raise ValueError("lifted values must be strictly monotone")
        if simplify and len(xs) > 1:
            xs, ys, slopes = _drop_collinear(xs, ys, slopes, degree)
        if len(xs) == 1:
            # isometry: canonical breakpoint at 0
            y0 = ys[0] - degree * xs[0]
            xs, ys = [xs[0] * 0], [y0]
            slopes = [xs[0] * 0 + degree]
        shift = math.floor(ys[0])
        if shift:
            ys = [y - shift for y in ys]
        if len(xs) > cap:
            raise BreakpointLimitError(f"{len(xs)} breakpoints exceed the cap {cap}")
        self.xs = tuple(xs)
        self.ys = tuple(ys)
        self.degree = degree
        self.slopes = tuple(slopes)
        self._inverse = None
        self._hash = None

    # constructors -----------------------------------------------------
    @classmethod
    def from_breakpoints(cls, pairs: Iterable, degree: int = 1) -> "PLHomeo":
        """Build from ``(x, y)`` pairs given mod 1; lifts are unwrapped monotonically."""
        pts = []
        for x, y in pairs:
            x = exact(x) if not isinstance(x, float) else x
            y = exact(y) if not isinstance(y, float) else y
            pts.append((mod1(x), mod1(y)))
        pts.sort(key=lambda p: p[0])
        for i in range(len(pts) - 1):
            if pts[i][0] == pts[i + 1][0]:
                raise ValueError("duplicate breakpoint")
        xs = [p[0] for p in pts]
        ys = [pts[0][1]]
        for _, y in pts[1:]:
            prev = ys[-1]
            if degree == 1:
                lifted = prev + mod1(y - prev)
                if lifted == prev:
                    raise ValueError("lifted values must be strictly monotone")
            else:
                lifted = prev - mod1(prev - y)
                if lifted == prev:
                    raise ValueError("lifted values must be strictly monotone")
            ys.append(lifted)
        if len(xs) > 1:
            if degree == 1 and not ys[-1] < ys[0] + 1:
                raise ValueError("breakpoints do not describe a homeomorphism")
            if degree == -1 and not ys[-1] > ys[0] - 1:
                raise ValueError("breakpoints do not describe a homeomorphism")
        return cls(xs, ys, degree)

    @classmethod
    def identity(cls) -> "PLHomeo":
        return cls([Q(0)], [Q(0)], 1)

    @classmethod
    def rotation(cls, theta) -> "PLHomeo":
        theta = exact(theta) if not isinstance(theta, float) else theta
        return cls([theta * 0], [mod1(theta)], 1)

    @classmethod
    def reflection(cls, c=0) -> "PLHomeo":
        """x ↦ c − x."""
        c = exact(c) if not isinstance(c, float) else c
        return cls([c * 0], [mod1(c)], -1)

    # evaluation -------------------------------------------------------
    def lift01(self, x):
        """Lift evaluated at x ∈ [0, 1)."""
        xs = self.xs
        i = bisect_right(xs, x) - 1
        if i < 0:
            k = len(xs) - 1
            return self.ys[k] - self.degree + self.slopes[k] * (x - xs[k] + 1)
        return self.ys[i] + self.slopes[i] * (x - xs[i])

    def eval_lift(self, x):
        if 0 <= x < 1:
            return self.lift01(x)
        n = math.floor(x)
        return self.lift01(x - n) + n * self.degree

    def apply(self, x):
        return mod1(self.eval_lift(x))

    __call__ = apply

    def preimage(self, y):
        """The unique x ∈ [0, 1) with f(x) = y (mod 1)."""
        ys, xs = self.ys, self.xs
        k = len(xs)
        y0 = ys[0]
        if self.degree == 1:
            t = y0 + mod1(y - y0)
            i = bisect_right(ys, t) - 1
        else:
            t = y0 - mod1(y0 - y)
            # ys is decreasing: largest i with ys[i] >= t
            lo, hi = 0, k
            while lo < hi:
                mid = (lo + hi) // 2
                if ys[mid] >= t:
                    lo = mid + 1
                else:
                    hi = mid
            i = lo - 1
        s = self.slopes[i]
        if s == 0:
            return xs[i]
        return mod1(xs[i] + (t - ys[i]) / s)

    # group operations -------------------------------------------------
    def is_identity(self) -> bool:
        return len(self.xs) == 1 and self.degree == 1 and self.ys[0] == 0 and self.xs[0] == 0

    def compose(self, g: "PLHomeo") -> "PLHomeo":
        """self ∘ g."""
        if g.is_identity():
            return self
        if self.is_identity():
            return g
        cand = set(g.xs)
        for x in self.xs:
            cand.add(g.preimage(x))
        xs = sorted(cand)
        f_lift, g_lift = self.eval_lift, g.lift01
        ys = [f_lift(g_lift(x)) for x in xs]
        return PLHomeo(xs, ys, self.degree * g.degree, check=False)

    __matmul__ = compose

    def inverse(self) -> "PLHomeo":
        if self._inverse is None:
            deg = self.degree
            pairs = []
            for x, y in zip(self.xs, self.ys):
                m = math.floor(y)
                pairs.append((y - m, x - deg * m))
            pairs.sort(key=lambda p: p[0])
            inv = PLHomeo([p[0] for p in pairs], [p[1] for p in pairs], deg,
                          check=False, simplify=False)
            inv._inverse = self
            self._inverse = inv
        return self._inverse

    def power(self, n: int) -> "PLHomeo":
        base = self if n >= 0 else self.inverse()
        out = PLHomeo.identity() if self.is_exact else PLHomeo.identity().to_float()
        for _ in range(abs(n)):
            out = base.compose(out)
        return out

    # sets -------------------------------------------------------------
    def apply_set(self, A: ElementarySet) -> ElementarySet:
        return apply_set(self, A)

    # fixed points -----------------------------------------------------
    @property
    def is_exact(self) -> bool:
        return not isinstance(self.xs[0], float)

    def fixed_points(self) -> ElementarySet:
        return fixed_points(self)

    # conversion -------------------------------------------------------
    def to_float(self) -> "PLHomeo":
        if not self.is_exact:
            return self
        return PLHomeo([float(x) for x in self.xs], [float(y) for y in self.ys], self.degree,
                       check=False, simplify=False)

    def to_json(self) -> dict:
        return {"degree": self.degree,
                "breakpoints": [[encode_number(x), encode_number(y)] for x, y in zip(self.xs, self.ys)]}

    @classmethod
    def from_json(cls, data: dict) -> "PLHomeo":
        degree = int(data.get("degree", 1))
        pairs = [(parse_number(x), parse_number(y)) for x, y in data["breakpoints"]]
        return cls.from_breakpoints(pairs, degree)

    def __len__(self) -> int:
        return len(self.xs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PLHomeo):
            return NotImplemented
        return self.degree == other.degree and self.xs == other.xs and self.ys == other.ys

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.degree, self.xs, self.ys))
        return self._hash

    def __repr__(self) -> str:
        pts = ", ".join(f"({x}, {y})" for x, y in zip(self.xs[:4], self.ys[:4]))
        more = "" if len(self.xs) <= 4 else f", … {len(self.xs)} total"
        return f"PLHomeo(deg={self.degree}, [{pts}{more}])"


def _slopes(xs, ys, degree):
    k = len(xs)
    out = []
    for i in range(k):
        if i + 1 < k:
            dx, dy = xs[i + 1] - xs[i], ys[i + 1] - ys[i]
        else:
            dx, dy = xs[0] + 1 - xs[i], ys[0] + degree - ys[i]
        out.append(dy / dx)
    return out


def _drop_collinear(xs, ys, slopes, degree):
    k = len(xs)
    keep = [i for i in range(k) if slopes[i - 1] != slopes[i]]
    if len(keep) == k:
        return xs, ys, slopes
    if not keep:
        return [xs[0]], [ys[0]], [slopes[0]]
    xs = [xs[i] for i in keep]
    ys = [ys[i] for i in keep]
    return xs, ys, [slopes[i] for i in keep]


def identity() -> PLHomeo:
    return PLHomeo.identity()


def rotation(theta) -> PLHomeo:
    return PLHomeo.rotation(theta)


def compose(f: PLHomeo, g: PLHomeo) -> PLHomeo:
    return f.compose(g)


def compose_all(maps: Iterable[PLHomeo]) -> PLHomeo:
    """m_1 ∘ m_2 ∘ … ∘ m_k."""
    maps = list(maps)
    if not maps:
        return PLHomeo.identity()
    out = maps[-1]
    for m in reversed(maps[:-1]):
        out = m.compose(out)
    return out


def invert(f: PLHomeo) -> PLHomeo:
    return f.inverse()


def apply(f: PLHomeo, x):
    return f.apply(x)


def apply_set(f: PLHomeo, A: ElementarySet) -> ElementarySet:
    """Image f(A). Gaps follow their endpoints; orientation flips for degree −1."""
    if not A.pts:
        return A
    k = len(A.pts)
    vals = [f.apply(p) for p in A.pts]
    if f.degree == 1:
        cells = [(vals[i], A.pin[i], A.gin[i]) for i in range(k)]
    else:
        cells = [(vals[i], A.pin[i], A.gin[i - 1]) for i in reversed(range(k))]
    start = min(range(k), key=lambda i: cells[i][0])
    cells = cells[start:] + cells[:start]
    pts, pin, gin = [], [], []
    for v, p, g in cells:
        if pts and v == pts[-1]:
            # float collapse: merge the vanished gap into the point
            pin[-1] = pin[-1] or gin[-1] or p
            gin[-1] = g
            continue
        pts.append(v)
        pin.append(p)
        gin.append(g)
    if len(pts) > 1 and pts[-1] == pts[0]:
        pin[0] = pin[0] or pin[-1] or gin[-1]
        pts.pop(), pin.pop(), gin.pop()
    return ElementarySet(pts, pin, gin)


def fixed_points(f: PLHomeo) -> ElementarySet:
    """All solutions of f(x) = x as an elementary set (points and closed arcs)."""
    if not f.is_exact:
        raise UnsupportedModeError("fixed_points needs exact arithmetic")
    xs, ys, deg = f.xs, f.ys, f.degree
    k = len(xs)
    arcs = []
    for i in range(k):
        x0, y0 = xs[i], ys[i]
        if i + 1 < k:
            x1, y1 = xs[i + 1], ys[i + 1]
        else:
            x1, y1 = xs[0] + 1, ys[0] + deg
        d0, d1 = y0 - x0, y1 - x1
        if d0 == d1:
            if d0 == math.floor(d0):
                if x1 - x0 == 1:
                    return FULL
                arcs.append(Arc(x0, x1, True, True))
            continue
        lo, hi = min(d0, d1), max(d0, d1)
        for n in range(math.ceil(lo), math.floor(hi) + 1):
            x = x0 + (n - d0) / (d1 - d0) * (x1 - x0)
            arcs.append(Arc(x, x, True, True))
    if not arcs:
        return EMPTY
    return ElementarySet.from_arcs(arcs)


def one_sided_slopes(f: PLHomeo, p):
    """(left slope, right slope) of f at p."""
    xs = f.xs
    i = bisect_right(xs, p) - 1
    k = len(xs)
    right = f.slopes[i % k]
    left = f.slopes[(i - 1) % k] if i >= 0 and xs[i] == p else right
    return left, right


def classify_fixed_points(f: PLHomeo) -> dict:
    """Split isolated fixed points into attracting, repelling and neutral ones."""
    fix = fixed_points(f)
    out = {"attracting": [], "repelling": [], "neutral": [], "segments": []}
    if fix.is_full():
        out["segments"].append(None)
        return out
    for arc in fix.components():
        if arc.a == arc.b and arc.closed_a:
            left, right = one_sided_slopes(f, arc.a)
            if abs(left) < 1 and abs(right) < 1:
                out["attracting"].append(arc.a)
            elif abs(left) > 1 and abs(right) > 1:
                out["repelling"].append(arc.a)
            else:
                out["neutral"].append(arc.a)
        else:
            out["segments"].append(arc)
    return out


def random_homeo(rng, n_breakpoints: int = 4, denominator: int = 1 << 12, degree: int = 1) -> PLHomeo:
    """Random PL homeomorphism with rational breakpoints on a grid of the given denominator."""
    k = max(1, int(n_breakpoints))
    xs = sorted({int(v) for v in rng.choice(denominator, size=k, replace=False)})
    ys = sorted({int(v) for v in rng.choice(denominator, size=len(xs), replace=False)})
    shift = int(rng.integers(denominator))
    pairs = [(Q(x, denominator), Q(y + shift, denominator)) for x, y in zip(xs, ys)]
    if degree == -1:
        pairs = [(x, Q(shift, denominator) - (y - Q(shift, denominator))) for x, y in pairs]
    return PLHomeo.from_breakpoints(pairs, degree)


def dump_maps(maps: dict) -> str:
    return json.dumps([{"name": name, **m.to_json()} for name, m in maps.items()], indent=2)


def load_maps(text: str) -> dict:
    data = json.loads(text)
    out = {}
    for i, item in enumerate(data):
        try:
            out[item.get("name", f"map{i}")] = PLHomeo.from_json(item)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"[{i}]: {exc}") from exc
    return out

"""Budgeted searches for contraction, repellers and Schottky pairs in finitely generated semigroups.

Every positive answer comes with a witness (a word, a map, a pair of maps
with their ping-pong sets) that has been re-checked exactly. ``None`` only
means the budget ran out.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

from .circle import Arc, ElementarySet, eps_neighborhood
from .homeo import PLHomeo, apply_set, compose_all
from .numeric import Q, exact, mod1
from .schottky import is_schottky_pair


@dataclass(frozen=True)
class SearchBudget:
    depth: int = 12
    tol: float = 1e-6
    grid: int = 1024
    beam: int = 64
    repeller_grid: int = 256
    levels: int = 10

    def __post_init__(self):
        if min(self.depth, self.grid, self.beam, self.repeller_grid, self.levels) < 1 or not self.tol > 0:
            raise ValueError("search budgets must be positive")


def diameter(A: ElementarySet):
    """Length of the shortest closed arc containing A."""
    if A.is_empty():
        return 0
    if A.is_full():
        return 1
    arcs = A.components()
    if len(arcs) == 1:
        return arcs[0].length
    gaps = [mod1(arcs[(i + 1) % len(arcs)].a - arcs[i].b) for i in range(len(arcs))]
    return 1 - max(gaps)


class SemigroupBall:
    """Words of length ≤ depth in the generators, deduplicated by their maps.

    A word ``(i1, …, il)`` stands for g_{i1} ∘ … ∘ g_{il}; the empty word is
    the identity. Elements come out level by level in lexicographic order.
    """

    def __init__(self, generators: Sequence[PLHomeo], depth: int):
        if depth < 0:
            raise ValueError("depth must be non-negative")
        self.generators = tuple(generators)
        self.depth = depth
        self._elements: Optional[list] = None

    def __iter__(self) -> Iterator[tuple]:
        if self._elements is not None:
            yield from self._elements
            return
        out = []
        seen = {PLHomeo.identity()}
        level = [((), PLHomeo.identity())]
        out.extend(level)
        yield level[0]
        for _ in range(self.depth):
            nxt = []
            for i, g in enumerate(self.generators):
                for word, h in level:
                    m = g.compose(h)
                    if m in seen:
                        continue
                    seen.add(m)
                    nxt.append(((i,) + word, m))
                    yield nxt[-1]
            out.extend(nxt)
            level = nxt
            if not level:
                break
        self._elements = out

    @property
    def elements(self) -> list:
        if self._elements is None:
            for _ in self:
                pass
        return self._elements

    def word_map(self, word: Sequence[int]) -> PLHomeo:
        return compose_all(self.generators[i] for i in word)

    def __len__(self) -> int:
        return len(self.elements)


def _as_set(A) -> ElementarySet:
    return A.to_set() if isinstance(A, Arc) else A


def contraction_infimum(ball: SemigroupBall, A, stop_below=None) -> tuple:
    """(min diameter of g(A) over the ball, achieving word), by breadth-first search on images.

    ``stop_below`` ends the search at the first image at most that small.
    """
    A = _as_set(A)
    best, best_word = diameter(A), ()
    if stop_below is not None and best <= stop_below:
        return best, best_word
    seen = {A}
    level = [((), A)]
    for _ in range(ball.depth):
        nxt = []
        for i, g in enumerate(ball.generators):
            for word, B in level:
                C = apply_set(g, B)
                if C in seen:
                    continue
                seen.add(C)
                w = (i,) + word
                nxt.append((w, C))
                d = diameter(C)
                if d < best:
                    best, best_word = d, w
                    if stop_below is not None and best <= stop_below:
                        return best, best_word
        level = nxt
        if not level:
            break
    return best, best_word


def beam_contraction(ball: SemigroupBall, A, tol, beam: int = 64) -> tuple:
    """Greedy variant of :func:`contraction_infimum` keeping the ``beam`` smallest images per level."""
    A = _as_set(A)
    best, best_word = diameter(A), ()
    if best <= tol:
        return best, best_word
    level = [((), A)]
    seen = {A}
    for _ in range(ball.depth):
        nxt = []
        for word, B in level:
            for i, g in enumerate(ball.generators):
                C = apply_set(g, B)
                if C in seen:
                    continue
                seen.add(C)
                nxt.append((diameter(C), (i,) + word, C))
        if not nxt:
            break
        nxt.sort(key=lambda e: (e[0], e[1]))
        if nxt[0][0] < best:
            best, best_word = nxt[0][0], nxt[0][1]
            if best <= tol:
                break
        level = [(w, C) for _, w, C in nxt[:beam]]
    return best, best_word


def _verified_contraction(ball, A, tol, word) -> bool:
    return diameter(apply_set(ball.word_map(word), _as_set(A))) <= tol


def find_contractible_eps(ball: SemigroupBall, tol=1e-4, grid: int = 1024):
    """Largest dyadic ε such that every closed grid arc of length ε contracts below tol in the ball.

    Contractibility is inherited by sub-arcs, so only arcs of length exactly
    ε need checking, and ε is raised until the first failure.
    """
    tol = exact(tol)
    found = None
    size = 1
    while size < grid:
        eps = Q(size, grid)
        ok = True
        for k in range(grid):
            A = ElementarySet.closed_arc(Q(k, grid), Q(k, grid) + eps)
            value, word = contraction_infimum(ball, A, stop_below=tol)
            if value > tol or not _verified_contraction(ball, A, tol, word):
                ok = False
                break
        if not ok:
            break
        found = eps
        size *= 2
    return found


def detect_repeller(ball: SemigroupBall, budget: SearchBudget = SearchBudget(), radius=None) -> list:
    """Grid points x whose closed complement S¹ ∖ (x − r, x + r) contracts below tol.

    Contracting that complement contracts every grid arc in it, so the
    arcs need not be listed. Positive evidence only.
    """
    grid = budget.repeller_grid
    r = exact(radius) if radius is not None else Q(1, grid)
    tol = exact(budget.tol)
    out = []
    for k in range(grid):
        x = Q(k, grid)
        C = ElementarySet.closed_arc(x + r, x - r)
        value, word = beam_contraction(ball, C, tol, budget.beam)
        if value <= tol and _verified_contraction(ball, C, tol, word):
            out.append(x)
    return out


def firm_interval(ball: SemigroupBall, x, budget: SearchBudget = SearchBudget()) -> Arc:
    """Inner approximation [x, y*] of Firm(x): the largest grid y with [x, y] contracting below tol."""
    x = exact(x)
    grid = budget.grid
    tol = exact(budget.tol)

    def contracts(j):
        A = ElementarySet.closed_arc(x, x + Q(j, grid))
        value, word = beam_contraction(ball, A, tol, budget.beam)
        return value <= tol and _verified_contraction(ball, A, tol, word)

    lo, hi = 0, grid - 1
    if not contracts(1):
        return Arc(x, x, True, True)
    lo = 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if contracts(mid):
            lo = mid
        else:
            hi = mid - 1
    return Arc(x, x + Q(lo, grid), True, True)


def firm_pair_search(ball: SemigroupBall, budget: SearchBudget = SearchBudget(), points: int = 16):
    """Grid points x, y with Firm(x) ⊆ [x, y] and Firm(y) ⊆ [y, x], using inner approximations."""
    xs = [Q(k, points) for k in range(points)]
    reach = {x: firm_interval(ball, x, budget).length for x in xs}
    for x in xs:
        for y in xs:
            if x != y and reach[x] <= mod1(y - x) and reach[y] <= mod1(x - y):
                return x, y
    return None


def neumann_separate(ball: SemigroupBall, A, B) -> Optional[PLHomeo]:
    """First ball element g (breadth-first order) with g(A) ∩ B = ∅."""
    A = [exact(a) for a in A]
    B = {mod1(exact(b)) for b in B}
    for _, g in ball:
        if all(g.apply(a) not in B for a in A):
            return g
    return None


def schottky_from_repeller(ball: SemigroupBall, budget: SearchBudget = SearchBudget(), repellers=None):
    """Build a verified Schottky pair (f1, f2, U1, U2, V1, V2) near a detected repeller, or None.

    For shrinking arcs I around the repeller x a word g contracting S¹ ∖ I
    is found, with image J. Taking y in the shortest J, two separating
    elements g, h give the pair (g_I, h g_I g) on (I, J, g⁻¹I, hJ).
    """
    cands = repellers if repellers is not None else detect_repeller(ball, budget)
    tol = exact(budget.tol)
    for x in cands:
        x = exact(x)
        levels = []
        for j in range(1, budget.levels + 1):
            h = Q(1, 2 ** (j + 2))
            I = ElementarySet.arc(x - h, x + h)
            C = I.complement()
            value, word = beam_contraction(ball, C, tol, budget.beam)
            if not word:
                continue
            g_j = ball.word_map(word)
            J = apply_set(g_j, C)
            levels.append((diameter(J), j, I, g_j, J))
        if not levels:
            continue
        levels.sort(key=lambda e: (e[0], e[1]))
        J0 = levels[0][4]
        y = _midpoint(J0)
        if y == x:
            continue
        g = neumann_separate(ball, [x, y], [x])
        if g is None:
            continue
        gx = g.inverse().apply(x)
        hmap = neumann_separate(ball, [y], [x, y, gx])
        if hmap is None:
            continue
        for _, _, I, g_j, J in levels:
            pair = _pair_from_level(g_j, I, J, g, hmap)
            if pair is not None:
                return pair
    return None


def _midpoint(A: ElementarySet):
    if A.is_full():
        return A.pts[0] if A.pts else Q(0)
    arc = A.components()[0]
    return mod1(arc.a + arc.length / 2)


def _pair_from_level(g_j, I, J, g, h):
    f1 = g_j
    f2 = h.compose(g_j).compose(g)
    U1, U2 = I, apply_set(g.inverse(), I)
    eta = Q(1, 8)
    for _ in range(30):
        V1 = eps_neighborhood(J, eta, closed=False)
        V2 = apply_set(h, V1)
        sets = [U1, U2, V1, V2]
        if all(not sets[a].intersects(sets[b]) for a in range(4) for b in range(a + 1, 4)):
            try:
                if is_schottky_pair(f1, f2, U1, U2, V1, V2):
                    return f1, f2, U1, U2, V1, V2
            except ValueError:
                pass
        eta /= 2
    return None


# fixtures ----------------------------------------------------------------

def double_cover_lift(phi: PLHomeo) -> PLHomeo:
    """The map x ↦ φ̃(2x)/2, which commutes with the rotation by 1/2."""
    pts = []
    for x, y in zip(phi.xs, phi.ys):
        pts.append((x / 2, y / 2))
        pts.append((x / 2 + Q(1, 2), y / 2 + Q(1, 2)))
    return PLHomeo.from_breakpoints(sorted(pts, key=lambda p: p[0]))

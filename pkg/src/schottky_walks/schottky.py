"""Hyperbolic maps, Schottky sets with medians, step measures, amplification and
ping-pong certification."""
from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .circle import (Arc, ElementarySet, closed_gap, eps_neighborhood,
                     essentially_contains, essentially_disjoint)
from .homeo import PLHomeo, apply_set, classify_fixed_points, compose_all
from .numeric import Q, exact, is_exact, mod1


class NotInSchottkySetError(LookupError):
    pass


class CorruptedSchottkySetError(ValueError):
    pass


class SchottkyValidationError(ValueError):
    pass


class AmplificationError(ValueError):
    pass


def _as_set(A) -> ElementarySet:
    if isinstance(A, ElementarySet):
        return A
    if isinstance(A, Arc):
        return A.to_set()
    a, b = A
    return ElementarySet.arc(a, b)


def _as_arc(A) -> Arc:
    if isinstance(A, Arc):
        return A
    if isinstance(A, ElementarySet):
        comps = A.components()
        if len(comps) != 1:
            raise ValueError("expected a single arc")
        return comps[0]
    a, b = A
    return Arc(a, b)


# predicates -------------------------------------------------------------

def is_hyperbolic(f: PLHomeo, U1, U2) -> bool:
    """f(S¹∖U1) ⊆ U2 and f⁻¹(S¹∖U2) ⊆ U1."""
    U1, U2 = _as_set(U1), _as_set(U2)
    if U1.intersects(U2):
        raise ValueError("U1 and U2 must be disjoint")
    if not apply_set(f, U1.complement()).subset(U2):
        return False
    return apply_set(f.inverse(), U2.complement()).subset(U1)


def is_schottky_pair(f1: PLHomeo, f2: PLHomeo, U1, U2, V1, V2) -> bool:
    sets = [_as_set(X) for X in (U1, U2, V1, V2)]
    names = ("U1", "U2", "V1", "V2")
    for i in range(4):
        for j in range(i + 1, 4):
            if sets[i].intersects(sets[j]):
                raise ValueError(f"{names[i]} and {names[j]} overlap")
    U1, U2, V1, V2 = sets
    return is_hyperbolic(f1, U1, V1) and is_hyperbolic(f2, U2, V2)


def synth_hyperbolic(I, J, margin=None) -> PLHomeo:
    """Two-breakpoint map sending the closed complement of I onto J shrunk by ``margin``."""
    I, J = _as_arc(I), _as_arc(J)
    if not essentially_disjoint(I.to_set(), J.to_set()):
        raise ValueError("I and J must be essentially disjoint")
    length = J.length
    if margin is None:
        margin = length / 4
    margin = exact(margin) if not isinstance(margin, float) else margin
    if not (0 < margin < length / 2):
        raise ValueError("margin must lie in (0, length(J)/2)")
    return PLHomeo.from_breakpoints([(I.b, J.a + margin), (I.a, J.b - margin)])


# Schottky sets -----------------------------------------------------------

@dataclass(frozen=True)
class SchottkySlot:
    I: ElementarySet
    J: ElementarySet
    rep: Optional[PLHomeo] = None


class _ClosedIndex:
    """Closed components of pairwise essentially disjoint sets, for overlap queries."""

    def __init__(self, sets: Sequence[ElementarySet]):
        entries = []
        for i, A in enumerate(sets):
            for start, length in A.closure().intervals():
                for m in (-1, 0, 1):
                    entries.append((start + m, start + length + m, i))
        entries.sort(key=lambda e: e[0])
        self.starts = [e[0] for e in entries]
        self.ends = [e[1] for e in entries]
        self.owner = [e[2] for e in entries]
        self.monotone = all(self.ends[i] < self.starts[i + 1] for i in range(len(entries) - 1))

    def meeting(self, s, e) -> set:
        """Owners whose closure meets the closed lifted interval [s, e]."""
        out = set()
        if self.monotone:
            idx = bisect_left(self.ends, s)
            while idx < len(self.starts) and self.starts[idx] <= e:
                out.add(self.owner[idx])
                idx += 1
            return out
        for a, b, o in zip(self.starts, self.ends, self.owner):
            if a <= e and b >= s:
                out.add(o)
        return out

    def meeting_set(self, A: ElementarySet) -> set:
        out = set()
        for start, length in A.closure().intervals():
            out |= self.meeting(start, start + length)
        return out


class SchottkySet:
    def __init__(self, slots: Sequence[SchottkySlot], median: Optional[ElementarySet] = None,
                 validate: bool = True, meta: Optional[dict] = None):
        self.slots = tuple(slots)
        self.median = median
        self.meta = meta or {}
        self._j_index = None
        self._i_index = None
        if validate:
            self.validate()

    @property
    def N(self) -> int:
        return len(self.slots)

    @cached_property
    def multiplicity(self) -> int:
        return max(max(s.I.n_components, s.J.n_components) for s in self.slots)

    @property
    def zeta(self) -> int:
        return self.multiplicity

    @property
    def reps(self) -> list:
        return [s.rep for s in self.slots]

    @property
    def j_index(self) -> _ClosedIndex:
        if self._j_index is None:
            self._j_index = _ClosedIndex([s.J for s in self.slots])
        return self._j_index

    @property
    def i_index(self) -> _ClosedIndex:
        if self._i_index is None:
            self._i_index = _ClosedIndex([s.I for s in self.slots])
        return self._i_index

    def validate(self) -> None:
        """Raise SchottkyValidationError naming the first violated invariant."""
        sets = []
        for i, s in enumerate(self.slots):
            sets.append((s.I, ("I", i)))
            sets.append((s.J, ("J", i)))
        clash = _first_overlap(sets)
        if clash is not None:
            a, b = clash
            raise SchottkyValidationError(
                f"essential disjointness fails between {a[0]}{a[1]} and {b[0]}{b[1]}")
        if self.median is not None:
            union_I = ElementarySet.from_arcs(c for s in self.slots for c in _arcs_of(s.I))
            union_J = ElementarySet.from_arcs(c for s in self.slots for c in _arcs_of(s.J))
            if not essentially_disjoint(self.median, union_I):
                bad = [i for i, s in enumerate(self.slots) if not essentially_disjoint(self.median, s.I)]
                raise SchottkyValidationError(f"median meets the closure of I for slots {bad[:5]}")
            if not essentially_contains(self.median, union_J):
                bad = [i for i, s in enumerate(self.slots) if not essentially_contains(self.median, s.J)]
                raise SchottkyValidationError(f"median does not essentially contain J for slots {bad[:5]}")
        for i, s in enumerate(self.slots):
            if s.rep is not None and not is_hyperbolic(s.rep, s.I, s.J):
                raise SchottkyValidationError(f"representative of slot {i} is not hyperbolic for its slot")

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "slots": [{"I": s.I.to_json(), "J": s.J.to_json(),
                       "rep": s.rep.to_json() if s.rep is not None else None} for s in self.slots],
            "median": self.median.to_json() if self.median is not None else None,
        }

    @classmethod
    def from_json(cls, data: dict, validate: bool = True) -> "SchottkySet":
        slots = []
        for i, item in enumerate(data["slots"]):
            try:
                rep = PLHomeo.from_json(item["rep"]) if item.get("rep") else None
                slots.append(SchottkySlot(ElementarySet.from_json(item["I"]),
                                          ElementarySet.from_json(item["J"]), rep))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchottkyValidationError(f"slots[{i}]: {exc}") from exc
        median = ElementarySet.from_json(data["median"]) if data.get("median") else None
        return cls(slots, median, validate=validate)

    def __repr__(self) -> str:
        return f"SchottkySet(N={self.N}, zeta={self.multiplicity}, median={self.median})"


def _arcs_of(A: ElementarySet):
    if A.is_full():
        return [Arc(0, 0, False, False), Arc(0, 0, True, True)]
    return A.components()


def _first_overlap(sets):
    """First pair of owners whose closures meet, by a sweep over lifted components."""
    entries = []
    for A, owner in sets:
        for start, length in A.closure().intervals():
            entries.append((start, start + length, owner))
            entries.append((start + 1, start + length + 1, owner))
    entries.sort(key=lambda e: e[0])
    best_end, best_owner = None, None
    for s, e, owner in entries:
        if best_end is not None and s <= best_end and owner != best_owner:
            return best_owner, owner
        if best_end is None or e > best_end:
            best_end, best_owner = e, owner
    return None


def make_canonical_schottky(N: int) -> SchottkySet:
    """The fixture S_N: I_i in [0, 1/2), J_i in [1/2, 1), interval median."""
    if N < 1:
        raise ValueError("N must be at least 1")
    slots = []
    two_n, four_n, eight_n = 2 * N, 4 * N, 8 * N
    for i in range(N):
        a = Q(i, two_n)
        c = Q(1, 2) + a
        I = Arc(a, a + Q(1, four_n))
        J = Arc(c, c + Q(1, four_n))
        rep = synth_hyperbolic(I, J)
        slots.append(SchottkySlot(I.to_set(), J.to_set(), rep))
    median = ElementarySet.arc(Q(1, 2) - Q(1, eight_n), 1 - Q(1, eight_n))
    return SchottkySet(slots, median)


def slot_of(s: PLHomeo, S: SchottkySet, strict: bool = False) -> int:
    """Index of the unique slot whose hyperbolic class contains ``s``."""
    if S.median is None or strict:
        hits = [i for i, slot in enumerate(S.slots) if _hyperbolic_or_false(s, slot)]
    else:
        probe = S.median.interior().sample_point()
        v = s.apply(probe)
        cand = S.j_index.meeting(v, v)
        hits = [i for i in sorted(cand) if _hyperbolic_or_false(s, S.slots[i])]
    if not hits:
        raise NotInSchottkySetError("map lies in no slot")
    if len(hits) > 1:
        raise CorruptedSchottkySetError(f"map is hyperbolic for several slots {hits}")
    return hits[0]


def _hyperbolic_or_false(s, slot) -> bool:
    try:
        return is_hyperbolic(s, slot.I, slot.J)
    except ValueError:
        return False


def reverse(S: SchottkySet) -> SchottkySet:
    if S.median is None:
        raise ValueError("reverse needs a median")
    slots = [SchottkySlot(s.J, s.I, s.rep.inverse() if s.rep is not None else None) for s in S.slots]
    return SchottkySet(slots, S.median.complement())


# step measures -----------------------------------------------------------

class StepMeasure:
    """Finitely supported probability measure on PL homeomorphisms."""

    def __init__(self, atoms: Iterable[tuple]):
        atoms = [(g, w) for g, w in atoms]
        if not atoms:
            raise ValueError("a step measure needs at least one atom")
        if any(not w > 0 for _, w in atoms):
            raise ValueError("atom weights must be positive")
        total = sum(w for _, w in atoms)
        if all(is_exact(w) for _, w in atoms):
            if total != 1:
                raise ValueError(f"weights sum to {total}, not 1")
        elif abs(total - 1) > 1e-12:
            raise ValueError(f"weights sum to {total}, not 1")
        self.atoms = tuple(atoms)
        self.maps = tuple(g for g, _ in atoms)
        self.weights = tuple(w for _, w in atoms)
        p = np.array([float(w) for w in self.weights])
        self.probs = p / p.sum()

    @classmethod
    def uniform(cls, maps: Sequence[PLHomeo]) -> "StepMeasure":
        n = len(maps)
        return cls((g, Q(1, n)) for g in maps)

    @classmethod
    def point_mass(cls, g: PLHomeo) -> "StepMeasure":
        return cls([(g, Q(1))])

    def sample_indices(self, rng, size: int) -> np.ndarray:
        return rng.choice(len(self.atoms), size=size, p=self.probs)

    def sample(self, rng, size: int) -> list:
        return [self.maps[i] for i in self.sample_indices(rng, size)]

    def law(self) -> dict:
        out = {}
        for g, w in self.atoms:
            out[g] = out.get(g, 0) + w
        return out

    def convolve_power(self, m: int) -> "StepMeasure":
        """Law of g_1 ∘ … ∘ g_m for i.i.d. g_i."""
        if m < 1:
            raise ValueError("m must be positive")
        law = {PLHomeo.identity(): Q(1)}
        for _ in range(m):
            nxt = {}
            for h, wh in law.items():
                for g, wg in self.atoms:
                    key = h.compose(g)
                    nxt[key] = nxt.get(key, 0) + wh * wg
            law = nxt
        return StepMeasure(law.items())

    def inverse(self) -> "StepMeasure":
        return StepMeasure((g.inverse(), w) for g, w in self.atoms)

    def perturbed(self, delta) -> "StepMeasure":
        """Weights moved by alternating ±delta, then renormalized."""
        if not delta >= 0:
            raise ValueError("delta must be non-negative")
        if delta and delta >= min(self.weights):
            raise ValueError("delta must be smaller than the smallest atom weight")
        new = [w + (delta if i % 2 == 0 else -delta) for i, w in enumerate(self.weights)]
        total = sum(new)
        return StepMeasure((g, w / total) for g, w in zip(self.maps, new))

    def __len__(self) -> int:
        return len(self.atoms)


def slot_weights(mu: StepMeasure, S: SchottkySet) -> list:
    weights = [0] * S.N
    for g, w in mu.atoms:
        try:
            i = slot_of(g, S)
        except NotInSchottkySetError:
            continue
        weights[i] = weights[i] + w
    return weights


def is_admissible(mu: StepMeasure, S: SchottkySet, eps, uniform: bool = False) -> bool:
    """Every slot carries weight > eps/N (or exactly 1/N with ``uniform``)."""
    weights = slot_weights(mu, S)
    N = S.N
    if uniform:
        target = Q(1, N)
        if all(is_exact(w) for w in weights):
            return all(w == target for w in weights)
        return all(abs(float(w) - 1 / N) < 1e-12 for w in weights)
    return all(w > eps / N for w in weights)


# fixtures ----------------------------------------------------------------

class PingPong(NamedTuple):
    f1: PLHomeo
    f2: PLHomeo
    U1: ElementarySet
    U2: ElementarySet
    V1: ElementarySet
    V2: ElementarySet


def pp_fixture(offset=0) -> PingPong:
    """Planted ping-pong pair: repelling arcs in [0, 1/2), attracting arcs in [1/2, 1)."""
    o = exact(offset)
    U1, V1 = Arc(o, o + Q(1, 8)), Arc(o + Q(1, 2), o + Q(5, 8))
    U2, V2 = Arc(o + Q(1, 4), o + Q(3, 8)), Arc(o + Q(3, 4), o + Q(7, 8))
    return PingPong(synth_hyperbolic(U1, V1), synth_hyperbolic(U2, V2),
                    U1.to_set(), U2.to_set(), V1.to_set(), V2.to_set())


def interleaved_pp_fixture() -> PingPong:
    """Ping-pong pair whose attracting arcs are separated by the repelling ones."""
    U1, V1 = Arc(0, Q(1, 8)), Arc(Q(1, 4), Q(3, 8))
    U2, V2 = Arc(Q(1, 2), Q(5, 8)), Arc(Q(3, 4), Q(7, 8))
    return PingPong(synth_hyperbolic(U1, V1), synth_hyperbolic(U2, V2),
                    U1.to_set(), U2.to_set(), V1.to_set(), V2.to_set())


# amplification -----------------------------------------------------------

def _hull_median(U: ElementarySet, V: ElementarySet) -> Optional[ElementarySet]:
    """Interval median: hull of V inside one gap of closure(U), widened by half the margins."""
    outside = U.closure().complement()
    Vc = V.closure()
    if outside.is_full():
        return None
    for comp in outside.components():
        C = comp.to_set()
        if not Vc.subset(C):
            continue
        lo = hi = None
        for start, length in Vc.intervals():
            off = mod1(start - comp.a)
            end = off + length
            lo = off if lo is None else min(lo, off)
            hi = end if hi is None else max(hi, end)
        L = comp.length
        return ElementarySet.arc(comp.a + lo / 2, comp.a + hi + (L - hi) / 2)
    return None


def find_median(pair: PingPong) -> tuple[PingPong, ElementarySet]:
    """A median for the pair, replacing (f1, f2) by (f2 f1, f2²) when V1, V2 are separated."""
    f1, f2, U1, U2, V1, V2 = pair
    med = _hull_median(U1 | U2, V1 | V2)
    if med is not None:
        return pair, med
    g1, g2 = f2.compose(f1), f2.compose(f2)
    W1, W2 = apply_set(f2, V1), apply_set(f2, V2)
    swapped = PingPong(g1, g2, U1, U2, W1, W2)
    med = _hull_median(U1 | U2, W1 | W2)
    if med is not None and is_schottky_pair(*swapped):
        return swapped, med
    gap = closed_gap(U1 | U2, V1 | V2)
    return pair, eps_neighborhood((V1 | V2).closure(), gap / 3, closed=False)


def amplify(f1: PLHomeo, f2: PLHomeo, U1, U2, V1, V2, N: int, eta=None) -> SchottkySet:
    """Schottky set of resolution N built from words of length ⌈log₂ N⌉ in a ping-pong pair."""
    pair = PingPong(f1, f2, *(_as_set(X) for X in (U1, U2, V1, V2)))
    if not is_schottky_pair(*pair):
        raise ValueError("input is not a Schottky pair")
    pair, median = find_median(pair)
    gens = {1: pair.f1, 2: pair.f2}
    k = max(1, math.ceil(math.log2(N))) if N > 1 else 1
    words = list(product((1, 2), repeat=k))[:N]
    if len(words) < N:
        raise ValueError("not enough words")
    rest = median.complement().closure()
    med_closure = median.closure()
    base, raw_I, raw_J = [], [], []
    for w in words:
        f = compose_all(gens[c] for c in w)
        base.append(f)
        raw_I.append(apply_set(f.inverse(), rest))
        raw_J.append(apply_set(f, median))
    gap = _min_gap(raw_I, raw_J, median, rest, med_closure)
    if gap == 0:
        raise AmplificationError("constructed sets are not essentially disjoint before thickening")
    if eta is None:
        # thickening both sides by gap/2 would make closures touch
        eta = gap / 4
    eta = exact(eta)
    slots = []
    for f, I0, J0 in zip(base, raw_I, raw_J):
        slots.append(SchottkySlot(eps_neighborhood(I0, eta, closed=False),
                                  eps_neighborhood(J0, eta, closed=False), f.compose(f)))
    meta = {"words": words, "base_maps": base, "raw_J": raw_J, "pair": pair, "eta": eta,
            "first_letter_images": {c: apply_set(g, median) for c, g in gens.items()}}
    try:
        return SchottkySet(slots, median, meta=meta)
    except SchottkyValidationError as exc:
        raise AmplificationError(f"eta={eta} too large: {exc}") from exc


def _min_gap(raw_I, raw_J, median, rest, med_closure):
    sets = [(A, ("I", i)) for i, A in enumerate(raw_I)] + [(A, ("J", i)) for i, A in enumerate(raw_J)]
    if _first_overlap(sets) is not None:
        return 0
    entries = []
    for A, owner in sets:
        for start, length in A.closure().intervals():
            entries.append((start, start + length))
    entries.sort()
    best = None
    for i, (s, e) in enumerate(entries):
        nxt = entries[(i + 1) % len(entries)][0] + (1 if i + 1 == len(entries) else 0)
        d = nxt - e
        best = d if best is None else min(best, d)
    for A in raw_J:
        d = closed_gap(A, rest)
        best = d if best is None else min(best, d)
    for A in raw_I:
        d = closed_gap(A, med_closure)
        best = d if best is None else min(best, d)
    return max(best, 0)


def nested_images_ok(S: SchottkySet) -> bool:
    """closure(J_σ) ⊆ f_{σ(1)}(median) for every word σ of an amplified set."""
    meta = S.meta
    if "words" not in meta:
        raise ValueError("not an amplified Schottky set")
    if len(meta["words"][0]) < 2:
        return True
    first = meta["first_letter_images"]
    return all(J0.closure().subset(first[w[0]]) for w, J0 in zip(meta["words"], meta["raw_J"]))


# ping-pong certification ------------------------------------------------

def find_schottky_witness(f: PLHomeo, g: PLHomeo, budget: int = 16):
    """Search for (U1, U2, V1, V2) making (f, g) a Schottky pair; None when nothing is found.

    Attracting fixed points are surrounded by shrinking arcs V, the sets that
    fail to land in V are thickened into U, and every candidate is checked by
    the exact predicate before it is returned.
    """
    if not (f.is_exact and g.is_exact):
        raise ValueError("the certifier needs exact maps")
    cls_f, cls_g = classify_fixed_points(f), classify_fixed_points(g)
    if cls_f["segments"] or cls_g["segments"]:
        return None
    if not cls_f["attracting"] or not cls_g["attracting"]:
        return None
    pts = sorted(set().union(*(cls_f[k] for k in ("attracting", "repelling", "neutral")))
                 | set().union(*(cls_g[k] for k in ("attracting", "repelling", "neutral"))))
    all_f = cls_f["attracting"] + cls_f["repelling"] + cls_f["neutral"]
    all_g = cls_g["attracting"] + cls_g["repelling"] + cls_g["neutral"]
    if set(all_f) & set(all_g):
        return None
    d_min = None
    for i in range(len(pts)):
        d = mod1(pts[(i + 1) % len(pts)] - pts[i]) if len(pts) > 1 else Q(1)
        d_min = d if d_min is None else min(d_min, d)
    A_f = ElementarySet.finite(cls_f["attracting"])
    A_g = ElementarySet.finite(cls_g["attracting"])
    f_inv, g_inv = f.inverse(), g.inverse()
    delta = d_min / 4
    for _ in range(budget + 1):
        V_f = eps_neighborhood(A_f, delta, closed=False)
        V_g = eps_neighborhood(A_g, delta, closed=False)
        C_f = apply_set(f_inv, V_f).complement()
        C_g = apply_set(g_inv, V_g).complement()
        blocks = [C_f, C_g, V_f.closure(), V_g.closure()]
        if all(not blocks[i].is_empty() for i in (0, 1)) and _pairwise_apart(blocks):
            rho = min(closed_gap(blocks[i], blocks[j]) for i in range(4) for j in range(i + 1, 4)) / 2
            U_f = eps_neighborhood(C_f, rho, closed=False)
            U_g = eps_neighborhood(C_g, rho, closed=False)
            try:
                if is_schottky_pair(f, g, U_f, U_g, V_f, V_g):
                    return U_f, U_g, V_f, V_g
            except ValueError:
                pass
        delta = delta / 2
    return None


def _pairwise_apart(blocks) -> bool:
    for i in range(len(blocks)):
        for j in range(i + 1, len(blocks)):
            if blocks[i].intersects(blocks[j]):
                return False
    return True

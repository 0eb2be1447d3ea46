"""Pivotal times for products w_0 r_1 s_1 t_1 w_1 … of Schottky elements.

The engine works in a moving frame: instead of the pivotal set ``L_n`` it
keeps ``M_n = W_n⁻¹ L_n``. In that frame

* a new pivot leaves ``M_n = S¹ ∖ w_n⁻¹ I(t_n)``;
* falling back to an older pivot ``k`` leaves ``M_n = S¹ ∖ Z_k`` where
  ``Z_k`` is ``w_k⁻¹ I(t_k)`` pulled back through the later steps;
* an empty pivot set leaves ``M_n`` equal to the median.

The repelling-slot test for a pivot ``i`` at time ``n`` only needs the
number of slots ``j`` with closure(J_j) meeting closure(Z_i), so the running
product never has to be formed. :func:`pivot_run_literal` evaluates the
recursion on global sets with full products and is used to cross-check.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .circle import ElementarySet
from .homeo import PLHomeo, apply_set, compose_all
from .numeric import Q, exact
from .schottky import NotInSchottkySetError, SchottkySet, StepMeasure, slot_of


# slot counting ----------------------------------------------------------

def _in_repelling_class(count: int, S: SchottkySet) -> bool:
    """count ≥ ζ²√N, compared exactly as count² ≥ ζ⁴N."""
    z = S.multiplicity
    return count * count >= z ** 4 * S.N


def meeting_slots(I: ElementarySet, S: SchottkySet) -> set:
    """Slots i whose closure(J_i) meets closure(I)."""
    return S.j_index.meeting_set(I)


def repelling_slots(g: PLHomeo, S: SchottkySet) -> set:
    """Slots i such that closure(I_i) meets g(closure(J_j)) for at least ζ²√N slots j."""
    hits = [set() for _ in range(S.N)]
    index = S.i_index
    for j, slot in enumerate(S.slots):
        image = apply_set(g, slot.J.closure())
        for i in index.meeting_set(image):
            hits[i].add(j)
    return {i for i in range(S.N) if _in_repelling_class(len(hits[i]), S)}


def intersecting_pairs(Is: Sequence[ElementarySet], Js: Sequence[ElementarySet], g: PLHomeo) -> int:
    """Number of pairs (i, j) with Is[i] ∩ g(Js[j]) nonempty, by brute force."""
    images = [apply_set(g, J) for J in Js]
    return sum(1 for I in Is for image in images if I.intersects(image))


def pair_count_bound_holds(count: int, N: int, zeta: int = 1) -> bool:
    """count ≤ 3ζ²N√N, compared exactly after squaring."""
    return count * count <= 9 * zeta ** 4 * N ** 3


def random_disjoint_family(rng, N: int, zeta: int = 1, denominator: int = 1 << 12) -> list:
    """N mutually disjoint sets with at most ζ components each, on a dyadic grid.

    2Nζ distinct grid points cut the circle into Nζ disjoint arcs with
    random endpoint types; the arcs are dealt out ζ at a time.
    """
    k = N * zeta
    if 2 * k > denominator:
        raise ValueError("grid too coarse for the requested family")
    pts = sorted(Q(int(p), denominator) for p in rng.choice(denominator, size=2 * k, replace=False))
    arcs = []
    for a, b in zip(pts[0::2], pts[1::2]):
        ca, cb = (bool(v) for v in rng.integers(2, size=2))
        arcs.append(ElementarySet.arc(a, b, ca, cb))
    order = rng.permutation(k)
    out = []
    for i in range(N):
        A = ElementarySet.empty()
        for idx in order[i * zeta:(i + 1) * zeta]:
            A = A.union(arcs[idx])
        out.append(A)
    return out


def repelling_choice_holds(g: PLHomeo, S: SchottkySet) -> bool:
    """#𝒞(g; S) ≤ 2ζ²√N."""
    c = len(repelling_slots(g, S))
    return c * c <= 4 * S.multiplicity ** 4 * S.N


def segment_schottky_fraction(S: SchottkySet, S2: SchottkySet, g: PLHomeo) -> dict:
    """Fraction of slot pairs (a, b) with rep'_b g rep_a 𝓘 essentially contained in 𝓘'.

    ``certified`` counts the pairs where closure(g J_a) misses closure(I'_b),
    which forces containment for every member of the two slots.
    """
    zeta = max(S.multiplicity, S2.multiplicity)
    if S.N != S2.N:
        raise ValueError("both Schottky sets need the same resolution")
    if S.N < 4 * zeta ** 2:
        raise ValueError("needs resolution N ≥ 4ζ²")
    if S.median is None or S2.median is None:
        raise ValueError("both Schottky sets need a median")
    N = S.N
    target = S2.median.interior()
    held = certified = 0
    index = S2.i_index
    for slot in S.slots:
        inner = apply_set(g, apply_set(slot.rep, S.median.closure()))
        blocked = index.meeting_set(apply_set(g, slot.J.closure()))
        certified += N - len(blocked)
        for b, slot2 in enumerate(S2.slots):
            held += apply_set(slot2.rep, inner).subset(target)
    total = N * N
    return {"fraction": Fraction(held, total), "certified": Fraction(certified, total),
            "bound": 1 - 3 * zeta ** 2 / math.sqrt(N)}


# inputs and states --------------------------------------------------------

@dataclass(frozen=True)
class Triple:
    r: PLHomeo
    s: PLHomeo
    t: PLHomeo
    r_slot: int
    s_slot: int
    t_slot: int

    @classmethod
    def from_slots(cls, S: SchottkySet, r: int, s: int, t: int) -> "Triple":
        return cls(S.slots[r].rep, S.slots[s].rep, S.slots[t].rep, r, s, t)

    def product(self) -> PLHomeo:
        return compose_all((self.r, self.s, self.t))


@dataclass(frozen=True)
class PivotInput:
    S: SchottkySet
    w: tuple
    triples: tuple

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(self.w))
        object.__setattr__(self, "triples", tuple(self.triples))

    def check_slots(self) -> None:
        for i, tr in enumerate(self.triples, start=1):
            for name in ("r", "s", "t"):
                if slot_of(getattr(tr, name), self.S) != getattr(tr, f"{name}_slot"):
                    raise ValueError(f"{name}_{i} does not lie in its declared slot")

    def product(self, n: Optional[int] = None) -> PLHomeo:
        n = len(self.triples) if n is None else n
        maps = [self.w[0]]
        for i in range(1, n + 1):
            tr = self.triples[i - 1]
            maps += [tr.r, tr.s, tr.t, self.w[i]]
        return compose_all(maps)


@dataclass(frozen=True)
class _Frame:
    index: int
    Z: ElementarySet
    upto: int


@dataclass(frozen=True)
class PivotState:
    n: int
    P: tuple
    M: ElementarySet
    W: Optional[PLHomeo]
    scenario: Optional[str] = None
    frames: tuple = ()
    step_inverses: tuple = ()

    @property
    def L(self) -> Optional[ElementarySet]:
        """The pivotal set in global coordinates (needs the tracked product)."""
        if self.W is None:
            return None
        return apply_set(self.W, self.M)

    def trace_record(self) -> dict:
        rec = {"n": self.n, "scenario": self.scenario, "P": list(self.P)}
        L = self.L
        rec["L"] = L.to_json() if L is not None else None
        if L is None:
            rec["M"] = self.M.to_json()
        return rec


def initial_state(S: SchottkySet, w0: PLHomeo, track_product: bool = True) -> PivotState:
    if S.median is None:
        raise ValueError("pivoting needs a Schottky set with a median")
    return PivotState(0, (), apply_set(w0.inverse(), S.median), w0 if track_product else None)


def _pull_back(Z: ElementarySet, inverses: Sequence[PLHomeo]) -> ElementarySet:
    for g in inverses:
        if not g.is_identity():
            Z = apply_set(g, Z)
    return Z


def pivot_step(state: PivotState, triple: Triple, w_n: PLHomeo, S: SchottkySet) -> PivotState:
    if S.median is None:
        raise ValueError("pivoting needs a Schottky set with a median")
    n = state.n + 1
    w_inv = w_n.inverse()
    X = S.slots[triple.t_slot].I
    if not w_n.is_identity():
        X = apply_set(w_inv, X)
    step_inv = (triple.r.inverse(), triple.s.inverse(), triple.t.inverse(), w_inv)
    step_inverses = state.step_inverses + (step_inv,)
    W = None
    if state.W is not None:
        W = state.W.compose(compose_all((triple.r, triple.s, triple.t, w_n)))

    if (S.slots[triple.r_slot].J.subset(state.M)
            and not _in_repelling_class(len(meeting_slots(X, S)), S)):
        return PivotState(n, state.P + (n,), X.complement(), W, "2A",
                          state.frames + (_Frame(n, X, n),), step_inverses)

    frames = state.frames
    for pos in range(len(frames) - 1, -1, -1):
        fr = frames[pos]
        Z = fr.Z
        for j in range(fr.upto + 1, n + 1):
            Z = _pull_back(Z, step_inverses[j - 1])
        if not _in_repelling_class(len(meeting_slots(Z, S)), S):
            kept = frames[:pos] + (_Frame(fr.index, Z, n),)
            return PivotState(n, state.P[:pos + 1], Z.complement(), W, "2Bi", kept, step_inverses)
    return PivotState(n, (), S.median, W, "2Bii", (), step_inverses)


def pivot_states(inp: PivotInput, n: Optional[int] = None, track_product: bool = True):
    """Yield the states for steps 0..n."""
    n = len(inp.triples) if n is None else n
    if n > len(inp.triples) or n + 1 > len(inp.w):
        raise ValueError("input prefix shorter than n")
    state = initial_state(inp.S, inp.w[0], track_product)
    yield state
    for i in range(1, n + 1):
        state = pivot_step(state, inp.triples[i - 1], inp.w[i], inp.S)
        yield state


def pivot_run(inp: PivotInput, n: Optional[int] = None, track_product: bool = True,
              trace=None) -> PivotState:
    """Run the recursion for n steps. ``trace`` receives one JSON line per step."""
    state = None
    for state in pivot_states(inp, n, track_product):
        if trace is not None and state.n > 0:
            trace.write(json.dumps(state.trace_record()) + "\n")
    return state


def pivotal_history(inp: PivotInput, n: Optional[int] = None) -> list:
    """P_0, P_1, …, P_n."""
    return [st.P for st in pivot_states(inp, n, track_product=False)]


def pivot_run_literal(inp: PivotInput, n: Optional[int] = None) -> list:
    """Reference recursion on global sets; returns (P_l, L_l, scenario) for l = 0..n."""
    S = inp.S
    n = len(inp.triples) if n is None else n
    W = [inp.w[0]]
    L = S.median
    P: tuple = ()
    out = [(P, L, None)]
    for k in range(1, n + 1):
        tr = inp.triples[k - 1]
        W.append(W[k - 1].compose(compose_all((tr.r, tr.s, tr.t, inp.w[k]))))
        pre = apply_set(W[k - 1].inverse(), L)
        W_prev_rst = W[k - 1].compose(compose_all((tr.r, tr.s, tr.t)))
        if (S.slots[tr.r_slot].J.subset(pre)
                and tr.t_slot not in repelling_slots(inp.w[k], S)):
            L = apply_set(W_prev_rst, S.slots[tr.t_slot].I.complement())
            P = P + (k,)
            scen = "2A"
        else:
            chosen = None
            for i in reversed(P):
                g = inp.w[i].compose(W[i].inverse()).compose(W[k])
                if inp.triples[i - 1].t_slot not in repelling_slots(g, S):
                    chosen = i
                    break
            if chosen is not None:
                ti = inp.triples[chosen - 1]
                base = W[chosen - 1].compose(compose_all((ti.r, ti.s, ti.t)))
                L = apply_set(base, S.slots[ti.t_slot].I.complement())
                P = tuple(i for i in P if i <= chosen)
                scen = "2Bi"
            else:
                L = apply_set(W[k], S.median)
                P = ()
                scen = "2Bii"
        out.append((P, L, scen))
    return out


def pivot_swap(inp: PivotInput, n: int, replacements: dict) -> PivotInput:
    """Replace s_i at pivotal indices i ∈ P_n by the representative of a new slot."""
    if not replacements:
        return inp
    P = set(pivot_run(inp, n, track_product=False).P)
    bad = sorted(set(replacements) - P)
    if bad:
        raise ValueError(f"indices {bad} are not pivotal at time {n}")
    triples = list(inp.triples)
    for i, new in replacements.items():
        tr = triples[i - 1]
        if isinstance(new, tuple):
            slot, rep = new
        else:
            slot, rep = new, inp.S.slots[new].rep
        triples[i - 1] = replace(tr, s=rep, s_slot=slot)
    return PivotInput(inp.S, inp.w, tuple(triples))


# pivot gain enumeration -------------------------------------------------

def pivot_gain_fraction(state: PivotState, w_n: PLHomeo, S: SchottkySet, literal: bool = False) -> Fraction:
    """Exact fraction of slot pairs (r, t) sending step n into scenario 2A.

    The branch condition splits into a test on r and a test on t. With
    ``literal`` the N² pairs are enumerated one by one.
    """
    N = S.N
    ok_r = [S.slots[r].J.subset(state.M) for r in range(N)]
    w_inv = w_n.inverse()
    ok_t = []
    for t in range(N):
        X = apply_set(w_inv, S.slots[t].I)
        ok_t.append(not _in_repelling_class(len(meeting_slots(X, S)), S))
    if literal:
        good = 0
        for r in range(N):
            if ok_r[r]:
                for t in range(N):
                    good += ok_t[t]
        return Fraction(good, N * N)
    return Fraction(sum(ok_r) * sum(ok_t), N * N)


# X distribution -----------------------------------------------------------

@dataclass(frozen=True)
class XDistribution:
    """P(X=1) = 1−a, P(X=−j) = a^j (1−a) for 1 ≤ j ≤ truncation, with a = 4ζ²/N (or 4ζ²/√N)."""

    N: int
    zeta: int = 1
    truncation: int = 200
    sqrt_law: bool = False

    def __post_init__(self):
        a = self.a
        if not 0 < a < 1:
            raise ValueError("the X law needs 0 < 4ζ²/N < 1")
        if 1 - self.pmf().sum() > 1e-12:
            raise ValueError("truncated X law loses more than 1e-12 of its mass")

    @property
    def a(self) -> float:
        denom = math.sqrt(self.N) if self.sqrt_law else self.N
        return 4 * self.zeta ** 2 / denom

    def pmf(self) -> np.ndarray:
        """Weights on the support −truncation..1 (index 0 is −truncation)."""
        a = self.a
        j = np.arange(self.truncation, 0, -1)
        neg = a ** j * (1 - a)
        return np.concatenate([neg, [0.0], [1 - a]])

    def support(self) -> np.ndarray:
        return np.arange(-self.truncation, 2)

    def sample(self, rng, size) -> np.ndarray:
        p = self.pmf()
        return rng.choice(self.support(), size=size, p=p / p.sum())


def x_sum_tail(dist: XDistribution, n: int, T: int) -> float:
    """P(X_1 + … + X_n ≥ T) by convolution over the truncated support."""
    if n < 1:
        raise ValueError("n must be positive")
    p = dist.pmf()
    lo = -dist.truncation
    law = p.copy()
    for _ in range(n - 1):
        law = np.convolve(law, p)
    # index i ↔ value lo*n + i
    start = T - lo * n
    if start <= 0:
        return float(law.sum())
    if start >= len(law):
        return 0.0
    return float(law[start:].sum())


def x_sum_survival(dist: XDistribution, n: int) -> dict:
    """T ↦ P(ΣX ≥ T) for T in −n..n (one convolution)."""
    p = dist.pmf()
    law = p.copy()
    for _ in range(n - 1):
        law = np.convolve(law, p)
    lo = -dist.truncation * n
    tail = np.cumsum(law[::-1])[::-1]
    return {T: float(tail[T - lo]) if T - lo < len(tail) else 0.0 for T in range(-n, n + 2)}


# Bernoulli decomposition --------------------------------------------------

_PATTERNS = [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1) if (a, b, c) != (1, 1, 1)]


@dataclass
class DecompositionSample:
    accepted: bool
    w: list
    triples: list
    Z: Optional[PLHomeo]
    successes: int
    factors: list = field(default_factory=list)


class BernoulliDecomposition:
    """Splits μ^{*m} = ε μ_S + (1−ε) ν₁ with μ_S Schottky-uniform, and samples blocks of μ^{*3m}.

    A block is three μ_S draws with probability ε³ (a success) and otherwise a
    mixture of μ_S and ν₁ draws conditioned on not being three μ_S draws.
    """

    def __init__(self, mu: StepMeasure, S: SchottkySet, eps, m: int):
        eps = exact(eps)
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if m < 1:
            raise ValueError("m must be positive")
        self.mu, self.S, self.eps, self.m = mu, S, eps, m
        self.mu_m = mu if m == 1 else mu.convolve_power(m)
        slots = []
        for g, _ in self.mu_m.atoms:
            try:
                slots.append(slot_of(g, S))
            except NotInSchottkySetError:
                slots.append(None)
        self.atom_slots = slots
        weight = [Q(0)] * S.N
        for (g, w), i in zip(self.mu_m.atoms, slots):
            if i is not None:
                weight[i] += w
        if not all(w > eps / S.N for w in weight):
            raise ValueError("mu^{*m} is not (S, eps)-admissible: some slot has weight <= eps/N")
        N = S.N
        self.uniform_weights = [Q(0) if i is None else w / (N * weight[i])
                                for (g, w), i in zip(self.mu_m.atoms, slots)]
        self.rest_weights = [(w - eps * u) / (1 - eps)
                             for (g, w), u in zip(self.mu_m.atoms, self.uniform_weights)]
        self.maps = self.mu_m.maps
        self._p_uniform = _probs(self.uniform_weights)
        self._p_rest = _probs(self.rest_weights)
        e = float(eps)
        pw = np.array([np.prod([e if c else 1 - e for c in pat]) for pat in _PATTERNS])
        self._p_pattern = pw / pw.sum()
        self._success = e ** 3

    def law_of_block(self) -> dict:
        """Exact law of one block product under the decomposition."""
        eps = self.eps
        laws = {1: [(g, u) for g, u in zip(self.maps, self.uniform_weights) if u],
                0: [(g, v) for g, v in zip(self.maps, self.rest_weights) if v]}
        out: dict = {}
        for pat in _PATTERNS + [(1, 1, 1)]:
            wpat = Q(1)
            for c in pat:
                wpat *= eps if c else 1 - eps
            if not wpat:
                continue
            partial = {PLHomeo.identity(): wpat}
            for c in pat:
                nxt = {}
                for h, wh in partial.items():
                    for g, wg in laws[c]:
                        key = h.compose(g)
                        nxt[key] = nxt.get(key, 0) + wh * wg
                partial = nxt
            for h, wh in partial.items():
                out[h] = out.get(h, 0) + wh
        return out

    def sample(self, n: int, rng, compose: bool = True) -> DecompositionSample:
        """One decomposition of an n-step walk.

        With ``compose=False`` only the success count and acceptance are
        produced; ``Z`` is None and no products are built.
        """
        m = self.m
        K, pad = divmod(n, 3 * m)
        blocks, successes = [], []
        for _ in range(K):
            if rng.random() < self._success:
                idx = rng.choice(len(self.maps), size=3, p=self._p_uniform)
                blocks.append(("rst", [self.maps[i] for i in idx], [self.atom_slots[i] for i in idx]))
                successes.append(len(blocks) - 1)
            else:
                pat = _PATTERNS[rng.choice(len(_PATTERNS), p=self._p_pattern)]
                parts = []
                for c in pat:
                    p = self._p_uniform if c else self._p_rest
                    parts.append(self.maps[rng.choice(len(self.maps), p=p)])
                blocks.append(("nu", parts, None))
        padding = self.mu.sample(rng, pad)
        eps = self.eps
        accepted = 10 * m * len(successes) >= eps * n
        if not compose:
            return DecompositionSample(accepted, [], [], None, len(successes))
        steps = [g for _, parts, _ in blocks for g in parts] + list(padding)
        Z = compose_all(steps) if steps else PLHomeo.identity()
        L = math.floor(eps * n / (10 * m))
        if not accepted:
            return DecompositionSample(False, [], [], Z, len(successes))
        chosen = successes[:L]
        w, triples = [], []
        prev = -1
        for b in chosen:
            w.append(compose_all(g for _, parts, _ in blocks[prev + 1:b] for g in parts))
            _, parts, slots = blocks[b]
            triples.append(Triple(parts[0], parts[1], parts[2], *slots))
            prev = b
        tail = [g for _, parts, _ in blocks[prev + 1:] for g in parts] + list(padding)
        w.append(compose_all(tail))
        return DecompositionSample(True, w, triples, Z, len(successes))


def _probs(weights) -> np.ndarray:
    p = np.array([float(w) for w in weights])
    return p / p.sum()


def bernoulli_decompose(mu: StepMeasure, S: SchottkySet, eps, m: int, n: int, rng,
                        decomposition: Optional[BernoulliDecomposition] = None):
    """Returns (accepted, w-list, triples, Z_n)."""
    dec = decomposition or BernoulliDecomposition(mu, S, eps, m)
    out = dec.sample(n, rng)
    return out.accepted, out.w, out.triples, out.Z


@dataclass
class Extraction:
    accepted: bool
    w: list
    s: list
    Z: PLHomeo
    reason: str = ""


def pivoting_extract(mu: StepMeasure, S: SchottkySet, eps, m: int, n: int, rng,
                     decomposition: Optional[BernoulliDecomposition] = None) -> Extraction:
    """Regroup an accepted decomposition around its first ⌊n′/2⌋ pivotal times."""
    dec = decomposition or BernoulliDecomposition(mu, S, eps, m)
    sample = dec.sample(n, rng)
    if not sample.accepted:
        return Extraction(False, [], [], sample.Z, "too few Bernoulli successes")
    inp = PivotInput(S, sample.w, sample.triples)
    n_inner = len(sample.triples)
    state = pivot_run(inp, n_inner, track_product=False)
    if 2 * len(state.P) <= n_inner:
        return Extraction(False, [], [], sample.Z, "too few pivotal times")
    count = n_inner // 2
    piv = state.P[:count]
    tr = sample.triples
    w = sample.w

    def steps(a, b):
        out = []
        for j in range(a, b + 1):
            t = tr[j - 1]
            out += [t.r, t.s, t.t, w[j]]
        return out

    if count == 0:
        return Extraction(True, [compose_all([w[0]] + steps(1, n_inner))], [], sample.Z)
    first = piv[0]
    w_new = [compose_all([w[0]] + steps(1, first - 1) + [tr[first - 1].r])]
    s_new = []
    for pos, i in enumerate(piv):
        s_new.append(tr[i - 1].s)
        head = [tr[i - 1].t, w[i]]
        if pos + 1 < len(piv):
            nxt = piv[pos + 1]
            w_new.append(compose_all(head + steps(i + 1, nxt - 1) + [tr[nxt - 1].r]))
        else:
            w_new.append(compose_all(head + steps(i + 1, n_inner)))
    return Extraction(True, w_new, s_new, sample.Z)


def alternating_product(w: Sequence[PLHomeo], s: Sequence[PLHomeo]) -> PLHomeo:
    maps = [w[0]]
    for si, wi in zip(s, w[1:]):
        maps += [si, wi]
    return compose_all(maps)

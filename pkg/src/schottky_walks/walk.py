"""Random walks of PL circle homeomorphisms and the Monte Carlo experiments built on them.

Every trial draws its increments from its own generator, seeded from
``(master seed, trial index)``, so statistics do not depend on how trials
are split across workers.
"""
from __future__ import annotations

import hashlib
import math
from bisect import bisect_left, bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .circle import Arc, CantorCdf, Lebesgue, circle_distance, open_arc_mass
from .homeo import PLHomeo, apply_set, compose_all, random_homeo
from .numeric import Q, exact, log_rational, mod1
from .pivot import (intersecting_pairs, pair_count_bound_holds, repelling_choice_holds,
                    segment_schottky_fraction)
from .schottky import (SchottkySet, StepMeasure, amplify, find_schottky_witness,
                       interleaved_pp_fixture, is_schottky_pair, pp_fixture)

THREE_SIGMA = 0.9973002039367398
# spacing of doubles just below 1: float orbits closer than this have merged
FLOAT_RESOLUTION = 2.0 ** -53


# seeding and parallel map -----------------------------------------------

def trial_rng(seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(trial, stream))
    return np.random.Generator(np.random.PCG64(ss))


def parallel_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Order-preserving map; ``threads > 1`` uses worker processes."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _chunks(trials: int, threads: int) -> list:
    parts = max(1, min(trials, 4 * max(1, threads)))
    edges = np.linspace(0, trials, parts + 1).astype(int)
    return [range(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def wilson_interval(successes: int, trials: int, confidence: float = THREE_SIGMA) -> tuple:
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


# configuration and records ----------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    mu: StepMeasure
    checkpoints: tuple = (10, 20, 40, 60)
    trials: int = 1000
    seed: int = 0
    side: str = "left"
    mu2: Optional[StepMeasure] = None
    len_measure: object = field(default_factory=Lebesgue)
    q: float = 0.9
    horizon: int = 60
    exact: bool = True
    threads: int = 1
    budget: int = 16

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        object.__setattr__(self, "checkpoints", tuple(sorted(set(int(n) for n in self.checkpoints))))
        if not self.checkpoints or self.checkpoints[0] < 1:
            raise ValueError("checkpoints must be positive")

    @property
    def n_steps(self) -> int:
        return self.checkpoints[-1]


@dataclass
class TrialRecord:
    trial: int
    observables: dict
    final_hash: str


@dataclass
class RateFit:
    kappa_hat: float
    r2: float
    slope: float
    ci: dict
    checkpoints: tuple
    frequencies: dict
    median_log_distance: dict
    flag: str = ""

    @property
    def synchronized(self) -> bool:
        return self.kappa_hat > 0 and not self.flag


def _increment_hash(indices) -> str:
    return hashlib.sha256(np.asarray(indices, dtype=np.int64).tobytes()).hexdigest()[:16]


def _measure_maps(mu: StepMeasure, exact_mode: bool) -> list:
    return list(mu.maps) if exact_mode else [g.to_float() for g in mu.maps]


# walks ------------------------------------------------------------------

def sample_walk(mu: StepMeasure, n: int, side: str = "left", seed=0, exact_mode: bool = True) -> list:
    """Z_1, …, Z_n with Z_k = g_k Z_{k−1} (left) or Z_{k−1} g_k (right)."""
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    rng = seed if isinstance(seed, np.random.Generator) else trial_rng(seed, 0)
    maps = _measure_maps(mu, exact_mode)
    Z = PLHomeo.identity() if exact_mode else PLHomeo.identity().to_float()
    out = []
    for i in mu.sample_indices(rng, n) if n else []:
        g = maps[i]
        Z = g.compose(Z) if side == "left" else Z.compose(g)
        out.append(Z)
    return out


def _push(maps, indices, x, side):
    if side == "left":
        for i in indices:
            x = maps[i].apply(x)
    else:
        for i in reversed(indices):
            x = maps[i].apply(x)
    return x


# maximal contracted arcs ------------------------------------------------

COLLAPSE = Q(1, 2 ** 20)

def _image_mass(Z: PLHomeo, x, a, b, m):
    lo, hi = Z.eval_lift(x - a), Z.eval_lift(x + b)
    if hi < lo:
        lo, hi = hi, lo
    return open_arc_mass(m, lo, min(hi - lo, 1 + 0 * lo))


def _largest_param(psi, lo, hi, cands, t, m):
    """Largest u in [lo, hi] with psi(u) ≤ t, given psi(lo⁺) ≤ t.

    ``cands`` holds every u in (lo, hi) where psi may change slope (or jump,
    for atoms). Lebesgue is solved exactly on the last good segment, atomic
    measures are constant between candidates, Cantor measures are bisected.
    """
    pts = [lo] + [c for c in sorted(set(cands)) if lo < c < hi] + [hi]
    if psi(hi) <= t:
        return hi
    # smallest index with psi > t
    a, b = 1, len(pts) - 1
    while a < b:
        mid = (a + b) // 2
        if psi(pts[mid]) > t:
            b = mid
        else:
            a = mid + 1
    left, right = pts[a - 1], pts[a]
    if isinstance(m, Lebesgue):
        p_left, p_right = psi(left), psi(right)
        if not p_left < t < p_right:
            # float rounding can leave no room to interpolate
            return left
        return left + (t - p_left) * (right - left) / (p_right - p_left)
    if isinstance(m, CantorCdf):
        for _ in range(60):
            mid = (left + right) / 2
            if psi(mid) <= t:
                left = mid
            else:
                right = mid
        return left
    return left


def _candidates(Z: PLHomeo, x, m, forward: bool) -> list:
    pts = list(Z.xs)
    if not isinstance(m, (Lebesgue, CantorCdf)):
        pts += [Z.preimage(p) for p, _ in m.atoms]
    if forward:
        return [mod1(p - x) for p in pts]
    return [mod1(x - p) for p in pts]


class _Pullback:
    """Measure of image arcs Z((u, v)) in lifted coordinates, with one-sided inverses."""

    def __init__(self, Z: PLHomeo, m):
        if Z.degree != 1:
            raise ValueError("contracted arcs need an orientation-preserving map")
        self.F, self.m = Z.eval_lift, m
        self.xs, self.ys = list(Z.xs), list(Z.ys)
        self.atoms = None
        if not isinstance(m, (Lebesgue, CantorCdf)):
            self.atoms = [(p, w) for p, w in m.atoms if w > 0]

    def F_inv(self, y, right: bool = True):
        """Largest u with F(u) ≤ y (or smallest u with F(u) ≥ y).

        Works from Z's own knots, so float maps with collapsed pieces are fine.
        """
        xs, ys = self.xs, self.ys
        k = len(xs)
        n = math.floor(y - ys[0])
        t = y - n
        # float rounding can push t onto either end of the period
        if t >= ys[0] + 1:
            n, t = n + 1, t - 1
        elif t < ys[0]:
            n, t = n - 1, t + 1
        if right:
            i = bisect_right(ys, t) - 1
        else:
            i = bisect_left(ys, t)
            if i < k and ys[i] == t:
                return xs[i] + n
            i -= 1
        x0, y0 = xs[i], ys[i]
        x1, y1 = (xs[i + 1], ys[i + 1]) if i + 1 < k else (xs[0] + 1, ys[0] + 1)
        return x0 + (t - y0) * (x1 - x0) / (y1 - y0) + n

    def mass(self, u, v):
        lo, hi = self.F(u), self.F(v)
        return open_arc_mass(self.m, lo, min(hi - lo, 1 + 0 * lo))

    def _lifted_cdf(self, y):
        n = math.floor(y)
        return n + self.m.cdf(y - n)

    def _lifted_quantile(self, c, right):
        n = math.floor(c)
        return n + self.m.quantile(c - n, right)

    # Both reaches take the lifted image of their start point when the caller
    # knows it and return (end point, lifted image of the end point). Where Z
    # is steeper than the float spacing, F(F_inv(y)) drifts far from y, so
    # chained reaches must not re-evaluate F at a rounded end point.

    def reach_right(self, u, t, fu=None):
        """Largest v ≤ u + 1 with mass(u, v) ≤ t."""
        y0 = self.F(u) if fu is None else fu
        if self.atoms is not None:
            acc = 0
            for d, w in sorted((mod1(p - y0), w) for p, w in self.atoms):
                if d == 0:
                    continue
                acc += w
                if acc > t:
                    v = self.F_inv(y0 + d)
                    return (v, y0 + d) if v < u + 1 else (u + 1, y0 + 1)
            return u + 1, y0 + 1
        y = self._lifted_quantile(self._lifted_cdf(y0) + t, True)
        v = self.F_inv(y)
        return (v, y) if v < u + 1 else (u + 1, y0 + 1)

    def reach_left(self, v, t, fv=None):
        """Smallest u ≥ v − 1 with mass(u, v) ≤ t."""
        y1 = self.F(v) if fv is None else fv
        if self.atoms is not None:
            acc = 0
            for d, w in sorted((mod1(y1 - p), w) for p, w in self.atoms):
                if d == 0:
                    continue
                acc += w
                if acc > t:
                    u = self.F_inv(y1 - d, False)
                    return (u, y1 - d) if u > v - 1 else (v - 1, y1 - 1)
            return v - 1, y1 - 1
        y = self._lifted_quantile(self._lifted_cdf(y1) - t, False)
        u = self.F_inv(y, False)
        return (u, y) if u > v - 1 else (v - 1, y1 - 1)


def contracted_extents(Z: PLHomeo, x, t, len_measure=None):
    """(left, right) extents of a maximal open arc (x−left, x+right), or None.

    Every arc that is maximal for inclusion is a candidate; the one of largest
    measure wins. The arc grown symmetrically from x (then counterclockwise,
    then clockwise) is preferred on ties. Only breakpoint and atom positions
    need to be tried as fixed endpoints, so the search is exact for Lebesgue
    and atomic measures and a close inner approximation for the Cantor measure.

    When the longest arc is only approached as one endpoint collapses onto x
    (no open arc attains it), that endpoint is placed ``COLLAPSE`` times the
    nearest knot distance away from x.
    """
    m = len_measure if len_measure is not None else Lebesgue()
    if not t > 0:
        raise ValueError("t must be positive")
    x = mod1(x)
    floating = isinstance(x, float) or not Z.is_exact
    if floating:
        x, t = float(x), float(t)
    else:
        t = exact(t)
    zero = 0 * x
    half = 0.5 if floating else Q(1, 2)
    # an atom heavier than t at Z(x) defeats every open arc around x
    if not isinstance(m, (Lebesgue, CantorCdf)):
        zx = Z.apply(x)
        if sum((w for p, w in m.atoms if p == zx), zero) > t:
            return None
    pull = _Pullback(Z, m)
    fwd = _candidates(Z, x, m, True)
    bwd = _candidates(Z, x, m, False)
    s = _largest_param(lambda u: pull.mass(x - u, x + u), zero, half, fwd + bwd, t, m)
    if s == 0:
        return None
    v, fv = pull.reach_right(x - s, t)
    if v < x + s:
        v, fv = x + s, None
    u, _ = pull.reach_left(v, t, fv)
    u = min(u, x - s)
    best = (x - u, v - x)
    best_mass = open_arc_mass(m, u, v - u)
    slack = 1e-12 if floating else 0
    tried = set()
    near = [d for d in fwd + bwd if d > 0]
    h = (min(near) if near else half) * (float(COLLAPSE) if floating else COLLAPSE)
    for d in sorted(set(bwd + [h])):
        if d == 0:
            continue
        u0 = x - d
        v, fv = pull.reach_right(u0, t)
        if v <= x:
            continue
        u, _ = pull.reach_left(v, t, fv)
        tried.add((u, v))
    for d in sorted(set(fwd + [h])):
        if d == 0:
            continue
        v0 = x + d
        u, fu = pull.reach_left(v0, t)
        if u >= x:
            continue
        tried.add((u, pull.reach_right(u, t, fu)[0]))
    for u, v in sorted(tried):
        if not u < x < v:
            continue
        mass = open_arc_mass(m, u, v - u)
        if mass > best_mass + slack:
            best, best_mass = (x - u, v - x), mass
    return best


def max_contracted_arc(Z: PLHomeo, x, t, len_measure=None) -> Optional[Arc]:
    """Maximal open arc around x whose image under Z has measure ≤ t, or None when empty."""
    ext = contracted_extents(Z, x, t, len_measure)
    if ext is None:
        return None
    a, b = ext
    x = mod1(x)
    return Arc(x - a, x + b)


# synchronization --------------------------------------------------------

def _sync_chunk(args):
    cfg, x, y, trials = args
    maps = _measure_maps(cfg.mu, cfg.exact)
    if not cfg.exact:
        x, y = float(x), float(y)
    out = []

    def log_distance(px, py):
        d = circle_distance(px, py)
        return log_rational(d) if cfg.exact else math.log(max(d, FLOAT_RESOLUTION))

    for trial in trials:
        rng = trial_rng(cfg.seed, trial)
        idx = cfg.mu.sample_indices(rng, cfg.n_steps)
        logs = {}
        if cfg.side == "left":
            px, py, done = x, y, 0
            for n in cfg.checkpoints:
                for i in idx[done:n]:
                    px, py = maps[i].apply(px), maps[i].apply(py)
                done = n
                logs[n] = log_distance(px, py)
        else:
            for n in cfg.checkpoints:
                px, py = _push(maps, idx[:n], x, "right"), _push(maps, idx[:n], y, "right")
                logs[n] = log_distance(px, py)
        out.append(TrialRecord(trial, {"log_distance": logs}, _increment_hash(idx)))
    return out


def run_trials(chunk_fn, cfg: ExperimentConfig, *extra) -> list:
    chunks = _chunks(cfg.trials, cfg.threads)
    parts = parallel_map(chunk_fn, [(cfg, *extra, c) for c in chunks], cfg.threads)
    return [r for part in parts for r in part]


def fit_rate(records: list, checkpoints: Sequence[int], grid: int = 200) -> RateFit:
    """κ̂ from the median log-distance decay, then the largest grid κ ≤ −slope with
    failure frequency ≤ (1/κ) e^{−κ n} at every checkpoint."""
    checkpoints = tuple(checkpoints)
    if len(checkpoints) < 3:
        raise ValueError("a rate fit needs at least 3 checkpoints")
    logs = {n: np.array([r.observables["log_distance"][n] for r in records]) for n in checkpoints}
    med = {n: float(np.median(logs[n])) for n in checkpoints}
    xs = np.array(checkpoints, dtype=float)
    ys = np.array([med[n] for n in checkpoints])
    if np.allclose(ys, ys[0]):
        slope, r2 = 0.0, 0.0
    else:
        reg = stats.linregress(xs, ys)
        slope, r2 = float(reg.slope), float(reg.rvalue ** 2)
    trials = len(records)

    def failures(kappa):
        return {n: int(np.sum(logs[n] >= -kappa * n)) for n in checkpoints}

    kappa_hat, flag = -slope, ""
    if slope >= 0:
        flag = "no synchronization"
    else:
        best = None
        for j in range(grid, 0, -1):
            kappa = -slope * j / grid
            fails = failures(kappa)
            if all(fails[n] / trials <= math.exp(-kappa * n) / kappa for n in checkpoints):
                best = kappa
                break
        if best is None:
            flag = "no synchronization"
        else:
            kappa_hat = best
    fails = failures(max(kappa_hat, 0.0))
    freqs = {n: fails[n] / trials for n in checkpoints}
    ci = {n: wilson_interval(fails[n], trials) for n in checkpoints}
    return RateFit(kappa_hat, r2, slope, ci, checkpoints, freqs, med, flag)


def sync_experiment(cfg: ExperimentConfig, x=0, y=Q(1, 2)) -> tuple:
    """Returns (RateFit, records)."""
    x, y = exact(x), exact(y)
    records = run_trials(_sync_chunk, cfg, x, y)
    return fit_rate(records, cfg.checkpoints), records


def failure_log_slope(fit: RateFit) -> tuple:
    """Slope and r² of log failure frequency against n (checkpoints with zero failures dropped)."""
    pts = [(n, math.log(f)) for n, f in fit.frequencies.items() if f > 0]
    if len(pts) < 2:
        return float("nan"), float("nan")
    reg = stats.linregress([p[0] for p in pts], [p[1] for p in pts])
    return float(reg.slope), float(reg.rvalue ** 2)


def perturbation_experiment(cfg: ExperimentConfig, delta, x=0, y=Q(1, 2)) -> dict:
    base, _ = sync_experiment(cfg, x, y)
    pert_cfg = replace(cfg, mu=cfg.mu.perturbed(delta))
    pert, _ = sync_experiment(pert_cfg, x, y)
    k = base.kappa_hat
    envelope_ok = k > 0 and all(
        pert.frequencies[n] <= 2 * math.exp(-k * n) / k for n in cfg.checkpoints)
    ratio = pert.kappa_hat / k if k > 0 else float("nan")
    return {"baseline": base, "perturbed": pert, "kappa_ratio": ratio, "envelope_ok": envelope_ok}


# ping-pong snapshots ----------------------------------------------------

def _pingpong_chunk(args):
    cfg, trials = args
    mu2 = cfg.mu2 or cfg.mu
    out = []
    for trial in trials:
        rng1, rng2 = trial_rng(cfg.seed, trial, 0), trial_rng(cfg.seed, trial, 1)
        i1 = cfg.mu.sample_indices(rng1, cfg.n_steps)
        i2 = mu2.sample_indices(rng2, cfg.n_steps)
        certified, verified = {}, {}
        Z1 = Z2 = PLHomeo.identity()
        done = 0
        for n in cfg.checkpoints:
            for a, b in zip(i1[done:n], i2[done:n]):
                g1, g2 = cfg.mu.maps[a], mu2.maps[b]
                if cfg.side == "left":
                    Z1, Z2 = g1.compose(Z1), g2.compose(Z2)
                else:
                    Z1, Z2 = Z1.compose(g1), Z2.compose(g2)
            done = n
            wit = find_schottky_witness(Z1, Z2, cfg.budget)
            certified[n] = wit is not None
            verified[n] = wit is None or is_schottky_pair(Z1, Z2, *wit)
        out.append(TrialRecord(trial, {"certified": certified, "verified": verified},
                               _increment_hash(np.concatenate([i1, i2]))))
    return out


def pingpong_experiment(cfg: ExperimentConfig) -> tuple:
    """Returns ({n: (successes, frequency, wilson)}, all_verified, records)."""
    if not cfg.exact:
        raise ValueError("the ping-pong certifier needs exact mode")
    records = run_trials(_pingpong_chunk, cfg)
    table = {}
    for n in cfg.checkpoints:
        k = sum(r.observables["certified"][n] for r in records)
        table[n] = (k, k / len(records), wilson_interval(k, len(records)))
    verified = all(all(r.observables["verified"].values()) for r in records)
    return table, verified, records


# local contraction --------------------------------------------------------

def _contraction_chunk(args):
    cfg, x, report, trials = args
    maps = _measure_maps(cfg.mu, cfg.exact)
    m = cfg.len_measure
    if not cfg.exact:
        x = float(x)
    q = cfg.q if not cfg.exact else exact(cfg.q)
    K = cfg.horizon
    out = []
    for trial in trials:
        rng = trial_rng(cfg.seed, trial)
        idx = cfg.mu.sample_indices(rng, K)
        Z = PLHomeo.identity() if cfg.exact else PLHomeo.identity().to_float()
        ext = []
        for k, i in enumerate(idx, start=1):
            Z = maps[i].compose(Z) if cfg.side == "left" else Z.compose(maps[i])
            ext.append(contracted_extents(Z, x, q ** k, m))
        # suffix intersection over k in [n, K]
        main2, main3, length, extents = {}, {}, {}, {}
        left = right = None
        alive = True
        suffix = {}
        for k in range(K, 0, -1):
            e = ext[k - 1]
            if e is None:
                alive = False
            if alive:
                left = e[0] if left is None else min(left, e[0])
                right = e[1] if right is None else min(right, e[1])
                suffix[k] = (left, right)
            else:
                suffix[k] = None
        for n in report:
            s = suffix[n]
            extents[n] = s
            main2[n] = s is not None
            if s is None:
                length[n] = 0.0
                main3[n] = False
            else:
                mass = open_arc_mass(m, x - s[0], s[0] + s[1])
                length[n] = float(mass)
                main3[n] = mass >= 1 - q ** n
        out.append(TrialRecord(trial, {"main2": main2, "main3": main3, "length": length,
                                       "extents": extents}, _increment_hash(idx)))
    return out


def local_contraction_experiment(cfg: ExperimentConfig, x=0, report: Optional[Sequence[int]] = None) -> tuple:
    """Returns ({n: {"main2": freq, "main3": freq, ...}}, records)."""
    report = tuple(sorted(report or cfg.checkpoints))
    if report[-1] > cfg.horizon:
        raise ValueError("horizon K must be at least the largest reported n")
    records = run_trials(_contraction_chunk, cfg, exact(x), report)
    T = len(records)
    table = {}
    for n in report:
        k2 = sum(r.observables["main2"][n] for r in records)
        k3 = sum(r.observables["main3"][n] for r in records)
        table[n] = {"main2": k2 / T, "main3": k3 / T, "main2_successes": k2, "main3_successes": k3,
                    "main2_ci": wilson_interval(k2, T), "main3_ci": wilson_interval(k3, T)}
    return table, records


# shrink lemmas -------------------------------------------------------------

SHRINK_LEMMAS = ("expShrink1", "expShrink2", "expShrink3", "expShrink4", "expShrink4.5")


def _nesting_word(S: SchottkySet, rng, max_len: int = 2) -> PLHomeo:
    k = int(rng.integers(0, max_len + 1))
    return compose_all(S.slots[i].rep for i in rng.integers(S.N, size=k))


def shrink_lemma_checks(S: SchottkySet, trials: int = 1000, n: int = 16, seed: int = 0,
                        x=0, y=Q(1, 2), w=None, lemmas: Sequence[str] = SHRINK_LEMMAS,
                        n_points: int = 4) -> dict:
    """Check the shrinking lemmas; each entry reports value, bound, margin and pass flag.

    ``n`` is the word length for the expShrink2 check and ``n_points`` the one
    for the two-point checks, whose bound 1 − e^{−n} is trivial for large n.
    """
    if S.median is None:
        raise ValueError("shrink lemmas need a Schottky set with a median")
    unknown = set(lemmas) - set(SHRINK_LEMMAS)
    if unknown:
        raise ValueError(f"unknown lemmas {sorted(unknown)}")
    N = S.N
    if "expShrink2" in lemmas and N < 100:
        raise ValueError("expShrink2 needs resolution N ≥ 100")
    if ({"expShrink4", "expShrink4.5"} & set(lemmas)) and N < 6:
        raise ValueError("expShrink4 and expShrink4.5 need resolution N ≥ 6")
    med = S.median
    w = w if w is not None else PLHomeo.identity()
    x, y = exact(x), exact(y)
    report = {}
    rng = trial_rng(seed, 0)

    if "expShrink1" in lemmas:
        base = apply_set(w, med).length
        good = 0
        for slot in S.slots:
            # Len(w s 𝓘) ≤ Len(w 𝓘)/√N, squared to stay exact
            img = apply_set(w, apply_set(slot.rep, med)).length
            good += N * img * img <= base * base
        value, bound = good / N, 1 - 1 / math.sqrt(N)
        report["expShrink1"] = _entry(value, bound, good, N)

    if "expShrink3" in lemmas:
        good = sum(1 for slot in S.slots
                   if not apply_set(slot.rep, med).contains(x) and not apply_set(slot.rep, med).contains(y))
        report["expShrink3"] = _entry(good / N, 1 - 2 / N, good, N)

    def w_sequence(length):
        # w₀ unrestricted, w₁…w_length nest the median
        return [random_homeo(rng, 3, 64)] + [_nesting_word(S, rng) for _ in range(length)]

    if "expShrink2" in lemmas:
        good = 0
        for _ in range(trials):
            ws = w_sequence(n)
            ss = rng.integers(N, size=n)
            A = apply_set(ws[n], med)
            for j in range(n, 0, -1):
                A = apply_set(ws[j - 1], apply_set(S.slots[ss[j - 1]].rep, A))
            ref = apply_set(ws[0], med).length
            # Len(A) ≤ N^{−n/4} Len(w₀𝓘)  ⇔  Len(A)^4 · N^n ≤ Len(w₀𝓘)^4
            good += A.length ** 4 * N ** n <= ref ** 4
        report["expShrink2"] = _mc_entry(good, trials, 1 - math.exp(-n / 4))

    if "expShrink4" in lemmas:
        good = 0
        for _ in range(trials):
            ws = w_sequence(n_points)
            ss = rng.integers(N, size=n_points)
            A = apply_set(ws[n_points], med)
            for j in range(n_points, 0, -1):
                A = apply_set(ws[j - 1], apply_set(S.slots[ss[j - 1]].rep, A))
            good += not A.contains(x) and not A.contains(y)
        report["expShrink4"] = _mc_entry(good, trials, 1 - math.exp(-n_points))

    if "expShrink4.5" in lemmas:
        good = 0
        for _ in range(trials):
            ws = [_nesting_word(S, rng) for _ in range(n_points)] + [random_homeo(rng, 3, 64)]
            ss = rng.integers(N, size=n_points)
            maps = [ws[0]]
            for j in range(1, n_points + 1):
                maps += [S.slots[ss[j - 1]].rep, ws[j]]
            px, py = x, y
            for g in reversed(maps):
                px, py = g.apply(px), g.apply(py)
            good += med.contains(px) and med.contains(py)
        report["expShrink4.5"] = _mc_entry(good, trials, 1 - math.exp(-n_points))
    return report


def lemma_suite(S: SchottkySet, trials: int = 200, seed: int = 0, n: int = 16, maps: int = 5) -> dict:
    """Every deterministic and Monte Carlo lemma check whose preconditions S meets.

    Counting checks run against ``maps`` random PL maps; entries whose
    hypotheses fail are reported as skipped rather than run.
    """
    N, zeta = S.N, S.multiplicity
    rng = trial_rng(seed, 0, 7)
    gs = [random_homeo(rng, 4, 1 << 10) for _ in range(maps)]
    report = {}
    held = sum(repelling_choice_holds(g, S) for g in gs)
    report["RepellingChoice"] = {"value": held / maps, "bound": 2 * zeta ** 2 * math.sqrt(N),
                                 "successes": held, "trials": maps, "passed": held == maps}
    if N > 4:
        Is, Js = [s.I for s in S.slots], [s.J for s in S.slots]
        counts = [intersecting_pairs(Is, Js, g) for g in gs]
        held = sum(pair_count_bound_holds(c, N, zeta) for c in counts)
        report["1segmentZeta"] = {"value": max(counts), "bound": 3 * zeta ** 2 * N * math.sqrt(N),
                                  "successes": held, "trials": maps, "passed": held == maps}
    else:
        report["1segmentZeta"] = {"skipped": "needs N > 4", "passed": True}
    if N >= 4 * zeta ** 2 and S.median is not None:
        fr = [segment_schottky_fraction(S, S, g) for g in gs[:2]]
        worst = min(f["fraction"] for f in fr)
        report["1segmentSchottky"] = {"value": float(worst), "bound": fr[0]["bound"],
                                      "successes": worst.numerator * (N * N) // worst.denominator,
                                      "trials": N * N, "passed": all(f["fraction"] >= f["bound"] for f in fr)}
    lemmas = ["expShrink1", "expShrink3"]
    if N >= 100:
        lemmas.append("expShrink2")
    if N >= 6:
        lemmas += ["expShrink4", "expShrink4.5"]
    for name in SHRINK_LEMMAS:
        if name not in lemmas:
            report[name] = {"skipped": f"resolution N = {N} below the lemma's precondition", "passed": True}
    shrink = shrink_lemma_checks(S, trials, n, seed, lemmas=lemmas)
    for name, entry in shrink.items():
        if name == "expShrink2":
            entry["n"] = n
        report[name] = entry
    return report


def _entry(value, bound, successes=None, trials=None) -> dict:
    out = {"value": value, "bound": bound, "margin": value - bound, "passed": value >= bound}
    if trials is not None:
        out.update(successes=successes, trials=trials)
    return out


def _mc_entry(successes, trials, bound) -> dict:
    lo, hi = wilson_interval(successes, trials)
    value = successes / trials
    return {"value": value, "bound": bound, "margin": value - bound, "wilson": (lo, hi),
            "successes": successes, "trials": trials, "passed": hi >= bound}


# fixtures ---------------------------------------------------------------

def amplified_fixture(N: int = 2, offset=0, interleaved: bool = False) -> SchottkySet:
    pp = interleaved_pp_fixture() if interleaved else pp_fixture(offset)
    return amplify(*pp, N)


def symmetric_measure(S: SchottkySet) -> StepMeasure:
    """Uniform on the representatives and their inverses."""
    maps = list(S.reps) + [g.inverse() for g in S.reps]
    return StepMeasure.uniform(maps)


def rep_measure(S: SchottkySet) -> StepMeasure:
    return StepMeasure.uniform(S.reps)

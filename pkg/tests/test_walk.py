import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schottky_walks.circle import Arc, Atomic, CantorCdf, Lebesgue, open_arc_mass
from schottky_walks.homeo import PLHomeo, identity, random_homeo, rotation
from schottky_walks.numeric import Q, exact
from schottky_walks.schottky import StepMeasure, synth_hyperbolic
from schottky_walks.walk import (ExperimentConfig, TrialRecord, amplified_fixture, contracted_extents,
                                 fit_rate, local_contraction_experiment, max_contracted_arc,
                                 perturbation_experiment, pingpong_experiment, sample_walk,
                                 shrink_lemma_checks, symmetric_measure, sync_experiment, trial_rng,
                                 wilson_interval)

GRID = 4096


@pytest.fixture(scope="module")
def pp_measure():
    return symmetric_measure(amplified_fixture(2))


def test_sample_walk_empty():
    assert sample_walk(StepMeasure.uniform([rotation(Q(1, 4))]), 0) == []


@pytest.mark.parametrize("side", ["left", "right"])
def test_rotation_of_order_four_returns_to_identity(side):
    Z = sample_walk(StepMeasure.point_mass(rotation(Q(1, 4))), 4, side=side)
    assert len(Z) == 4 and Z[-1].is_identity()
    assert Z[1] == rotation(Q(1, 2))


def test_sample_walk_replays_and_respects_side(S4):
    mu = StepMeasure.uniform(S4.reps)
    a = sample_walk(mu, 12, seed=7)
    assert a == sample_walk(mu, 12, seed=7)
    idx = mu.sample_indices(trial_rng(7, 0), 12)
    left = right = identity()
    for i in idx:
        left, right = mu.maps[i].compose(left), right.compose(mu.maps[i])
    assert a[-1] == left
    assert sample_walk(mu, 12, side="right", seed=7)[-1] == right
    with pytest.raises(ValueError):
        sample_walk(mu, 3, side="up")


def test_max_contracted_arc_identity_is_symmetric():
    assert max_contracted_arc(identity(), 0, Q(1, 4)) == Arc(Q(7, 8), Q(1, 8))


def test_max_contracted_arc_rotation_matches_identity():
    A = max_contracted_arc(rotation(Q(1, 2)), Q(1, 3), Q(1, 4))
    assert A == Arc(Q(1, 3) - Q(1, 8), Q(1, 3) + Q(1, 8))


def test_max_contracted_arc_rejects_nonpositive_t():
    with pytest.raises(ValueError):
        max_contracted_arc(identity(), 0, 0)


def test_heavy_atom_defeats_every_arc():
    m = Atomic(((Q(1, 2), Q(1, 2)), (0, Q(1, 2))))
    assert max_contracted_arc(rotation(Q(1, 2)), 0, Q(1, 4), m) is None
    assert max_contracted_arc(identity(), Q(1, 4), Q(1, 4), m) is not None


def _grid_best(Z: PLHomeo, x, t):
    """Longest arc (x − a/GRID, x + b/GRID) whose image has Lebesgue length ≤ t, by two pointers."""
    lift = {j: Z.eval_lift(x + Q(j, GRID)) for j in range(-GRID, GRID + 1)}
    best, b = 0, GRID - 1
    for a in range(1, GRID):
        b = min(b, GRID - a)
        while b >= 1 and lift[b] - lift[-a] > t:
            b -= 1
        if b < 1:
            break
        best = max(best, a + b)
    return Q(best, GRID)


@settings(max_examples=15)
@given(st.integers(0, 10 ** 6), st.integers(0, GRID - 1), st.integers(2, 60))
def test_max_contracted_arc_beats_grid_oracle(seed, xk, tk):
    Z = random_homeo(np.random.default_rng(seed), 4, 1024)
    if Z.degree != 1:
        return
    x, t = Q(xk, GRID) + Q(1, 3 * GRID), Q(tk, 64)
    A = max_contracted_arc(Z, x, t)
    assert A is not None and A.contains(x)
    image = Z.eval_lift(x + (A.b - x) % 1) - Z.eval_lift(x - (x - A.a) % 1)
    assert image <= t
    assert A.length >= _grid_best(Z, x, t)


def test_max_contracted_arc_is_maximal():
    rng = np.random.default_rng(4)
    for _ in range(20):
        Z = random_homeo(rng, 4, 1024)
        x, t = Q(int(rng.integers(1024)), 1024), Q(int(rng.integers(2, 40)), 64)
        left, right = contracted_extents(Z, x, t)
        step = Q(1, 10 ** 6)
        m = Lebesgue()
        # the image of an open arc is the open arc between the endpoint images
        grow_l = Arc(Z.apply(x - left - step), Z.apply(x + right))
        grow_r = Arc(Z.apply(x - left), Z.apply(x + right + step))
        if Z.degree == 1:
            assert open_arc_mass(m, grow_l.a, grow_l.length) > t or left + right + step >= 1
            assert open_arc_mass(m, grow_r.a, grow_r.length) > t or left + right + step >= 1


def test_sync_identity_is_flagged():
    cfg = ExperimentConfig(StepMeasure.point_mass(identity()), trials=20)
    fit, _ = sync_experiment(cfg)
    assert fit.kappa_hat <= 0 and fit.flag == "no synchronization" and not fit.synchronized


def test_sync_swapping_points_changes_nothing(pp_measure):
    cfg = ExperimentConfig(pp_measure, checkpoints=(5, 10, 15), trials=40, seed=3)
    a, ra = sync_experiment(cfg, 0, Q(1, 2))
    b, rb = sync_experiment(cfg, Q(1, 2), 0)
    assert [r.observables for r in ra] == [r.observables for r in rb]
    assert a == b


def test_sync_is_reproducible_and_independent_of_workers(pp_measure):
    cfg = ExperimentConfig(pp_measure, checkpoints=(5, 10, 20), trials=12, seed=11)
    one = sync_experiment(cfg)[1]
    again = sync_experiment(cfg)[1]
    two = sync_experiment(ExperimentConfig(pp_measure, checkpoints=(5, 10, 20), trials=12, seed=11,
                                           threads=2))[1]
    assert [(r.trial, r.observables, r.final_hash) for r in one] == \
        [(r.trial, r.observables, r.final_hash) for r in again] == \
        [(r.trial, r.observables, r.final_hash) for r in two]


def test_sync_float_mode_tracks_exact(pp_measure):
    exact_run = sync_experiment(ExperimentConfig(pp_measure, checkpoints=(2, 4, 6), trials=6))[1]
    float_run = sync_experiment(ExperimentConfig(pp_measure, checkpoints=(2, 4, 6), trials=6,
                                                 exact=False))[1]
    for r, s in zip(exact_run, float_run):
        for n in (2, 4, 6):
            # float positions carry absolute error, so compare distances rather than logs
            d_exact = math.exp(r.observables["log_distance"][n])
            d_float = math.exp(s.observables["log_distance"][n])
            assert abs(d_exact - d_float) < 1e-12


def test_fit_rate_on_exact_linear_decay():
    records = [TrialRecord(i, {"log_distance": {n: -0.5 * n for n in (10, 20, 40)}}, "")
               for i in range(10)]
    fit = fit_rate(records, (10, 20, 40))
    assert fit.slope == pytest.approx(-0.5) and fit.r2 == pytest.approx(1.0)
    # at κ = 0.5 every trial sits on the boundary and fails; the next grid step down passes
    assert fit.kappa_hat == pytest.approx(0.5 * 199 / 200)
    assert fit.synchronized and all(f == 0 for f in fit.frequencies.values())


def test_fit_rate_needs_three_checkpoints():
    with pytest.raises(ValueError):
        fit_rate([], (1, 2))


@given(st.integers(0, 200), st.integers(1, 200))
def test_wilson_interval_matches_closed_form(k, n):
    k = min(k, n)
    z, p = 3.0, k / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
    lo, hi = wilson_interval(k, n)
    assert lo == pytest.approx(max(0.0, centre - half), abs=1e-9)
    assert hi == pytest.approx(min(1.0, centre + half), abs=1e-9)


def test_config_guards():
    mu = StepMeasure.point_mass(identity())
    for bad in ({"trials": 0}, {"q": 1.0}, {"side": "up"}, {"checkpoints": (0, 3)}):
        with pytest.raises(ValueError):
            ExperimentConfig(mu, **bad)


def test_pingpong_identity_never_certifies():
    mu = StepMeasure.point_mass(identity())
    table, verified, _ = pingpong_experiment(ExperimentConfig(mu, mu2=mu, checkpoints=(2, 4), trials=5))
    assert verified and all(k == 0 for k, _, _ in table.values())


def test_pingpong_certificates_reverify(pp_measure):
    mu2 = symmetric_measure(amplified_fixture(2, Q(1, 16)))
    cfg = ExperimentConfig(pp_measure, mu2=mu2, checkpoints=(5, 20), trials=10, seed=1)
    table, verified, records = pingpong_experiment(cfg)
    assert verified
    assert table[20][0] > 0


def test_hyperbolic_point_mass_contracts_every_time():
    f = synth_hyperbolic(Arc(0, Q(1, 8)), Arc(Q(1, 2), Q(5, 8)), Q(1, 32))
    cfg = ExperimentConfig(StepMeasure.point_mass(f), checkpoints=(1, 5, 10, 20), trials=3, horizon=20)
    table, _ = local_contraction_experiment(cfg, x=Q(9, 16))
    assert all(row["main2"] == 1 for row in table.values())


def test_local_contraction_horizon_guard(pp_measure):
    cfg = ExperimentConfig(pp_measure, checkpoints=(10, 40), horizon=20, trials=2)
    with pytest.raises(ValueError):
        local_contraction_experiment(cfg)


@pytest.mark.parametrize("measure", [Lebesgue(), CantorCdf(30)])
def test_main2_event_is_monotone_per_trial(pp_measure, measure):
    cfg = ExperimentConfig(pp_measure, checkpoints=(2, 5, 10, 15), horizon=15, trials=8, q=0.8,
                           len_measure=measure, exact=False)
    _, records = local_contraction_experiment(cfg)
    for r in records:
        flags = [r.observables["main2"][n] for n in (2, 5, 10, 15)]
        assert flags == sorted(flags)
        for n in (2, 5, 10, 15):
            assert r.observables["main3"][n] <= r.observables["main2"][n]


def test_exp_shrink1_on_s2500(S2500):
    entry = shrink_lemma_checks(S2500, lemmas=["expShrink1"])["expShrink1"]
    assert entry["value"] >= 0.98 and entry["passed"]


def test_exp_shrink3_on_s4(S4):
    entry = shrink_lemma_checks(S4, lemmas=["expShrink3"])["expShrink3"]
    assert entry["value"] >= Q(1, 2) and entry["bound"] == 0.5


def test_exp_shrink2_needs_resolution(S4):
    with pytest.raises(ValueError, match="N ≥ 100"):
        shrink_lemma_checks(S4, lemmas=["expShrink2"])
    with pytest.raises(ValueError, match="unknown"):
        shrink_lemma_checks(S4, lemmas=["expShrink9"])


def test_two_point_shrink_lemmas_on_moderate_resolution():
    from schottky_walks.schottky import make_canonical_schottky
    rep = shrink_lemma_checks(make_canonical_schottky(16), trials=200,
                              lemmas=["expShrink4", "expShrink4.5"])
    assert rep["expShrink4"]["passed"] and rep["expShrink4.5"]["passed"]


def test_zero_perturbation_is_identical(pp_measure):
    cfg = ExperimentConfig(pp_measure, checkpoints=(5, 10, 20), trials=30)
    rep = perturbation_experiment(cfg, 0)
    assert rep["baseline"] == rep["perturbed"]


def test_perturbation_removing_support_is_rejected(pp_measure):
    cfg = ExperimentConfig(pp_measure, checkpoints=(5, 10, 20), trials=5)
    with pytest.raises(ValueError):
        perturbation_experiment(cfg, Q(1, 4))


def test_float_extents_survive_sub_ulp_expansion(pp_measure):
    # by step 13 this walk expands a piece far thinner than the float spacing
    maps = pp_measure.maps
    idx = pp_measure.sample_indices(trial_rng(11, 11), 13)
    Ze, Zf = identity(), identity().to_float()
    for i in idx:
        Ze, Zf = maps[i].compose(Ze), maps[i].to_float().compose(Zf)
    t = 0.9 ** 13
    left, right = contracted_extents(Ze, 0, exact(t))
    fl, fr = contracted_extents(Zf, 0.0, t)
    assert float(left + right) > 0.999
    assert isinstance(fl, float) and isinstance(fr, float)
    assert abs(fl - float(left)) < 1e-9 and abs(fr - float(right)) < 1e-9

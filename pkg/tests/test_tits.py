import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schottky_walks.circle import Arc, ElementarySet, circle_distance
from schottky_walks.homeo import apply_set, classify_fixed_points, identity, rotation
from schottky_walks.numeric import Q
from schottky_walks.schottky import amplify, is_schottky_pair, nested_images_ok, pp_fixture
from schottky_walks.tits import (SearchBudget, SemigroupBall, contraction_infimum, detect_repeller,
                                 diameter, double_cover_lift, find_contractible_eps, firm_interval,
                                 firm_pair_search, neumann_separate, schottky_from_repeller)

PP = pp_fixture()
ROTATIONS = [rotation(Q(1, 3)), rotation(Q(1, 5))]
F = PP.f1
REPEL = classify_fixed_points(F)["repelling"][0]
ATTRACT = classify_fixed_points(F)["attracting"][0]
SMALL = SearchBudget(depth=10, tol=1e-6, grid=256, beam=32, repeller_grid=64)


@pytest.fixture(scope="module")
def pp_ball():
    return SemigroupBall([PP.f1, PP.f2], 12)


def test_diameter_examples():
    assert diameter(ElementarySet.empty()) == 0
    assert diameter(ElementarySet.arc(0, Q(1, 4))) == Q(1, 4)
    two = ElementarySet.arc(0, Q(1, 8)) | ElementarySet.arc(Q(1, 2), Q(5, 8))
    assert diameter(two) == Q(5, 8)


def test_identity_ball_contracts_nothing():
    A = Arc(Q(1, 8), Q(3, 8))
    assert contraction_infimum(SemigroupBall([identity()], 5), A) == (Q(1, 4), ())


def test_hyperbolic_orbit_contracts_below_tolerance():
    # an arc around the attracting point avoiding the repelling one
    A = Arc(ATTRACT - Q(1, 64), ATTRACT + Q(1, 64))
    assert not A.contains(REPEL)
    value, word = contraction_infimum(SemigroupBall([F], 20), A)
    assert value <= Q(1, 10 ** 6)
    assert diameter(apply_set(SemigroupBall([F], 20).word_map(word), A.to_set())) == value


def test_rotations_are_isometries():
    A = Arc(Q(1, 7), Q(1, 2))
    value, _ = contraction_infimum(SemigroupBall(ROTATIONS, 6), A)
    assert value == A.length


@settings(max_examples=20)
@given(st.integers(0, 63), st.integers(1, 20), st.integers(1, 5), st.integers(1, 5))
def test_contraction_infimum_monotone_in_depth(a, length, d1, d2):
    A = Arc(Q(a, 64), Q(a + length, 64))
    lo, hi = sorted((d1, d2))
    gens = [PP.f1, PP.f2]
    assert contraction_infimum(SemigroupBall(gens, hi), A)[0] <= contraction_infimum(SemigroupBall(gens, lo), A)[0]


def test_ball_deduplicates_and_respects_size_bound():
    ball = SemigroupBall([rotation(Q(1, 4))], 10)
    assert len(ball) == 4
    ball = SemigroupBall([PP.f1, PP.f2], 4)
    assert len(ball) <= sum(2 ** l for l in range(5))
    maps = [g for _, g in ball]
    assert len(set(maps)) == len(maps)
    for word, g in ball:
        assert ball.word_map(word) == g
    with pytest.raises(ValueError):
        SemigroupBall([F], -1)


def test_ball_words_come_out_level_by_level():
    words = [w for w, _ in SemigroupBall([PP.f1, PP.f2], 3)]
    assert words == sorted(words, key=len)


def test_find_contractible_eps_on_pp_pair():
    eps = find_contractible_eps(SemigroupBall([PP.f1, PP.f2], 15), tol=1e-4, grid=1024)
    assert eps is not None and eps >= Q(1, 32)


def test_find_contractible_eps_rotations_none():
    assert find_contractible_eps(SemigroupBall(ROTATIONS, 6), tol=1e-4, grid=64) is None


def test_find_contractible_eps_single_hyperbolic_none():
    assert find_contractible_eps(SemigroupBall([F], 15), tol=1e-4, grid=64) is None


def test_detect_repeller_single_hyperbolic():
    found = detect_repeller(SemigroupBall([F], 30), SMALL)
    assert found
    assert all(circle_distance(x, REPEL) <= Q(1, SMALL.repeller_grid) for x in found)


def test_detect_repeller_rotations_empty():
    assert detect_repeller(SemigroupBall(ROTATIONS, 6), SMALL) == []


def test_detect_repeller_pp_nonempty(pp_ball):
    assert detect_repeller(pp_ball, SMALL)


def test_firm_interval_rotations_degenerate():
    A = firm_interval(SemigroupBall(ROTATIONS, 6), Q(1, 4), SMALL)
    assert A.length == 0


def test_firm_interval_runs_up_to_the_repeller():
    x = REPEL + Q(1, 256)
    A = firm_interval(SemigroupBall([F], 30), x, SMALL)
    # [x, y] contracts for every y short of the repelling point
    assert Arc(x, REPEL).length - A.length <= Q(2, SMALL.grid)


def test_firm_pair_for_non_proximal_fixture():
    ball = SemigroupBall([double_cover_lift(PP.f1), double_cover_lift(PP.f2)], 10)
    pair = firm_pair_search(ball, SMALL, points=8)
    assert pair is not None
    x, y = pair
    assert firm_interval(ball, x, SMALL).length <= Arc(x, y).length
    assert firm_interval(ball, y, SMALL).length <= Arc(y, x).length


def test_neumann_separate_examples(pp_ball):
    assert neumann_separate(pp_ball, [0], [Q(1, 2)]).is_identity()
    f = PP.f1
    p = classify_fixed_points(f)["attracting"][0]
    assert neumann_separate(SemigroupBall([f, f.compose(f)], 6), [p], [p]) is None


def test_neumann_separate_random_three_point_sets():
    ball = SemigroupBall([PP.f1, PP.f2], 8)
    rng = np.random.default_rng(2)
    for _ in range(10):
        A = [Q(int(k), 1024) for k in rng.choice(1024, 3, replace=False)]
        B = [Q(int(k), 1024) for k in rng.choice(1024, 3, replace=False)]
        B[0] = A[0]
        g = neumann_separate(ball, A, B)
        assert g is not None
        assert not {g.apply(a) for a in A} & set(B)


def test_schottky_from_repeller_pp_feeds_amplify(pp_ball):
    pair = schottky_from_repeller(pp_ball, SMALL)
    assert pair is not None
    assert is_schottky_pair(*pair)
    S = amplify(*pair, 3)
    assert S.N == 3 and nested_images_ok(S)


def test_schottky_from_repeller_rotations_none():
    assert schottky_from_repeller(SemigroupBall(ROTATIONS, 6), SMALL) is None


def test_budget_guards():
    with pytest.raises(ValueError):
        SearchBudget(tol=0)

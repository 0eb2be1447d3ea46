import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from schottky_walks.circle import (Arc, Atomic, CantorCdf, ElementarySet, Lebesgue, ccw, circle_point,
                                   essentially_contains, essentially_disjoint, eps_neighborhood,
                                   measure_of)
from schottky_walks.numeric import Q

from conftest import DENOM, elementary_sets, points

# A set whose breakpoints lie on the 1/DENOM grid is determined by its value at
# the grid points and at the gap midpoints, which gives a brute-force oracle.
CELLS = [Q(k, 2 * DENOM) for k in range(2 * DENOM)]


def cells(A):
    return [A.contains(z) for z in CELLS]


def test_ccw_examples():
    assert ccw(0, Q(1, 4), Q(1, 2))
    assert not ccw(0, Q(1, 2), Q(1, 4))
    assert ccw(Q(9, 10), Q(1, 10), Q(3, 10))


def test_ccw_rejects_repeated_points():
    with pytest.raises(ValueError):
        ccw(0, 0, Q(1, 2))


@given(points, points, points)
def test_ccw_exactly_one_orientation(x, y, z):
    if len({x, y, z}) < 3:
        return
    assert ccw(x, y, z) != ccw(x, z, y)


@given(points, points)
def test_complementary_arcs_have_total_length_one(a, b):
    if a == b:
        return
    assert Arc(a, b).length + Arc(b, a).length == 1


def test_normalization_is_idempotent():
    for x in [Q(3, 2), Q(-1, 4), 1, "5/4"]:
        p = circle_point(x)
        assert 0 <= p < 1
        assert circle_point(p) == p


def test_essentially_disjoint_examples():
    A = ElementarySet.arc(0, Q(1, 4))
    assert essentially_disjoint(A, ElementarySet.arc(Q(1, 2), Q(3, 4)))
    assert not essentially_disjoint(A, ElementarySet.arc(Q(1, 4), Q(1, 2)))
    B = ElementarySet.arc(0, Q(1, 8)) | ElementarySet.arc(Q(1, 2), Q(5, 8))
    assert essentially_disjoint(B, ElementarySet.arc(Q(3, 4), Q(7, 8)))


def test_essentially_contains_examples():
    A = ElementarySet.arc(0, Q(1, 2))
    assert essentially_contains(A, ElementarySet.arc(Q(1, 8), Q(1, 4)))
    assert not essentially_contains(A, ElementarySet.arc(0, Q(1, 4)))
    assert essentially_contains(ElementarySet.full(), ElementarySet.arc(Q(1, 3), Q(2, 3)))
    assert essentially_contains(ElementarySet.full(), ElementarySet.full())


def test_eps_neighborhood_examples():
    A = ElementarySet.arc(Q(1, 4), Q(1, 2))
    assert eps_neighborhood(A, Q(1, 8), closed=False) == ElementarySet.arc(Q(1, 8), Q(5, 8))
    assert eps_neighborhood(ElementarySet.point(0), Q(1, 4), closed=False) == ElementarySet.arc(Q(3, 4), Q(1, 4))
    two = ElementarySet.arc(0, Q(3, 8)) | ElementarySet.arc(Q(1, 2), Q(7, 8))
    assert eps_neighborhood(two, Q(1, 16)).is_full()


def test_eps_neighborhood_closed_default_keeps_endpoints():
    N = eps_neighborhood(ElementarySet.point(0), Q(1, 4))
    assert N == ElementarySet.closed_arc(Q(3, 4), Q(1, 4))


def test_eps_neighborhood_rejects_nonpositive():
    with pytest.raises(ValueError):
        eps_neighborhood(ElementarySet.point(0), 0)


@given(elementary_sets(), st.integers(1, 16))
def test_eps_neighborhood_never_adds_components(A, k):
    if A.is_empty() or A.is_full():
        return
    N = eps_neighborhood(A, Q(k, DENOM))
    assert A.subset(N)
    assert N.is_full() or N.n_components <= A.n_components


def test_measure_examples():
    half = ElementarySet.arc(0, Q(1, 2))
    assert measure_of(Lebesgue(), half) == Q(1, 2)
    assert measure_of(Atomic(((Q(3, 10), 1),)), half) == 1
    assert measure_of(CantorCdf(40), ElementarySet.arc(0, Q(1, 3))) == Q(1, 2)


def test_cantor_cdf_against_ternary_expansion():
    m = CantorCdf(40)
    # left endpoints of the level-2 intervals: 0, 2/9, 2/3, 8/9
    assert [m.cdf(x) for x in (Q(2, 9), Q(2, 3), Q(8, 9))] == [Q(1, 4), Q(1, 2), Q(3, 4)]
    assert m.cdf(Q(1, 2)) == Q(1, 2)
    # 1/4 = 0.0202..₃ maps to 0.0101..₂ = 1/3, up to the 40-digit truncation
    assert 0 <= Q(1, 3) - m.cdf(Q(1, 4)) <= Q(1, 2 ** 40)


@given(st.integers(1, 2 ** 20 - 1))
def test_cantor_quantile_inverts_cdf(k):
    m = CantorCdf(30)
    c = Q(k, 2 ** 20)
    assert abs(float(m.cdf(m.quantile(c)) - c)) < 1e-9


@given(st.integers(1, 10 ** 9), st.integers(0, 12), st.booleans())
def test_cantor_exact_digits_agree_with_float_loop(k, power, right):
    # the exact routines work on integer numerators; the float loop is an independent route
    m = CantorCdf(30)
    q = 3 ** power * (k % 1000 + 2)
    x = Q(k % (q - 1) + 1, q)
    assert abs(float(m.cdf(x)) - m.cdf(float(x))) < 1e-9
    assert abs(float(m.quantile(x, right)) - m.quantile(float(x), right)) < 1e-9


def test_atomic_rejects_bad_total():
    with pytest.raises(ValueError):
        Atomic(((0, Q(1, 2)),))


@given(elementary_sets(), elementary_sets())
def test_boolean_algebra_matches_cellwise_oracle(A, B):
    a, b = cells(A), cells(B)
    assert cells(A | B) == [x or y for x, y in zip(a, b)]
    assert cells(A & B) == [x and y for x, y in zip(a, b)]
    assert cells(A - B) == [x and not y for x, y in zip(a, b)]
    assert cells(~A) == [not x for x in a]
    assert A.subset(B) == all(y or not x for x, y in zip(a, b))
    assert A.intersects(B) == any(x and y for x, y in zip(a, b))


@given(elementary_sets())
def test_closure_and_interior_match_oracle(A):
    a = cells(A)
    n = len(a)
    clo = [a[i] or (i % 2 == 0 and (a[i - 1] or a[(i + 1) % n])) for i in range(n)]
    inn = [a[i] and (i % 2 == 1 or (a[i - 1] and a[(i + 1) % n])) for i in range(n)]
    assert cells(A.closure()) == clo
    assert cells(A.interior()) == inn


@given(elementary_sets())
def test_length_counts_gap_cells(A):
    assert A.length == Q(sum(cells(A)[1::2]), DENOM)


@given(elementary_sets())
def test_components_rebuild_the_set(A):
    if A.is_full():
        return
    arcs = A.components()
    assert ElementarySet.from_arcs(arcs) == A
    assert len(arcs) == A.n_components


@given(elementary_sets(), elementary_sets())
def test_essentially_disjoint_implies_disjoint(A, B):
    if essentially_disjoint(A, B):
        assert not A.intersects(B)


@given(elementary_sets(), elementary_sets(), st.sampled_from([Lebesgue(), CantorCdf(20)]))
def test_measure_monotone_and_additive(A, B, m):
    assert measure_of(m, A & B) <= measure_of(m, A)
    assert abs(measure_of(m, A | B) - (measure_of(m, A) + measure_of(m, B - A))) < 1e-12


@given(elementary_sets(), elementary_sets())
def test_atomic_measure_monotone_and_additive(A, B):
    m = Atomic(((0, Q(1, 4)), (Q(1, 2), Q(1, 4)), (Q(3, 256), Q(1, 2))))
    assert measure_of(m, A & B) <= measure_of(m, A)
    assert measure_of(m, A | B) == measure_of(m, A) + measure_of(m, B - A)


@given(elementary_sets())
def test_json_roundtrip(A):
    text = json.dumps(A.to_json())
    assert ElementarySet.from_json(json.loads(text)) == A


def test_json_layout():
    data = ElementarySet.arc(0, Q(1, 2), closed_a=True).to_json()
    assert data == {"arcs": [{"a": "0/1", "b": "1/2", "closed_a": True, "closed_b": False}]}


def test_float_mode_roundtrip():
    A = ElementarySet.arc(Q(1, 8), Q(3, 8))
    F = A.to_float()
    assert abs(F.length - 0.25) < 1e-12
    assert F.to_exact() == A

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from schottky_walks.circle import ElementarySet
from schottky_walks.homeo import PLHomeo, random_homeo
from schottky_walks.numeric import Q
from schottky_walks.pivot import PivotInput, Triple
from schottky_walks.schottky import make_canonical_schottky

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DENOM = 256

points = st.integers(0, DENOM - 1).map(lambda k: Q(k, DENOM))


@st.composite
def elementary_sets(draw, max_arcs=3):
    k = draw(st.integers(0, 2 * max_arcs))
    cuts = sorted(draw(st.sets(st.integers(0, DENOM - 1), min_size=k, max_size=k)))
    if k == 0:
        return ElementarySet((), (), (draw(st.booleans()),))
    flags = draw(st.lists(st.booleans(), min_size=2 * k, max_size=2 * k))
    return ElementarySet([Q(c, DENOM) for c in cuts], flags[:k], flags[k:])


@st.composite
def open_arcs(draw):
    a = draw(st.integers(0, DENOM - 1))
    length = draw(st.integers(1, DENOM - 1))
    return ElementarySet.arc(Q(a, DENOM), Q(a + length, DENOM))


homeos = st.integers(0, 2 ** 32 - 1).map(lambda s: random_homeo(np.random.default_rng(s), 4, 1 << 10))


def random_w(S, rng):
    # a mix of benign and adversarial contexts
    kind = rng.integers(4)
    if kind == 0:
        return PLHomeo.identity()
    if kind == 1:
        return S.reps[rng.integers(S.N)]
    if kind == 2:
        return S.reps[rng.integers(S.N)].inverse()
    return random_homeo(rng, 3, 256)


def random_input(S, rng, n):
    ws = [random_w(S, rng) for _ in range(n + 1)]
    triples = [Triple.from_slots(S, *map(int, rng.integers(S.N, size=3))) for _ in range(n)]
    return PivotInput(S, ws, triples)


@pytest.fixture(scope="session")
def S4():
    return make_canonical_schottky(4)


@pytest.fixture(scope="session")
def S2500():
    return make_canonical_schottky(2500)

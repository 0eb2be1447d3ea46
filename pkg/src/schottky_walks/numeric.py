"""Number helpers shared by the exact (rational) and float backends.

Exact values are gmpy2 ``mpq`` when gmpy2 is importable and
``fractions.Fraction`` otherwise. Float values are plain Python floats.
The two kinds are never mixed inside one object.
"""
from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational

try:
    from gmpy2 import mpq as Q
    HAVE_GMPY2 = True
except ImportError:  # pragma: no cover - exercised only without gmpy2
    Q = Fraction
    HAVE_GMPY2 = False

# Predicate tolerance used by float-mode inclusion tests.
FLOAT_TOL = 1e-12

ZERO = Q(0)
ONE = Q(1)
HALF = Q(1, 2)


def exact(x) -> "Q":
    """Convert ints, strings like ``"3/8"``, Fractions and floats to an exact rational."""
    if isinstance(x, Q):
        return x
    if isinstance(x, str):
        return Q(Fraction(x.strip()))
    if isinstance(x, float):
        return Q(Fraction(x))
    if isinstance(x, (int, Rational)):
        return Q(x)
    # gmpy2 mpz and other integer-likes
    return Q(Fraction(x))


def is_exact(x) -> bool:
    return not isinstance(x, float)


def floor(x) -> int:
    return math.floor(x)


def mod1(x):
    """Reduce to [0, 1). Float results that round up to 1.0 are folded to 0.0."""
    r = x - math.floor(x)
    if isinstance(r, float) and r >= 1.0:
        return 0.0
    return r


def frac_str(x) -> str:
    """Serialize an exact rational as ``"p/q"``."""
    x = exact(x)
    return f"{x.numerator}/{x.denominator}"


def parse_number(v):
    """Inverse of the JSON encoding: strings are rationals, numbers are floats."""
    if isinstance(v, str):
        return exact(v)
    if isinstance(v, bool):
        raise TypeError("boolean is not a number")
    if isinstance(v, int):
        return Q(v)
    return float(v)


def encode_number(x):
    return float(x) if isinstance(x, float) else frac_str(x)


def like(x, ref):
    """Coerce ``x`` into the numeric kind of ``ref``."""
    if isinstance(ref, float):
        return float(x)
    return exact(x)


def log_rational(x) -> float:
    """Natural log of a positive exact rational without overflowing to float."""
    if isinstance(x, float):
        return math.log(x)
    return math.log(int(x.numerator)) - math.log(int(x.denominator))

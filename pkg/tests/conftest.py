import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def exact_det(rows) -> Fraction:
    """Determinant by fraction-exact Gaussian elimination (floats are exact rationals)."""
    a = [[Fraction(float(x)) for x in r] for r in rows]
    n = len(a)
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if a[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = -det
        det *= a[c][c]
        for r in range(c + 1, n):
            f = a[r][c] / a[c][c]
            if f:
                a[r] = [x - f * y for x, y in zip(a[r], a[c])]
    return det


def log_fraction(f: Fraction) -> float:
    # math.log of big ints is exact enough; avoids float overflow/underflow of f itself
    return math.log(f.numerator) - math.log(f.denominator)


def random_unit_rows(rng: np.random.Generator, g: int, d: int) -> np.ndarray:
    e = rng.normal(size=(g, d))
    return e / np.linalg.norm(e, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

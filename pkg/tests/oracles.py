"""Independent reference implementations used only by the tests.

Nothing here calls into the package's elimination kernels or log tables:
field products are schoolbook polynomial products, ranks come from minors,
and mutual information is counted by enumerating every input.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter

import numpy as np


def poly_mul(a: int, b: int, p: int, e: int, modulus: int) -> int:
    """Product in GF(p^e) with elements as base-p digit vectors."""
    if e == 1:
        return a * b % p
    da = [(a // p**i) % p for i in range(e)]
    db = [(b // p**i) % p for i in range(e)]
    dm = [(modulus // p**i) % p for i in range(e + 1)]  # monic, degree e
    prod = [0] * (2 * e - 1)
    for i, x in enumerate(da):
        for j, y in enumerate(db):
            prod[i + j] = (prod[i + j] + x * y) % p
    for deg in range(2 * e - 2, e - 1, -1):
        c = prod[deg]
        if c:
            for k in range(e + 1):
                prod[deg - e + k] = (prod[deg - e + k] - c * dm[k]) % p
    return sum(d * p**i for i, d in enumerate(prod[:e]))


def poly_add(a: int, b: int, p: int, e: int) -> int:
    return sum((((a // p**i) + (b // p**i)) % p) * p**i for i in range(e))


def poly_neg(a: int, p: int, e: int) -> int:
    return sum(((-(a // p**i)) % p) * p**i for i in range(e))


class OracleField:
    def __init__(self, q: int, p: int, e: int, modulus: int):
        self.q, self.p, self.e, self.modulus = q, p, e, modulus

    def mul(self, a, b):
        return poly_mul(a, b, self.p, self.e, self.modulus)

    def add(self, a, b):
        return poly_add(a, b, self.p, self.e)

    def neg(self, a):
        return poly_neg(a, self.p, self.e)


def det(f: OracleField, m: list[list[int]]) -> int:
    """Leibniz expansion; fine for the tiny sizes used here."""
    n = len(m)
    total = 0
    for perm in itertools.permutations(range(n)):
        inversions = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        term = 1
        for i in range(n):
            term = f.mul(term, m[i][perm[i]])
            if term == 0:
                break
        if term:
            total = f.add(total, f.neg(term) if inversions % 2 else term)
    return total


def rank_by_minors(f: OracleField, m) -> int:
    """Largest size of a nonvanishing minor."""
    a = np.asarray(m, dtype=np.int64)
    rows, cols = a.shape
    for k in range(min(rows, cols), 0, -1):
        for ri in itertools.combinations(range(rows), k):
            for ci in itertools.combinations(range(cols), k):
                sub = [[int(a[i, j]) for j in ci] for i in ri]
                if det(f, sub):
                    return k
    return 0


def entropy_bits(samples) -> float:
    counts = Counter(samples)
    total = sum(counts.values())
    return -sum(c / total * math.log2(c / total) for c in counts.values())


def mutual_information_bits(pairs) -> float:
    """I(A; B) in bits from the list of equally likely outcomes ``(a, b)``."""
    pairs = list(pairs)
    return (entropy_bits(a for a, _ in pairs) + entropy_bits(b for _, b in pairs)
            - entropy_bits(pairs))


def layer_rates_direct(h, powers, complex_channel=False) -> list[float]:
    """Per-layer rates evaluated term by term with ``math.log2``."""
    s = len(powers)
    factor = 1.0 if complex_channel else 0.5
    out = []
    for i in range(1, s + 1):
        p_i = powers[i - 1]
        interference = sum(powers[i:])
        hi, lo = h[i], h[i - 1]
        out.append(factor * (math.log2(1 + hi * p_i / (1 + hi * interference))
                             - math.log2(1 + lo * p_i / (1 + lo * interference))))
    return out


def achievable_direct(h, deltas, powers, L=1, complex_channel=False) -> float:
    s = len(powers)
    total = 0.0
    for i, r in enumerate(layer_rates_direct(h, powers, complex_channel), start=1):
        theta = sum(deltas[:i])
        total += theta * (1 - theta) * r
    return L * total


def upper_bound_direct(h, deltas, p_max, L=1) -> float:
    return 0.5 * L * sum(di * dj * math.log2(1 + hi * p_max / (1 + hj * p_max))
                         for hi, di in zip(h, deltas) for hj, dj in zip(h, deltas))

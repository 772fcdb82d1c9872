"""Exact arithmetic and linear algebra over GF(q), q = p^e <= 2^16.

Elements of GF(p^e) are integers ``v = c_0 + c_1 p + ... + c_{e-1} p^{e-1}``
whose base-p digits are the coefficients of a polynomial reduced modulo a
fixed primitive polynomial. The polynomial for each (p, e) is the
lexicographically smallest monic primitive polynomial, i.e. the one whose
integer encoding (coefficients as base-p digits, leading term included) is
minimal. A few pinned values:

======  ===========================  =========
q       polynomial                   encoding
======  ===========================  =========
4       x^2 + x + 1                  0x7
8       x^3 + x + 1                  0xB
16      x^4 + x + 1                  0x13
256     x^8 + x^4 + x^3 + x^2 + 1    0x11D
65536   x^16 + x^5 + x^3 + x^2 + 1   0x1002D
======  ===========================  =========

For prime q the multiplicative tables use the smallest primitive root.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels as K

MAX_ORDER = 1 << 16


def prime_power(q: int) -> tuple[int, int]:
    """Return ``(p, e)`` with ``q == p**e``; raise ``ValueError`` otherwise."""
    if q < 2:
        raise ValueError(f"field size must be >= 2, got {q}")
    p = next(d for d in range(2, q + 1) if q % d == 0)
    e, r = 0, q
    while r % p == 0:
        r //= p
        e += 1
    if r != 1:
        raise ValueError(f"{q} is not a prime power")
    return p, e


def _poly_times_x(v: int, poly: int, p: int, e: int) -> int:
    """Multiply the field element ``v`` by x modulo ``poly`` (odd p)."""
    digits = [(v // p**i) % p for i in range(e)]
    top = digits[-1]
    shifted = [0] + digits[:-1]
    low = [(poly // p**i) % p for i in range(e)]
    # x^e = -(low part of poly)
    return sum(((shifted[i] - top * low[i]) % p) * p**i for i in range(e))


def _cycle(q: int, p: int, e: int, step) -> np.ndarray | None:
    order = q - 1
    exp = np.empty(2 * order, dtype=np.int64)
    seen = np.zeros(q, dtype=bool)
    v = 1
    for i in range(order):
        if seen[v]:
            return None
        seen[v] = True
        exp[i] = v
        v = step(v)
    if v != 1:
        return None
    exp[order:] = exp[:order]
    return exp


@lru_cache(maxsize=None)
def _tables(q: int) -> tuple[int, np.ndarray, np.ndarray]:
    p, e = prime_power(q)
    if e == 1:
        for g in range(1, p):
            exp = _cycle(q, p, 1, lambda v, g=g: (v * g) % p) if p > 2 else np.array([1, 1])
            if exp is not None:
                poly = g
                break
    else:
        for tail in range(1, q):
            poly = q + tail
            if p == 2:
                step = lambda v, poly=poly: (v << 1) ^ poly if v & (q >> 1) else v << 1
            else:
                step = lambda v, poly=poly: _poly_times_x(v, poly, p, e)
            exp = _cycle(q, p, e, step)
            if exp is not None:
                break
    log = np.zeros(q, dtype=np.int64)
    log[exp[: q - 1]] = np.arange(q - 1)
    return poly, exp, log


class GF:
    """The finite field with ``q`` elements.

    Instances are cached per ``q``; ``GF(q) is GF(q)`` holds.
    """

    _cache: dict[int, "GF"] = {}

    def __new__(cls, q: int):
        q = int(q)
        if q in cls._cache:
            return cls._cache[q]
        if q > MAX_ORDER:
            raise ValueError(f"field sizes above 2^16 are not supported (got {q})")
        self = super().__new__(cls)
        self.q = q
        self.p, self.e = prime_power(q)
        self.kind = K.BINARY if self.p == 2 else (K.PRIME if self.e == 1 else K.EXT)
        self.poly, self.exp, self.log = _tables(q)
        # narrower copies keep the tables cache-resident inside the kernels
        self._exp32 = self.exp.astype(np.int32)
        self._log32 = self.log.astype(np.int32)
        cls._cache[q] = self
        return self

    def __repr__(self):
        return f"GF({self.q})"

    def __reduce__(self):
        return (GF, (self.q,))

    @property
    def bits(self) -> float:
        return float(np.log2(self.q))

    # elementwise array ops ------------------------------------------------
    def _binary(self, fn, a, b, *extra):
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        a, b = np.broadcast_arrays(a, b)
        out = np.empty(a.shape, dtype=np.int64)
        fn(np.ascontiguousarray(a).ravel(), np.ascontiguousarray(b).ravel(), out.ravel(), *extra)
        return out

    def add(self, a, b):
        return self._binary(K.vec_add, a, b, self.kind, self.p, self.e)

    def sub(self, a, b):
        return self._binary(K.vec_sub, a, b, self.kind, self.p, self.e)

    def mul(self, a, b):
        return self._binary(K.vec_mul, a, b, self.kind, self.p, self._exp32, self._log32)

    def neg(self, a):
        return self.sub(np.zeros_like(np.asarray(a, dtype=np.int64)), a)

    def inv(self, a):
        a = np.asarray(a, dtype=np.int64)
        if np.any(a == 0):
            raise ZeroDivisionError("zero has no inverse")
        return self.exp[(self.q - 1 - self.log[a]) % (self.q - 1)]

    def power(self, a: int, k: int) -> int:
        if a == 0:
            return 0 if k else 1
        return int(self.exp[(int(self.log[a]) * k) % (self.q - 1)])

    def random(self, shape, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.q, size=shape, dtype=np.int64)

    def __call__(self, value: int) -> "FieldElement":
        return FieldElement(int(value) % self.q if value >= 0 else int(value), self)


@dataclass(frozen=True)
class FieldElement:
    """A single element of a finite field, with the usual operators."""

    value: int
    field: GF

    def __post_init__(self):
        if not 0 <= self.value < self.field.q:
            raise ValueError(f"{self.value} is not an element of {self.field}")

    def _coerce(self, other) -> int:
        if isinstance(other, FieldElement):
            if other.field is not self.field:
                raise ValueError("elements of different fields")
            return other.value
        return int(other) % self.field.q

    def __add__(self, other):
        return FieldElement(int(self.field.add(self.value, self._coerce(other))), self.field)

    def __sub__(self, other):
        return FieldElement(int(self.field.sub(self.value, self._coerce(other))), self.field)

    def __mul__(self, other):
        return FieldElement(int(self.field.mul(self.value, self._coerce(other))), self.field)

    def __truediv__(self, other):
        return self * FieldElement(int(self.field.inv(self._coerce(other))), self.field)

    def __neg__(self):
        return FieldElement(int(self.field.neg(self.value)), self.field)

    __radd__ = __add__
    __rmul__ = __mul__

    def inverse(self) -> "FieldElement":
        return FieldElement(int(self.field.inv(self.value)), self.field)


class FieldMatrix:
    """Dense matrix over GF(q) backed by an int64 numpy array."""

    __slots__ = ("field", "data")

    def __init__(self, field: GF, data):
        data = np.array(data, dtype=np.int64, copy=True)
        if data.ndim == 1:
            data = data.reshape(1, -1) if data.size else data.reshape(0, 0)
        if data.ndim != 2:
            raise ValueError("FieldMatrix needs a 2-D array")
        if data.size and (data.min() < 0 or data.max() >= field.q):
            raise ValueError(f"entries outside {field}")
        self.field = field
        self.data = data

    @classmethod
    def _wrap(cls, field, data):
        m = cls.__new__(cls)
        m.field = field
        m.data = data
        return m

    @classmethod
    def zeros(cls, field, rows, cols):
        return cls._wrap(field, np.zeros((rows, cols), dtype=np.int64))

    @classmethod
    def identity(cls, field, n):
        return cls._wrap(field, np.eye(n, dtype=np.int64))

    @classmethod
    def random(cls, field, rows, cols, rng):
        return cls._wrap(field, field.random((rows, cols), rng))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    @property
    def entries(self) -> list[int]:
        return self.data.ravel().tolist()

    @property
    def T(self) -> "FieldMatrix":
        return self._wrap(self.field, np.ascontiguousarray(self.data.T))

    def __repr__(self):
        return f"FieldMatrix({self.field}, {self.data.tolist()})"

    def __eq__(self, other):
        return (
            isinstance(other, FieldMatrix)
            and other.field is self.field
            and other.shape == self.shape
            and np.array_equal(other.data, self.data)
        )

    __hash__ = None

    def _check(self, other):
        if other.field is not self.field:
            raise ValueError(f"field mismatch: {self.field} vs {other.field}")

    def __matmul__(self, other: "FieldMatrix") -> "FieldMatrix":
        self._check(other)
        if self.cols != other.rows:
            raise ValueError(f"cannot multiply {self.shape} by {other.shape}")
        f = self.field
        if self.rows == 0 or other.cols == 0 or self.cols == 0:
            return FieldMatrix.zeros(f, self.rows, other.cols)
        out = K.matmul(np.ascontiguousarray(self.data), np.ascontiguousarray(other.data),
                       f.kind, f.p, f.e, f._exp32, f._log32)
        return self._wrap(f, out)

    def __add__(self, other):
        self._check(other)
        return self._wrap(self.field, self.field.add(self.data, other.data))

    def __sub__(self, other):
        self._check(other)
        return self._wrap(self.field, self.field.sub(self.data, other.data))

    def take_rows(self, idx) -> "FieldMatrix":
        return self._wrap(self.field, self.data[np.asarray(idx, dtype=np.int64)].reshape(-1, self.cols))

    def take_cols(self, idx) -> "FieldMatrix":
        idx = np.asarray(idx, dtype=np.int64)
        return self._wrap(self.field, np.ascontiguousarray(self.data[:, idx]).reshape(self.rows, idx.size))

    def rank(self) -> int:
        return rank(self)

    def copy(self) -> "FieldMatrix":
        return self._wrap(self.field, self.data.copy())


def vstack(*mats: FieldMatrix) -> FieldMatrix:
    field = mats[0].field
    cols = mats[0].cols
    for m in mats[1:]:
        if m.field is not field:
            raise ValueError("field mismatch")
        if m.cols != cols:
            raise ValueError(f"column mismatch: {cols} vs {m.cols}")
    return FieldMatrix._wrap(field, np.vstack([m.data.reshape(m.rows, cols) for m in mats]))


def hstack(*mats: FieldMatrix) -> FieldMatrix:
    field = mats[0].field
    rows = mats[0].rows
    for m in mats[1:]:
        if m.field is not field or m.rows != rows:
            raise ValueError("incompatible blocks")
    return FieldMatrix._wrap(field, np.hstack([m.data.reshape(rows, m.cols) for m in mats]))


def row_reduce(m: FieldMatrix, reduced: bool = True, ncols: int | None = None,
               normalize: bool = False):
    """Return ``(R, rank, pivots)`` where ``R`` is the (reduced) echelon form.

    Only the first ``ncols`` columns are used as pivot candidates, which lets
    callers reduce an augmented matrix ``[A | b]``.
    """
    f = m.field
    work = np.array(m.data, dtype=np.int64, order="C", copy=True)
    ncols = m.cols if ncols is None else ncols
    if work.size == 0:
        return FieldMatrix._wrap(f, work), 0, np.zeros(0, dtype=np.int64)
    r, piv = K.eliminate(work, f.kind, f.p, f.e, f._exp32, f._log32, reduced, ncols, normalize)
    return FieldMatrix._wrap(f, work), int(r), piv


def rank(m: FieldMatrix) -> int:
    """Row rank of ``m`` by exact elimination."""
    if m.rows == 0 or m.cols == 0:
        return 0
    # eliminate along the shorter side
    target = m if m.rows <= m.cols else m.T
    return row_reduce(target, reduced=False)[1]


def stack_rank(a: FieldMatrix, b: FieldMatrix) -> int:
    """Rank of the vertical stack ``[a; b]``."""
    if a.field is not b.field:
        raise ValueError("field mismatch")
    if a.cols != b.cols:
        raise ValueError(f"column mismatch: {a.cols} vs {b.cols}")
    return rank(vstack(a, b))


def solve_in_rowspan(basis: FieldMatrix, target) -> np.ndarray | None:
    """Return ``c`` with ``c @ basis == target``, or ``None`` if unsolvable."""
    f = basis.field
    target = np.asarray(target, dtype=np.int64).ravel()
    if target.size != basis.cols:
        raise ValueError(f"target length {target.size} != basis width {basis.cols}")
    # c @ B = t  <=>  B^T c^T = t^T
    aug = hstack(basis.T, FieldMatrix._wrap(f, target.reshape(-1, 1)))
    R, r, piv = row_reduce(aug, reduced=True, ncols=basis.rows)
    if np.any(R.data[r:, -1] != 0):
        return None
    c = np.zeros(basis.rows, dtype=np.int64)
    c[piv] = R.data[:r, -1]
    return c


def solve(a: FieldMatrix, b: FieldMatrix) -> FieldMatrix | None:
    """Solve ``a @ x == b`` for ``x`` when ``a`` has full column rank."""
    if a.rows != b.rows:
        raise ValueError("row mismatch")
    f = a.field
    R, r, piv = row_reduce(hstack(a, b), reduced=False, ncols=a.cols, normalize=True)
    if r < a.cols or np.any(R.data[r:, a.cols:] != 0):
        return None
    # only the right-hand side columns need clearing above the pivots
    K.back_substitute(R.data, piv, r, a.cols, f.kind, f.p, f.e, f._exp32, f._log32)
    return FieldMatrix._wrap(f, R.data[: a.cols, a.cols:].copy())


def inverse(a: FieldMatrix) -> FieldMatrix:
    if a.rows != a.cols:
        raise ValueError("inverse of a non-square matrix")
    x = solve(a, FieldMatrix.identity(a.field, a.rows))
    if x is None:
        raise np.linalg.LinAlgError("singular matrix")
    return x


def nullspace(m: FieldMatrix) -> FieldMatrix:
    """Basis (as rows) of the right kernel ``{x : m @ x == 0}``."""
    f = m.field
    n = m.cols
    if m.rows == 0:
        return FieldMatrix.identity(f, n)
    R, r, piv = row_reduce(m, reduced=True)
    free = [c for c in range(n) if c not in set(piv.tolist())]
    out = np.zeros((len(free), n), dtype=np.int64)
    for i, c in enumerate(free):
        out[i, c] = 1
        # x_pivot = -R[row, c]
        out[i, piv] = f.neg(R.data[:r, c])
    return FieldMatrix._wrap(f, out)


def left_nullspace(m: FieldMatrix) -> FieldMatrix:
    """Basis (as rows) of ``{y : y @ m == 0}``."""
    return nullspace(m.T)


def complete_basis(a_z: FieldMatrix) -> FieldMatrix:
    """Extend the rows of ``a_z`` to a basis of the full row space.

    Returns ``A_K`` with ``cols - rows`` rows such that ``[A_K; a_z]`` is
    square and invertible. The added rows are unit vectors on the non-pivot
    columns of the reduced echelon form of ``a_z``.
    """
    f = a_z.field
    h = a_z.cols
    if a_z.rows > h:
        raise ValueError("more rows than columns")
    if a_z.rows == 0:
        return FieldMatrix.identity(f, h)
    k = a_z.rows
    # a nonsingular leading block fixes the pivots to its columns, at lower cost
    if row_reduce(a_z.take_cols(np.arange(k)), reduced=False)[1] == k:
        r, piv = k, np.arange(k)
    else:
        _, r, piv = row_reduce(a_z, reduced=False)
    if r != a_z.rows:
        raise ValueError(f"a_z is rank deficient ({r} < {a_z.rows})")
    mask = np.ones(h, dtype=bool)
    mask[piv] = False
    free = np.flatnonzero(mask)
    out = np.zeros((free.size, h), dtype=np.int64)
    out[np.arange(free.size), free] = 1
    return FieldMatrix._wrap(f, out)

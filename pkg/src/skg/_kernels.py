"""Compiled inner loops for finite-field linear algebra.

Elements are stored as int64 in ``[0, q)``. Three arithmetic kinds share the
same kernels:

* ``BINARY``  q = 2^e: addition is XOR, multiplication via log/exp tables.
* ``PRIME``   q = p: modular arithmetic.
* ``EXT``     q = p^e, p odd, e > 1: digit-wise addition in base p,
  multiplication via log/exp tables.
"""

import numpy as np
from numba import njit

BINARY = 0
PRIME = 1
EXT = 2


@njit(cache=True)
def gf_add(a, b, kind, p, e):
    if kind == BINARY:
        return a ^ b
    if kind == PRIME:
        s = a + b
        return s - p if s >= p else s
    out = 0
    place = 1
    for _ in range(e):
        d = (a % p + b % p) % p
        out += d * place
        a //= p
        b //= p
        place *= p
    return out


@njit(cache=True)
def gf_sub(a, b, kind, p, e):
    if kind == BINARY:
        return a ^ b
    if kind == PRIME:
        s = a - b
        return s + p if s < 0 else s
    out = 0
    place = 1
    for _ in range(e):
        d = (a % p - b % p) % p
        out += d * place
        a //= p
        b //= p
        place *= p
    return out


@njit(cache=True)
def gf_mul(a, b, kind, p, exp, log):
    if a == 0 or b == 0:
        return 0
    if kind == PRIME:
        return (a * b) % p
    return exp[log[a] + log[b]]


@njit(cache=True)
def gf_inv(a, exp, log, order):
    # order = q - 1; caller guarantees a != 0
    return exp[(order - log[a]) % order]


@njit(cache=True)
def vec_add(a, b, out, kind, p, e):
    for i in range(a.size):
        out[i] = gf_add(a[i], b[i], kind, p, e)


@njit(cache=True)
def vec_sub(a, b, out, kind, p, e):
    for i in range(a.size):
        out[i] = gf_sub(a[i], b[i], kind, p, e)


@njit(cache=True)
def vec_mul(a, b, out, kind, p, exp, log):
    for i in range(a.size):
        out[i] = gf_mul(a[i], b[i], kind, p, exp, log)


@njit(cache=True)
def matmul(A, B, kind, p, e, exp, log):
    n, k = A.shape
    m = B.shape[1]
    C = np.zeros((n, m), dtype=np.int64)
    for i in range(n):
        row = C[i]
        for j in range(k):
            a = A[i, j]
            if a == 0:
                continue
            brow = B[j]
            if kind == BINARY:
                la = log[a]
                for c in range(m):
                    b = brow[c]
                    if b != 0:
                        row[c] ^= exp[la + log[b]]
            elif kind == PRIME:
                for c in range(m):
                    row[c] = (row[c] + a * brow[c]) % p
            else:
                for c in range(m):
                    row[c] = gf_add(row[c], gf_mul(a, brow[c], kind, p, exp, log), kind, p, e)
    return C


@njit(cache=True)
def eliminate(M, kind, p, e, exp, log, reduced, ncols, normalize=False):
    """Row-reduce ``M`` in place using its first ``ncols`` columns as pivots.

    With ``reduced`` the result is in reduced row echelon form (pivots equal
    one, zero above and below); otherwise only forward elimination is done.
    Returns ``(rank, pivot_columns)``.
    """
    rows, cols = M.shape
    order = exp.shape[0] // 2
    pivots = np.empty(min(rows, ncols), dtype=np.int64)
    logp = np.empty(cols, dtype=np.int64)
    r = 0
    for c in range(ncols):
        if r == rows:
            break
        piv = -1
        for i in range(r, rows):
            if M[i, c] != 0:
                piv = i
                break
        if piv < 0:
            continue
        if piv != r:
            for j in range(c, cols):
                t = M[r, j]
                M[r, j] = M[piv, j]
                M[piv, j] = t
        inv = gf_inv(M[r, c], exp, log, order)
        if reduced or kind != PRIME or normalize:
            # normalise the pivot row so elimination factors are the entries
            for j in range(c, cols):
                M[r, j] = gf_mul(M[r, j], inv, kind, p, exp, log)
            inv = 1
        if kind == BINARY:
            for j in range(c, cols):
                v = M[r, j]
                logp[j] = log[v] if v != 0 else -1
        start = 0 if reduced else r + 1
        for i in range(start, rows):
            if i == r:
                continue
            f = M[i, c]
            if f == 0:
                continue
            if kind == BINARY:
                lf = log[f]
                for j in range(c, cols):
                    lj = logp[j]
                    if lj >= 0:
                        M[i, j] ^= exp[lf + lj]
            elif kind == PRIME:
                f = (f * inv) % p
                nf = p - f
                for j in range(c, cols):
                    M[i, j] = (M[i, j] + nf * M[r, j]) % p
            else:
                for j in range(c, cols):
                    M[i, j] = gf_sub(M[i, j], gf_mul(f, M[r, j], kind, p, exp, log), kind, p, e)
        pivots[r] = c
        r += 1
    return r, pivots[:r].copy()


@njit(cache=True)
def back_substitute(M, pivots, r, start, kind, p, e, exp, log):
    """Clear entries above the pivots, touching only columns ``>= start``.

    ``M`` must come from forward elimination with normalised pivot rows.
    Afterwards rows ``[0, r)`` of columns ``>= start`` hold the solution.
    """
    rows, cols = M.shape
    for k in range(r - 1, -1, -1):
        c = pivots[k]
        for i in range(k):
            f = M[i, c]
            if f == 0:
                continue
            for j in range(start, cols):
                M[i, j] = gf_sub(M[i, j], gf_mul(f, M[k, j], kind, p, exp, log), kind, p, e)
            M[i, c] = 0

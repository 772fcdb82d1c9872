"""Linear code constructions used by the key-agreement protocols.

* :func:`mds_secure_generator` and :func:`random_secure_generator` build
  combinations of ``n`` packets that stay independent of any ``n_e`` of them.
* :func:`design_reconciliation` builds public combinations from which every
  terminal recovers all ``h`` packets.
* :func:`extract_key` completes the public combinations to a basis and uses
  the complement as the key.

Secrecy is certified with the rank identity: for uniform packets and linear
observations ``A`` and ``B``, ``I(A x; B x) = (rank A + rank B - rank [A; B])``
symbols.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gf import GF, FieldMatrix, complete_basis, rank, stack_rank

__all__ = [
    "SecureCombinationSpec",
    "ReconciliationPlan",
    "ReconciliationError",
    "mds_secure_generator",
    "random_secure_generator",
    "vandermonde",
    "selection_matrix",
    "resists_selection",
    "shared_symbols",
    "design_reconciliation",
    "extract_key",
    "RECONCILIATION_RETRIES",
]

RECONCILIATION_RETRIES = 16


class ReconciliationError(RuntimeError):
    """No valid reconciliation code was found within the retry budget."""


@dataclass(frozen=True)
class SecureCombinationSpec:
    n: int
    n_e: int
    q: int

    def __post_init__(self):
        if self.n < 0 or not 0 <= self.n_e <= self.n:
            raise ValueError(f"need 0 <= n_e <= n, got n={self.n}, n_e={self.n_e}")
        GF(self.q)

    @property
    def rows(self) -> int:
        return self.n - self.n_e


@dataclass
class ReconciliationPlan:
    total: int
    received_sets: list[np.ndarray]
    combinations: FieldMatrix
    attempts: int = 1

    @property
    def key_length(self) -> int:
        return self.total - self.combinations.rows


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def vandermonde(field: GF, rows: int, points: Sequence[int]) -> FieldMatrix:
    """Matrix with entry ``(i, j) = points[j] ** i``."""
    pts = np.asarray(points, dtype=np.int64)
    if np.any(pts == 0) or len(set(pts.tolist())) != pts.size:
        raise ValueError("evaluation points must be distinct and nonzero")
    expo = np.outer(np.arange(rows, dtype=np.int64), field.log[pts]) % (field.q - 1)
    return FieldMatrix._wrap(field, field.exp[expo].reshape(rows, pts.size))


def mds_secure_generator(spec: SecureCombinationSpec) -> FieldMatrix:
    """Generator of an ``[n, n - n_e]`` Reed-Solomon code over GF(q).

    Any ``n - n_e`` columns are independent, so the rows are independent of
    every choice of ``n_e`` packets.
    """
    if spec.q < spec.n + 1:
        raise ValueError(f"MDS construction needs q >= n + 1 (q={spec.q}, n={spec.n})")
    field = GF(spec.q)
    if spec.rows == 0:
        return FieldMatrix.zeros(field, 0, spec.n)
    return vandermonde(field, spec.rows, range(1, spec.n + 1))


def random_secure_generator(spec: SecureCombinationSpec, seed) -> FieldMatrix:
    """Uniformly random ``(n - n_e) x n`` matrix; callers must verify it."""
    field = GF(spec.q)
    return FieldMatrix.random(field, spec.rows, spec.n, _rng(seed))


def selection_matrix(field: GF, n: int, indices: Sequence[int]) -> FieldMatrix:
    """0/1 matrix whose rows pick the packets at ``indices``."""
    idx = np.asarray(indices, dtype=np.int64)
    out = np.zeros((idx.size, n), dtype=np.int64)
    out[np.arange(idx.size), idx] = 1
    return FieldMatrix._wrap(field, out)


def shared_symbols(a: FieldMatrix, b: FieldMatrix) -> int:
    """``rank a + rank b - rank [a; b]``: symbols of information ``a x`` gives about ``b x``."""
    return rank(a) + rank(b) - stack_rank(a, b)


def resists_selection(gen: FieldMatrix, observed: Sequence[int]) -> bool:
    """True when ``gen`` has full rank and is independent of the observed packets."""
    sel = selection_matrix(gen.field, gen.cols, observed)
    return stack_rank(gen, sel) == gen.rows + len(observed) and rank(gen) == gen.rows


def design_reconciliation(received_sets, h: int, q: int, seed) -> ReconciliationPlan:
    """Random public combinations that let every terminal recover all ``h`` packets.

    ``received_sets[i]`` holds the (0-based) packets terminal ``i`` already
    knows. The plan has ``h - min_i |received_sets[i]|`` rows, and for each
    terminal the columns of its missing packets have full column rank, which
    is equivalent to ``rank([I_received; C]) = h``.
    """
    field = GF(q)
    sets = [np.unique(np.asarray(s, dtype=np.int64)) for s in received_sets]
    for s in sets:
        if s.size and (s.min() < 0 or s.max() >= h):
            raise ValueError(f"received indices must lie in [0, {h})")
    l = min((s.size for s in sets), default=h)
    rows = h - l
    rng = _rng(seed)
    missing = []
    for s in sets:
        mask = np.ones(h, dtype=bool)
        mask[s] = False
        missing.append(np.flatnonzero(mask))
    for attempt in range(1, RECONCILIATION_RETRIES + 1):
        comb = FieldMatrix.random(field, rows, h, rng)
        if all(rank(comb.take_cols(miss)) == miss.size for miss in missing):
            return ReconciliationPlan(h, sets, comb, attempt)
    raise ReconciliationError(
        f"no reconciliation code after {RECONCILIATION_RETRIES} attempts over GF({q})"
    )


def extract_key(a_z: FieldMatrix, y_packets: FieldMatrix) -> tuple[FieldMatrix, FieldMatrix]:
    """Key coefficients completing ``a_z`` to a basis, and the resulting key packets."""
    if a_z.cols != y_packets.rows:
        raise ValueError(f"a_z has {a_z.cols} columns but there are {y_packets.rows} packets")
    coeffs = complete_basis(a_z)
    return coeffs, coeffs @ y_packets

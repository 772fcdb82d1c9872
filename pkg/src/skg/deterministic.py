"""State-dependent deterministic broadcast channel with nested linear maps.

In state ``i`` a receiver observes ``F_i x`` for ``x`` in ``GF(q)^L``. The maps
are nested: ``ker F_s = {0} ⊂ ker F_{s-1} ⊂ ... ⊂ ker F_0 = GF(q)^L``. Choosing
a complement ``Π_i`` of ``ker F_i`` inside ``ker F_{i-1}`` splits the channel
into ``s`` layers; layer ``i`` reaches a receiver exactly when its state is at
least ``i``. Running the erasure protocol on every layer attains the key
capacity ``sum_i (rank F_i - rank F_{i-1}) * theta_i * (1 - theta_i) * log2 q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .erasure import ErasureConfig, ProtocolOutcome, Reception, protocol_stream, run_protocol
from .gf import GF, FieldMatrix, inverse, nullspace, rank, solve, vstack
from .profiles import StateProfile

__all__ = [
    "DetChannelFamily",
    "LayerDecomposition",
    "LayeredOutcome",
    "shift_family",
    "random_nested_family",
    "decompose_layers",
    "det_capacity",
    "det_layer_sum",
    "det_upper_bound",
    "sample_states",
    "run_layered_protocol",
]

# stream identifiers, disjoint from the erasure protocol's
_STATES, _LAYER_PACKETS, _BASIS = 10, 11, 12


@dataclass
class DetChannelFamily:
    """Channel maps ``F_0..F_s`` over GF(q) acting on length-``L`` vectors."""

    L: int
    q: int
    ranks: tuple[int, ...]
    matrices: list[FieldMatrix]

    @property
    def s(self) -> int:
        return len(self.matrices) - 1

    @property
    def field(self) -> GF:
        return GF(self.q)

    def check(self) -> list[str]:
        """Return the violated structural conditions (empty when valid)."""
        problems = []
        f = self.field
        mats = self.matrices
        if any(m.shape != (self.L, self.L) for m in mats):
            problems.append("every map must be L x L")
            return problems
        ranks = [rank(m) for m in mats]
        if tuple(ranks) != tuple(self.ranks):
            problems.append(f"declared ranks {self.ranks} differ from actual {tuple(ranks)}")
        if ranks[0] != 0:
            problems.append("F_0 must be zero")
        if mats[-1] != FieldMatrix.identity(f, self.L):
            problems.append("F_s must be the identity")
        for i in range(1, len(mats)):
            # ker F_i ⊂ ker F_{i-1}  <=>  rowspace F_{i-1} ⊂ rowspace F_i
            if rank(vstack(mats[i - 1], mats[i])) != ranks[i]:
                problems.append(f"ker F_{i} is not contained in ker F_{i - 1}")
            if rank(mats[i] - mats[i - 1]) != ranks[i] - ranks[i - 1]:
                problems.append(f"rank(F_{i} - F_{i - 1}) != rank F_{i} - rank F_{i - 1}")
        return problems


@dataclass
class LayerDecomposition:
    """Bases (as rows) of the layer subspaces ``Π_1..Π_s``."""

    subspaces: list[FieldMatrix]

    @property
    def dims(self) -> list[int]:
        return [p.rows for p in self.subspaces]

    def basis(self) -> FieldMatrix:
        """All layer bases stacked in layer order; square and invertible."""
        return vstack(*self.subspaces)


def _check_ranks(L: int, ranks: Sequence[int]) -> tuple[int, ...]:
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) < 2:
        raise ValueError("need at least two states")
    if ranks[0] != 0 or ranks[-1] != L:
        raise ValueError(f"ranks must start at 0 and end at L={L}")
    if any(b < a for a, b in zip(ranks, ranks[1:])):
        raise ValueError("ranks must be non-decreasing")
    return ranks


def shift_family(L: int, q: int, ranks: Sequence[int]) -> DetChannelFamily:
    """``F_i`` keeps the top ``ranks[i]`` coordinates and zeroes the rest."""
    ranks = _check_ranks(L, ranks)
    f = GF(q)
    mats = []
    for r in ranks:
        d = np.zeros((L, L), dtype=np.int64)
        d[np.arange(r), np.arange(r)] = 1
        mats.append(FieldMatrix._wrap(f, d))
    return DetChannelFamily(L, q, ranks, mats)


def random_nested_family(L: int, q: int, ranks: Sequence[int], seed) -> DetChannelFamily:
    """Shift family seen through a random change of basis ``T^{-1} F_i T``."""
    base = shift_family(L, q, ranks)
    f = base.field
    rng = protocol_stream(seed, _BASIS) if not isinstance(seed, np.random.Generator) else seed
    while True:
        t = FieldMatrix.random(f, L, L, rng)
        if rank(t) == L:
            break
    t_inv = inverse(t)
    mats = [t_inv @ m @ t for m in base.matrices]
    return DetChannelFamily(L, q, base.ranks, mats)


def decompose_layers(family: DetChannelFamily) -> LayerDecomposition:
    """Complement of ``ker F_i`` inside ``ker F_{i-1}`` for each layer ``i``.

    Basis vectors of ``ker F_{i-1}`` are kept greedily when they are
    independent of ``ker F_i`` and the vectors already chosen, so shift
    families yield coordinate subspaces.
    """
    f = family.field
    kernels = [nullspace(m) for m in family.matrices]
    layers = []
    for i in range(1, family.s + 1):
        chosen = kernels[i]
        picked = []
        target = kernels[i - 1].rows
        for v in kernels[i - 1].data:
            if chosen.rows == target:
                break
            cand = vstack(chosen, FieldMatrix._wrap(f, v.reshape(1, -1)))
            if rank(cand) > chosen.rows:
                chosen = cand
                picked.append(v)
        data = np.array(picked, dtype=np.int64).reshape(len(picked), family.L)
        layers.append(FieldMatrix._wrap(f, data))
    return LayerDecomposition(layers)


def _require_profile(family: DetChannelFamily, profile: StateProfile):
    if profile.s != family.s:
        raise ValueError(f"profile has {profile.s + 1} states, family has {family.s + 1}")


def det_capacity(family: DetChannelFamily, profile: StateProfile) -> float:
    """``sum_i (rank F_i - rank F_{i-1}) theta_i (1 - theta_i) log2 q``."""
    _require_profile(family, profile)
    gaps = np.diff(np.asarray(family.ranks, dtype=float))
    return float(np.sum(gaps * profile.weights[1:]) * math.log2(family.q))


def det_layer_sum(decomposition: LayerDecomposition, profile: StateProfile, q: int) -> float:
    """``sum_i theta_i (1 - theta_i) dim Π_i log2 q`` from an explicit decomposition."""
    dims = np.asarray(decomposition.dims, dtype=float)
    if dims.size != profile.s:
        raise ValueError("decomposition and profile disagree on the number of layers")
    return float(np.sum(dims * profile.weights[1:]) * math.log2(q))


def det_upper_bound(family: DetChannelFamily, profile: StateProfile) -> float:
    """Converse value built from pairwise state weights.

    ``rho_i = delta_i - kappa_i`` with
    ``kappa_i = 2 delta_i (delta_0 + ... + delta_{i-1}) + delta_i^2``, and the
    bound is ``sum_j (rank F_j - rank F_{j-1}) (rho_0 + ... + rho_{j-1}) log2 q``
    evaluated with ranks computed from the maps themselves.
    """
    _require_profile(family, profile)
    d = np.asarray(profile.deltas)
    below = np.concatenate(([0.0], np.cumsum(d)[:-1]))
    rho = d - (2.0 * d * below + d**2)
    ranks = [rank(m) for m in family.matrices]
    total = 0.0
    for j in range(1, family.s + 1):
        total += (ranks[j] - ranks[j - 1]) * float(np.sum(rho[:j]))
    return total * math.log2(family.q)


def sample_states(profile: StateProfile, receivers: int, n: int, seed) -> np.ndarray:
    """One i.i.d. state per receiver per time step, shape ``(receivers, n)``."""
    rng = protocol_stream(seed, _STATES) if not isinstance(seed, np.random.Generator) else seed
    return rng.choice(profile.s + 1, size=(receivers, n), p=np.asarray(profile.deltas))


@dataclass
class LayeredOutcome:
    family: DetChannelFamily
    profile: StateProfile
    n: int
    layers: list[ProtocolOutcome | None]
    decoding_ok: bool

    @property
    def agreement(self) -> bool:
        return self.decoding_ok and all(o is None or o.agreement for o in self.layers)

    @property
    def key_bits(self) -> float:
        return float(sum(o.key_bits for o in self.layers if o is not None))

    @property
    def rate(self) -> float:
        return self.key_bits / self.n

    @property
    def leakage_bits(self) -> float | None:
        vals = [o.leakage_bits for o in self.layers if o is not None]
        if any(v is None for v in vals):
            return None
        # layer packets are independent given the public reception pattern
        return float(sum(vals))

    def summary(self) -> dict:
        return {
            "rate": self.rate,
            "key_bits": self.key_bits,
            "agreement": self.agreement,
            "leakage_bits": self.leakage_bits,
            "layers": [None if o is None else o.summary() for o in self.layers],
        }


def _decode_layers(family, layers, states, tx, coords) -> bool:
    """Check that a receiver in state ``k`` recovers layers ``1..k`` from ``F_k x``."""
    f = family.field
    for k in range(1, family.s + 1):
        cols = np.flatnonzero((states >= k).any(axis=0))
        if cols.size == 0:
            continue
        obs = family.matrices[k] @ tx.take_cols(cols)
        lower = vstack(*layers[:k]) if any(p.rows for p in layers[:k]) else None
        if lower is None:
            continue
        # F_k restricted to Π_1 ⊕ ... ⊕ Π_k is injective
        sol = solve(family.matrices[k] @ lower.T, obs)
        if sol is None:
            return False
        expect = np.vstack([c.data[:, cols] for c in coords[:k] if c.rows])
        if not np.array_equal(sol.data, expect):
            return False
    return True


def run_layered_protocol(
    family: DetChannelFamily,
    profile: StateProfile,
    m: int,
    n: int,
    seed: int = 0,
    eve_count_known: bool = False,
    compute_leakage: bool = True,
) -> LayeredOutcome:
    """Run the erasure protocol independently on every layer.

    States are drawn once per receiver and time step; layer ``i`` of packet
    ``t`` reaches receiver ``r`` iff ``state[r, t] >= i``. Alice transmits
    the superposition of the layer symbols and each receiver's decoding of
    its layers from ``F_state x`` is verified.
    """
    _require_profile(family, profile)
    if n < 1:
        raise ValueError("n must be positive")
    f = family.field
    dec = decompose_layers(family)
    states = sample_states(profile, m, n, seed)  # rows 0..m-2 honest, m-1 Eve
    coords = []
    for i, p in enumerate(dec.subspaces, start=1):
        rng = protocol_stream(seed, _LAYER_PACKETS, i)
        coords.append(FieldMatrix.random(f, p.rows, n, rng))
    tx = FieldMatrix.zeros(f, family.L, n)
    for p, c in zip(dec.subspaces, coords):
        if p.rows:
            tx = tx + p.T @ c
    decoding_ok = _decode_layers(family, dec.subspaces, states, tx, coords)

    thetas = profile.thetas
    outcomes: list[ProtocolOutcome | None] = []
    for i, (p, c) in enumerate(zip(dec.subspaces, coords), start=1):
        if p.rows == 0:
            outcomes.append(None)
            continue
        got = states >= i
        rec = Reception(n, [np.flatnonzero(row) for row in got[:-1]], np.flatnonzero(got[-1]))
        cfg = ErasureConfig(
            m=m, n=n, L=p.rows, q=family.q,
            delta=float(thetas[i]), delta_e=float(thetas[i]),
            seed=int(np.random.SeedSequence(seed, spawn_key=(_LAYER_PACKETS, i)).generate_state(1)[0]),
            eve_count_known=eve_count_known,
        )
        outcomes.append(run_protocol(cfg, compute_leakage, reception=rec, packets=c.T))
    return LayeredOutcome(family, profile, n, outcomes, decoding_ok)

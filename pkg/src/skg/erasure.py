"""Group secret-key agreement over an erasure broadcast channel.

Alice broadcasts ``n`` uniform packets in ``GF(q)^L``. Each of the ``m - 1``
honest terminals and Eve lose every packet independently (probabilities
``delta`` and ``delta_e``). After the broadcast, all discussion is public:

1. Terminals announce which packets they received.
2. Packets received by exactly the terminals in ``S`` form the block
   ``N_S``. From each block Alice derives secure combinations
   (y-packets) that look uniform to anyone holding few enough of its packets.
3. Alice broadcasts reconciliation combinations of the y-packets
   (z-packets) so every terminal can recover all of them.
4. The key is a complement of the z-packets inside the y-packet space.

Agreement is checked by comparing the keys the terminals actually decode.
Secrecy is measured exactly through ranks, since for uniform inputs and
linear observations mutual information equals a rank deficit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .gf import GF, FieldMatrix, nullspace, rank, row_reduce, solve, vstack
from .secure_coding import (
    SecureCombinationSpec,
    design_reconciliation,
    extract_key,
    mds_secure_generator,
    random_secure_generator,
    selection_matrix,
)

__all__ = [
    "ErasureConfig",
    "Reception",
    "SubsetBlock",
    "EveView",
    "ProtocolOutcome",
    "simulate_channel",
    "partition_commonly_received",
    "apportion",
    "run_protocol",
    "erasure_capacity",
    "leakage_bits",
    "concentration_bounds",
    "protocol_stream",
]

GENERATOR_RETRIES = 16

# stream identifiers for the seeded generators
_CHANNEL, _PACKETS, _YGEN, _RECONCILE = 0, 1, 2, 3


@dataclass(frozen=True)
class ErasureConfig:
    """Parameters of one protocol run.

    ``eve_count_known`` lets Alice size every block by the number of its
    packets Eve actually missed. That information is not available to a
    real sender; the mode exists to exercise the exact-secrecy mechanism.
    """

    m: int
    n: int
    L: int
    q: int
    delta: float
    delta_e: float
    seed: int = 0
    eve_count_known: bool = False

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"need at least two honest terminals, got m={self.m}")
        if self.n < 1 or self.L < 1:
            raise ValueError("n and L must be positive")
        for name in ("delta", "delta_e"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        GF(self.q)


@dataclass
class Reception:
    """Which packets each receiver got, as sorted 0-based index arrays."""

    n: int
    honest: list[np.ndarray]
    eve: np.ndarray

    @property
    def received_by_any(self) -> np.ndarray:
        if not self.honest:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(self.honest))


@dataclass
class SubsetBlock:
    """Packets received by exactly ``terminals`` and their secure combinations."""

    terminals: frozenset[int]
    packets: np.ndarray
    generator: FieldMatrix
    y_slice: slice
    path: Literal["mds", "random"]


@dataclass
class EveView:
    """Everything Eve observes: her packets and the whole public transcript."""

    x_indices: np.ndarray
    blocks: list[SubsetBlock]
    z_coeffs: FieldMatrix
    z_packets: FieldMatrix
    key_coeffs: FieldMatrix


@dataclass
class ProtocolOutcome:
    config: ErasureConfig
    alice_key: FieldMatrix
    keys: list[FieldMatrix]
    eve_view: EveView
    n_star: int
    h: int
    h_i: tuple[int, ...]
    l: int
    leakage_bits: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def agreement(self) -> bool:
        return all(k == self.alice_key for k in self.keys)

    @property
    def key_bits(self) -> float:
        return self.l * self.config.L * math.log2(self.config.q)

    @property
    def rate(self) -> float:
        """Key bits per channel use."""
        return self.key_bits / self.config.n

    def summary(self) -> dict:
        return {
            "n_star": self.n_star,
            "h": self.h,
            "h_i": list(self.h_i),
            "l": self.l,
            "rate": self.rate,
            "agreement": self.agreement,
            "leakage_bits": self.leakage_bits,
        }


def protocol_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream for one (phase, item) of a run."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


def simulate_channel(config: ErasureConfig) -> Reception:
    rng = protocol_stream(config.seed, _CHANNEL)
    honest_mask = rng.random((config.m - 1, config.n)) >= config.delta
    eve_mask = rng.random(config.n) >= config.delta_e
    return Reception(
        n=config.n,
        honest=[np.flatnonzero(row) for row in honest_mask],
        eve=np.flatnonzero(eve_mask),
    )


def partition_commonly_received(honest_sets, n: int) -> dict[frozenset[int], np.ndarray]:
    """Split the received packets by the exact set of terminals that got them.

    Keys are frozensets of 0-based terminal indices; values are sorted
    packet indices. Blocks are ordered by their bitmask.
    """
    codes = np.zeros(n, dtype=np.int64)
    for i, s in enumerate(honest_sets):
        codes[np.asarray(s, dtype=np.int64)] |= 1 << i
    out: dict[frozenset[int], np.ndarray] = {}
    for code in np.unique(codes[codes > 0]):
        members = frozenset(i for i in range(len(honest_sets)) if code >> i & 1)
        out[members] = np.flatnonzero(codes == code)
    return out


def apportion(sizes, fraction: float) -> list[int]:
    """Integer shares of ``floor(fraction * sum(sizes))`` by largest remainder.

    Each share is ``floor(fraction * size)`` or one more, and no share
    exceeds its size. Ties go to the earlier block.
    """
    sizes = [int(s) for s in sizes]
    quotas = [fraction * s for s in sizes]
    # guard products such as 0.3 * 10 landing just below an integer
    base = [math.floor(x + 1e-9) for x in quotas]
    total = math.floor(fraction * sum(sizes) + 1e-9)
    order = sorted(range(len(sizes)), key=lambda i: (-(quotas[i] - base[i]), i))
    extra = total - sum(base)
    for i in order:
        if extra <= 0:
            break
        if base[i] < sizes[i]:
            base[i] += 1
            extra -= 1
    return base


def _block_generator(field: GF, n_s: int, rows: int, eve_cols, verify_eve: bool, rng):
    spec = SecureCombinationSpec(n_s, n_s - rows, field.q)
    if field.q >= n_s + 1:
        return mds_secure_generator(spec), "mds"
    sel = selection_matrix(field, n_s, eve_cols) if verify_eve else None
    for _ in range(GENERATOR_RETRIES):
        gen = random_secure_generator(spec, rng)
        if rank(gen) != rows:
            continue
        if sel is None or rank(vstack(gen, sel)) == rows + sel.rows:
            return gen, "random"
    raise RuntimeError(f"no secure combination found over GF({field.q}) for a block of {n_s}")


def run_protocol(
    config: ErasureConfig,
    compute_leakage: bool = True,
    reception: Reception | None = None,
    packets: FieldMatrix | None = None,
) -> ProtocolOutcome:
    """Run every phase of the protocol once and decode the key at each terminal.

    ``reception`` and ``packets`` override the simulated channel and Alice's
    random packets; layered protocols use them to drive one erasure
    protocol per layer from a shared state sequence.
    """
    field_ = GF(config.q)
    rec = simulate_channel(config) if reception is None else reception
    if packets is None:
        x = FieldMatrix.random(field_, config.n, config.L, protocol_stream(config.seed, _PACKETS))
    else:
        if packets.shape != (config.n, config.L):
            raise ValueError(f"packets must be {config.n}x{config.L}, got {packets.shape}")
        x = packets
    parts = partition_commonly_received(rec.honest, config.n)
    eve_mask = np.zeros(config.n, dtype=bool)
    eve_mask[rec.eve] = True

    if config.eve_count_known:
        shares = [int(np.count_nonzero(~eve_mask[idx])) for idx in parts.values()]
    else:
        shares = apportion([idx.size for idx in parts.values()], config.delta_e)

    blocks: list[SubsetBlock] = []
    y_rows = []
    start = 0
    for b, ((members, idx), rows) in enumerate(zip(parts.items(), shares)):
        eve_cols = np.flatnonzero(eve_mask[idx])
        gen, path = _block_generator(
            field_, idx.size, rows, eve_cols, config.eve_count_known,
            protocol_stream(config.seed, _YGEN, b),
        )
        blocks.append(SubsetBlock(members, idx, gen, slice(start, start + rows), path))
        if rows:
            y_rows.append((gen @ x.take_rows(idx)).data)
        start += rows
    h = start
    y = FieldMatrix._wrap(field_, np.vstack(y_rows) if y_rows else np.zeros((0, config.L), np.int64))

    known = []
    for i in range(config.m - 1):
        parts_i = [np.arange(bl.y_slice.start, bl.y_slice.stop) for bl in blocks if i in bl.terminals]
        known.append(np.concatenate(parts_i) if parts_i else np.zeros(0, dtype=np.int64))
    plan = design_reconciliation(known, h, config.q, protocol_stream(config.seed, _RECONCILE))
    a_z = plan.combinations
    z = a_z @ y
    key_coeffs, alice_key = extract_key(a_z, y)

    keys = [key_coeffs @ _recover_y(a_z, z, y, k) for k in known]
    view = EveView(rec.eve, blocks, a_z, z, key_coeffs)
    out = ProtocolOutcome(
        config=config,
        alice_key=alice_key,
        keys=keys,
        eve_view=view,
        n_star=int(sum(idx.size for idx in parts.values())),
        h=h,
        h_i=tuple(int(k.size) for k in known),
        l=plan.key_length,
        extra={"reconciliation_attempts": plan.attempts,
               "generator_paths": sorted({bl.path for bl in blocks})},
    )
    if compute_leakage:
        out.leakage_bits = leakage_bits(out)
    return out


def _recover_y(a_z: FieldMatrix, z: FieldMatrix, y: FieldMatrix, known: np.ndarray) -> FieldMatrix:
    """Rebuild all y-packets from the known ones plus the public z-packets.

    Only ``y[known]`` is read from ``y``; the rest is solved for.
    """
    h = a_z.cols
    mask = np.zeros(h, dtype=bool)
    mask[known] = True
    unknown = np.flatnonzero(~mask)
    y_known = y.take_rows(known)
    out = np.zeros_like(y.data)
    out[known] = y_known.data
    if unknown.size:
        rhs = z - a_z.take_cols(known) @ y_known if known.size else z
        sol = solve(a_z.take_cols(unknown), rhs)
        if sol is None:
            raise RuntimeError("reconciliation code does not cover a terminal")
        out[unknown] = sol.data
    return FieldMatrix._wrap(y.field, out)


def _eve_known_functionals(view: EveView, h: int, field_: GF) -> FieldMatrix:
    """Rows spanning the y-packet combinations Eve can compute from her packets."""
    eve = set(view.x_indices.tolist())
    rows = []
    for bl in view.blocks:
        size = bl.y_slice.stop - bl.y_slice.start
        if size == 0:
            continue
        hidden = [j for j, p in enumerate(bl.packets.tolist()) if p not in eve]
        # w with w @ G[:, hidden] == 0 is a function of Eve's packets alone
        w = nullspace(bl.generator.take_cols(hidden).T) if hidden else FieldMatrix.identity(field_, size)
        if w.rows:
            full = np.zeros((w.rows, h), dtype=np.int64)
            full[:, bl.y_slice] = w.data
            rows.append(full)
    data = np.vstack(rows) if rows else np.zeros((0, h), dtype=np.int64)
    return FieldMatrix._wrap(field_, data)


def _global_generator(view: EveView, n: int, h: int, field_: GF) -> FieldMatrix:
    g = np.zeros((h, n), dtype=np.int64)
    for bl in view.blocks:
        g[bl.y_slice][:, bl.packets] = bl.generator.data
    return FieldMatrix._wrap(field_, g)


def leakage_bits(outcome: ProtocolOutcome, method: Literal["fast", "direct"] = "fast") -> float:
    """Exact ``I(key; Eve's packets, public transcript)`` in bits.

    ``direct`` stacks the key map with every map Eve observes in terms of
    the x-packets. ``fast`` uses the equivalent y-domain form: with ``D``
    spanning the y-combinations Eve can compute and ``N`` the kernel of the
    z-coefficients, the leak is ``rank(D N^T)`` symbols.
    """
    cfg = outcome.config
    view = outcome.eve_view
    field_ = GF(cfg.q)
    h = outcome.h
    symbol_bits = cfg.L * math.log2(cfg.q)
    if method == "direct":
        g = _global_generator(view, cfg.n, h, field_)
        k_x = view.key_coeffs @ g
        z_x = view.z_coeffs @ g
        e_sel = selection_matrix(field_, cfg.n, view.x_indices)
        eve_map = vstack(z_x, e_sel)
        leak = rank(k_x) + rank(eve_map) - rank(vstack(k_x, eve_map))
        return leak * symbol_bits
    d = _eve_known_functionals(view, h, field_)
    if d.rows == 0 or outcome.l == 0:
        return 0.0
    kernel = nullspace(view.z_coeffs) if view.z_coeffs.rows else FieldMatrix.identity(field_, h)
    return rank(d @ kernel.T) * symbol_bits


def erasure_capacity(delta: float, delta_e: float, L: int, q: int) -> float:
    """Key capacity ``(1 - delta) * delta_e * L * log2(q)`` in bits per channel use."""
    for v in (delta, delta_e):
        if not 0.0 <= v <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
    return (1.0 - delta) * delta_e * L * math.log2(q)


def concentration_bounds(mu: float, gamma: float, n: int, m: int) -> tuple[float, float]:
    """Chernoff bounds on the normalized key length ``l / n``.

    Returns ``(P[l/n <= mu - gamma] bound, P[l/n >= mu + gamma] bound)``.
    """
    if not 0 < gamma <= mu:
        raise ValueError("need 0 < gamma <= mu")
    lower = m * math.exp(-gamma**2 * n / (2 * mu))
    upper = math.exp(-m * gamma**2 * n / (3 * mu))
    return lower, upper

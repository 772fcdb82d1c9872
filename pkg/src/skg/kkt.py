"""Exact power allocation for the layered Gaussian key-agreement scheme.

The allocation problem is written in interference form: choose
``P_max = I_0 >= I_1 >= ... >= I_{s-1} >= I_s = 0`` to maximise

    rate(I) = L/2 * sum_i Delta_i [psi_i(I_{i-1}) - psi_i(I_i)],
    psi_i(x) = log2((1 + h_i x) / (1 + h_{i-1} x)).

The objective is not concave, so every point satisfying the first-order
(KKT) conditions is enumerated and the best one is kept. With ``f = -rate``
and multiplier ``lambda_k >= 0`` for ``I_k <= I_{k-1}``, stationarity reads
``F_k(I_k) + lambda_k - lambda_{k+1} = 0`` where, up to the positive factor
``L / (2 ln 2)``,

    F_k(x) = [(h_{k+1} beta_k - h_{k-1} alpha_k) x - (alpha_k - beta_k)]
             / ((1 + h_{k-1} x)(1 + h_k x)(1 + h_{k+1} x)),
    alpha_k = (h_{k+1} - h_k) Delta_{k+1},  beta_k = (h_k - h_{k-1}) Delta_k.

Indices sharing one value form a block. The sum of ``F`` over a block
``k..k+l`` has a quadratic numerator (linear when ``l = 0``), so block values
are roots of low-degree polynomials. The search keeps one record per block:
index range, value bounds and whether the value is fixed. It repeatedly
takes an open block, splits its admissible range at the roots of its
numerator and branches: fix the value at a root, or, where the derivative
has constant sign, merge the block with the neighbour that sign forces it
against. Every finished branch is checked by rebuilding the multipliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .gaussian import PowerAllocation, rate_from_interference
from .profiles import GainProfile, StateProfile

__all__ = [
    "KktNode",
    "KktCandidate",
    "Certificate",
    "f1_coeffs",
    "f1_root",
    "f2_coeffs",
    "numerator_roots",
    "solve_kkt",
    "optimize",
    "grid_oracle",
    "two_layer_closed_form",
    "roots_strictly_ordered",
    "check_candidate",
    "finite_difference_check",
    "TieError",
]

RESIDUAL_TOL = 1e-10
DUAL_TOL = 1e-9
DEDUP_TOL = 1e-9
DISC_TOL = 1e-14
FD_STEP = 1e-6
FD_TOL = 1e-4


class TieError(ValueError):
    """Closed form does not apply because an inequality holds with equality."""


@dataclass(frozen=True)
class KktNode:
    """Search record for one index: its block ``[l, u]``, value bounds, and
    whether the value is fixed."""

    l: int
    u: int
    min: float
    max: float
    determined: bool


@dataclass
class Certificate:
    multipliers: np.ndarray  # lambda_1..lambda_s
    residual: float  # worst stationarity residual relative to its term scale
    dual_ok: bool

    @property
    def ok(self) -> bool:
        return self.dual_ok and self.residual <= RESIDUAL_TOL


@dataclass
class KktCandidate:
    interference: np.ndarray  # I_0..I_s
    multipliers: np.ndarray  # lambda_1..lambda_s
    rate: float
    blocks: tuple[tuple[int, int], ...]
    residual: float = 0.0

    @property
    def powers(self) -> np.ndarray:
        return np.maximum(self.interference[:-1] - self.interference[1:], 0.0)

    @property
    def allocation(self) -> PowerAllocation:
        return PowerAllocation(self.powers, float(self.interference[0]))

    @property
    def nodes(self) -> list[KktNode]:
        """One record per index ``0..s``, all determined."""
        out = []
        for l, u in self.blocks:
            v = float(self.interference[l])
            out.extend(KktNode(l, u, v, v, True) for _ in range(l, u + 1))
        return out

    def to_json(self) -> dict:
        return {"I": self.interference.tolist(), "P": self.powers.tolist(), "rate": self.rate}


# ---------------------------------------------------------------------------
# derivative pieces


class _Model:
    def __init__(self, gains: GainProfile, profile: StateProfile, complex_channel: bool = False):
        if gains.s != profile.s:
            raise ValueError("gains and profile disagree on the number of states")
        if gains.s < 1:
            raise ValueError("need at least one layer")
        self.gains = gains
        self.profile = profile
        self.complex_channel = complex_channel
        self.s = gains.s
        self.h = gains.h
        self.w = profile.weights  # w[i] = Delta_i, w[0] unused
        self.p = gains.p_max
        h, w = self.h, self.w
        s = self.s
        # alpha, beta indexed 1..s-1
        self.alpha = np.zeros(s + 1)
        self.beta = np.zeros(s + 1)
        for k in range(1, s):
            self.alpha[k] = (h[k + 1] - h[k]) * w[k + 1]
            self.beta[k] = (h[k] - h[k - 1]) * w[k]

    def f(self, k: int, x: float) -> float:
        """``F_k(x)`` without the ``L / (2 ln 2)`` factor."""
        h, a, b = self.h, self.alpha[k], self.beta[k]
        num = (h[k + 1] * b - h[k - 1] * a) * x - (a - b)
        return num / ((1 + h[k - 1] * x) * (1 + h[k] * x) * (1 + h[k + 1] * x))

    def f_scale(self, k: int, x: float) -> float:
        """Magnitude of the terms cancelling inside ``F_k(x)``."""
        h, a, b = self.h, self.alpha[k], self.beta[k]
        mag = (h[k + 1] * b + h[k - 1] * a) * x + a + b
        return mag / ((1 + h[k - 1] * x) * (1 + h[k] * x) * (1 + h[k + 1] * x))

    def block_coeffs(self, k: int, u: int) -> tuple[float, float, float]:
        """``(c2, c1, c0)`` of the numerator of ``sum_{j=k..u} F_j``.

        ``A (1 + h_u x)(1 + h_{u+1} x) - B (1 + h_{k-1} x)(1 + h_k x)`` with
        ``A = Delta_k (h_k - h_{k-1})`` and ``B = Delta_{u+1} (h_{u+1} - h_u)``.
        Single indices drop the common factor ``1 + h_k x``.
        """
        h, w = self.h, self.w
        if k == u:
            a, b = self.alpha[k], self.beta[k]
            return 0.0, h[k + 1] * b - h[k - 1] * a, -(a - b)
        A = w[k] * (h[k] - h[k - 1])
        B = w[u + 1] * (h[u + 1] - h[u])
        c2 = A * h[u] * h[u + 1] - B * h[k - 1] * h[k]
        c1 = A * (h[u] + h[u + 1]) - B * (h[k - 1] + h[k])
        c0 = A - B
        return c2, c1, c0

    def objective(self, interference) -> float:
        return rate_from_interference(interference, self.gains, self.profile, self.complex_channel)

    @property
    def derivative_scale(self) -> float:
        """Factor turning ``F_k`` into the true derivative of ``-rate``."""
        return self.gains.L * (1.0 if self.complex_channel else 0.5) / math.log(2.0)


def _poly(c, x):
    return (c[0] * x + c[1]) * x + c[2]


def _poly_scale(c, x):
    return (abs(c[0]) * x + abs(c[1])) * x + abs(c[2])


def numerator_roots(coeffs: Sequence[float], lo: float = -math.inf, hi: float = math.inf) -> list[float]:
    """Real roots of ``c2 x^2 + c1 x + c0`` within ``[lo, hi]`` (sorted, unique).

    Uses the cancellation-free quadratic formula and one Newton step; a
    discriminant within ``1e-14`` of the coefficient scale counts as a
    double root. An identically zero polynomial has no isolated roots.
    """
    c2, c1, c0 = (float(c) for c in coeffs)
    roots: list[float] = []
    if c2 == 0.0:
        if c1 != 0.0:
            roots = [-c0 / c1]
    else:
        disc = c1 * c1 - 4.0 * c2 * c0
        scale = c1 * c1 + abs(4.0 * c2 * c0)
        if abs(disc) <= DISC_TOL * scale:
            roots = [-c1 / (2.0 * c2)]
        elif disc > 0:
            q = -0.5 * (c1 + math.copysign(math.sqrt(disc), c1))
            roots = [q / c2] if q == 0.0 else [q / c2, c0 / q]
    out = []
    for r in roots:
        d = 2.0 * c2 * r + c1
        if d != 0.0:
            r -= _poly((c2, c1, c0), r) / d
        if lo - _slack(lo) <= r <= hi + _slack(hi):
            out.append(min(max(r, lo), hi))
    out.sort()
    uniq: list[float] = []
    for r in out:
        if not uniq or abs(r - uniq[-1]) > 1e-13 * max(1.0, abs(r)):
            uniq.append(r)
    return uniq


def _slack(v: float) -> float:
    return 1e-12 * max(1.0, abs(v)) if math.isfinite(v) else 0.0


# ---------------------------------------------------------------------------
# public coefficient helpers


def _model(gains, profile) -> _Model:
    return gains if isinstance(gains, _Model) else _Model(gains, profile)


def f1_coeffs(k: int, gains: GainProfile, profile: StateProfile) -> tuple[float, float, tuple[float, float]]:
    """``(alpha_k, beta_k, (slope, intercept))`` of the single-index derivative numerator."""
    m = _model(gains, profile)
    if not 1 <= k <= m.s - 1:
        raise IndexError(f"k must lie in [1, {m.s - 1}]")
    a, b = float(m.alpha[k]), float(m.beta[k])
    return a, b, (float(m.h[k + 1] * b - m.h[k - 1] * a), float(-(a - b)))


def f1_root(k: int, gains: GainProfile, profile: StateProfile) -> float | None:
    """Zero of the single-index derivative numerator, ``(alpha - beta) / (h_{k+1} beta - h_{k-1} alpha)``.

    By convention index 0 maps to ``P_max`` and index ``s`` to 0. Returns
    ``None`` when the slope vanishes.
    """
    m = _model(gains, profile)
    if k == 0:
        return m.p
    if k == m.s:
        return 0.0
    a, b, (slope, icpt) = f1_coeffs(k, gains, profile)
    if slope == 0.0:
        return None
    return (a - b) / slope


def f2_coeffs(k: int, l: int, gains: GainProfile, profile: StateProfile) -> tuple[float, float, float]:
    """Quadratic numerator ``(c2, c1, c0)`` of the derivative of the merged run ``I_k = ... = I_{k+l}``."""
    m = _model(gains, profile)
    if k < 1 or l < 0 or k + l > m.s - 1:
        raise IndexError(f"need 1 <= k and k + l <= {m.s - 1}")
    h, w = m.h, m.w
    u = k + l
    A = w[k] * (h[k] - h[k - 1])
    B = w[u + 1] * (h[u + 1] - h[u])
    return (
        float(A * h[u] * h[u + 1] - B * h[k - 1] * h[k]),
        float(A * (h[u] + h[u + 1]) - B * (h[k - 1] + h[k])),
        float(A - B),
    )


# ---------------------------------------------------------------------------
# certificates


def _chain_scale(m: _Model, ks: Iterable[int], x: float) -> float:
    return sum(m.f_scale(k, x) for k in ks)


def certify(m: _Model, blocks: Sequence[tuple[int, int]], interference: np.ndarray) -> Certificate:
    """Rebuild the multipliers block by block and check the KKT system.

    Inside the block holding ``I_0`` the multipliers are solved backwards
    from its right end, inside the block holding ``I_s`` forwards from its
    left end; other blocks start from zero on the left and must return to
    zero on the right. Multipliers between blocks are exactly zero.
    """
    s = m.s
    lam = np.zeros(s + 2)  # lam[k] for k = 1..s; lam[s + 1] stays zero
    dual_ok = True
    worst = 0.0
    for l, u in blocks:
        x = float(interference[l])
        ks = range(max(l, 1), min(u, s - 1) + 1)
        scale = _chain_scale(m, ks, x)
        if l == 0:
            for k in reversed(ks):
                lam[k] = lam[k + 1] - m.f(k, x)
        elif u == s:
            for k in ks:
                lam[k + 1] = lam[k] + m.f(k, x)
        else:
            acc = 0.0
            for k in ks:
                acc += m.f(k, x)
                if k < u:
                    lam[k + 1] = acc
            worst = max(worst, abs(acc) / scale if scale > 0 else abs(acc))
        if np.any(lam[l + 1 : u + 1] < -DUAL_TOL * scale):
            dual_ok = False
    multipliers = lam[1 : s + 1].copy()
    if multipliers.size:
        multipliers[np.abs(multipliers) < 1e-12 * np.max(np.abs(multipliers))] = 0.0
    # per-index residual from the final values alone
    for k in range(1, s):
        x = float(interference[k])
        r = m.f(k, x) + lam[k] - lam[k + 1]
        scale = m.f_scale(k, x) + abs(lam[k]) + abs(lam[k + 1])
        worst = max(worst, abs(r) / scale if scale > 0 else abs(r))
    return Certificate(multipliers, worst, dual_ok)


def check_candidate(gains: GainProfile, profile: StateProfile, candidate: KktCandidate,
                    complex_channel: bool = False) -> Certificate:
    """Re-run the KKT check on a candidate from its block pattern alone."""
    return certify(_Model(gains, profile, complex_channel), candidate.blocks, candidate.interference)


def finite_difference_check(gains: GainProfile, profile: StateProfile, interference,
                            complex_channel: bool = False) -> float:
    """Worst relative gap between the analytic and numerical derivative of ``-rate``.

    Central differences with step ``1e-6 * max(I_k, 1 / h_s)``; forward
    differences where the step would cross zero.
    """
    m = _Model(gains, profile, complex_channel)
    i = np.asarray(interference, dtype=float)
    worst = 0.0
    for k in range(1, m.s):
        x = i[k]
        step = FD_STEP * max(x, 1.0 / m.h[-1])
        up = i.copy()
        up[k] = x + step
        if x - step >= 0:
            dn = i.copy()
            dn[k] = x - step
            fd = -(m.objective(up) - m.objective(dn)) / (2 * step)
        else:
            fd = -(m.objective(up) - m.objective(i)) / step
        an = m.derivative_scale * m.f(k, x)
        scale = m.derivative_scale * m.f_scale(k, x)
        worst = max(worst, abs(fd - an) / max(abs(an), scale))
    return worst


# ---------------------------------------------------------------------------
# search


@dataclass
class _Block:
    l: int
    u: int
    lo: float
    hi: float
    value: float | None = None

    @property
    def determined(self) -> bool:
        return self.value is not None


def _sub_intervals(lo: float, hi: float, roots: list[float]) -> list[tuple[float, float]]:
    """Closed pieces of ``[lo, hi]`` between consecutive roots."""
    cuts = [lo] + [r for r in roots if lo < r < hi] + [hi]
    pieces = [(a, b) for a, b in zip(cuts, cuts[1:]) if b > a]
    if not pieces and not roots:
        pieces = [(lo, hi)]
    return pieces


def _sign_on(c, a: float, b: float) -> int:
    if c == (0.0, 0.0, 0.0):
        return 0
    x = 0.5 * (a + b)
    v = _poly(c, x)
    if abs(v) <= 1e-15 * _poly_scale(c, x):
        # sample away from a (near-)double root
        for x in (a + 0.25 * (b - a), a + 0.75 * (b - a), a, b):
            v = _poly(c, x)
            if abs(v) > 1e-15 * _poly_scale(c, x):
                break
    return int(np.sign(v))


def _in_closure(v: float, a: float, b: float) -> bool:
    return a - _slack(a) <= v <= b + _slack(b)


class _Search:
    """Branching search over block states, one open block at a time."""

    def __init__(self, m: _Model, pick: Callable[[list[int]], int] | None = None):
        self.m = m
        self.pick = pick
        self.leaves = 0

    def initial(self) -> list[_Block]:
        m = self.m
        blocks = [_Block(0, 0, m.p, m.p, m.p)]
        blocks += [_Block(k, k, 0.0, m.p) for k in range(1, m.s)]
        blocks.append(_Block(m.s, m.s, 0.0, 0.0, 0.0))
        return blocks

    def run(self) -> list[tuple[tuple[tuple[int, int], ...], np.ndarray]]:
        out = []
        stack = [self.initial()]
        while stack:
            state = stack.pop()
            open_ = [i for i, b in enumerate(state) if not b.determined]
            if not open_:
                self.leaves += 1
                out.append(_finish(self.m, state))
                continue
            j = open_[0] if self.pick is None else self.pick(open_)
            stack.extend(self.expand(state, j))
        return out

    def expand(self, state: list[_Block], j: int) -> list[list[_Block]]:
        b = state[j]
        c = self.m.block_coeffs(b.l, b.u)
        roots = numerator_roots(c, b.lo, b.hi)
        children = []
        for r in roots:
            new = [_copy(x) for x in state]
            new[j].lo = new[j].hi = new[j].value = r
            children.append(new)
        for a, z in _sub_intervals(b.lo, b.hi, roots):
            sign = _sign_on(c, a, z)
            if sign >= 0:
                children.append(_merge(state, j, j + 1, a, z))
            if sign <= 0:
                children.append(_merge(state, j - 1, j, a, z))
        return [s for s in (_propagate(ch) for ch in children if ch is not None) if s is not None]


def _copy(b: _Block) -> _Block:
    return _Block(b.l, b.u, b.lo, b.hi, b.value)


def _merge(state, left: int, right: int, a: float, z: float):
    """Join blocks ``left`` and ``right``, the open one restricted to ``[a, z]``."""
    lb, rb = state[left], state[right]
    lo, hi = max(lb.lo, rb.lo, a), min(lb.hi, rb.hi, z)
    value = lb.value if lb.determined else rb.value
    if value is not None:
        if not _in_closure(value, a, z):
            return None
        lo = hi = value
    elif lo > hi + _slack(hi):
        return None
    merged = _Block(lb.l, rb.u, lo, max(hi, lo), value)
    return [_copy(x) for x in state[:left]] + [merged] + [_copy(x) for x in state[right + 1 :]]


def _propagate(state: list[_Block]) -> list[_Block] | None:
    """Tighten bounds so values are non-increasing left to right."""
    for i in range(1, len(state)):
        if state[i].hi > state[i - 1].hi:
            state[i].hi = state[i - 1].hi
    for i in range(len(state) - 2, -1, -1):
        if state[i].lo < state[i + 1].lo:
            state[i].lo = state[i + 1].lo
    for b in state:
        if b.lo > b.hi + _slack(b.hi):
            return None
        if b.determined and not (b.lo - _slack(b.lo) <= b.value <= b.hi + _slack(b.hi)):
            return None
        if b.hi < b.lo:
            b.hi = b.lo
    return state


def _finish(m: _Model, state: list[_Block]):
    interference = np.empty(m.s + 1)
    for b in state:
        interference[b.l : b.u + 1] = b.value
    interference[0] = m.p
    interference[-1] = 0.0
    return tuple((b.l, b.u) for b in state), interference


class _LeftmostSearch:
    """The same branching with the leftmost open block always chosen.

    Once a block's value is fixed at a root, everything to its right depends
    only on that value, so suffix results are cached by ``(start, value)``.
    Merging leftwards into such a block would need its sum of derivatives to
    vanish there, which the root branch already covers, so that move is
    skipped. Blocks merged into the ``I_0`` block keep growing it.
    """

    def __init__(self, m: _Model):
        self.m = m
        self.leaves = 0
        self._cache: dict = {}

    def run(self):
        m = self.m
        out = []
        for tail in self.segment(1, m.p, True):
            blocks = _normalize(((0, 0),) + tail)
            interference = np.empty(m.s + 1)
            for (l, u), v in zip(blocks, _values(m, blocks, tail)):
                interference[l : u + 1] = v
            interference[0] = m.p
            interference[-1] = 0.0
            out.append((blocks, interference))
        self.leaves = len(out)
        return out

    def segment(self, start: int, wall: float, wall_is_budget: bool):
        """Block lists ``((l, u, value, kind), ...)`` covering ``start..s``."""
        key = (start, wall, wall_is_budget)
        if key not in self._cache:
            self._cache[key] = list(self._segment(start, wall, wall_is_budget))
        return self._cache[key]

    def _segment(self, start, wall, wall_is_budget):
        m = self.m
        if start == m.s:
            if not wall_is_budget or _budget_block_ok(m, m.s - 1):
                yield ((m.s, m.s, 0.0, "zero"),)
            return
        budget_ok = not wall_is_budget or _budget_block_ok(m, start - 1)
        yield from self._grow(start, start, 0.0, wall, wall, wall_is_budget, budget_ok)

    def _grow(self, start, u, lo, hi, wall, wall_is_budget, budget_ok):
        m = self.m
        c = m.block_coeffs(start, u)
        roots = numerator_roots(c, lo, hi)
        if budget_ok:
            for r in roots:
                if not _interior_block_ok(m, start, u, r):
                    continue
                for rest in self.segment(u + 1, r, False):
                    yield ((start, u, r, "root"),) + rest
        for a, z in _sub_intervals(lo, hi, roots):
            sign = _sign_on(c, a, z)
            if sign >= 0 and budget_ok:
                if u + 1 == m.s:
                    if _in_closure(0.0, a, z) and _zero_block_ok(m, start):
                        yield ((start, m.s, 0.0, "zero"),)
                else:
                    yield from self._grow(start, u + 1, a, z, wall, wall_is_budget, budget_ok)
            if sign <= 0 and wall_is_budget and _in_closure(wall, a, z):
                for rest in self.segment(u + 1, wall, True):
                    yield ((start, u, wall, "budget"),) + rest


def _normalize(blocks) -> tuple[tuple[int, int], ...]:
    """Fold blocks tagged as joined to the budget into the block holding ``I_0``."""
    out: list[list[int]] = []
    for b in blocks:
        if len(b) == 2:
            out.append([b[0], b[1]])
        elif b[3] == "budget":
            out[0][1] = b[1]
        else:
            out.append([b[0], b[1]])
    return tuple((l, u) for l, u in out)


def _values(m: _Model, blocks, tail):
    vals = {0: m.p}
    for l, u, v, kind in tail:
        vals[l] = v
    return [vals.get(l, m.p) if l == 0 else vals[l] for l, _ in blocks]


def _budget_block_ok(m: _Model, u: int) -> bool:
    """Multipliers inside the block ``0..u`` at value ``P_max`` are non-negative."""
    acc = 0.0
    scale = 0.0
    for k in range(min(u, m.s - 1), 0, -1):
        acc -= m.f(k, m.p)
        scale += m.f_scale(k, m.p)
        if acc < -DUAL_TOL * scale:
            return False
    return True


def _zero_block_ok(m: _Model, l: int) -> bool:
    acc = 0.0
    scale = 0.0
    for k in range(l, m.s):
        acc += m.f(k, 0.0)
        scale += m.f_scale(k, 0.0)
        if acc < -DUAL_TOL * scale:
            return False
    return True


def _interior_block_ok(m: _Model, l: int, u: int, x: float) -> bool:
    acc = 0.0
    scale = 0.0
    for k in range(l, u + 1):
        acc += m.f(k, x)
        scale += m.f_scale(k, x)
        if k < u and acc < -DUAL_TOL * scale:
            return False
    return abs(acc) <= RESIDUAL_TOL * max(scale, 1e-300)


def _dedupe(cands: list[KktCandidate]) -> list[KktCandidate]:
    out: list[KktCandidate] = []
    for c in sorted(cands, key=lambda c: tuple(c.interference)):
        dup = False
        for o in out:
            if np.all(np.abs(c.interference - o.interference) <= DEDUP_TOL * np.maximum(1.0, np.abs(o.interference))):
                dup = True
                break
        if not dup:
            out.append(c)
    return out


def solve_kkt(gains: GainProfile, profile: StateProfile, pick=None, complex_channel: bool = False,
              stats: dict | None = None) -> list[KktCandidate]:
    """Every allocation satisfying the KKT conditions, each with its multipliers.

    ``pick`` chooses which open block to branch on (it receives the list of
    open block positions); by default the leftmost, which enables caching.
    """
    m = _Model(gains, profile, complex_channel)
    if m.p == 0.0:
        zero = np.zeros(m.s + 1)
        return [KktCandidate(zero, np.zeros(m.s), 0.0, ((0, m.s),), 0.0)]
    search = _LeftmostSearch(m) if pick is None else _Search(m, pick)
    raw = search.run()
    cands = []
    for blocks, interference in raw:
        cert = certify(m, blocks, interference)
        if not cert.ok:
            continue
        cands.append(KktCandidate(interference, cert.multipliers, m.objective(interference),
                                  blocks, cert.residual))
    out = _dedupe(cands)
    if stats is not None:
        stats.update(leaves=search.leaves, certified=len(cands), unique=len(out))
    return out


def optimize(gains: GainProfile, profile: StateProfile, complex_channel: bool = False,
             candidates: list[KktCandidate] | None = None) -> tuple[KktCandidate, float]:
    """Best KKT point by achievable rate."""
    cands = solve_kkt(gains, profile, complex_channel=complex_channel) if candidates is None else candidates
    best = max(cands, key=lambda c: (c.rate, tuple(-c.interference)))
    return best, best.rate


def grid_oracle(gains: GainProfile, profile: StateProfile, resolution: float,
                complex_channel: bool = False) -> tuple[PowerAllocation, float]:
    """Best rate over powers on the grid ``{k * resolution}`` summing to ``P_max``.

    Works directly on ``P_1..P_s`` (not on interference values) and is
    limited to ``s <= 4``.
    """
    s = gains.s
    if s > 4:
        raise ValueError("grid search is limited to s <= 4")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    p_max = gains.p_max
    steps = int(round(p_max / resolution)) if p_max > 0 else 0
    h = gains.h
    w = profile.weights[1:]
    scale = gains.L * (1.0 if complex_channel else 0.5) / math.log(2.0)

    def rates(P):  # P has shape (..., s), summing to p_max
        tail = np.cumsum(P[..., ::-1], axis=-1)[..., ::-1]
        I = np.concatenate((tail[..., 1:], np.zeros(P.shape[:-1] + (1,))), axis=-1)
        r = np.log1p(h[1:] * P / (1 + h[1:] * I)) - np.log1p(h[:-1] * P / (1 + h[:-1] * I))
        return scale * (r @ w)

    if s == 1 or steps == 0:
        P = np.zeros(s)
        P[0] = p_max
        return PowerAllocation(P, p_max), float(rates(P))
    best_val, best_p = -math.inf, None
    unit = p_max / steps
    for k1 in range(steps + 1):
        rem = steps - k1
        if s == 2:
            pts = np.array([[k1, rem]], dtype=float)
        else:
            # enumerate the remaining s - 1 coordinates summing to rem
            grids = np.meshgrid(*[np.arange(rem + 1)] * (s - 2), indexing="ij")
            flat = np.stack([g.ravel() for g in grids], axis=-1) if grids else np.zeros((1, 0))
            flat = flat[flat.sum(axis=1) <= rem]
            last = rem - flat.sum(axis=1, keepdims=True)
            pts = np.concatenate((np.full((flat.shape[0], 1), k1), flat, last), axis=1).astype(float)
        vals = rates(pts * unit)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_p = float(vals[i]), pts[i] * unit
    return PowerAllocation(best_p, p_max), best_val


def roots_strictly_ordered(gains: GainProfile, profile: StateProfile) -> bool:
    """Whether ``0 < r_{s-1} < ... < r_1 < P_max`` for the single-index roots."""
    m = _Model(gains, profile)
    rs = [f1_root(k, gains, profile) for k in range(1, m.s)]
    if any(r is None for r in rs):
        return False
    seq = [m.p] + rs + [0.0]
    return all(a > b for a, b in zip(seq, seq[1:]))


def two_layer_closed_form(gains: GainProfile, profile: StateProfile, p_max: float | None = None,
                       margin: float = 1e-9) -> PowerAllocation:
    """Optimal two-layer allocation from the signs of the derivative numerator.

    * ``alpha < beta``: all power to layer 1.
    * ``h_2 beta < h_0 alpha``: all power to layer 2.
    * otherwise ``P_2 = min(r, P_max)`` with ``r = (alpha - beta) / (h_2 beta - h_0 alpha)``.

    Raises :class:`TieError` when an inequality is within ``margin`` of
    equality (relative); callers then fall back to :func:`optimize`.
    """
    if gains.s != 2:
        raise ValueError("closed form needs exactly two layers")
    if p_max is not None and p_max != gains.p_max:
        gains = GainProfile(gains.gains, p_max, gains.L)
    p = gains.p_max
    a, b, (slope, _) = f1_coeffs(1, gains, profile)
    h = gains.h
    if abs(a - b) <= margin * max(abs(a), abs(b)):
        raise TieError("alpha equals beta")
    if abs(h[2] * b - h[0] * a) <= margin * max(h[2] * b, h[0] * a):
        raise TieError("h_2 beta equals h_0 alpha")
    if a < b:
        return PowerAllocation([p, 0.0], p)
    if h[2] * b < h[0] * a:
        return PowerAllocation([0.0, p], p)
    p2 = min((a - b) / slope, p)
    return PowerAllocation([p - p2, p2], p)

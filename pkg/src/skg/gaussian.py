"""Rates, bounds and degrees of freedom for the state-dependent Gaussian channel.

A receiver in state ``k`` sees power gain ``h_k``. Alice superposes ``s``
layers with powers ``P_1..P_s``; layer ``i`` is decodable exactly in states
``>= i`` and hidden from receivers in states ``< i``. With
``I_k = P_{k+1} + ... + P_s`` (so ``I_0`` is the power spent and ``I_s = 0``), layer ``i`` carries

    R_i = 1/2 [log2(1 + h_i P_i / (1 + h_i I_i)) - log2(1 + h_{i-1} P_i / (1 + h_{i-1} I_i))]

bits per real symbol, and the group key rate is ``L * sum_i Delta_i R_i``.

Every rate function takes ``complex_channel``: complex-valued signalling
drops the one-half factor, doubling every rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .profiles import GainProfile, StateProfile

__all__ = [
    "PowerAllocation",
    "layer_rates",
    "layer_rates_from_interference",
    "achievable_rate",
    "rate_from_interference",
    "gauss_upper_bound",
    "dof",
    "dof_upper",
    "rate_scale",
]


def rate_scale(complex_channel: bool) -> float:
    return 1.0 if complex_channel else 0.5


@dataclass(frozen=True)
class PowerAllocation:
    """Per-layer powers ``P_1..P_s`` with budget ``p_max``."""

    powers: tuple[float, ...]
    p_max: float

    def __init__(self, powers, p_max: float | None = None):
        p = np.asarray(powers, dtype=float).ravel()
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("powers must be finite and non-negative")
        total = float(p.sum())
        budget = total if p_max is None else float(p_max)
        if total > budget * (1 + 1e-12) + 1e-300:
            raise ValueError(f"total power {total} exceeds budget {budget}")
        object.__setattr__(self, "powers", tuple(p.tolist()))
        object.__setattr__(self, "p_max", budget)

    @classmethod
    def from_interference(cls, interference, p_max: float | None = None) -> "PowerAllocation":
        """Build from ``I_0..I_s`` (``I_0`` is the budget, ``I_s = 0``)."""
        i = np.asarray(interference, dtype=float)
        p = np.maximum(i[:-1] - i[1:], 0.0)
        return cls(p, float(i[0]) if p_max is None else p_max)

    @property
    def s(self) -> int:
        return len(self.powers)

    @property
    def interference(self) -> np.ndarray:
        """``I_k = P_{k+1} + ... + P_s`` for ``k = 0..s``.

        ``I_0`` is the total power used, which equals the budget for every
        allocation that spends it (all optimal ones do).
        """
        p = np.asarray(self.powers)
        return np.concatenate((np.cumsum(p[::-1])[::-1], [0.0]))

    @property
    def fractions(self) -> np.ndarray:
        p = np.asarray(self.powers)
        return p / self.p_max if self.p_max > 0 else np.zeros_like(p)


def _check(alloc_s: int, gains: GainProfile):
    if alloc_s != gains.s:
        raise ValueError(f"allocation has {alloc_s} layers, gains describe {gains.s}")


def layer_rates(alloc: PowerAllocation, gains: GainProfile, complex_channel: bool = False) -> np.ndarray:
    """Per-layer rates ``R_1..R_s`` in bits per symbol."""
    _check(alloc.s, gains)
    h = gains.h
    p = np.asarray(alloc.powers)
    i = alloc.interference[1:]
    upper = np.log1p(h[1:] * p / (1.0 + h[1:] * i))
    lower = np.log1p(h[:-1] * p / (1.0 + h[:-1] * i))
    return rate_scale(complex_channel) * (upper - lower) / np.log(2.0)


def layer_rates_from_interference(interference, gains: GainProfile, complex_channel: bool = False) -> np.ndarray:
    """Per-layer rates written in terms of ``I_0..I_s`` only."""
    i = np.asarray(interference, dtype=float)
    h = gains.h
    if i.size != gains.s + 1:
        raise ValueError("need s + 1 interference values")
    hi, lo = h[1:], h[:-1]
    val = (np.log1p(hi * i[:-1]) - np.log1p(hi * i[1:])
           + np.log1p(lo * i[1:]) - np.log1p(lo * i[:-1]))
    return rate_scale(complex_channel) * val / np.log(2.0)


def achievable_rate(alloc: PowerAllocation, gains: GainProfile, profile: StateProfile,
                    complex_channel: bool = False) -> float:
    """Group key rate ``L * sum_i Delta_i R_i`` (bits per channel use)."""
    if profile.s != gains.s:
        raise ValueError("profile and gains disagree on the number of states")
    r = layer_rates(alloc, gains, complex_channel)
    return float(gains.L * np.dot(profile.weights[1:], r))


def rate_from_interference(interference, gains: GainProfile, profile: StateProfile,
                           complex_channel: bool = False) -> float:
    r = layer_rates_from_interference(interference, gains, complex_channel)
    return float(gains.L * np.dot(profile.weights[1:], r))


def gauss_upper_bound(gains: GainProfile, profile: StateProfile, complex_channel: bool = False) -> float:
    """``L/2 * sum_{i,j} delta_i delta_j log2(1 + h_i P / (1 + h_j P))``."""
    if profile.s != gains.s:
        raise ValueError("profile and gains disagree on the number of states")
    h = gains.h
    d = np.asarray(profile.deltas)
    p = gains.p_max
    terms = np.log1p(np.outer(h, np.ones_like(h)) * p / (1.0 + np.outer(np.ones_like(h), h) * p))
    return float(rate_scale(complex_channel) * gains.L * d @ terms @ d / np.log(2.0))


def _check_exponents(gammas, profile: StateProfile) -> np.ndarray:
    g = np.asarray(gammas, dtype=float)
    if g.size != profile.s + 1:
        raise ValueError("need one exponent per state")
    if np.any(g <= 0) or np.any(np.diff(g) <= 0):
        raise ValueError("exponents must be positive and strictly increasing")
    return g


def dof(profile: StateProfile, gammas, L: int = 1) -> float:
    """``L * sum_i (gamma_i - gamma_{i-1}) Delta_i`` for gains ``h_i = Q^gamma_i``."""
    g = _check_exponents(gammas, profile)
    return float(L * np.dot(np.diff(g), profile.weights[1:]))


def dof_upper(profile: StateProfile, gammas, L: int = 1) -> float:
    """High-SNR slope of the upper bound: ``L * sum_{i>j} delta_i delta_j (gamma_i - gamma_j)``."""
    g = _check_exponents(gammas, profile)
    d = np.asarray(profile.deltas)
    diff = np.subtract.outer(g, g)
    return float(L * np.sum(np.tril(np.outer(d, d) * diff, k=-1)))

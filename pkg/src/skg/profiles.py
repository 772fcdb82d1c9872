"""Channel-state distributions and Gaussian gain profiles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["StateProfile", "GainProfile", "db_to_linear"]

SUM_TOL = 1e-12


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class StateProfile:
    """Probabilities ``deltas[k] = P[S = k]`` for states ``0..s``.

    ``thetas[i]`` (``i = 1..s``) is the probability that a layer-``i``
    message is lost, ``P[S < i]``; ``weights[i] = thetas[i] * (1 - thetas[i])``
    is the secrecy weight of layer ``i``. Both arrays are indexed from 1;
    entry 0 is a placeholder equal to 0.
    """

    deltas: tuple[float, ...]

    def __init__(self, deltas):
        d = tuple(float(x) for x in np.asarray(deltas, dtype=float).ravel())
        if len(d) < 1:
            raise ValueError("need at least one state")
        if any(x < 0 or not np.isfinite(x) for x in d):
            raise ValueError("state probabilities must be non-negative")
        if abs(sum(d) - 1.0) > SUM_TOL:
            raise ValueError(f"state probabilities must sum to 1 (got {sum(d):.15g})")
        object.__setattr__(self, "deltas", d)

    @classmethod
    def uniform(cls, states: int) -> "StateProfile":
        return cls(np.full(states, 1.0 / states))

    @property
    def s(self) -> int:
        return len(self.deltas) - 1

    @property
    def thetas(self) -> np.ndarray:
        out = np.zeros(self.s + 1)
        out[1:] = np.cumsum(self.deltas)[:-1]
        return np.clip(out, 0.0, 1.0)

    @property
    def weights(self) -> np.ndarray:
        th = self.thetas
        w = th * (1.0 - th)
        w[0] = 0.0
        return w


@dataclass(frozen=True)
class GainProfile:
    """Power gains ``h_0 < ... < h_s`` (linear), power budget and block length."""

    gains: tuple[float, ...]
    p_max: float
    L: int = 1

    def __init__(self, gains, p_max: float, L: int = 1):
        g = tuple(float(x) for x in np.asarray(gains, dtype=float).ravel())
        if len(g) < 1:
            raise ValueError("need at least one gain")
        if g[0] <= 0:
            raise ValueError("gains must be positive")
        if any(b <= a for a, b in zip(g, g[1:])):
            raise ValueError("gains must be strictly increasing")
        if not p_max >= 0 or not np.isfinite(p_max):
            raise ValueError("power budget must be non-negative")
        if L < 1:
            raise ValueError("block length must be positive")
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "p_max", float(p_max))
        object.__setattr__(self, "L", int(L))

    @classmethod
    def from_db(cls, gains_db, p_max: float, L: int = 1) -> "GainProfile":
        return cls(db_to_linear(gains_db), p_max, L)

    @property
    def s(self) -> int:
        return len(self.gains) - 1

    @property
    def h(self) -> np.ndarray:
        return np.asarray(self.gains)

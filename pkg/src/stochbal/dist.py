"""Finite-support nonnegative distributions.

Every job size X_ij is a :class:`DiscreteDist`.  Values are kept sorted and
merged within ``MERGE_TOL`` so two equal distributions always compare (and
serialize) identically.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

MERGE_TOL = 1e-12
PROB_SUM_TOL = 1e-9
DEFAULT_SUPPORT_CAP = 10**6


class SupportOverflow(RuntimeError):
    """Raised when an exact convolution would exceed the support cap."""


def _merge(values: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(values, kind="stable")
    values = values[order]
    probs = probs[order]
    if len(values) > 1:
        starts = np.concatenate(([True], np.diff(values) > MERGE_TOL))
        group = np.cumsum(starts) - 1
        probs = np.bincount(group, weights=probs)
        # representative value of a merged group is its smallest member
        values = values[starts]
    keep = probs > 0.0
    return values[keep], probs[keep]


class DiscreteDist:
    """Immutable distribution over finitely many nonnegative values."""

    __slots__ = ("values", "probs")

    def __init__(self, values: Sequence[float], probs: Sequence[float]):
        v = np.asarray(values, dtype=np.float64).ravel()
        p = np.asarray(probs, dtype=np.float64).ravel()
        if v.shape != p.shape:
            raise ValueError("values and probs must have equal length")
        if v.size == 0:
            raise ValueError("a distribution needs at least one atom")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("values must be finite and nonnegative")
        if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1 + PROB_SUM_TOL):
            raise ValueError("probabilities must lie in [0, 1]")
        total = float(p.sum())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, expected 1")
        v, p = _merge(v, p)
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    def __setattr__(self, name, value):
        raise AttributeError("DiscreteDist is immutable")

    @classmethod
    def from_atoms(cls, atoms: Iterable[Sequence[float]]) -> "DiscreteDist":
        atoms = list(atoms)
        return cls([a[0] for a in atoms], [a[1] for a in atoms])

    @classmethod
    def point(cls, value: float) -> "DiscreteDist":
        return cls([value], [1.0])

    @classmethod
    def bernoulli(cls, prob: float, size: float) -> "DiscreteDist":
        """Takes ``size`` with probability ``prob`` and 0 otherwise."""
        return cls([0.0, size], [1.0 - prob, prob])

    @classmethod
    def _trusted(cls, values: np.ndarray, probs: np.ndarray) -> "DiscreteDist":
        # skips validation; callers guarantee a valid, possibly unmerged, pmf
        self = object.__new__(cls)
        v, p = _merge(np.asarray(values, dtype=np.float64), np.asarray(probs, dtype=np.float64))
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)
        return self

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return [(float(v), float(p)) for v, p in zip(self.values, self.probs)]

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def max_value(self) -> float:
        return float(self.values[-1])

    def scale(self, factor: float) -> "DiscreteDist":
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return DiscreteDist._trusted(self.values * factor, self.probs)

    def map(self, fn) -> "DiscreteDist":
        """Distribution of ``fn(X)`` for a vectorized nonnegative ``fn``."""
        return DiscreteDist._trusted(fn(self.values), self.probs)

    def cdf(self, t: float) -> float:
        return float(self.probs[self.values <= t].sum())

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, rng.random(size), side="right")
        return self.values[np.minimum(idx, self.values.size - 1)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteDist):
            return NotImplemented
        return (
            self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.probs, other.probs)
        )

    def __hash__(self) -> int:
        return hash((self.values.tobytes(), self.probs.tobytes()))

    def __repr__(self) -> str:
        inner = ", ".join(f"({v:g}, {p:g})" for v, p in self.atoms)
        return f"DiscreteDist([{inner}])"


def mean(d: DiscreteDist) -> float:
    return float(np.dot(d.values, d.probs))


def moment_q(d: DiscreteDist, q: float) -> float:
    """E[X^q]."""
    return float(np.dot(d.values**q, d.probs))


def truncate_split(d: DiscreteDist, threshold: float) -> tuple[DiscreteDist, DiscreteDist]:
    """Split X into X*I(X <= threshold) and X*I(X > threshold).

    Both parts are coupled on the same sample, so they add up to X.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    low = d.values <= threshold
    truncated = DiscreteDist._trusted(np.where(low, d.values, 0.0), d.probs)
    exceptional = DiscreteDist._trusted(np.where(low, 0.0, d.values), d.probs)
    return truncated, exceptional


def effective_size(d: DiscreteDist, k: int) -> float:
    """log_k E[k^X] for k >= 2 and E[X] for k = 1."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    if k == 1:
        return mean(d)
    return float(effective_sizes(d, [k])[0])


def effective_sizes(d: DiscreteDist, ks: Sequence[int]) -> np.ndarray:
    """Vectorized :func:`effective_size` over several ``k``."""
    ks = np.asarray(ks, dtype=np.float64)
    out = np.empty(ks.shape)
    one = ks == 1
    out[one] = mean(d)
    if np.any(~one):
        logk = np.log(ks[~one])
        # log E[e^{X log k}] via log-sum-exp over atoms
        expo = np.log(d.probs)[None, :] + logk[:, None] * d.values[None, :]
        top = expo.max(axis=1)
        lse = top + np.log(np.exp(expo - top[:, None]).sum(axis=1))
        val = lse / logk
        # clamp rounding noise into [mean, max]
        out[~one] = np.clip(val, mean(d), d.max_value)
    return out


def convolve(a: DiscreteDist, b: DiscreteDist, cap: int = DEFAULT_SUPPORT_CAP) -> DiscreteDist:
    """Distribution of A + B for independent A, B."""
    if a.size * b.size > cap:
        raise SupportOverflow(f"convolution support {a.size}x{b.size} exceeds cap {cap}")
    values = (a.values[:, None] + b.values[None, :]).ravel()
    probs = (a.probs[:, None] * b.probs[None, :]).ravel()
    return DiscreteDist._trusted(values, probs)


def convolve_all(dists: Iterable[DiscreteDist], cap: int = DEFAULT_SUPPORT_CAP) -> DiscreteDist:
    acc = DiscreteDist.point(0.0)
    for d in dists:
        acc = convolve(acc, d, cap)
        if acc.size > cap:
            raise SupportOverflow(f"support {acc.size} exceeds cap {cap}")
    return acc


def tail_bound(k: int, total_effective: float, c: float) -> float:
    """Chernoff-style bound k^-(c - b) on Pr[sum >= c] when sum of beta_k <= b."""
    if k == 1:
        return 1.0
    return float(min(1.0, math.exp(-(c - total_effective) * math.log(k))))

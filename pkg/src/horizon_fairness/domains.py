"""Feasible allocation sets with exact Euclidean projections.

Three shapes cover everything the experiments need: axis-aligned boxes (the
synthetic examples and the dual box), capped simplices with pinned coordinates
(one cache), and Cartesian products of those (a cache network).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DomainConfigError(ValueError):
    """Raised at construction when a domain is empty or malformed."""


@dataclass(frozen=True, eq=False)
class BoxDomain:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise DomainConfigError("lower/upper shape mismatch")
        if np.any(lo > hi):
            raise DomainConfigError(f"empty box: lower {lo} > upper {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, y) -> np.ndarray:
        return np.clip(np.asarray(y, dtype=float), self.lower, self.upper)

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


@dataclass(frozen=True, eq=False)
class CappedSimplexDomain:
    """``{x in [0,1]^F : sum_free x <= capacity, x_f = 1 where pinned}``.

    By default pinned (repository) coordinates do not consume capacity. With
    ``pins_consume_capacity=True`` the budget is ``sum_f x_f <= capacity`` over
    all coordinates, as in the literal cache constraint.
    """

    dimension: int
    capacity: float
    pinned_lower: np.ndarray | None = None
    pins_consume_capacity: bool = False

    def __post_init__(self):
        if self.dimension < 1:
            raise DomainConfigError("dimension must be positive")
        if self.capacity < 0:
            raise DomainConfigError("capacity must be nonnegative")
        pins = (
            np.zeros(self.dimension, dtype=bool)
            if self.pinned_lower is None
            else np.asarray(self.pinned_lower).astype(bool).reshape(-1)
        )
        if pins.size != self.dimension:
            raise DomainConfigError("pinned_lower has wrong length")
        object.__setattr__(self, "pinned_lower", pins)
        if self.pins_consume_capacity and pins.sum() > self.capacity:
            raise DomainConfigError(
                f"{int(pins.sum())} pinned coordinates exceed capacity {self.capacity}"
            )

    @property
    def dim(self) -> int:
        return self.dimension

    @property
    def free_capacity(self) -> float:
        if self.pins_consume_capacity:
            return float(self.capacity - self.pinned_lower.sum())
        return float(self.capacity)

    def project(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(1, -1)
        out = project_capped_simplex_rows(
            y, np.array([self.free_capacity]), self.pinned_lower.reshape(1, -1)
        )
        return out[0]

    def diameter(self) -> float:
        n_free = int((~self.pinned_lower).sum())
        return float(np.sqrt(2.0 * min(self.free_capacity, n_free)))

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < -tol) or np.any(x > 1 + tol):
            return False
        if np.any(x[self.pinned_lower] < 1 - tol):
            return False
        return bool(x[~self.pinned_lower].sum() <= self.free_capacity + tol * max(1, self.dimension))


def project_capped_simplex_rows(Y: np.ndarray, capacity: np.ndarray, pinned: np.ndarray) -> np.ndarray:
    """Row-wise projection onto ``{x in [0,1]^F: sum(x[~pinned]) <= cap, x[pinned] = 1}``.

    The free part is ``clip(y - lam, 0, 1)`` with the smallest ``lam >= 0``
    meeting the budget. The budget sum is piecewise linear and nonincreasing in
    ``lam`` with breakpoints at ``y_i`` and ``y_i - 1``; evaluating it at every
    breakpoint and interpolating on the bracketing segment gives ``lam`` exactly.
    Cost is O(F^2) per row.
    """
    Y = np.asarray(Y, dtype=float)
    n_rows, F = Y.shape
    pinned = np.broadcast_to(np.asarray(pinned, dtype=bool), Y.shape)
    cap = np.broadcast_to(np.asarray(capacity, dtype=float), (n_rows,))
    free = ~pinned
    # pinned coordinates contribute nothing to the budget sum
    Yf = np.where(free, Y, -np.inf)
    clipped = np.clip(Yf, 0.0, 1.0)
    # ulp-scale slack keeps projections of feasible points bit-identical
    slack = 8 * F * np.finfo(float).eps * np.maximum(1.0, cap)
    over = clipped.sum(axis=1) > cap + slack
    lam = np.zeros(n_rows)
    if over.any():
        Yo = Yf[over]
        bps = np.concatenate([np.zeros((Yo.shape[0], 1)), Yo, Yo - 1.0], axis=1)
        bps = np.sort(np.where(np.isfinite(bps), np.maximum(bps, 0.0), 0.0), axis=1, kind="stable")
        # s[r, j] = sum_i clip(y_ri - bps_rj, 0, 1)
        s = np.clip(Yo[:, None, :] - bps[:, :, None], 0.0, 1.0).sum(axis=2)
        k = cap[over]
        j = np.argmax(s <= k[:, None], axis=1)
        rows = np.arange(Yo.shape[0])
        lo, hi = bps[rows, j - 1], bps[rows, j]
        s_lo, s_hi = s[rows, j - 1], s[rows, j]
        denom = s_lo - s_hi
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(denom > 0, (s_lo - k) / denom, 0.0)
        lam[over] = lo + t * (hi - lo)
    X = np.clip(Y - lam[:, None], 0.0, 1.0)
    X = np.where(free, X, 1.0)
    # zero-capacity rows: every free coordinate is forced to 0
    zero = cap <= 0
    if zero.any():
        X[zero] = np.where(free[zero], 0.0, 1.0)
    return X


@dataclass(frozen=True, eq=False)
class ProductDomain:
    factors: tuple
    _offsets: np.ndarray = field(init=False, repr=False)
    _stack: tuple | None = field(init=False, repr=False)

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise DomainConfigError("product of zero factors")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "_offsets", np.cumsum([0] + [f.dim for f in factors]))
        stack = None
        if all(isinstance(f, CappedSimplexDomain) for f in factors) and len({f.dim for f in factors}) == 1:
            caps = np.array([f.free_capacity for f in factors])
            pins = np.stack([f.pinned_lower for f in factors])
            stack = (caps, pins)
        object.__setattr__(self, "_stack", stack)

    @property
    def dim(self) -> int:
        return int(self._offsets[-1])

    def blocks(self, x):
        x = np.asarray(x)
        return [x[a:b] for a, b in zip(self._offsets[:-1], self._offsets[1:])]

    def project(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self._stack is not None:
            caps, pins = self._stack
            return project_capped_simplex_rows(y.reshape(pins.shape), caps, pins).reshape(-1)
        return np.concatenate([f.project(b) for f, b in zip(self.factors, self.blocks(y))])

    def diameter(self) -> float:
        return float(np.sqrt(sum(f.diameter() ** 2 for f in self.factors)))

    def contains(self, x, tol: float = 1e-12) -> bool:
        return all(f.contains(b, tol) for f, b in zip(self.factors, self.blocks(x)))


def initial_point(domain) -> np.ndarray:
    """Projection of the origin (the repository-only state for caches)."""
    return domain.project(np.zeros(domain.dim))

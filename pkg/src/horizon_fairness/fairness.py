"""Alpha-fairness functions, the conjugate of their negation, and utility transforms.

The conjugate-space box ``Theta = [-1/u_min**alpha, -1/u_max**alpha]^I`` is where
the online dual variable lives. Everything here is a pure function of its
arguments.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


class InvalidUtilityError(ValueError):
    """A utility lies outside the domain of f_alpha."""


class DualDomainError(ValueError):
    """A dual vector lies outside the box Theta (or alpha is unsupported)."""


@dataclass(frozen=True)
class FairnessParams:
    alpha: float
    u_star_min: float = 0.1
    u_star_max: float = 1.0
    n_agents: int = 2

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if not (0 < self.u_star_min <= self.u_star_max):
            raise ValueError(
                f"need 0 < u_star_min <= u_star_max, got ({self.u_star_min}, {self.u_star_max})"
            )
        if self.n_agents < 1:
            raise ValueError("n_agents must be positive")

    @property
    def theta_bounds(self) -> tuple[float, float]:
        """Per-coordinate (lower, upper) of the dual box."""
        a = self.alpha
        return -1.0 / self.u_star_min**a, -1.0 / self.u_star_max**a

    @property
    def theta_lower(self) -> np.ndarray:
        return np.full(self.n_agents, self.theta_bounds[0])

    @property
    def theta_upper(self) -> np.ndarray:
        return np.full(self.n_agents, self.theta_bounds[1])

    @property
    def strong_convexity(self) -> float:
        """Exact lower bound on the curvature of the conjugate over Theta.

        The second derivative is ``1 / (alpha * (-theta)**(1 + 1/alpha))``; its
        minimum over the box sits at ``theta = -1/u_star_min**alpha``.
        """
        a = self.alpha
        return self.u_star_min ** (1.0 + a) / a

    def with_agents(self, n: int) -> "FairnessParams":
        return FairnessParams(self.alpha, self.u_star_min, self.u_star_max, n)


def _check_domain(alpha: float, u: np.ndarray, context: str = "") -> None:
    if alpha >= 1:
        bad = np.flatnonzero(~(u > 0))
    else:
        bad = np.flatnonzero(~(u >= 0))
    if bad.size:
        i = int(bad[0])
        where = f" ({context})" if context else ""
        raise InvalidUtilityError(
            f"utility {u.flat[i]!r} of agent {i} outside domain of f_alpha for alpha={alpha}{where}"
        )


def alpha_fair_scalar(alpha: float, u, context: str = ""):
    """f_alpha(u), elementwise. Returns a float for scalar input."""
    arr = np.asarray(u, dtype=float)
    _check_domain(alpha, arr.reshape(-1), context)
    if alpha == 1:
        out = np.log(arr)
    else:
        out = (arr ** (1.0 - alpha) - 1.0) / (1.0 - alpha)
    return float(out) if out.ndim == 0 else out


def alpha_fair_value(params: FairnessParams | float, u, context: str = "") -> float:
    """F_alpha(u) = sum_i f_alpha(u_i)."""
    alpha = params.alpha if isinstance(params, FairnessParams) else float(params)
    return float(np.sum(alpha_fair_scalar(alpha, np.atleast_1d(u), context)))


def alpha_fair_derivative(alpha: float, u) -> np.ndarray:
    """f_alpha'(u) = u**(-alpha)."""
    arr = np.asarray(u, dtype=float)
    if alpha == 0:
        return np.ones_like(arr)
    return arr ** (-alpha)


def floored_value(alpha: float, u, eps: float = 1e-9) -> tuple[float, int]:
    """F_alpha after flooring utilities at ``eps`` where the domain requires it.

    Returns the value and the number of floored components.
    """
    arr = np.atleast_1d(np.asarray(u, dtype=float))
    if alpha == 0:
        return float(arr.sum()), 0
    mask = arr < eps if alpha >= 1 else arr < 0
    floor = eps if alpha >= 1 else 0.0
    if mask.any():
        arr = np.where(mask, floor, arr)
    return alpha_fair_value(alpha, arr), int(mask.sum())


def _check_theta(params: FairnessParams, theta: np.ndarray, tol: float = 1e-12) -> None:
    if params.alpha == 0:
        raise DualDomainError("conjugate is degenerate for alpha = 0")
    lo, hi = params.theta_bounds
    scale = max(1.0, abs(lo))
    if np.any(theta < lo - tol * scale) or np.any(theta > hi + tol * scale):
        raise DualDomainError(f"theta {theta} outside [{lo}, {hi}]^I")


def conjugate_value(params: FairnessParams, theta) -> float:
    """(-F_alpha)^*(theta) for theta in Theta."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    _check_theta(params, theta)
    a = params.alpha
    if a == 1:
        return float(np.sum(-np.log(-theta) - 1.0))
    return float(np.sum((a * (-theta) ** (1.0 - 1.0 / a) - 1.0) / (1.0 - a)))


def conjugate_gradient(params: FairnessParams, theta) -> np.ndarray:
    """Gradient of the conjugate: ``(-theta_i)**(-1/alpha)``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    _check_theta(params, theta)
    return (-theta) ** (-1.0 / params.alpha)


@dataclass(frozen=True)
class Recovery:
    value: float
    theta: np.ndarray
    clamped: bool


def fenchel_recover(params: FairnessParams, u) -> Recovery:
    """Recover F_alpha(u) as ``min_{theta in Theta} conj(theta) - theta . u``.

    The minimiser is ``-1/u**alpha`` coordinatewise; for utilities outside the
    optimum box it is clamped to Theta and the box-constrained minimum returned.
    """
    if params.alpha == 0:
        raise DualDomainError("recovery needs alpha > 0")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    lo, hi = params.theta_bounds
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(u > 0, -1.0 / np.where(u > 0, u, 1.0) ** params.alpha, lo)
    theta = np.clip(raw, lo, hi)
    clamped = bool(np.any(theta != raw))
    if clamped:
        logger.debug("fenchel_recover: utilities %s outside optimum box, theta clamped", u)
    value = conjugate_value(params, theta) - float(theta @ u)
    return Recovery(value, theta, clamped)


def weighted_transform(alpha: float, weights, u) -> np.ndarray:
    """Redefine utilities so that F_alpha(u') equals the (w, alpha)-fairness of u."""
    w = np.asarray(weights, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(w < 0) or not np.isclose(w.sum(), 1.0):
        raise ValueError(f"weights must lie on the probability simplex, got {w}")
    if alpha == 1:
        _check_domain(1.0, u, "weighted transform")
        return u**w
    return w ** (1.0 / (1.0 - alpha)) * u


def weighted_transform_derivative(alpha: float, weights, u) -> np.ndarray:
    """d u'_i / d u_i for :func:`weighted_transform`."""
    w = np.asarray(weights, dtype=float)
    u = np.asarray(u, dtype=float)
    if alpha == 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(w == 0, 0.0, w * u ** (w - 1.0))
    return np.broadcast_to(w ** (1.0 / (1.0 - alpha)), u.shape).copy()


def nbs_transform(u, disagreement) -> np.ndarray:
    """Shift utilities by the disagreement point (Nash bargaining)."""
    return np.asarray(u, dtype=float) - np.asarray(disagreement, dtype=float)

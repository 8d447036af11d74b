"""Online horizon-fair (OHF) policy and its slot-fair (OSF) counterpart.

OHF runs two coupled learners on the saddle function
``psi_t(theta, x) = conj(theta) - theta . u_t(x)``: projected gradient ascent
over allocations with a self-confident step ``diam / sqrt(sum ||g||^2)``, and
projected gradient descent over the dual box with step ``c / t``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domains import initial_point
from .fairness import FairnessParams, alpha_fair_derivative, conjugate_value

OSF_EPS = 1e-9


@dataclass
class UtilityFeedback:
    """Utilities ``u_t(x_t)`` and one supergradient row per agent."""

    values: np.ndarray
    supergradients: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        self.supergradients = np.atleast_2d(np.asarray(self.supergradients, dtype=float))
        if self.supergradients.shape[0] != self.values.size:
            raise ValueError(
                f"{self.values.size} utilities but {self.supergradients.shape[0]} supergradient rows"
            )


class SelfConfidentAscent:
    """Projected gradient ascent with ``eta_t = diam / sqrt(sum_{s<=t} ||g_s||^2)``.

    A zero accumulated gradient leaves the iterate in place (the rate is
    undefined there).
    """

    def __init__(self, domain, x1=None):
        self.domain = domain
        self.diam = domain.diameter()
        if x1 is None:
            x1 = initial_point(domain)
        x1 = np.asarray(x1, dtype=float).reshape(-1)
        if x1.size != domain.dim:
            raise ValueError(f"x1 has dimension {x1.size}, domain has {domain.dim}")
        if not domain.contains(x1, tol=1e-9):
            raise ValueError("x1 is not feasible")
        self.x = x1.copy()
        self.grad_norm_sq_accum = 0.0
        self.eta = np.inf

    def step(self, g: np.ndarray) -> float:
        self.grad_norm_sq_accum += float(g @ g)
        if self.grad_norm_sq_accum <= 0.0 or self.diam == 0.0:
            return self.eta
        self.eta = self.diam / np.sqrt(self.grad_norm_sq_accum)
        self.x = self.domain.project(self.x + self.eta * g)
        return self.eta


@dataclass
class StepRecord:
    eta_x: float
    eta_theta: float
    clamped: int = 0


class OHFPolicy:
    """Primal-dual online policy targeting horizon fairness.

    Args:
        params: fairness parameters; ``params.n_agents`` fixes the dual size.
        domain: allocation set exposing ``project``, ``diameter``, ``contains``.
        x1: initial allocation, defaults to the projection of the origin.
        theta1: initial dual point, defaults to the midpoint of the dual box.
        dual_rate: constant ``c`` in ``eta_theta = c / t``. Defaults to
            ``alpha / u_star_min**(1 + 1/alpha)``.
    """

    name = "ohf"

    def __init__(self, params: FairnessParams, domain, x1=None, theta1=None, dual_rate=None):
        self.params = params
        self.domain = domain
        self.primal = SelfConfidentAscent(domain, x1)
        lo, hi = params.theta_bounds
        self.theta_lower, self.theta_upper = lo, hi
        self.dual_frozen = params.alpha == 0
        if self.dual_frozen:
            theta = np.full(params.n_agents, -1.0)
        elif theta1 is None:
            theta = np.full(params.n_agents, 0.5 * (lo + hi))
        else:
            theta = np.broadcast_to(np.asarray(theta1, dtype=float), (params.n_agents,)).copy()
            if np.any(theta < lo) or np.any(theta > hi):
                raise ValueError(f"theta1 {theta} outside [{lo}, {hi}]")
        self.theta = theta
        if dual_rate is None and not self.dual_frozen:
            a = params.alpha
            dual_rate = a / params.u_star_min ** (1.0 + 1.0 / a)
        self.dual_rate = dual_rate
        self.t = 1
        self.last = StepRecord(np.inf, np.inf)
        self.last_reward = np.nan

    @property
    def x(self) -> np.ndarray:
        return self.primal.x

    @property
    def grad_norm_sq_accum(self) -> float:
        return self.primal.grad_norm_sq_accum

    @property
    def diam(self) -> float:
        return self.primal.diam

    def next(self) -> np.ndarray:
        return self.primal.x.copy()

    def _check(self, fb: UtilityFeedback) -> None:
        if fb.values.size != self.params.n_agents:
            raise ValueError(f"expected {self.params.n_agents} utilities, got {fb.values.size}")
        if fb.supergradients.shape[1] != self.domain.dim:
            raise ValueError(
                f"supergradient dimension {fb.supergradients.shape[1]} != domain dimension {self.domain.dim}"
            )

    def update(self, fb: UtilityFeedback) -> StepRecord:
        self._check(fb)
        theta = self.theta
        if not self.dual_frozen:
            self.last_reward = conjugate_value(self.params, theta) - float(theta @ fb.values)
        g_x = (-theta) @ fb.supergradients
        eta_x = self.primal.step(g_x)
        eta_theta = np.nan
        if not self.dual_frozen:
            g_theta = (-theta) ** (-1.0 / self.params.alpha) - fb.values
            eta_theta = self.dual_rate / self.t
            self.theta = np.clip(theta - eta_theta * g_theta, self.theta_lower, self.theta_upper)
        self.t += 1
        self.last = StepRecord(eta_x, eta_theta)
        return self.last


class OSFPolicy(OHFPolicy):
    """Slot-fair counterpart: dual frozen at -1, utilities passed through f_alpha.

    The ascent direction is ``sum_i f_alpha'(u_i) * grad u_i``; utilities at or
    below ``eps`` are clamped to ``eps`` (when ``alpha > 0``) and counted.
    """

    name = "osf"

    def __init__(self, params: FairnessParams, domain, x1=None, eps: float = OSF_EPS):
        super().__init__(FairnessParams(0.0, 1.0, 1.0, params.n_agents), domain, x1=x1)
        self.fair_params = params
        self.eps = eps
        self.clamp_count = 0

    def update(self, fb: UtilityFeedback) -> StepRecord:
        self._check(fb)
        alpha = self.fair_params.alpha
        u = fb.values
        n_clamped = 0
        if alpha > 0:
            low = u <= self.eps
            n_clamped = int(low.sum())
            if n_clamped:
                u = np.where(low, self.eps, u)
        weights = alpha_fair_derivative(alpha, u)
        eta_x = self.primal.step(weights @ fb.supergradients)
        self.clamp_count += n_clamped
        self.t += 1
        self.last = StepRecord(eta_x, np.nan, n_clamped)
        return self.last

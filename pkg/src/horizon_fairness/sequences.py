"""Replayable utility sequences.

A sequence fixes ``u_1, ..., u_T`` so that the online run and the offline
benchmarks see exactly the same utilities. Every sequence answers three
questions: the feedback of slot ``t`` at ``x``, the full ``(T, I)`` matrix of
slot utilities at ``x``, and ``sum_t sum_i W[t, i] * grad u_{t,i}(x)`` for a
weight matrix ``W`` (which is all the offline solvers need).
"""
from __future__ import annotations

import numpy as np

from .fairness import weighted_transform, weighted_transform_derivative
from .policy import UtilityFeedback


class UtilitySequence:
    n_agents: int
    dim: int

    def __len__(self) -> int:
        raise NotImplementedError

    def feedback(self, t: int, x) -> UtilityFeedback:
        raise NotImplementedError

    def slot_values(self, x) -> np.ndarray:
        raise NotImplementedError

    def weighted_gradient(self, x, W) -> np.ndarray:
        raise NotImplementedError

    def prefix(self, T: int) -> "UtilitySequence":
        raise NotImplementedError

    def mean_sequence(self) -> "UtilitySequence | None":
        """A one-slot sequence whose utility is the time average, if cheap to build."""
        return None

    def mean_values(self, x) -> np.ndarray:
        return self.slot_values(x).mean(axis=0)


class QuadraticSequence(UtilitySequence):
    """Scalar allocations with ``u_{t,i}(x) = c0 + c1 x + c2 x^2``.

    ``coef`` has shape ``(T, I, 3)``. The synthetic adversaries are all of this
    form, which keeps replay and averaging exact and vectorised.
    """

    dim = 1

    def __init__(self, coef):
        coef = np.asarray(coef, dtype=float)
        if coef.ndim != 3 or coef.shape[2] != 3:
            raise ValueError("coef must have shape (T, I, 3)")
        if np.any(coef[:, :, 2] > 1e-15):
            raise ValueError("utilities must be concave (nonpositive quadratic term)")
        self.coef = coef
        self.n_agents = coef.shape[1]

    def __len__(self):
        return self.coef.shape[0]

    @staticmethod
    def _scalar(x) -> float:
        return float(np.asarray(x, dtype=float).reshape(-1)[0])

    def feedback(self, t, x):
        x = self._scalar(x)
        c = self.coef[t]
        values = c[:, 0] + c[:, 1] * x + c[:, 2] * x * x
        grads = (c[:, 1] + 2.0 * c[:, 2] * x)[:, None]
        return UtilityFeedback(values, grads)

    def slot_values(self, x):
        x = self._scalar(x)
        return self.coef @ np.array([1.0, x, x * x])

    def weighted_gradient(self, x, W):
        x = self._scalar(x)
        d = self.coef[:, :, 1] + 2.0 * self.coef[:, :, 2] * x
        return np.array([float(np.sum(np.asarray(W) * d))])

    def prefix(self, T):
        return QuadraticSequence(self.coef[:T])

    def mean_sequence(self):
        return QuadraticSequence(self.coef.mean(axis=0, keepdims=True))


class TransformedSequence(UtilitySequence):
    """Per-agent utility redefinition applied slot by slot.

    ``kind`` is ``"nbs"`` (subtract disagreement points) or ``"weighted"``
    (the (w, alpha)-fairness rescaling). Both are affine except the weighted
    transform at ``alpha = 1``, which raises utilities to the power ``w_i``.
    """

    def __init__(self, base: UtilitySequence, kind: str, vector, alpha: float = 1.0):
        if kind not in ("nbs", "weighted"):
            raise ValueError(f"unknown transform {kind!r}")
        self.base = base
        self.kind = kind
        self.vector = np.asarray(vector, dtype=float)
        self.alpha = alpha
        self.n_agents = base.n_agents
        self.dim = base.dim
        if self.vector.size != self.n_agents:
            raise ValueError("transform vector must have one entry per agent")

    @property
    def affine(self) -> bool:
        return self.kind == "nbs" or self.alpha != 1

    def __len__(self):
        return len(self.base)

    def _apply(self, U):
        if self.kind == "nbs":
            return U - self.vector
        if self.alpha == 1:
            # power transform needs positive utilities
            return np.maximum(U, 0.0) ** self.vector
        return weighted_transform(self.alpha, self.vector, U)

    def _deriv(self, U):
        if self.kind == "nbs":
            return np.ones_like(U)
        if self.alpha == 1:
            return weighted_transform_derivative(1.0, self.vector, np.maximum(U, 1e-12))
        return weighted_transform_derivative(self.alpha, self.vector, U)

    def feedback(self, t, x):
        fb = self.base.feedback(t, x)
        return UtilityFeedback(
            self._apply(fb.values), self._deriv(fb.values)[:, None] * fb.supergradients
        )

    def slot_values(self, x):
        return self._apply(self.base.slot_values(x))

    def weighted_gradient(self, x, W):
        U = self.base.slot_values(x)
        return self.base.weighted_gradient(x, np.asarray(W) * self._deriv(U))

    def prefix(self, T):
        return TransformedSequence(self.base.prefix(T), self.kind, self.vector, self.alpha)

    def mean_sequence(self):
        if not self.affine:
            return None
        m = self.base.mean_sequence()
        return None if m is None else TransformedSequence(m, self.kind, self.vector, self.alpha)

    def affine_map(self):
        """``(scale, shift)`` with ``u' = scale * u + shift``; only for affine kinds."""
        if self.kind == "nbs":
            return np.ones(self.n_agents), -self.vector
        return self.vector ** (1.0 / (1.0 - self.alpha)), np.zeros(self.n_agents)

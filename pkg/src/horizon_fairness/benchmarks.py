"""Offline benchmarks and run metrics.

The horizon-fair benchmark maximises ``F_alpha(mean_t u_t(x))`` and the
slot-fair one maximises ``mean_t F_alpha(u_t(x))``; the utilitarian benchmark
is the ``alpha = 0`` case. Generic sequences use projected supergradient
ascent followed by a backtracking polish; cache sequences are piecewise linear
and are solved exactly as conic programs.
"""
from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .cache import CacheSequence
from .fairness import FairnessParams, alpha_fair_derivative, floored_value

EPS_FLOOR = 1e-9


@dataclass
class BenchmarkResult:
    x_star: np.ndarray
    objective: float
    avg_utilities: np.ndarray
    iterations: int = 0
    grad_norm: float = float("nan")
    floored: bool = False
    method: str = "pgd"


@dataclass
class RunMetrics:
    """Per-slot utilities of an online run plus counters."""

    utilities: np.ndarray  # (T, I)
    clamp_count: int = 0
    violations: list = field(default_factory=list)

    @property
    def cum_utilities(self) -> np.ndarray:
        return np.cumsum(self.utilities, axis=0)

    @property
    def avg_utilities(self) -> np.ndarray:
        return self.utilities.mean(axis=0)


# ---------------------------------------------------------------------------
# generic concave maximisation


def _objective_and_grad(alpha, seq, x, slotwise):
    """Value and supergradient of the HF (or SF) objective at ``x``."""
    if slotwise:
        U = seq.slot_values(x)
        T = U.shape[0]
        val, n_floor = floored_value(alpha, U.reshape(-1), EPS_FLOOR)
        Uc = np.maximum(U, EPS_FLOOR) if alpha > 0 else U
        g = seq.weighted_gradient(x, alpha_fair_derivative(alpha, Uc) / T)
        return val / T, g, n_floor, U.mean(axis=0)
    ubar = seq.mean_values(x)
    val, n_floor = floored_value(alpha, ubar, EPS_FLOOR)
    uc = np.maximum(ubar, EPS_FLOOR) if alpha > 0 else ubar
    T = len(seq)
    W = np.broadcast_to(alpha_fair_derivative(alpha, uc) / T, (T, ubar.size))
    return val, seq.weighted_gradient(x, W), n_floor, ubar


def maximize(seq, domain, alpha: float, slotwise=False, max_iter=10_000, tol=1e-6,
             polish_iter=2_000, x0=None) -> BenchmarkResult:
    """Maximise the HF (``slotwise=False``) or SF objective over ``domain``.

    Phase one is projected supergradient ascent with normalised steps
    ``diam / sqrt(k)``, keeping the best iterate and the running average.
    Phase two is projected gradient ascent with Armijo backtracking from the
    better of the two, stopping when the projected-gradient step is below
    ``tol``.
    """
    if not slotwise:
        ms = seq.mean_sequence()
        if ms is not None:
            seq = ms
    diam = domain.diameter()
    x = domain.project(np.zeros(domain.dim) if x0 is None else np.asarray(x0, dtype=float))

    def evaluate(z):
        return _objective_and_grad(alpha, seq, z, slotwise)

    best_val, g, _, _ = evaluate(x)
    best_x = x.copy()
    avg = x.copy()
    it = 0
    for it in range(1, max_iter + 1):
        gn = float(np.linalg.norm(g))
        if gn <= tol or diam == 0:
            break
        x_new = domain.project(x + (diam / math.sqrt(it)) * g / gn)
        if np.array_equal(x_new, x):
            break  # fixed point of the projected step: x is optimal
        x = x_new
        avg += (x - avg) / (it + 1)
        val, g, _, _ = evaluate(x)
        if val > best_val:
            best_val, best_x = val, x.copy()
        if it >= max_iter - polish_iter:
            break
    val_avg = evaluate(avg)[0]
    if val_avg > best_val:
        best_val, best_x = val_avg, avg.copy()

    # projected gradient polish with backtracking
    x = best_x
    val, g, _, _ = evaluate(x)
    step = diam if diam > 0 else 1.0
    grad_map = float("nan")
    for k in range(polish_iter):
        gn = float(np.linalg.norm(g))
        if gn == 0 or diam == 0:
            grad_map = 0.0
            break
        s = step
        while True:
            y = domain.project(x + s * g)
            vy = evaluate(y)[0]
            if vy >= val + 1e-4 * float(g @ (y - x)) or s < 1e-14:
                break
            s *= 0.5
        grad_map = float(np.linalg.norm(y - x))
        if vy < val:
            break
        x, val = y, vy
        val, g, _, _ = evaluate(x)
        step = min(2 * s, diam)
        if grad_map <= tol * 1e-3:
            break
        it += 1
    val, g, n_floor, ubar = evaluate(x)
    return BenchmarkResult(x, val, ubar, it, float(np.linalg.norm(g)), n_floor > 0, "pgd")


# ---------------------------------------------------------------------------
# exact cache benchmarks


def _cache_problem(seq: CacheSequence, weights_fn):
    """Build ``(problem, x, ubar)`` for a cache sequence with objective ``weights_fn(ubar)``."""
    import cvxpy as cp

    net = seq.net
    rbar = seq.counts.mean(axis=0) * seq.scale
    x = cp.Variable(net.dim)
    z = cp.Variable(net.idx.shape)
    # cumulative sums along each retrieval order
    P, L = net.idx.shape
    cons = [x >= 0, x <= 1, z >= 0, z <= 1]
    pinned = net.pinned.reshape(-1)
    if pinned.any():
        cons.append(x[np.flatnonzero(pinned)] == 1)
    for k in range(len(net.nodes)):
        free = np.flatnonzero(~net.pinned[k]) + k * net.F
        if free.size:
            cons.append(cp.sum(x[free]) <= net.capacity[k])
    # cum = C @ x stacks the running sums along every retrieval order
    rows = np.repeat(np.arange(P * L), np.tile(np.arange(1, L + 1), P))
    cols = np.concatenate([net.idx[p, : j + 1] for p in range(P) for j in range(L)])
    C = sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(P * L, net.dim))
    cons.append(cp.reshape(z, (P * L,), order="C") <= C @ x)
    gain = cp.sum(cp.multiply(net.delta, z), axis=1)
    ubar = net.agent_matrix @ cp.multiply(rbar, gain)
    return cp.Problem(cp.Maximize(weights_fn(ubar)), cons), x, ubar


def _alpha_expr(alpha, ubar):
    import cvxpy as cp

    if alpha == 0:
        return cp.sum(ubar)
    if alpha == 1:
        # same maximiser as sum(log), but second-order cones are better conditioned
        return cp.geo_mean(ubar)
    return cp.sum(cp.power(ubar, 1.0 - alpha)) / (1.0 - alpha)


class BenchmarkSolverError(RuntimeError):
    pass


def _solve(prob):
    import cvxpy as cp

    for solver, opts in ((cp.CLARABEL, {}), (cp.SCS, {"eps": 1e-9, "max_iters": 200_000})):
        try:
            prob.solve(solver=solver, **opts)
        except cp.SolverError:
            continue
        if prob.status == "optimal":
            return
    raise BenchmarkSolverError(f"conic benchmark failed (status {prob.status})")


def solve_cache_hf(seq: CacheSequence, alpha: float) -> BenchmarkResult:
    prob, x, _ = _cache_problem(seq, lambda u: _alpha_expr(alpha, u))
    try:
        _solve(prob)
    except BenchmarkSolverError:
        res = maximize(seq, seq.net.domain(), alpha)
        res.method = "pgd-fallback"
        return res
    xs = seq.net.domain().project(np.asarray(x.value, dtype=float))
    ubar = seq.mean_values(xs)
    val, n_floor = floored_value(alpha, ubar, EPS_FLOOR)
    return BenchmarkResult(xs, val, ubar, 0, float("nan"), n_floor > 0, "conic")


# ---------------------------------------------------------------------------
# public solvers


def solve_hf(seq, domain, params: FairnessParams | float, method: str = "auto", **kw) -> BenchmarkResult:
    """Best static allocation for the fairness of time-averaged utilities."""
    alpha = params.alpha if isinstance(params, FairnessParams) else float(params)
    if method == "auto":
        method = "conic" if isinstance(seq, CacheSequence) else "pgd"
    if method == "conic":
        return solve_cache_hf(seq, alpha)
    return maximize(seq, domain, alpha, slotwise=False, **kw)


def solve_sf(seq, domain, params: FairnessParams | float, **kw) -> BenchmarkResult:
    """Best static allocation for the time-averaged per-slot fairness."""
    alpha = params.alpha if isinstance(params, FairnessParams) else float(params)
    return maximize(seq, domain, alpha, slotwise=True, **kw)


def solve_utilitarian(seq, domain, method: str = "auto", **kw) -> BenchmarkResult:
    return solve_hf(seq, domain, 0.0, method=method, **kw)


def pareto_front(seq, domain, weights=None, method: str = "auto") -> np.ndarray:
    """Nondominated ``(w1, u1, u2)`` rows from scalarisations ``w . ubar(x)``.

    Only defined for two agents.
    """
    if seq.n_agents != 2:
        raise ValueError("Pareto fronts are traced for two agents only")
    if weights is None:
        weights = np.linspace(0.001, 0.999, 41)
    if method == "auto":
        method = "conic" if isinstance(seq, CacheSequence) else "pgd"
    rows = []
    if method == "conic":
        import cvxpy as cp

        wpar = cp.Parameter(2, nonneg=True)
        prob, x, _ = _cache_problem(seq, lambda u: wpar @ u)
        for w1 in weights:
            wpar.value = np.array([w1, 1.0 - w1])
            _solve(prob)
            u = seq.mean_values(np.asarray(x.value, dtype=float))
            rows.append((w1, u[0], u[1]))
    else:
        for w1 in weights:
            res = maximize(_Scaled(seq, [w1, 1.0 - w1]), domain, 0.0)
            u = seq.mean_values(res.x_star)
            rows.append((w1, u[0], u[1]))
    pts = np.array(rows)
    return pts[nondominated(pts[:, 1:])]


class _Scaled:
    """Multiply agent utilities by fixed weights (for linear scalarisation)."""

    def __init__(self, base, w):
        self.base, self.w = base, np.asarray(w, dtype=float)
        self.n_agents, self.dim = base.n_agents, base.dim

    def __len__(self):
        return len(self.base)

    def mean_sequence(self):
        m = self.base.mean_sequence()
        return None if m is None else _Scaled(m, self.w)

    def slot_values(self, x):
        return self.base.slot_values(x) * self.w

    def mean_values(self, x):
        return self.slot_values(x).mean(axis=0)

    def weighted_gradient(self, x, W):
        return self.base.weighted_gradient(x, np.asarray(W) * self.w)


def nondominated(points, tol=1e-9) -> np.ndarray:
    """Boolean mask of points not weakly dominated by a distinct other point."""
    P = np.asarray(points, dtype=float)
    keep = np.ones(len(P), dtype=bool)
    for i in range(len(P)):
        ge = np.all(P >= P[i] - tol, axis=1)
        gt = np.any(P > P[i] + tol, axis=1)
        dom = ge & gt
        dom[i] = False
        if dom.any():
            keep[i] = False
    # drop exact duplicates
    _, first = np.unique(np.round(P / tol) * tol, axis=0, return_index=True)
    mask = np.zeros(len(P), dtype=bool)
    mask[first] = True
    return keep & mask


def dominance_margin(point, front) -> float:
    """Largest ``m`` such that the front reaches ``point + m`` in both coordinates.

    Consecutive front points are joined by segments (the achievable utility
    region of concave utilities is convex). A positive margin means ``point``
    is strictly dominated.
    """
    q = np.asarray(point, dtype=float)
    F = np.asarray(front, dtype=float)
    F = F[np.argsort(F[:, 0])]
    best = float(np.max(np.min(F - q, axis=1)))
    for a, b in zip(F[:-1], F[1:]):
        # maximise min(a + s (b - a) - q) over s in [0, 1]: piecewise linear in s
        d0, d1 = a - q, b - a
        cands = [0.0, 1.0]
        if d1[0] != d1[1]:
            s = (d0[1] - d0[0]) / (d1[0] - d1[1])
            if 0 < s < 1:
                cands.append(s)
        best = max(best, max(float(np.min(d0 + s * d1)) for s in cands))
    return best


# ---------------------------------------------------------------------------
# metrics


def price_of_fairness(avg_utilities, utilitarian: BenchmarkResult | float) -> float:
    """Relative loss of total utility with respect to the utilitarian optimum."""
    best = utilitarian.objective if isinstance(utilitarian, BenchmarkResult) else float(utilitarian)
    if best <= 0:
        return float("nan")
    return float((best - np.sum(avg_utilities)) / best)


def fairness_regret(avg_utilities, benchmark: BenchmarkResult, params: FairnessParams | float):
    """Signed ``F(ubar(x*)) - F(policy average)``; returns ``(regret, floored)``."""
    alpha = params.alpha if isinstance(params, FairnessParams) else float(params)
    val, n = floored_value(alpha, avg_utilities, EPS_FLOOR)
    return benchmark.objective - val, n > 0


def default_block_sizes(T: int) -> list[int]:
    return sorted({1, math.ceil(T ** 0.25), math.ceil(T ** (1 / 3)), math.ceil(math.sqrt(T))})


def partition_terms(delta: np.ndarray, M: int) -> tuple[float, float]:
    """Deviation and block-size penalty of the uniform partition with blocks of ``M``."""
    T = delta.shape[0]
    starts = np.arange(0, T, M)
    sums = np.add.reduceat(delta, starts, axis=0)
    deviation = float(np.abs(sums).sum())
    sizes = np.diff(np.append(starts, T))
    before = starts  # slots preceding each block
    penalty = float(np.sum(sizes.astype(float) ** 2 / (before + 1)))
    return deviation, penalty


def _as_scaled_ints(column) -> tuple[list[int], int]:
    """Floats are dyadic rationals: return integer numerators over a shared 2**k."""
    ratios = [v.as_integer_ratio() for v in column]
    k = max(d.bit_length() - 1 for _, d in ratios)
    return [n << (k - (d.bit_length() - 1)) for n, d in ratios], k


def exact_block_deviation(U: np.ndarray, M: int) -> float:
    """Deviation term of ``partition_terms`` for ``delta = mean(U) - U``, in exact arithmetic.

    Blocks whose utilities cancel against the horizon mean report exactly 0
    instead of accumulated rounding noise.
    """
    T = U.shape[0]
    starts = range(0, T, M)
    dev = Fraction(0)
    for col in np.asarray(U, dtype=float).T:
        ints, k = _as_scaled_ints(col.tolist())
        blocks = [sum(ints[s:s + M]) for s in starts]
        total = sum(blocks)
        # |m * total / T - block| with the common 2**k scale dropped
        num = sum(abs(min(M, T - s) * total - T * b) for s, b in zip(starts, blocks))
        dev += Fraction(num, T << k)
    return float(dev)


@dataclass
class Severity:
    V: float
    W: float
    per_block: dict


def severity_diagnostics(seq, x_star, block_sizes=None) -> Severity:
    """Budgeted severity (exact) and an upper estimate of the partitioned severity."""
    U = seq.slot_values(x_star)
    delta = U.mean(axis=0) - U
    T = U.shape[0]
    sizes = sorted(set(default_block_sizes(T)) | set(block_sizes or []))
    per = {}
    for M in sizes:
        _, pen = partition_terms(delta, int(M))
        dev = exact_block_deviation(U, int(M))
        per[int(M)] = {"deviation": dev, "penalty": pen, "total": dev + pen}
    W = min(v["total"] for v in per.values())
    return Severity(float(np.abs(delta).sum()), W, per)

"""Entropy-regularized unbalanced optimal transport by Sinkhorn-type scaling.

The solver minimizes, over nonnegative couplings ``gamma`` of shape (m, n),

    <gamma, C> + lambda1 * KL(gamma 1 | w) + lambda2 * KL(gamma^T 1 | v)
               + epsilon * sum gamma (log gamma - 1)

where KL is the generalized (unnormalized) Kullback-Leibler divergence. The
optimum factors as ``diag(alpha) K diag(beta)`` with the Gibbs kernel
``K = exp(-C / epsilon)`` and the scalings are found by alternating the
damped row/column updates

    alpha <- (w / K beta) ** (lambda1 / (lambda1 + epsilon))
    beta  <- (v / K^T alpha) ** (lambda2 / (lambda2 + epsilon)).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import kl_div, xlogy

from .errors import ConfigError, DomainError, InfeasibleError, ShapeError, SizeError, SolverError
from .geometry import CostMatrix


@dataclass(frozen=True)
class Measure:
    """Nonnegative weights over sequence positions."""

    weights: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size == 0 or not np.all(np.isfinite(w)) or np.any(w < 0):
            raise DomainError("measure weights must be finite and nonnegative")
        if not np.any(w > 0):
            raise DomainError("measure needs at least one positive weight")
        if self.normalized and abs(w.sum() - 1.0) > 1e-9:
            raise DomainError(f"normalized measure sums to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, size: int) -> "Measure":
        return cls(np.full(size, 1.0 / size), normalized=True)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self):
        return self.weights.size


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 0.05
    lambda1: float = 0.5
    lambda2: float = 1.0
    max_iters: int = 1000
    tolerance: float = 1e-6
    log_domain: bool = True

    def __post_init__(self):
        if not self.epsilon > 0 or not math.isfinite(self.epsilon):
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not (self.lambda1 >= 0 and self.lambda2 >= 0):
            raise ConfigError("lambda1 and lambda2 must be nonnegative")
        if int(self.max_iters) < 1:
            raise ConfigError("max_iters must be at least 1")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")

    @property
    def row_exponent(self) -> float:
        return self.lambda1 / (self.lambda1 + self.epsilon)

    @property
    def col_exponent(self) -> float:
        return self.lambda2 / (self.lambda2 + self.epsilon)


@dataclass(frozen=True)
class ObjectiveBreakdown:
    transport_cost: float
    kl_row: float
    kl_col: float
    neg_entropy: float
    total: float
    # -sum gamma log gamma, reported alongside the (log gamma - 1) convention
    entropy: float = 0.0

    def as_dict(self) -> dict:
        return {
            "transport_cost": self.transport_cost,
            "kl_row": self.kl_row,
            "kl_col": self.kl_col,
            "neg_entropy": self.neg_entropy,
            "total": self.total,
            "entropy": self.entropy,
        }


@dataclass
class TransportPlan:
    gamma: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    iterations: int
    residual: float
    objective: ObjectiveBreakdown
    tolerance: float = 1e-6
    log_alpha: np.ndarray = field(default=None, repr=False)
    log_beta: np.ndarray = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return bool(self.residual < self.tolerance)

    @property
    def mass(self) -> float:
        return float(self.gamma.sum())

    def diagnostics(self) -> dict:
        d = {"iterations": int(self.iterations), "residual": float(self.residual), "converged": self.converged}
        d.update(self.objective.as_dict())
        return d


def _cost_values(C) -> np.ndarray:
    if isinstance(C, CostMatrix):
        return C.values
    c = np.asarray(C, dtype=float)
    if c.ndim != 2:
        raise ShapeError(f"cost matrix must be 2-D, got shape {c.shape}")
    return c


def _weights(x, size: int, name: str) -> np.ndarray:
    if x is None:
        return Measure.uniform(size).weights
    if not isinstance(x, Measure):
        x = Measure(x)
    if len(x) != size:
        raise ShapeError(f"{name} has {len(x)} weights but the cost matrix needs {size}")
    return x.weights


def gibbs_kernel(C, epsilon: float) -> np.ndarray:
    """Elementwise ``exp(-C / epsilon)``."""
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    return np.exp(-_cost_values(C) / epsilon)


def generalized_kl(a, b) -> float:
    """sum(a log(a/b) - a + b) with 0 log 0 = 0; ``b`` must be strictly positive."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")
    if np.any(a < 0) or np.any(b < 0):
        raise DomainError("generalized KL needs nonnegative arguments")
    if np.any(b == 0):
        raise DomainError("second argument of generalized KL must be strictly positive")
    return _penalty_kl(a, b)


def _penalty_kl(a: np.ndarray, b: np.ndarray) -> float:
    # kl_div already yields inf where b == 0 < a, and 0 where both vanish
    terms = kl_div(a, b)
    # a subnormal a makes a/b underflow to 0 inside kl_div; split the log there
    bad = np.isneginf(terms)
    if np.any(bad):
        ab, bb = np.broadcast_to(a, terms.shape)[bad], np.broadcast_to(b, terms.shape)[bad]
        terms = np.array(terms, copy=True)
        terms[bad] = xlogy(ab, ab) - xlogy(ab, bb) - ab + bb
    return float(terms.sum())


def marginals(gamma) -> tuple[np.ndarray, np.ndarray]:
    g = np.asarray(gamma, dtype=float)
    return g.sum(axis=1), g.sum(axis=0)


def objective(gamma, C, w, v, cfg: SolverConfig) -> ObjectiveBreakdown:
    """Evaluate every term of the regularized UOT objective at ``gamma``."""
    g = np.asarray(gamma, dtype=float)
    c = _cost_values(C)
    if g.shape != c.shape:
        raise ShapeError(f"plan shape {g.shape} differs from cost shape {c.shape}")
    if np.any(g < 0):
        raise DomainError("transport plan must be nonnegative")
    w = _weights(w, c.shape[0], "w")
    v = _weights(v, c.shape[1], "v")
    row, col = marginals(g)
    transport = float(np.sum(g * c))
    kl_row = _penalty_kl(row, w)
    kl_col = _penalty_kl(col, v)
    plogp = float(xlogy(g, g).sum())
    neg_entropy = plogp - float(g.sum())
    total = transport + cfg.epsilon * neg_entropy
    # 0 * inf would poison the total when a penalty is switched off
    if cfg.lambda1 > 0:
        total += cfg.lambda1 * kl_row
    if cfg.lambda2 > 0:
        total += cfg.lambda2 * kl_col
    return ObjectiveBreakdown(transport, kl_row, kl_col, neg_entropy, total, -plogp)


def _sup_change(new: np.ndarray, old: np.ndarray) -> float:
    if new.size == 0:
        return 0.0
    if math.isfinite(new.sum()):
        top = np.abs(new - old).max()
        if top == top and top != math.inf:
            return float(top)
    # infinities appear only for zero weights; equal infinities count as no change
    with np.errstate(invalid="ignore"):
        d = np.abs(new - old)
    d[new == old] = 0.0
    return float(np.max(d))


def logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    # scipy's version carries ~60us of overhead per call, which dominates here
    mx = a.max(axis=axis, keepdims=True)
    if not np.all(np.isfinite(mx)):
        mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(a - mx).sum(axis=axis, keepdims=True)) + mx
    return out.squeeze(axis)


def _log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def solve_uot(C, w=None, v=None, cfg: SolverConfig | None = None, init=None) -> TransportPlan:
    """Solve the unbalanced problem by alternating damped scaling updates.

    ``w`` and ``v`` default to uniform weights of total mass one. Iteration
    stops once the sup-norm change of both log-scalings drops below
    ``cfg.tolerance`` or after ``cfg.max_iters`` sweeps; the final change is
    stored as ``residual``.

    In linear mode (``cfg.log_domain=False``) a non-finite or vanishing scaling
    raises :class:`SolverError`; the log-domain mode is immune to that.

    ``init`` optionally warm-starts the log-scalings from a previous plan or a
    ``(log_alpha, log_beta)`` pair; the default start is alpha = beta = 1.
    """
    cfg = cfg or SolverConfig()
    c = _cost_values(C)
    m, n = c.shape
    w = _weights(w, m, "w")
    v = _weights(v, n, "v")
    p1, p2 = cfg.row_exponent, cfg.col_exponent
    tol = cfg.tolerance

    f0, g0 = np.zeros(m), np.zeros(n)
    if init is not None:
        f0, g0 = (init.log_alpha, init.log_beta) if isinstance(init, TransportPlan) else init
        f0, g0 = np.array(f0, dtype=float), np.array(g0, dtype=float)
        if f0.shape != (m,) or g0.shape != (n,):
            raise ShapeError("warm-start scalings do not match the cost matrix")

    if cfg.log_domain:
        log_k = -c / cfg.epsilon
        log_w, log_v = _log(w), _log(v)
        f, g = f0, g0
        residual = math.inf
        it = 0
        for it in range(1, int(cfg.max_iters) + 1):
            f_new = p1 * (log_w - logsumexp(log_k + g[None, :], axis=1)) if p1 > 0 else np.zeros(m)
            g_new = p2 * (log_v - logsumexp(log_k + f_new[:, None], axis=0)) if p2 > 0 else np.zeros(n)
            residual = max(_sup_change(f_new, f), _sup_change(g_new, g))
            f, g = f_new, g_new
            if residual < tol:
                break
        gamma = np.exp(f[:, None] + log_k + g[None, :])
        with np.errstate(over="ignore"):
            alpha, beta = np.exp(f), np.exp(g)
    else:
        K = gibbs_kernel(c, cfg.epsilon)
        f, g = f0, g0
        alpha, beta = np.exp(f), np.exp(g)
        residual = math.inf
        it = 0
        with np.errstate(all="ignore"):
            for it in range(1, int(cfg.max_iters) + 1):
                alpha = (w / (K @ beta)) ** p1
                beta = (v / (K.T @ alpha)) ** p2
                if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
                    raise SolverError(
                        f"non-finite scaling at iteration {it} (epsilon={cfg.epsilon}); "
                        "retry with log_domain=True"
                    )
                f_new, g_new = _log(alpha), _log(beta)
                if np.any(np.isneginf(f_new) & (w > 0)) or np.any(np.isneginf(g_new) & (v > 0)):
                    raise SolverError(
                        f"scaling underflowed to zero at iteration {it} (epsilon={cfg.epsilon}); "
                        "retry with log_domain=True"
                    )
                residual = max(_sup_change(f_new, f), _sup_change(g_new, g))
                f, g = f_new, g_new
                if residual < tol:
                    break
            gamma = alpha[:, None] * K * beta[None, :]

    obj = objective(gamma, c, w, v, cfg)
    return TransportPlan(gamma, alpha, beta, it, residual, obj, tol, f, g)


def solve_balanced(C, w=None, v=None, epsilon: float = 0.05, max_iters: int = 1000,
                   tolerance: float = 1e-9) -> TransportPlan:
    """Classical (balanced) Sinkhorn in the log domain.

    The residual is the sup-norm violation of the row marginal after the
    column update; column marginals are exact at that point.
    """
    c = _cost_values(C)
    m, n = c.shape
    w = _weights(w, m, "w")
    v = _weights(v, n, "v")
    if abs(w.sum() - v.sum()) > 1e-9 * max(w.sum(), v.sum()):
        raise InfeasibleError(f"balanced transport needs equal masses, got {w.sum()!r} and {v.sum()!r}")
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    log_k = -c / epsilon
    log_w, log_v = _log(w), _log(v)
    f = np.zeros(m)
    g = np.zeros(n)
    residual = math.inf
    it = 0
    for it in range(1, int(max_iters) + 1):
        f = log_w - logsumexp(log_k + g[None, :], axis=1)
        g = log_v - logsumexp(log_k + f[:, None], axis=0)
        row = np.exp(f + logsumexp(log_k + g[None, :], axis=1))
        residual = float(np.max(np.abs(row - w)))
        if residual < tolerance:
            break
    gamma = np.exp(f[:, None] + log_k + g[None, :])
    # the balanced problem is the infinite-penalty limit; report the plan's
    # marginal KLs with zero weight so the total stays finite
    obj = objective(gamma, c, w, v, SolverConfig(epsilon=epsilon, lambda1=0.0, lambda2=0.0))
    return TransportPlan(gamma, np.exp(f), np.exp(g), it, residual, obj, tolerance, f, g)


def fixed_point_residual(plan: TransportPlan, C, w=None, v=None, cfg: SolverConfig | None = None) -> float:
    """Sup-norm violation of the scaling fixed-point equations at ``plan``."""
    cfg = cfg or SolverConfig()
    c = _cost_values(C)
    m, n = c.shape
    w = _weights(w, m, "w")
    v = _weights(v, n, "v")
    log_k = -c / cfg.epsilon
    f, g = plan.log_alpha, plan.log_beta
    f_star = cfg.row_exponent * (_log(w) - logsumexp(log_k + g[None, :], axis=1)) if cfg.row_exponent > 0 else np.zeros(m)
    g_star = cfg.col_exponent * (_log(v) - logsumexp(log_k + f[:, None], axis=0)) if cfg.col_exponent > 0 else np.zeros(n)
    return max(_sup_change(f, f_star), _sup_change(g, g_star))


def factorization_error(plan: TransportPlan, C, epsilon: float) -> float:
    """Max elementwise relative gap between gamma and diag(alpha) K diag(beta)."""
    K = gibbs_kernel(C, epsilon)
    with np.errstate(over="ignore", invalid="ignore"):
        rebuilt = plan.alpha[:, None] * K * plan.beta[None, :]
    scale = np.maximum(np.abs(rebuilt), np.finfo(float).tiny)
    return float(np.max(np.abs(plan.gamma - rebuilt) / scale))


def solve_grid(C, w, v, pairs, base: SolverConfig | None = None, jobs: int = 1) -> dict:
    """Solve one problem per (lambda1, lambda2) pair; results keyed by the pair.

    Failed cells map to the raised exception instead of a plan.
    """
    base = base or SolverConfig()

    def run(pair):
        try:
            return solve_uot(C, w, v, replace(base, lambda1=float(pair[0]), lambda2=float(pair[1])))
        except SolverError as exc:
            return exc

    pairs = [tuple(p) for p in pairs]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, pairs))
    else:
        results = [run(p) for p in pairs]
    return dict(zip(pairs, results))


@dataclass
class OracleResult:
    gamma: np.ndarray
    total: float
    spread: float
    iterations: int


def oracle_solve_uot(C, w=None, v=None, cfg: SolverConfig | None = None, starts: int = 8,
                     max_iters: int = 50_000, seed: int = 0, grad_tol: float = 1e-10) -> OracleResult:
    """Brute-force reference minimizer for tiny instances (m * n <= 12).

    Runs exponentiated-gradient descent directly on the primal objective from
    ``starts`` random positive couplings. A step that fails to decrease the
    objective is rejected and that start's step size halved. ``spread`` is the
    range of final objectives across starts; the objective is strictly convex
    so a small spread certifies the minimum.
    """
    cfg = cfg or SolverConfig()
    c = _cost_values(C)
    m, n = c.shape
    if m * n > 12:
        raise SizeError(f"oracle is limited to m*n <= 12, got {m}x{n}")
    w = _weights(w, m, "w")
    v = _weights(v, n, "v")
    if (cfg.lambda1 > 0 and np.any(w == 0)) or (cfg.lambda2 > 0 and np.any(v == 0)):
        raise DomainError("oracle needs strictly positive weights on penalized sides")
    eps, l1, l2 = cfg.epsilon, cfg.lambda1, cfg.lambda2

    def value(theta):
        gam = np.exp(theta)
        row = gam.sum(axis=2)
        col = gam.sum(axis=1)
        val = np.sum(gam * (c + eps * (theta - 1.0)), axis=(1, 2))
        if l1 > 0:
            val = val + l1 * np.sum(row * np.log(row / w) - row + w, axis=1)
        if l2 > 0:
            val = val + l2 * np.sum(col * np.log(col / v) - col + v, axis=1)
        return val

    def gradient(theta):
        gam = np.exp(theta)
        grad = c + eps * theta
        if l1 > 0:
            grad = grad + l1 * np.log(gam.sum(axis=2) / w)[:, :, None]
        if l2 > 0:
            grad = grad + l2 * np.log(gam.sum(axis=1) / v)[:, None, :]
        return grad

    rng = np.random.default_rng(seed)
    theta = np.log(rng.uniform(0.05, 1.0, size=(starts, m, n)) / (m * n))
    step = np.full(starts, 1.0 / (eps + l1 + l2))
    cur = value(theta)
    grad = gradient(theta)
    it = 0
    for it in range(1, max_iters + 1):
        active = np.max(np.abs(grad), axis=(1, 2)) > grad_tol
        active &= step > 1e-300
        if not np.any(active):
            break
        trial = theta - step[:, None, None] * grad
        with np.errstate(over="ignore", invalid="ignore"):
            new = value(trial)
        better = active & np.isfinite(new) & (new < cur)
        theta = np.where(better[:, None, None], trial, theta)
        cur = np.where(better, new, cur)
        step = np.where(active & ~better, step * 0.5, step)
        if np.any(better):
            grad = np.where(better[:, None, None], gradient(theta), grad)
    best = int(np.argmin(cur))
    return OracleResult(np.exp(theta[best]), float(cur[best]), float(cur.max() - cur.min()), it)

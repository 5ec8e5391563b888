"""Regularized saddle objective and its deterministic solver.

The objective couples a weighted sum of group empirical risks with a
quadratic proximal term in w and an entropic regularizer in the group
weights:

    F(w, lam) = sum_i lam_i L_i(w) + (mu_w / 2) ||w - anchor||^2
                - mu_lam * sum_j lam_j log lam_j.

F is mu_w-strongly convex in w and mu_lam-strongly concave in lam over the
simplex, and the entropic term gives the max player a softmax closed form.
The anchor is allowed to sit outside the feasible ball: the proximal solver
run by the phased algorithm re-centers on noised anchors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._kernels import sc_sc_affine
from .errors import NonConvergenceError
from .numkit import check_simplex, neg_entropy, softmax_weights
from .problem import DatasetCollection, LossSpec, ParamSpace, group_risks


@dataclass
class RegularizedObjective:
    """Regularized game between w and the group-weight simplex.

    Value: sum_i lam_i L_i(w) + (mu_w/2) ||w - anchor||^2
    - mu_lambda * sum_j lam_j log lam_j, strongly convex in w and strongly
    concave in lam over the simplex.
    """

    collection: DatasetCollection
    loss: LossSpec
    space: ParamSpace
    mu_w: float
    mu_lambda: float
    anchor: np.ndarray

    def __post_init__(self):
        if self.mu_w <= 0 or self.mu_lambda <= 0:
            raise ValueError("regularization strengths must be positive")
        self.anchor = np.asarray(self.anchor, dtype=float)
        if self.anchor.shape != (self.loss.dim,):
            raise ValueError("anchor dimension mismatch")
        self._affine = None
        if self.loss.affine_in_w:
            p = self.collection.p
            A = np.empty((p, self.loss.dim))
            c = np.empty(p)
            for i in range(p):
                X, S = self.collection.stacked(i, self.loss)
                A[i] = np.mean(X, axis=0)
                c[i] = float(np.mean(np.sum(S, axis=1)))
            self._affine = (A, c)

    @property
    def p(self) -> int:
        return self.collection.p

    def group_risks(self, w: np.ndarray) -> np.ndarray:
        if self._affine is not None:
            A, c = self._affine
            return A @ w + c
        return group_risks(self.collection, w, self.loss)

    def weighted_grad(self, w: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """sum_i lam_i grad L_i(w), without the proximal term."""
        if self._affine is not None:
            return self._affine[0].T @ lam
        g = np.zeros(self.loss.dim)
        for i in range(self.p):
            X, S = self.collection.stacked(i, self.loss)
            g += lam[i] * self.loss.gradient_mean(w, X, S)
        return g


def objective_value(obj: RegularizedObjective, w: np.ndarray, lam: np.ndarray) -> float:
    w = np.asarray(w, dtype=float)
    if not obj.space.contains(w):
        raise ValueError("w lies outside the feasible set")
    lam = check_simplex(lam)
    risks = obj.group_risks(w)
    prox = 0.5 * obj.mu_w * float(np.sum((w - obj.anchor) ** 2))
    return float(lam @ risks) + prox - obj.mu_lambda * neg_entropy(lam)


def objective_grad_w(obj: RegularizedObjective, w: np.ndarray, lam: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return obj.weighted_grad(w, lam) + obj.mu_w * (w - obj.anchor)


def best_response_lambda(obj: RegularizedObjective, w: np.ndarray) -> np.ndarray:
    """Exact maximizer of F(w, .): softmax of risks at temperature mu_lambda."""
    return softmax_weights(obj.group_risks(np.asarray(w, dtype=float)), obj.mu_lambda)


def _logsumexp(v: np.ndarray) -> float:
    m = float(np.max(v))
    return m + math.log(float(np.sum(np.exp(v - m))))


def max_over_weights(obj: RegularizedObjective, w: np.ndarray) -> float:
    """max over lam of F(w, lam), in closed form via log-sum-exp."""
    w = np.asarray(w, dtype=float)
    risks = obj.group_risks(w)
    prox = 0.5 * obj.mu_w * float(np.sum((w - obj.anchor) ** 2))
    return obj.mu_lambda * _logsumexp(risks / obj.mu_lambda) + prox


@dataclass
class DualityGap:
    """Certified saddle-gap bound: gap <= upper - lower with stated slack."""

    gap: float
    max_value: float
    min_lower_bound: float
    inner_iterations: int


def duality_gap(
    obj: RegularizedObjective,
    w: np.ndarray,
    lam: np.ndarray,
    inner_tol: float = 1e-9,
    max_inner_iterations: int = 200_000,
) -> DualityGap:
    """Upper bound on the saddle gap of (w, lam), slack at most inner_tol.

    The max side is exact (log-sum-exp).  The min side runs projected
    subgradient descent on the mu_w-strongly-convex F(., lam) and certifies
    suboptimality through the strong-convexity bound

        f(v) - f* <= ||g||^2 / (2 mu_w) - (mu_w / 2) dist(v - g/mu_w, W)^2,

    whose ball-distance correction makes boundary optima certifiable.  Raises
    :class:`NonConvergenceError` with the best bound if the cap is hit.
    """
    if inner_tol <= 0:
        raise ValueError("inner_tol must be positive")
    lam = check_simplex(lam)
    w = np.asarray(w, dtype=float)
    upper = max_over_weights(obj, w)
    entropy_term = -obj.mu_lambda * neg_entropy(lam)

    def f(v):
        return float(lam @ obj.group_risks(v)) + 0.5 * obj.mu_w * float(
            np.sum((v - obj.anchor) ** 2)
        ) + entropy_term

    center, radius = obj.space.center, obj.space.radius
    v = obj.space.project(w)
    best_lower = -math.inf
    mu = obj.mu_w
    for k in range(max_inner_iterations):
        g = objective_grad_w(obj, v, lam)
        gn2 = float(np.sum(g * g))
        u0 = v - g / mu
        outside = max(0.0, float(np.linalg.norm(u0 - center)) - radius)
        cert = gn2 / (2.0 * mu) - 0.5 * mu * outside * outside
        best_lower = max(best_lower, f(v) - cert)
        if cert <= inner_tol:
            return DualityGap(upper - best_lower, upper, best_lower, k + 1)
        step = 2.0 / (mu * (k + 2))
        v = obj.space.project(v - step * g)
    raise NonConvergenceError(
        f"inner minimization did not certify tol={inner_tol:g} within {max_inner_iterations} iterations",
        upper - best_lower,
    )


def apriori_gap_bound(n_iterations: int, lipschitz: float, diameter: float, mu_w: float) -> float:
    """A-priori gap bound for the averaged iterates after N rounds."""
    g = lipschitz + mu_w * diameter
    return g * g * (1.0 + math.log(n_iterations)) / (2.0 * mu_w * n_iterations)


def iterations_for_alpha(
    alpha_target: float, mu_w: float, mu_lambda: float, lipschitz: float, diameter: float
) -> int:
    """Smallest N whose a-priori gap bound is at most alpha_target.

    Only the w-side constants enter the bound; mu_lambda is accepted for
    signature symmetry with the phase schedule.  The bound decreases
    monotonically in N, so halving alpha never decreases the result.
    """
    if alpha_target <= 0:
        raise ValueError("alpha_target must be positive")
    if mu_w <= 0 or mu_lambda <= 0:
        raise ValueError("regularization strengths must be positive")

    def bound(n):
        return apriori_gap_bound(n, lipschitz, diameter, mu_w)

    hi = 1
    while bound(hi) > alpha_target:
        hi *= 2
        if hi > 1 << 62:
            raise ValueError("alpha target out of range")
    if hi == 1:
        return 1
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if bound(mid) <= alpha_target:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class SaddleSolution:
    w: np.ndarray
    lam: np.ndarray
    iterations: int
    online_bound: float
    gap: Optional[DualityGap] = None


def solve_sc_sc(
    obj: RegularizedObjective,
    n_iterations: int,
    w_init: Optional[np.ndarray] = None,
    target_gap: Optional[float] = None,
    compute_gap: bool = False,
    inner_tol: float = 1e-9,
) -> SaddleSolution:
    """Averaged best-response solver for the regularized saddle problem.

    Each round plays the exact softmax best response for the weights, then a
    projected gradient step eta_t = 1 / (mu_w t) on w; outputs are uniform
    averages of the iterates.  ``online_bound`` is the pathwise regret
    certificate (sum of ||g_t||^2 / (2 mu_w t)) / N, itself a valid bound on
    the saddle gap of the averages.  When ``target_gap`` is set the loop
    stops at the first round whose certificate meets it.

    ``w_init`` defaults to the anchor (projected into the feasible set when
    the anchor lies outside).
    """
    if n_iterations < 1:
        raise ValueError("n_iterations must be at least 1")
    if w_init is None:
        w_init = obj.space.project(obj.anchor)
    w_init = np.asarray(w_init, dtype=float)
    if not obj.space.contains(w_init):
        raise ValueError("w_init must lie in the feasible set")
    tgt = -1.0 if target_gap is None else float(target_gap)

    if obj._affine is not None:
        A, c = obj._affine
        w_avg, lam_avg, done, bound = sc_sc_affine(
            A,
            c,
            obj.mu_w,
            obj.mu_lambda,
            obj.anchor,
            obj.space.center,
            obj.space.radius,
            w_init,
            int(n_iterations),
            tgt,
        )
    else:
        w = w_init.copy()
        d, p = obj.loss.dim, obj.p
        w_sum = np.zeros(d)
        lam_sum = np.zeros(p)
        cert = 0.0
        done = n_iterations
        for t in range(1, n_iterations + 1):
            lam = best_response_lambda(obj, w)
            g = objective_grad_w(obj, w, lam)
            cert += float(np.sum(g * g)) / (2.0 * obj.mu_w * t)
            w_sum += w
            lam_sum += lam
            if tgt > 0.0 and cert / t <= tgt:
                done = t
                break
            if t < n_iterations:
                w = obj.space.project(w - g / (obj.mu_w * t))
        w_avg, lam_avg, bound = w_sum / done, lam_sum / done, cert / done

    gap = None
    if compute_gap:
        gap = duality_gap(obj, w_avg, lam_avg, inner_tol=inner_tol)
    return SaddleSolution(w=w_avg, lam=lam_avg, iterations=int(done), online_bound=float(bound), gap=gap)


def stability_bound(n: int, lipschitz: float, range_bound: float, mu_w: float, mu_lambda: float) -> float:
    """Argument-stability bound for alpha-saddle outputs on neighbors."""
    return (3.0 / n) * (lipschitz / mu_w + range_bound / math.sqrt(mu_w * mu_lambda))


def stability_alpha(n: int, lipschitz: float, range_bound: float, mu_w: float, mu_lambda: float) -> float:
    """Saddle accuracy premise under which the stability bound applies."""
    return lipschitz**2 / (8.0 * n * n * mu_w) + range_bound**2 / (8.0 * n * n * mu_lambda)


@dataclass
class StabilityReport:
    distances: np.ndarray
    bound: float
    alpha: float
    iterations: int
    violations: int

    @property
    def max_distance(self) -> float:
        return float(np.max(self.distances))

    @property
    def mean_distance(self) -> float:
        return float(np.mean(self.distances))


def stability_probe(
    obj_builder: Callable,
    n: int,
    trials: int,
    rng,
    max_iterations: int = 5_000_000,
) -> StabilityReport:
    """Measure solution movement across neighboring collections.

    ``obj_builder(stream)`` returns a pair of objectives sharing parameters
    whose collections differ in exactly one data point.  Both are solved to
    the stability premise accuracy with the a-priori iteration count; the
    report compares observed distances against the stability bound.
    """
    distances = np.empty(trials)
    obj0 = None
    for trial in range(trials):
        obj, obj_nb = obj_builder(rng.child(trial))
        if obj.collection.n != n:
            raise ValueError("builder produced collections of unexpected size")
        if obj0 is None:
            obj0 = obj
        alpha = stability_alpha(n, obj.loss.lipschitz, obj.loss.range_bound, obj.mu_w, obj.mu_lambda)
        n_iter = min(
            iterations_for_alpha(
                alpha, obj.mu_w, obj.mu_lambda, obj.loss.lipschitz, obj.space.diameter
            ),
            max_iterations,
        )
        sol = solve_sc_sc(obj, n_iter, target_gap=alpha)
        sol_nb = solve_sc_sc(obj_nb, n_iter, target_gap=alpha)
        distances[trial] = float(np.linalg.norm(sol.w - sol_nb.w))
    bound = stability_bound(n, obj0.loss.lipschitz, obj0.loss.range_bound, obj0.mu_w, obj0.mu_lambda)
    alpha = stability_alpha(n, obj0.loss.lipschitz, obj0.loss.range_bound, obj0.mu_w, obj0.mu_lambda)
    n_iter = min(
        iterations_for_alpha(alpha, obj0.mu_w, obj0.mu_lambda, obj0.loss.lipschitz, obj0.space.diameter),
        max_iterations,
    )
    return StabilityReport(
        distances=distances,
        bound=bound,
        alpha=alpha,
        iterations=n_iter,
        violations=int(np.sum(distances > bound)),
    )


@dataclass
class BaselineResult:
    w: np.ndarray
    lam: np.ndarray
    mu_w: float
    mu_lambda: float
    alpha: float
    iterations: int
    online_bound: float
    collection: DatasetCollection


def nonprivate_baseline(
    oracles,
    budget: int,
    loss: LossSpec,
    space: ParamSpace,
    rng,
    max_iterations: int = 200_000,
) -> BaselineResult:
    """Non-private reference: one regularized solve on K/p samples per group.

    Regularization follows the sample-size scaling
    mu_w = (D/M) sqrt(p/K) sqrt(ln(K/p) ln K) and
    mu_lam = D sqrt(p ln(K/p) ln K / (K ln p)) (entropy inactive at p = 1),
    anchored at the center, solved to the stability-premise accuracy (capped
    by ``max_iterations``).
    """
    p = oracles.p
    n = budget // p
    if n < 2:
        raise ValueError("budget too small for a baseline solve")
    D = loss.bound
    M = space.diameter
    mu_w = (D / M) * math.sqrt(p / budget) * math.sqrt(math.log(budget / p) * math.log(budget))
    if p == 1:
        mu_lam = D
    else:
        mu_lam = D * math.sqrt(p * math.log(budget / p) * math.log(budget) / (budget * math.log(p)))
    data_stream = rng.child("baseline-data")
    groups = [oracles.draw_batch(i, n, data_stream) for i in range(p)]
    collection = DatasetCollection(groups)
    obj = RegularizedObjective(collection, loss, space, mu_w, mu_lam, anchor=space.center)
    alpha = stability_alpha(n, loss.lipschitz, loss.range_bound, mu_w, mu_lam)
    n_iter = min(iterations_for_alpha(alpha, mu_w, mu_lam, loss.lipschitz, M), max_iterations)
    sol = solve_sc_sc(obj, n_iter, target_gap=alpha)
    return BaselineResult(
        w=sol.w,
        lam=sol.lam,
        mu_w=mu_w,
        mu_lambda=mu_lam,
        alpha=alpha,
        iterations=sol.iterations,
        online_bound=sol.online_bound,
        collection=collection,
    )

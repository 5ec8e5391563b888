"""Phased private minimax ERM.

Each phase solves the regularized saddle objective on fresh samples around
the previous (noised) anchor, then perturbs the solution with spherical
gaussian noise calibrated to the phase's stability bound.  Noised anchors
are *not* projected back into the feasible set by default; the next phase's
objective tolerates exterior anchors and the final report projects once for
evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mechanisms import gaussian_noise, phased_noise_sigma
from .numkit import RandomStream
from .problem import DatasetCollection, LossSpec, ParamSpace, SampleOracleSet, make_neighbor
from .saddle import (
    RegularizedObjective,
    iterations_for_alpha,
    solve_sc_sc,
    stability_alpha,
)


@dataclass(frozen=True)
class PhaseParams:
    index: int
    n_t: int
    eta_t: float
    mu_w: float
    mu_lambda: float
    alpha: float
    sigma: float


@dataclass(frozen=True)
class PhasedSchedule:
    K: int
    p: int
    n: int
    phases: tuple[PhaseParams, ...]
    eta: float
    epsilon: float
    delta: float

    @property
    def T(self) -> int:
        return len(self.phases)

    @property
    def draws_needed(self) -> int:
        return self.p * sum(ph.n_t for ph in self.phases)


def make_schedule(
    K: int,
    p: int,
    eta: float,
    lipschitz: float,
    range_bound: float,
    bound: float,
    epsilon: float,
    delta: float,
) -> PhasedSchedule:
    """Phase parameters for budget K split over p groups.

    n = floor(K/p) samples per group feed T = floor(log2 n) phases of
    n_t = floor(n/T) samples each, with geometrically decaying step
    eta_t = eta 2^{-t} and the induced strengths mu_w^t = 1/(eta_t n_t),
    mu_lam = 1/(eta n).
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    if K < 4 * p:
        raise ValueError(f"instance too small: need K >= 4p, got K={K}, p={p}")
    if eta <= 0:
        raise ValueError("eta must be positive")
    n = K // p
    T = int(math.floor(math.log2(n)))
    n_t = n // T
    mu_lam = 1.0 / (eta * n)
    phases = []
    for t in range(1, T + 1):
        eta_t = eta * 2.0**-t
        mu_w = 1.0 / (eta_t * n_t)
        alpha = stability_alpha(n_t, lipschitz, range_bound, mu_w, mu_lam)
        sigma = phased_noise_sigma(bound, n, eta, eta_t, epsilon, delta)
        phases.append(
            PhaseParams(
                index=t, n_t=n_t, eta_t=eta_t, mu_w=mu_w, mu_lambda=mu_lam, alpha=alpha, sigma=sigma
            )
        )
    return PhasedSchedule(K=K, p=p, n=n, phases=tuple(phases), eta=eta, epsilon=epsilon, delta=delta)


def default_eta(
    diameter: float,
    bound: float,
    K: int,
    p: int,
    epsilon: float,
    delta: float,
    d: int,
) -> float:
    """Step scale balancing the sampling and privacy error terms.

    (M/D) min{ eps / sqrt(72 d ln(K/p) ln(1/delta)),
               sqrt(p) / (ln(K)^{3/4} sqrt(K)) };
    an infinite eps selects the sampling branch.
    """
    if K < 2 * p or K < 2:
        raise ValueError("need K >= 2p samples for the step calibration")
    private = epsilon / math.sqrt(72.0 * d * math.log(K / p) * math.log(1.0 / delta))
    sampling = math.sqrt(p) / (math.log(K) ** 0.75 * math.sqrt(K))
    return (diameter / bound) * min(private, sampling)


@dataclass
class PhasedResult:
    w: np.ndarray
    anchors: list[np.ndarray]
    phase_iterations: list[int]
    uncertified_phases: list[int]
    draws_used: int


def run_phased_erm(
    oracles: SampleOracleSet,
    schedule: PhasedSchedule,
    loss: LossSpec,
    space: ParamSpace,
    rng: RandomStream,
    w0: Optional[np.ndarray] = None,
    project_anchors: bool = False,
    max_phase_iterations: int = 2_000_000,
) -> PhasedResult:
    """Run the phased solver against sampling oracles.

    Per phase: draw n_t fresh samples per group (child stream "data"), solve
    the anchored objective to the phase accuracy, then add gaussian noise
    from child stream "noise".  The iteration count per phase is the a-priori
    bound (with the diameter widened for exterior anchors) and the solver
    stops early once its pathwise certificate reaches the phase accuracy;
    phases that hit ``max_phase_iterations`` uncertified are reported.
    """
    if oracles.p != schedule.p:
        raise ValueError("oracle count does not match schedule")
    data_stream = rng.child("data")
    noise_stream = rng.child("noise")
    anchor = space.center.copy() if w0 is None else np.asarray(w0, dtype=float)
    if not space.contains(anchor):
        raise ValueError("w0 must lie in the feasible set")
    anchors = [anchor.copy()]
    iters: list[int] = []
    uncertified: list[int] = []
    d = loss.dim
    for ph in schedule.phases:
        groups = [oracles.draw_batch(i, ph.n_t, data_stream) for i in range(schedule.p)]
        collection = DatasetCollection(groups)
        obj = RegularizedObjective(collection, loss, space, ph.mu_w, ph.mu_lambda, anchor=anchor)
        # Exterior anchors widen the worst-case gradient radius.
        m_eff = max(
            space.diameter,
            float(np.linalg.norm(anchor - space.center)) + space.radius,
        )
        n_iter = min(
            iterations_for_alpha(ph.alpha, ph.mu_w, ph.mu_lambda, loss.lipschitz, m_eff),
            max_phase_iterations,
        )
        sol = solve_sc_sc(obj, n_iter, target_gap=ph.alpha)
        if sol.online_bound > ph.alpha:
            uncertified.append(ph.index)
        anchor = sol.w + gaussian_noise(ph.sigma, d, noise_stream)
        if project_anchors:
            anchor = space.project(anchor)
        anchors.append(anchor.copy())
        iters.append(sol.iterations)
    return PhasedResult(
        w=anchor,
        anchors=anchors,
        phase_iterations=iters,
        uncertified_phases=uncertified,
        draws_used=oracles.draws_used,
    )


@dataclass
class PhaseSensitivityReport:
    distances: np.ndarray
    bound: float
    phase: PhaseParams
    violations: int

    @property
    def max_distance(self) -> float:
        return float(np.max(self.distances))


def phase_sensitivity_probe(
    schedule: PhasedSchedule,
    distributions,
    loss: LossSpec,
    space: ParamSpace,
    trials: int,
    rng: RandomStream,
    phase_index: int = 1,
    max_iterations: int = 5_000_000,
) -> PhaseSensitivityReport:
    """Empirical sensitivity of one phase's pre-noise output.

    Solves the phase objective on a random phase dataset and on a neighbor
    differing in one point, both to the phase accuracy; distances are
    compared against the calibrated sensitivity 6 D sqrt(log2(n) eta_t eta).
    """
    ph = schedule.phases[phase_index - 1]
    bound = 6.0 * loss.bound * math.sqrt(math.log2(schedule.n) * ph.eta_t * schedule.eta)
    distances = np.empty(trials)
    for trial in range(trials):
        stream = rng.child(trial)
        groups = [dist.sample_many(ph.n_t, stream) for dist in distributions]
        collection = DatasetCollection(groups)
        j = stream.integers(len(distributions))
        k = stream.integers(ph.n_t)
        neighbor = make_neighbor(collection, j, k, distributions[j].sample(stream))
        n_iter = min(
            iterations_for_alpha(ph.alpha, ph.mu_w, ph.mu_lambda, loss.lipschitz, space.diameter),
            max_iterations,
        )
        anchor = space.center
        obj = RegularizedObjective(collection, loss, space, ph.mu_w, ph.mu_lambda, anchor=anchor)
        obj_nb = RegularizedObjective(neighbor, loss, space, ph.mu_w, ph.mu_lambda, anchor=anchor)
        sol = solve_sc_sc(obj, n_iter, target_gap=ph.alpha)
        sol_nb = solve_sc_sc(obj_nb, n_iter, target_gap=ph.alpha)
        distances[trial] = float(np.linalg.norm(sol.w - sol_nb.w))
    return PhaseSensitivityReport(
        distances=distances,
        bound=bound,
        phase=ph,
        violations=int(np.sum(distances > bound)),
    )

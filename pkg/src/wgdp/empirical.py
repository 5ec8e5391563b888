"""Noisy SGD over fixed group datasets, with two group rules.

Group reweighting keeps a full multiplicative-weights distribution over
groups driven by privatized loss vectors; group selection instead picks the
noisy-argmax group each round.  Both share one update loop: sample a batch
with replacement from the active group, take a gaussian-noised projected
gradient step, and average the iterates.

Randomness protocol (per fixed-size chunk of rounds, in this order): group
uniforms (reweighting with p > 1 only), batch index uniforms, gaussian step
noise if sigma > 0, laplace loss noise if tau > 0.  Zero-scale noise arrays
are zeros and consume no draws, so noise-free runs of either rule replay
each other's data path exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ._kernels import noisy_sgd_chunk
from .errors import DegenerateWeightError
from .mechanisms import calibrate_composed_budget, laplace_noise, report_noisy_max
from .numkit import RandomStream, sample_categorical
from .problem import DatasetCollection, LossSpec, ParamSpace, group_risks

_CHUNK = 1 << 16


@dataclass(frozen=True)
class NoisySgdConfig:
    """Round count, steps, and noise scales for the noisy SGD solvers."""

    T: int
    m: int
    eta_w: float
    eta_lam: float
    sigma: float
    tau: float
    U: float
    epsilon: float
    delta: float
    capped: bool = False

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.m < 1:
            raise ValueError("batch size must be at least 1")
        if self.sigma < 0 or self.tau < 0:
            raise ValueError("noise scales must be non-negative")


def _composed_noise_scales(K: int, p: int, epsilon: float, delta: float, T: int):
    """(tau, sigma) for T adaptive rounds at total budget (epsilon, delta).

    Each round splits its per-step budget eps0 between the laplace loss
    vector (L1 sensitivity B/n) and the subsampled gaussian gradient step
    (sensitivity 2L/m at sampling rate m/n, which cancels m), giving
    tau = 2B/(n eps0) and sigma = 4L sqrt(2 ln(1.25/delta0)) / (n eps0)
    up to the loss constants applied by the caller.
    """
    eps0, delta0 = calibrate_composed_budget(epsilon, delta, T)
    n = K // p
    if math.isinf(eps0):
        return 0.0, 0.0, n
    tau_unit = 2.0 / (n * eps0)
    sigma_unit = 4.0 * math.sqrt(2.0 * math.log(1.25 / delta0)) / (n * eps0)
    return tau_unit, sigma_unit, n


def reweighting_default_params(
    K: int,
    p: int,
    d: int,
    diameter: float,
    lipschitz: float,
    range_bound: float,
    epsilon: float,
    delta: float,
    m: int = 1,
    t_cap: int = 10**6,
) -> NoisySgdConfig:
    """Calibrated configuration for the group-reweighting solver.

    T grows as (ML + B sqrt(ln p)) K^2 eps^2 / (L B d p^2 ln(1/delta)) and is
    clamped to [1, t_cap] (``capped`` flags a clamp).  Noise scales come from
    the advanced-composition split; the gradient step is
    M / sqrt(T (L^2 + d sigma^2)) and the weight step sqrt(ln p / (U^2 T)).
    """
    M, L, B = diameter, lipschitz, range_bound
    if math.isinf(epsilon):
        t_raw = math.inf
    else:
        t_raw = (M * L + B * math.sqrt(math.log(p))) * K * K * epsilon * epsilon / (
            L * B * d * p * p * math.log(1.0 / delta)
        )
    capped = not (1.0 <= t_raw <= t_cap)
    T = int(min(max(t_raw, 1.0), t_cap))
    tau_unit, sigma_unit, _ = _composed_noise_scales(K, p, epsilon, delta, T)
    tau = B * tau_unit
    sigma = L * sigma_unit
    U = B if math.isinf(epsilon) else B + tau * math.log(K * T)
    eta_lam = math.sqrt(math.log(p) / (U * U * T)) if p > 1 else 0.0
    eta_w = M / math.sqrt(T * (L * L + d * sigma * sigma))
    return NoisySgdConfig(
        T=T, m=m, eta_w=eta_w, eta_lam=eta_lam, sigma=sigma, tau=tau, U=U,
        epsilon=epsilon, delta=delta, capped=capped,
    )


def selection_default_params(
    K: int,
    p: int,
    d: int,
    diameter: float,
    lipschitz: float,
    range_bound: float,
    epsilon: float,
    delta: float,
    m: int = 1,
    t_cap: int = 10**6,
) -> NoisySgdConfig:
    """Calibrated configuration for the group-selection solver.

    T = M L K eps / (16 B p sqrt(ln(1/delta))), clamped to [1, t_cap]; noise
    scales share the composed calibration and the step is
    M / sqrt(T (L^2 + d sigma^2)).
    """
    M, L, B = diameter, lipschitz, range_bound
    if math.isinf(epsilon):
        t_raw = math.inf
    else:
        t_raw = M * L * K * epsilon / (16.0 * B * p * math.sqrt(math.log(1.0 / delta)))
    capped = not (1.0 <= t_raw <= t_cap)
    T = int(min(max(t_raw, 1.0), t_cap))
    tau_unit, sigma_unit, _ = _composed_noise_scales(K, p, epsilon, delta, T)
    tau = B * tau_unit
    sigma = L * sigma_unit
    U = B if math.isinf(epsilon) else B + tau * math.log(K * T)
    eta_w = M / math.sqrt(T * (L * L + d * sigma * sigma))
    return NoisySgdConfig(
        T=T, m=m, eta_w=eta_w, eta_lam=0.0, sigma=sigma, tau=tau, U=U,
        epsilon=epsilon, delta=delta, capped=capped,
    )


@dataclass
class NoisySgdResult:
    w: np.ndarray
    lam: np.ndarray
    selections: np.ndarray
    floor_count: int
    rounds: int
    w_trace: Optional[list] = None


def _run_python(collection, config, loss, space, rng, mode, w_init, record_trace):
    """Reference loop shared by both rules; used off the affine fast path."""
    p, n, d = collection.p, collection.n, loss.dim
    group_stream = rng.child("group")
    batch_stream = rng.child("batch")
    gauss_stream = rng.child("gauss")
    lap_stream = rng.child("lap")
    w = space.center.copy() if w_init is None else np.asarray(w_init, dtype=float)
    if not space.contains(w):
        raise ValueError("w_init must lie in the feasible set")
    lam = np.full(p, 1.0 / p)
    w_sum = np.zeros(d)
    lam_sum = np.zeros(p)
    selections = np.zeros(p, dtype=np.int64)
    floor_count = 0
    trace = [] if record_trace else None
    for t in range(1, config.T + 1):
        risks = group_risks(collection, w, loss)
        if mode == 0:
            i_t = sample_categorical(lam, group_stream) if p > 1 else 0
        else:
            i_t = report_noisy_max(risks, config.tau, lap_stream)
        selections[i_t] += 1
        w_sum += w
        lam_sum += lam
        if trace is not None:
            trace.append(w.copy())
        if t == config.T:
            break
        idx = batch_stream.integers(n, size=config.m)
        X, S = collection.stacked(i_t, loss)
        g = loss.gradient_mean(w, X[idx], S[idx])
        noise = (
            config.sigma * gauss_stream.gaussians(d) if config.sigma > 0 else np.zeros(d)
        )
        w = space.project(w - config.eta_w * (g + noise))
        if mode == 0 and config.eta_lam > 0.0:
            y = (
                laplace_noise(config.tau, lap_stream, size=p)
                if config.tau > 0
                else np.zeros(p)
            )
            # shared exponent shift cancels in normalization, keeps exp finite
            z = config.eta_lam * (risks - y)
            scaled = lam * np.exp(z - np.max(z))
            flat = scaled <= 0.0
            if np.any(flat):
                if np.any(lam[flat] == 0.0):
                    raise DegenerateWeightError("weight collapsed to zero")
                scaled[flat] = 1e-300
                floor_count += int(np.sum(flat))
            lam = scaled / np.sum(scaled)
    return NoisySgdResult(
        w=w_sum / config.T,
        lam=lam_sum / config.T,
        selections=selections,
        floor_count=floor_count,
        rounds=config.T,
        w_trace=trace,
    )


def _run_affine(collection, config, loss, space, rng, mode, w_init):
    p, n, d = collection.p, collection.n, loss.dim
    group_stream = rng.child("group")
    batch_stream = rng.child("batch")
    gauss_stream = rng.child("gauss")
    lap_stream = rng.child("lap")
    X_all = np.empty((p, n, d))
    a_bar = np.empty((p, d))
    c_bar = np.empty(p)
    for i in range(p):
        X, S = collection.stacked(i, loss)
        X_all[i] = X
        a_bar[i] = np.mean(X, axis=0)
        c_bar[i] = float(np.mean(np.sum(S, axis=1)))
    w = space.center.copy() if w_init is None else np.asarray(w_init, dtype=float)
    if not space.contains(w):
        raise ValueError("w_init must lie in the feasible set")
    lam = np.full(p, 1.0 / p)
    w_sum = np.zeros(d)
    lam_sum = np.zeros(p)
    selections = np.zeros(p, dtype=np.int64)
    floor_count = 0
    done = 0
    while done < config.T:
        c_rounds = min(_CHUNK, config.T - done)
        n_update = c_rounds if done + c_rounds < config.T else c_rounds - 1
        if mode == 0 and p > 1:
            u_group = group_stream.uniforms(c_rounds)
        else:
            u_group = np.zeros(0)
        batch_idx = batch_stream.integers(n, size=c_rounds * config.m).reshape(c_rounds, config.m)
        if config.sigma > 0:
            gauss = config.sigma * gauss_stream.gaussians(c_rounds * d).reshape(c_rounds, d)
        else:
            gauss = np.zeros((c_rounds, d))
        if config.tau > 0:
            lap = laplace_noise(config.tau, lap_stream, size=c_rounds * p).reshape(c_rounds, p)
        else:
            lap = np.zeros((c_rounds, p))
        floor_count += noisy_sgd_chunk(
            X_all, a_bar, c_bar, space.center, space.radius,
            w, lam, w_sum, lam_sum, selections,
            config.eta_w, config.eta_lam,
            u_group, batch_idx, gauss, lap,
            mode, n_update,
        )
        done += c_rounds
    return NoisySgdResult(
        w=w_sum / config.T,
        lam=lam_sum / config.T,
        selections=selections,
        floor_count=floor_count,
        rounds=config.T,
    )


def _run(collection, config, loss, space, rng, mode, w_init, record_trace):
    if collection.n < config.m:
        raise ValueError("batch size exceeds the dataset size")
    if record_trace or not loss.affine_in_w:
        return _run_python(collection, config, loss, space, rng, mode, w_init, record_trace)
    return _run_affine(collection, config, loss, space, rng, mode, w_init)


def run_reweighting(
    collection: DatasetCollection,
    config: NoisySgdConfig,
    loss: LossSpec,
    space: ParamSpace,
    rng: RandomStream,
    w_init: Optional[np.ndarray] = None,
    record_trace: bool = False,
) -> NoisySgdResult:
    """Noisy SGD with a multiplicative-weights group distribution.

    Each round samples the group from the current weights, steps w on a
    noised batch gradient, and updates the weights with the full privatized
    loss vector [- L_i(w_t) + Lap(tau)]_i (higher empirical loss raises a
    group's weight).  Returns iterate and weight averages.
    """
    return _run(collection, config, loss, space, rng, 0, w_init, record_trace)


def run_selection(
    collection: DatasetCollection,
    config: NoisySgdConfig,
    loss: LossSpec,
    space: ParamSpace,
    rng: RandomStream,
    w_init: Optional[np.ndarray] = None,
    record_trace: bool = False,
) -> NoisySgdResult:
    """Noisy SGD stepping on the noisy-argmax worst group each round.

    With tau = 0 the selection is the exact argmax (lowest index on ties).
    Group weights stay untouched at uniform; only the iterate average is
    meaningful.
    """
    cfg = config if config.eta_lam == 0.0 else replace(config, eta_lam=0.0)
    return _run(collection, cfg, loss, space, rng, 1, w_init, record_trace)

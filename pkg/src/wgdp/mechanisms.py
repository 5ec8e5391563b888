"""Noise primitives and privacy calibration.

All draws run through :class:`~wgdp.numkit.RandomStream`.  ``epsilon = inf``
is the non-private sentinel: every calibration below maps it to zero noise so
ablation runs share the private code path.  Zero-scale draws return exact
zeros without consuming stream draws.
"""

from __future__ import annotations

import math

import numpy as np

from .numkit import RandomStream


def laplace_inverse_cdf(u: float, scale: float) -> float:
    """Inverse Laplace CDF at ``u`` in [0, 1); u = 0.5 maps to exactly 0."""
    if scale < 0:
        raise ValueError("scale must be non-negative")
    if scale == 0.0:
        return 0.0
    q = u - 0.5
    if q == 0.0:
        return 0.0
    # Clamp away from 0 to keep the log finite for u at the interval ends.
    inner = max(1.0 - 2.0 * abs(q), 5e-324)
    return scale * math.copysign(-math.log(inner), q)


def laplace_noise(scale: float, rng: RandomStream, size: int | None = None):
    """Laplace(scale) noise via inverse CDF, one uniform per variate.

    ``scale = 0`` returns exact zeros and consumes nothing.
    """
    if scale < 0:
        raise ValueError("scale must be non-negative")
    if size is None:
        if scale == 0.0:
            return 0.0
        return laplace_inverse_cdf(rng.uniform(), scale)
    if scale == 0.0:
        return np.zeros(size)
    u = rng.uniforms(size) - 0.5
    inner = np.maximum(1.0 - 2.0 * np.abs(u), 5e-324)
    return -scale * np.sign(u) * np.log(inner)


def gaussian_noise(sigma: float, d: int, rng: RandomStream) -> np.ndarray:
    """Spherical gaussian with per-coordinate standard deviation ``sigma``.

    ``sigma = 0`` returns exact zeros and consumes nothing.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if d <= 0:
        raise ValueError("d must be positive")
    if sigma == 0.0:
        return np.zeros(d)
    return sigma * rng.gaussians(d)


def phased_noise_sigma(
    bound: float, n: int, eta: float, eta_t: float, epsilon: float, delta: float
) -> float:
    """Per-coordinate gaussian std for one phase of the phased solver.

    sigma_t = 6 D sqrt(2 log2(n) ln(1/delta) eta eta_t) / epsilon.
    """
    if n < 2:
        raise ValueError("phase calibration needs n >= 2")
    if epsilon <= 0 or not (0 < delta < 1):
        raise ValueError("need epsilon > 0 and delta in (0, 1)")
    if math.isinf(epsilon):
        return 0.0
    return 6.0 * bound * math.sqrt(2.0 * math.log2(n) * math.log(1.0 / delta) * eta * eta_t) / epsilon


def report_noisy_max(scores: np.ndarray, tau: float, rng: RandomStream) -> int:
    """Argmax of scores + Laplace(tau) per coordinate.

    ``tau = 0`` degenerates to the exact argmax with lowest-index ties.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("scores must be a non-empty 1-d vector")
    noisy = s + laplace_noise(tau, rng, size=s.size)
    return int(np.argmax(noisy))


def calibrate_composed_budget(epsilon: float, delta: float, steps: int) -> tuple[float, float]:
    """Per-step (eps0, delta0) so that ``steps`` adaptive compositions stay
    within (epsilon, delta).

    eps0 = epsilon / (2 sqrt(2 steps ln(2/delta))), delta0 = delta / (2 steps).
    Via advanced composition with delta' = delta/2 the total privacy cost is
    at most (epsilon, delta) for epsilon <= 1; the linear term is second
    order in eps0 and absorbed by the factor-2 slack.  ``epsilon = inf``
    passes through as (inf, delta0).
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if epsilon <= 0 or not (0 < delta < 1):
        raise ValueError("need epsilon > 0 and delta in (0, 1)")
    delta0 = delta / (2.0 * steps)
    if math.isinf(epsilon):
        return math.inf, delta0
    eps0 = epsilon / (2.0 * math.sqrt(2.0 * steps * math.log(2.0 / delta)))
    return eps0, delta0


def _dyadic_blocks(t: int) -> list[tuple[int, int]]:
    """Minimal aligned dyadic decomposition of [1, t] as (start, size) blocks.

    Blocks follow the binary expansion of t from the most significant bit, so
    there are popcount(t) of them.
    """
    blocks = []
    start = 1
    bit = 1 << (t.bit_length() - 1)
    while bit:
        if t & bit:
            blocks.append((start, bit))
            start += bit
        bit >>= 1
    return blocks


class TreeNoiseAggregator:
    """Per-node gaussian noise for private prefix sums over T rounds.

    Node noises are sampled lazily on first touch and cached, so re-querying
    a prefix returns the identical vector and the per-coordinate variance of
    ``prefix_noise(t)`` is popcount(t) * sigma_node**2.
    """

    def __init__(self, horizon: int, sigma_node: float, d: int, rng: RandomStream):
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        if sigma_node < 0:
            raise ValueError("sigma_node must be non-negative")
        self.horizon = int(horizon)
        self.sigma_node = float(sigma_node)
        self.d = int(d)
        self._rng = rng
        self._nodes: dict[tuple[int, int], np.ndarray] = {}

    def _node(self, key: tuple[int, int]) -> np.ndarray:
        noise = self._nodes.get(key)
        if noise is None:
            noise = gaussian_noise(self.sigma_node, self.d, self._rng)
            self._nodes[key] = noise
        return noise

    def prefix_noise(self, t: int) -> np.ndarray:
        """Total noise attached to the prefix sum over rounds 1..t."""
        if not (1 <= t <= self.horizon):
            raise ValueError(f"t must lie in [1, {self.horizon}]")
        total = np.zeros(self.d)
        for key in _dyadic_blocks(t):
            total += self._node(key)
        return total

    @staticmethod
    def node_count(t: int) -> int:
        return bin(t).count("1")

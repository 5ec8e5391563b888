"""Deterministic randomness and small numeric kernels.

Every stochastic component in the package draws through :class:`RandomStream`,
which wraps a counter-tracked PCG64 generator.  Child streams are derived from
``(seed, stream id)`` via numpy ``SeedSequence`` spawn keys, so independent
components never share or race a generator and any run can be replayed
bit-exactly from its seed.

Variate transforms use a fixed number of uniform draws each:

* uniform: 1 draw,
* standard gaussian: 2 draws (Box-Muller, cosine branch),
* laplace: 1 draw (inverse CDF),
* categorical: 1 draw (inverse CDF over the cumulative weights).
"""

from __future__ import annotations

import numpy as np

# Relative slack used by the ball projection and membership tests.  Large
# enough to absorb the rounding of one rescale, so projecting twice returns
# the first output unchanged.
_PROJ_RTOL = 1e-12

_SIMPLEX_ATOL = 1e-12


def _encode_key(key) -> tuple:
    """Encode a child-stream id as a SeedSequence spawn-key tuple.

    Integers map to a 1-tuple; strings map to their UTF-8 bytes.  The
    encoding is injective within each type, and the leading type marker
    keeps integer and string ids from colliding.
    """
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream id must be non-negative")
        return (0, int(key))
    if isinstance(key, str):
        return (1,) + tuple(key.encode("utf-8"))
    raise TypeError(f"stream id must be int or str, got {type(key).__name__}")


class RandomStream:
    """Replayable random source with documented child-stream derivation.

    Args:
      seed: master seed (any non-negative integer).

    Attributes:
      seed: the master seed given at construction.
      spawn_key: tuple of encoded child ids leading to this stream.
      position: number of uniform draws consumed so far.
    """

    def __init__(self, seed: int, _spawn_key: tuple = ()):
        self.seed = int(seed)
        self.spawn_key = tuple(_spawn_key)
        self.position = 0
        seq = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, key) -> "RandomStream":
        """Derive an independent stream for ``key``; same key, same stream."""
        return RandomStream(self.seed, self.spawn_key + _encode_key(key))

    def uniform(self) -> float:
        """One uniform draw in [0, 1)."""
        self.position += 1
        return float(self._gen.random())

    def uniforms(self, size: int) -> np.ndarray:
        self.position += int(size)
        return self._gen.random(int(size))

    def gaussian(self) -> float:
        """One standard normal via Box-Muller (consumes 2 uniforms)."""
        return float(self.gaussians(1)[0])

    def gaussians(self, size: int) -> np.ndarray:
        size = int(size)
        # Adjacent pairing keeps draws per variate fixed, so splitting one
        # request into several yields the same values.
        u = self.uniforms(2 * size)
        u1 = u[0::2]
        u2 = u[1::2]
        # 1 - u1 lies in (0, 1], so the log is finite.
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)

    def integers(self, high: int, size: int | None = None):
        """Uniform integers in [0, high) via floor(u * high), one draw each."""
        if high <= 0:
            raise ValueError("high must be positive")
        if size is None:
            return min(int(self.uniform() * high), high - 1)
        idx = np.floor(self.uniforms(size) * high).astype(np.int64)
        return np.minimum(idx, high - 1)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, spawn_key={self.spawn_key}, position={self.position})"


def project_l2_ball(v: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto the ball of given center and radius.

    Returns ``v`` (copied) when it is already inside; otherwise rescales the
    offset to lie on the sphere.  Inside-ness uses a relative slack so the
    projection is idempotent bit-for-bit.
    """
    v = np.asarray(v, dtype=float)
    center = np.asarray(center, dtype=float)
    if v.shape != center.shape:
        raise ValueError(f"shape mismatch: {v.shape} vs {center.shape}")
    if radius < 0:
        raise ValueError("radius must be non-negative")
    offset = v - center
    norm = float(np.linalg.norm(offset))
    if norm <= radius * (1.0 + _PROJ_RTOL):
        return v.copy()
    return center + offset * (radius / norm)


def in_l2_ball(v: np.ndarray, center: np.ndarray, radius: float) -> bool:
    """Membership test consistent with :func:`project_l2_ball`."""
    offset = np.asarray(v, dtype=float) - np.asarray(center, dtype=float)
    return float(np.linalg.norm(offset)) <= radius * (1.0 + _PROJ_RTOL)


def check_simplex(weights: np.ndarray, atol: float = _SIMPLEX_ATOL) -> np.ndarray:
    """Validate a probability vector: entries in [0, 1], sum within atol of 1."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-d vector")
    if np.any(w < -atol) or np.any(w > 1.0 + atol):
        raise ValueError("weights must lie in [0, 1]")
    if abs(float(np.sum(w)) - 1.0) > atol:
        raise ValueError(f"weights must sum to 1, got {float(np.sum(w))!r}")
    return w


def neg_entropy(weights: np.ndarray) -> float:
    """Sum of w_j * log(w_j) over the simplex, with 0 log 0 = 0.

    This is the negative Shannon entropy; it lies in [-log(p), 0].  Callers
    wanting the entropic regularizer multiply by their own -mu coefficient.
    """
    w = check_simplex(weights)
    nz = w[w > 0.0]
    return float(np.sum(nz * np.log(nz)))


def softmax_weights(scores: np.ndarray, temperature: float) -> np.ndarray:
    """Max-shifted softmax of ``scores / temperature``.

    Stable for scores up to +-1e6 at moderate temperatures; invariant (to
    1e-12) under a common shift of the scores.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("scores must be a non-empty 1-d vector")
    z = (s - np.max(s)) / temperature
    e = np.exp(z)
    return e / np.sum(e)


def categorical_from_uniform(weights: np.ndarray, u: float) -> int:
    """Index sampled by inverse CDF: first i with cumsum(weights)[i] > u.

    The cumulative sum runs left to right, so a point mass always returns its
    own index and ties resolve to the lowest index.
    """
    w = check_simplex(weights)
    cum = np.cumsum(w)
    idx = int(np.searchsorted(cum, u, side="right"))
    return min(idx, w.size - 1)


def sample_categorical(weights: np.ndarray, rng: RandomStream) -> int:
    """Draw one index from ``weights`` using a single uniform."""
    return categorical_from_uniform(weights, rng.uniform())


def uniform_in_ball(center: np.ndarray, radius: float, rng: RandomStream) -> np.ndarray:
    """Uniform draw from an L2 ball (d gaussians for direction + 1 uniform for radius)."""
    center = np.asarray(center, dtype=float)
    d = center.size
    g = rng.gaussians(d)
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        return center.copy()
    r = radius * rng.uniform() ** (1.0 / d)
    return center + g * (r / norm)

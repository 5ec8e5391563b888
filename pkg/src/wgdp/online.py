"""Private online zero-sum game: tree-noised FTRL versus bandit weights.

The min player runs follow-the-regularized-leader on noisy gradient prefix
sums (binary-tree aggregation), which with zero noise is exactly lazy
projected gradient descent.  The max player runs an importance-weighted
exponential update on privatized, flipped losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from .errors import DegenerateWeightError
from .mechanisms import TreeNoiseAggregator, laplace_noise
from .numkit import RandomStream, check_simplex, sample_categorical
from .problem import LossSpec, ParamSpace, SampleOracleSet

WEIGHT_FLOOR = 1e-300


class OcoPlayer(Protocol):
    """Online player over the feasible set; consumes one datum per round.

    Implementations declare the privacy cost of their full iterate stream as
    ``privacy`` = (epsilon, delta) with respect to replacing one datum.
    """

    privacy: tuple[float, float]

    def current(self) -> np.ndarray: ...

    def step(self, datum: tuple) -> np.ndarray: ...


def tree_node_sigma(lipschitz: float, horizon: int, epsilon: float, delta: float) -> float:
    """Per-node gaussian std making the gradient tree (epsilon, delta)-private.

    One datum touches at most ceil(log2 T) nodes and moves each node sum by
    at most 2L, so the standard gaussian-mechanism scaling gives
    (2L/eps) sqrt(2 ceil(log2 T) ln(1.25/delta)).
    """
    if math.isinf(epsilon):
        return 0.0
    levels = max(1, math.ceil(math.log2(max(horizon, 2))))
    return (2.0 * lipschitz / epsilon) * math.sqrt(2.0 * levels * math.log(1.25 / delta))


class DpFtrlPlayer:
    """FTRL on privately aggregated gradient prefix sums.

    w_{t+1} = Proj_W(w_1 - eta (sum_{s<=t} g_s + tree_prefix_noise(t))).
    Gradients outside the declared norm bound are clipped (and counted).
    With sigma_node = 0 the iterates coincide bit-for-bit with lazy projected
    gradient descent from w_1.
    """

    def __init__(
        self,
        loss: LossSpec,
        space: ParamSpace,
        horizon: int,
        eta: float,
        sigma_node: float,
        rng: RandomStream,
        w_init: Optional[np.ndarray] = None,
        epsilon: float = math.inf,
        delta: float = 0.0,
    ):
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        if eta <= 0:
            raise ValueError("eta must be positive")
        self.loss = loss
        self.space = space
        self.eta = float(eta)
        self.horizon = int(horizon)
        self.privacy = (epsilon, delta)
        self.w1 = space.center.copy() if w_init is None else np.asarray(w_init, dtype=float)
        if not space.contains(self.w1):
            raise ValueError("w_init must lie in the feasible set")
        self._w = self.w1.copy()
        self._grad_sum = np.zeros(loss.dim)
        self._t = 0
        self._tree = TreeNoiseAggregator(horizon, sigma_node, loss.dim, rng)
        self.clip_count = 0

    def current(self) -> np.ndarray:
        return self._w.copy()

    def step(self, datum: tuple) -> np.ndarray:
        if self._t >= self.horizon:
            raise ValueError("player stepped past its horizon")
        g = self.loss.gradient(self._w, datum)
        norm = float(np.linalg.norm(g))
        if norm > self.loss.lipschitz:
            g = g * (self.loss.lipschitz / norm)
            self.clip_count += 1
        self._grad_sum += g
        self._t += 1
        noisy = self._grad_sum + self._tree.prefix_noise(self._t)
        self._w = self.space.project(self.w1 - self.eta * noisy)
        return self._w.copy()


def exp3_update(
    weights: np.ndarray, arm: int, loss_estimate: float, eta: float, floor: float = WEIGHT_FLOOR
):
    """Importance-weighted exponential update on one arm.

    Multiplies the played arm by exp(-eta * loss_estimate / weights[arm]) and
    renormalizes.  Returns (new_weights, floored) where ``floored`` counts
    entries clamped at the underflow floor.  An exactly-zero played weight is
    a degenerate state and raises.
    """
    w = check_simplex(weights)
    if not (0 <= arm < w.size):
        raise ValueError("arm index out of range")
    if w[arm] == 0.0:
        raise DegenerateWeightError("played arm has zero weight")
    out = w.copy()
    out[arm] = out[arm] * math.exp(-eta * loss_estimate / out[arm])
    floored = 0
    if out[arm] <= 0.0:
        out[arm] = floor
        floored = 1
    return out / np.sum(out), floored


@dataclass(frozen=True)
class GameConfig:
    """Round count and step sizes for the online game under budget K."""

    K: int
    p: int
    T: int
    epsilon: float
    delta: float
    U: float
    eta_exp3: float
    eta_ftrl: float
    sigma_node: float

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("need at least 2 rounds")
        if 2 * (self.T - 1) > self.K:
            raise ValueError("round count exceeds the draw budget")


def make_game_config(
    K: int,
    p: int,
    loss: LossSpec,
    space: ParamSpace,
    epsilon: float,
    delta: float,
    T: Optional[int] = None,
) -> GameConfig:
    """Calibrate the game from the budget: T = floor(K/2) rounds by default.

    U = B + (2B/eps) ln T bounds the privatized flipped losses off the noise
    tail event; the bandit step is sqrt(ln p / (p T U^2)) and the FTRL step
    M/(L sqrt(T)) shrunk by the per-node noise-to-signal ratio.
    """
    if T is None:
        T = K // 2
    B, L, M = loss.range_bound, loss.lipschitz, space.diameter
    U = B + (2.0 * B / epsilon) * math.log(T)
    eta_exp3 = math.sqrt(math.log(p) / (p * T * U * U)) if p > 1 else 0.0
    sigma_node = tree_node_sigma(L, T, epsilon, delta)
    eta_ftrl = (M / (L * math.sqrt(T))) / (1.0 + sigma_node * math.sqrt(loss.dim) / L)
    return GameConfig(
        K=K,
        p=p,
        T=T,
        epsilon=epsilon,
        delta=delta,
        U=U,
        eta_exp3=eta_exp3,
        eta_ftrl=eta_ftrl,
        sigma_node=sigma_node,
    )


@dataclass
class GameResult:
    w: np.ndarray
    lam: np.ndarray
    draws_used: int
    clip_count: int
    floor_count: int
    noise_tail_count: int
    rounds: int
    w_trace: Optional[list] = field(default=None, repr=False)


def run_game(
    oracles: SampleOracleSet,
    config: GameConfig,
    loss: LossSpec,
    space: ParamSpace,
    rng: RandomStream,
    player: Optional[OcoPlayer] = None,
    w_init: Optional[np.ndarray] = None,
    record_trace: bool = False,
) -> GameResult:
    """Play T-1 rounds of the private game and average both players.

    Per round: sample a group from the current weights, draw one point for
    each player, advance the min player on the first, and feed the bandit
    the privatized flipped loss U - l(w_t, x^+) + Lap(B/eps) of the second.
    Averages run over the T defined iterates (the final post-update pair is
    included).
    """
    if oracles.p != config.p:
        raise ValueError("oracle count does not match config")
    group_stream = rng.child("group")
    data_stream = rng.child("data")
    lap_stream = rng.child("lap")
    if player is None:
        player = DpFtrlPlayer(
            loss,
            space,
            horizon=config.T,
            eta=config.eta_ftrl,
            sigma_node=config.sigma_node,
            rng=rng.child("tree"),
            w_init=w_init,
            epsilon=config.epsilon,
            delta=config.delta,
        )
    p = config.p
    lam = np.full(p, 1.0 / p)
    lap_scale = 0.0 if math.isinf(config.epsilon) else loss.range_bound / config.epsilon
    tail = (2.0 * loss.range_bound / config.epsilon) * math.log(config.T)
    w_sum = np.zeros(loss.dim)
    lam_sum = np.zeros(p)
    floor_count = 0
    noise_tail_count = 0
    trace = [] if record_trace else None
    for _ in range(1, config.T):
        w_t = player.current()
        w_sum += w_t
        lam_sum += lam
        if trace is not None:
            trace.append(w_t)
        i = sample_categorical(lam, group_stream)
        x_minus = oracles.draw(i, data_stream)
        x_plus = oracles.draw(i, data_stream)
        player.step(x_minus)
        y = laplace_noise(lap_scale, lap_stream)
        if not math.isinf(config.epsilon) and abs(y) > tail:
            noise_tail_count += 1
        loss_flipped = config.U - loss.evaluate(w_t, x_plus) + y
        if p > 1:
            lam, fl = exp3_update(lam, i, loss_flipped, config.eta_exp3)
            floor_count += fl
    w_sum += player.current()
    lam_sum += lam
    if trace is not None:
        trace.append(player.current())
    return GameResult(
        w=w_sum / config.T,
        lam=lam_sum / config.T,
        draws_used=oracles.draws_used,
        clip_count=getattr(player, "clip_count", 0),
        floor_count=floor_count,
        noise_tail_count=noise_tail_count,
        rounds=config.T,
        w_trace=trace,
    )

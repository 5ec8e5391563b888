"""Problem objects: losses, parameter space, group distributions, datasets.

Data points are flat tuples ``(x, *scalars)`` where ``x`` is a d-vector and
the scalar fields depend on the loss family (affine: offset; hinge: label;
shift-augmented losses append one more scalar).  Losses expose scalar and
batch evaluation plus mean gradients so solvers can vectorize over datasets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BudgetExhaustedError, ContractViolationError, UnsupportedModeError
from .numkit import (
    RandomStream,
    check_simplex,
    in_l2_ball,
    project_l2_ball,
    sample_categorical,
    uniform_in_ball,
)

_NORM_RTOL = 1e-9


@dataclass(frozen=True)
class ParamSpace:
    """L2 ball of optimization variables: ``center`` plus diameter ``M``."""

    center: np.ndarray
    diameter: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.diameter <= 0:
            raise ValueError("diameter must be positive")

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def radius(self) -> float:
        return self.diameter / 2.0

    def project(self, v: np.ndarray) -> np.ndarray:
        return project_l2_ball(v, self.center, self.radius)

    def contains(self, v: np.ndarray) -> bool:
        return in_l2_ball(v, self.center, self.radius)


@dataclass
class LossSpec:
    """A loss family with declared constants and vectorized evaluators.

    Attributes:
      kind: family name ("affine", "hinge", optionally "+shift").
      dim: parameter dimension d.
      lipschitz: L, a bound on both per-sample gradient norms and data norms.
      range_bound: B, a bound on loss values over the parameter space.
      n_scalars: number of scalar fields carried by each data point.
      params: factory parameters, kept for serialization.
    """

    kind: str
    dim: int
    lipschitz: float
    range_bound: float
    n_scalars: int
    params: dict
    _eval_many: Callable = field(repr=False)
    _grad_one: Callable = field(repr=False)
    _grad_mean: Callable = field(repr=False)
    affine_in_w: bool = field(default=False, repr=False)

    @property
    def bound(self) -> float:
        """D = max{L, B}."""
        return max(self.lipschitz, self.range_bound)

    def _check_point(self, x: np.ndarray):
        if x.shape != (self.dim,):
            raise ContractViolationError(f"point has shape {x.shape}, expected ({self.dim},)")
        nrm = float(np.linalg.norm(x))
        if nrm > self.lipschitz * (1.0 + _NORM_RTOL):
            raise ContractViolationError(
                f"data norm {nrm:.6g} exceeds declared bound {self.lipschitz:.6g}"
            )

    def evaluate(self, w: np.ndarray, z: tuple) -> float:
        x = np.asarray(z[0], dtype=float)
        self._check_point(x)
        X = x[None, :]
        S = np.asarray(z[1:], dtype=float)[None, :]
        return float(self._eval_many(np.asarray(w, dtype=float), X, S)[0])

    def gradient(self, w: np.ndarray, z: tuple) -> np.ndarray:
        x = np.asarray(z[0], dtype=float)
        self._check_point(x)
        return self._grad_one(np.asarray(w, dtype=float), x, np.asarray(z[1:], dtype=float))

    def evaluate_batch(self, w: np.ndarray, X: np.ndarray, S: np.ndarray) -> np.ndarray:
        return self._eval_many(np.asarray(w, dtype=float), X, S)

    def gradient_mean(self, w: np.ndarray, X: np.ndarray, S: np.ndarray) -> np.ndarray:
        """Mean of per-sample gradients over the stacked batch."""
        return self._grad_mean(np.asarray(w, dtype=float), X, S)


def _affine_eval(w, X, S):
    return X @ w + np.sum(S, axis=1)


def _affine_grad_one(w, x, s):
    return x.copy()


def _affine_grad_mean(w, X, S):
    return np.mean(X, axis=0)


def _hinge_eval(w, X, S):
    margins = S[:, 0] * (X @ w)
    vals = np.maximum(0.0, 1.0 - margins)
    if S.shape[1] > 1:
        vals = vals + np.sum(S[:, 1:], axis=1)
    return vals


def _hinge_grad_one(w, x, s):
    if s[0] * float(x @ w) < 1.0:
        return -s[0] * x
    return np.zeros_like(x)


def _hinge_grad_mean(w, X, S):
    active = (S[:, 0] * (X @ w)) < 1.0
    g = -(S[:, 0] * active)[:, None] * X
    return np.sum(g, axis=0) / X.shape[0]


def make_loss(
    kind: str,
    dim: int,
    space: ParamSpace,
    x_bound: float = 1.0,
    b_range: tuple[float, float] | None = None,
) -> LossSpec:
    """Build a loss family with constants valid over ``space``.

    affine: l(w, (x, b)) = <w, x> + b with ||x|| <= x_bound.  Offsets are
    declared to lie in ``b_range`` (default degenerate at radius * x_bound,
    the smallest choice keeping values non-negative over the space), giving
    B = radius * x_bound + b_hi.

    hinge: l(w, (x, y)) = max(0, 1 - y <w, x>) with labels y in {-1, +1},
    giving B = 1 + radius * x_bound.

    Both require a zero-centered space so the declared bounds are tight.
    """
    if space.dim != dim:
        raise ValueError("space dimension does not match loss dimension")
    if float(np.linalg.norm(space.center)) != 0.0:
        raise ValueError("declared loss constants require a zero-centered space")
    if x_bound <= 0:
        raise ValueError("x_bound must be positive")
    r = space.radius
    if kind == "affine":
        if b_range is None:
            b_range = (r * x_bound, r * x_bound)
        lo, hi = float(b_range[0]), float(b_range[1])
        if lo > hi:
            raise ValueError("b_range must be ordered")
        return LossSpec(
            kind="affine",
            dim=dim,
            lipschitz=float(x_bound),
            range_bound=r * x_bound + hi,
            n_scalars=1,
            params={"x_bound": float(x_bound), "b_range": [lo, hi]},
            _eval_many=_affine_eval,
            _grad_one=_affine_grad_one,
            _grad_mean=_affine_grad_mean,
            affine_in_w=True,
        )
    if kind == "hinge":
        return LossSpec(
            kind="hinge",
            dim=dim,
            lipschitz=float(x_bound),
            range_bound=1.0 + r * x_bound,
            n_scalars=1,
            params={"x_bound": float(x_bound)},
            _eval_many=_hinge_eval,
            _grad_one=_hinge_grad_one,
            _grad_mean=_hinge_grad_mean,
        )
    raise ValueError(f"unknown loss kind: {kind!r}")


def make_shifted_loss(base: LossSpec, shift_bound: float) -> LossSpec:
    """Augment ``base`` with one additive scalar per point, in [0, shift_bound].

    The gradient is unchanged; the declared range grows by the shift bound.
    """
    if shift_bound < 0:
        raise ValueError("shift_bound must be non-negative")
    return LossSpec(
        kind=base.kind + "+shift",
        dim=base.dim,
        lipschitz=base.lipschitz,
        range_bound=base.range_bound + shift_bound,
        n_scalars=base.n_scalars + 1,
        params={"base_kind": base.kind, "base_params": base.params, "shift_bound": float(shift_bound)},
        _eval_many=base._eval_many,
        _grad_one=base._grad_one,
        _grad_mean=base._grad_mean,
        affine_in_w=base.affine_in_w,
    )


def _stack_points(points: Sequence[tuple], dim: int, n_scalars: int):
    X = np.array([np.asarray(z[0], dtype=float) for z in points]).reshape(len(points), dim)
    S = np.array([[float(v) for v in z[1:]] for z in points]).reshape(len(points), n_scalars)
    return X, S


class DiscreteDistribution:
    """Finite-support distribution over data points with exact expectations."""

    has_exact = True

    def __init__(self, points: Sequence[tuple], probs: Sequence[float]):
        if len(points) == 0 or len(points) != len(probs):
            raise ValueError("points and probs must be non-empty and equal length")
        self.points = [tuple(z) for z in points]
        self.probs = check_simplex(np.asarray(probs, dtype=float))
        self._cum = np.cumsum(self.probs)

    def sample(self, rng: RandomStream) -> tuple:
        return self.points[sample_categorical(self.probs, rng)]

    def sample_many(self, count: int, rng: RandomStream) -> list[tuple]:
        u = rng.uniforms(count)
        idx = np.minimum(np.searchsorted(self._cum, u, side="right"), len(self.points) - 1)
        return [self.points[i] for i in idx]

    def exact_risk(self, w: np.ndarray, loss: LossSpec) -> float:
        X, S = _stack_points(self.points, loss.dim, loss.n_scalars)
        return float(self.probs @ loss.evaluate_batch(w, X, S))


class SamplerDistribution:
    """Sampling-only distribution; exact expectations are unavailable."""

    has_exact = False

    def __init__(self, sample_fn: Callable[[RandomStream], tuple]):
        self._fn = sample_fn

    def sample(self, rng: RandomStream) -> tuple:
        return self._fn(rng)

    def sample_many(self, count: int, rng: RandomStream) -> list[tuple]:
        return [self._fn(rng) for _ in range(count)]


class SampleOracleSet:
    """p sampling oracles sharing one draw budget.

    Every draw is counted; exceeding the budget raises
    :class:`BudgetExhaustedError` before any extra point is produced.
    """

    def __init__(self, distributions: Sequence, budget: int):
        if len(distributions) == 0:
            raise ValueError("need at least one distribution")
        if budget < 0:
            raise ValueError("budget must be non-negative")
        self.distributions = list(distributions)
        self.budget = int(budget)
        self.draws_used = 0

    @property
    def p(self) -> int:
        return len(self.distributions)

    def _charge(self, count: int):
        if self.draws_used + count > self.budget:
            raise BudgetExhaustedError(
                f"draw of {count} exceeds budget {self.budget} (used {self.draws_used})"
            )
        self.draws_used += count

    def draw(self, i: int, rng: RandomStream) -> tuple:
        self._charge(1)
        return self.distributions[i].sample(rng)

    def draw_batch(self, i: int, count: int, rng: RandomStream) -> list[tuple]:
        self._charge(count)
        return self.distributions[i].sample_many(count, rng)


class DatasetCollection:
    """p datasets of equal size n, stacked lazily for vectorized evaluation."""

    def __init__(self, groups: Sequence[Sequence[tuple]]):
        if len(groups) == 0:
            raise ValueError("need at least one group")
        sizes = {len(g) for g in groups}
        if len(sizes) != 1 or 0 in sizes:
            raise ValueError("all datasets must share one size n >= 1")
        self.groups = [list(g) for g in groups]
        self._stacked: dict[int, tuple] = {}

    @property
    def p(self) -> int:
        return len(self.groups)

    @property
    def n(self) -> int:
        return len(self.groups[0])

    def stacked(self, i: int, loss: LossSpec):
        cached = self._stacked.get(i)
        if cached is None:
            cached = _stack_points(self.groups[i], loss.dim, loss.n_scalars)
            self._stacked[i] = cached
        return cached


def make_neighbor(collection: DatasetCollection, j: int, k: int, z_new: tuple) -> DatasetCollection:
    """Copy of ``collection`` with entry k of dataset j replaced by ``z_new``."""
    if not (0 <= j < collection.p):
        raise ValueError("group index out of range")
    if not (0 <= k < collection.n):
        raise ValueError("entry index out of range")
    groups = [list(g) for g in collection.groups]
    groups[j][k] = tuple(z_new)
    return DatasetCollection(groups)


def collection_hamming(a: DatasetCollection, b: DatasetCollection) -> int:
    """Number of (group, index) entries at which two collections differ."""
    if a.p != b.p or a.n != b.n:
        raise ValueError("collections must have matching shape")
    count = 0
    for ga, gb in zip(a.groups, b.groups):
        for za, zb in zip(ga, gb):
            same = np.array_equal(np.asarray(za[0]), np.asarray(zb[0])) and za[1:] == zb[1:]
            count += 0 if same else 1
    return count


def empirical_risk(points: Sequence[tuple], w: np.ndarray, loss: LossSpec) -> float:
    if len(points) == 0:
        raise ValueError("empty dataset")
    X, S = _stack_points(points, loss.dim, loss.n_scalars)
    return float(np.mean(loss.evaluate_batch(w, X, S)))


def group_risks(collection: DatasetCollection, w: np.ndarray, loss: LossSpec) -> np.ndarray:
    """Vector of per-group empirical risks."""
    out = np.empty(collection.p)
    for i in range(collection.p):
        X, S = collection.stacked(i, loss)
        out[i] = float(np.mean(loss.evaluate_batch(w, X, S)))
    return out


def population_risk(dist, w: np.ndarray, loss: LossSpec) -> float:
    """Exact expected loss; requires a finite-support distribution."""
    if not getattr(dist, "has_exact", False):
        raise UnsupportedModeError("exact risk needs a finite-support distribution")
    return dist.exact_risk(w, loss)


def population_risk_mc(dist, w, loss: LossSpec, n_eval: int, rng: RandomStream):
    """Monte Carlo risk estimate; returns (mean, standard error)."""
    if n_eval < 2:
        raise ValueError("n_eval must be at least 2")
    pts = dist.sample_many(n_eval, rng)
    X, S = _stack_points(pts, loss.dim, loss.n_scalars)
    vals = loss.evaluate_batch(w, X, S)
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / np.sqrt(n_eval))


def worst_group_risk(groups, w: np.ndarray, loss: LossSpec):
    """Max over group risks; returns (value, argmax index, risk vector).

    ``groups`` is either a :class:`DatasetCollection` (empirical risks) or a
    sequence of finite-support distributions (exact population risks).  Ties
    resolve to the lowest index.
    """
    if isinstance(groups, DatasetCollection):
        risks = group_risks(groups, w, loss)
    else:
        risks = np.array([population_risk(d, w, loss) for d in groups])
    idx = int(np.argmax(risks))
    return float(risks[idx]), idx, risks


@dataclass
class Instance:
    """A worst-group problem: space, loss, and group data (either view).

    ``distributions`` is the population view used by sampling oracles;
    ``collection`` is a fixed empirical view (set for empirical-only
    constructions).  ``optimum_value`` records the analytic worst-group
    minimum when known.
    """

    kind: str
    space: ParamSpace
    loss: LossSpec
    distributions: Optional[list] = None
    collection: Optional[DatasetCollection] = None
    optimum_value: Optional[float] = None
    optimum_w: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        if self.distributions is not None:
            return len(self.distributions)
        return self.collection.p

    def oracle_set(self, budget: int) -> SampleOracleSet:
        if self.distributions is None:
            raise UnsupportedModeError("instance has no population view")
        return SampleOracleSet(self.distributions, budget)


def build_two_point_instance() -> Instance:
    """Two point-mass groups on d=1 with opposite slopes.

    Group risks are 1 + w and 1 - w over W = [-1, 1], so the worst-group
    risk is 1 + |w| with minimum 1 at w* = 0.
    """
    space = ParamSpace(center=np.zeros(1), diameter=2.0)
    loss = make_loss("affine", 1, space, x_bound=1.0, b_range=(1.0, 1.0))
    d1 = DiscreteDistribution([(np.array([1.0]), 1.0)], [1.0])
    d2 = DiscreteDistribution([(np.array([-1.0]), 1.0)], [1.0])
    return Instance(
        kind="two-point",
        space=space,
        loss=loss,
        distributions=[d1, d2],
        optimum_value=1.0,
        optimum_w=np.zeros(1),
    )


def random_affine_instance(
    d: int,
    p: int,
    stream: RandomStream,
    n_support: int = 8,
    x_bound: float = 1.0,
    diameter: float = 1.0,
    b_spread: float = 0.0,
) -> Instance:
    """Random finite-support affine instance with valid declared constants.

    Offsets are drawn from [r * x_bound, r * x_bound + b_spread], keeping
    losses non-negative over the space; B = r * x_bound + max offset.
    """
    space = ParamSpace(center=np.zeros(d), diameter=diameter)
    b_lo = space.radius * x_bound
    loss = make_loss("affine", d, space, x_bound=x_bound, b_range=(b_lo, b_lo + b_spread))
    dists = []
    for _ in range(p):
        pts = []
        for _ in range(n_support):
            x = uniform_in_ball(np.zeros(d), x_bound, stream)
            b = b_lo + b_spread * stream.uniform()
            pts.append((x, b))
        dists.append(DiscreteDistribution(pts, np.full(n_support, 1.0 / n_support)))
    return Instance(kind="random-affine", space=space, loss=loss, distributions=dists)


def build_hard_instance(
    mode: str,
    p: int = 3,
    d: int = 1,
    n: int = 32,
    stream: RandomStream | None = None,
    base_kind: str = "affine",
    zero_base: bool = False,
    diameter: float = 1.0,
) -> Instance:
    """Shift-augmented instance on which group 1 (index 0) dominates everywhere.

    Points carry an extra scalar equal to the base range bound B on group 1
    and 0 elsewhere, so group 1's risk exceeds every other group's risk at
    every w and worst-group minimization reduces to minimizing group 1's
    augmented risk.

    mode "empirical" fixes p datasets of size n; mode "population" builds
    shifted distributions.
    """
    if mode not in ("empirical", "population"):
        raise ValueError("mode must be 'empirical' or 'population'")
    if stream is None:
        stream = RandomStream(0)
    space = ParamSpace(center=np.zeros(d), diameter=diameter)
    base = make_loss(base_kind, d, space)
    loss = make_shifted_loss(base, base.range_bound)
    shift = base.range_bound

    def draw_base_point():
        if zero_base:
            return (np.zeros(d), 0.0)
        x = uniform_in_ball(np.zeros(d), base.lipschitz, stream)
        if base_kind == "affine":
            return (x, space.radius * base.lipschitz)
        return (x, 1.0 if stream.uniform() < 0.5 else -1.0)

    if mode == "empirical":
        groups = []
        for i in range(p):
            y = shift if i == 0 else 0.0
            groups.append([draw_base_point() + (y,) for _ in range(n)])
        return Instance(
            kind="hard-empirical",
            space=space,
            loss=loss,
            collection=DatasetCollection(groups),
            meta={"shift": shift, "zero_base": zero_base},
        )
    dists = []
    for i in range(p):
        y = shift if i == 0 else 0.0
        pts = [draw_base_point() + (y,) for _ in range(n)]
        dists.append(DiscreteDistribution(pts, np.full(n, 1.0 / n)))
    return Instance(
        kind="hard-population",
        space=space,
        loss=loss,
        distributions=dists,
        meta={"shift": shift, "zero_base": zero_base},
    )


def draw_collection(distributions: Sequence, n: int, rng: RandomStream) -> DatasetCollection:
    """Materialize p datasets of size n by sampling each distribution."""
    return DatasetCollection([d.sample_many(n, rng) for d in distributions])


# --- JSON serialization -----------------------------------------------------


def _point_to_json(z: tuple) -> list:
    return [list(map(float, np.asarray(z[0], dtype=float)))] + [float(v) for v in z[1:]]


def _point_from_json(obj: list) -> tuple:
    return (np.asarray(obj[0], dtype=float),) + tuple(obj[1:])


def _loss_from_params(kind: str, dim: int, space: ParamSpace, params: dict) -> LossSpec:
    if kind.endswith("+shift"):
        base = _loss_from_params(params["base_kind"], dim, space, params["base_params"])
        return make_shifted_loss(base, params["shift_bound"])
    if kind == "affine":
        return make_loss("affine", dim, space, params["x_bound"], tuple(params["b_range"]))
    if kind == "hinge":
        return make_loss("hinge", dim, space, params["x_bound"])
    raise ValueError(f"unknown loss kind: {kind!r}")


def instance_to_json(instance: Instance) -> str:
    """Serialize an instance to a JSON string; round-trips bit-exactly."""
    doc = {
        "schema": 1,
        "kind": instance.kind,
        "space": {
            "center": [float(v) for v in instance.space.center],
            "diameter": float(instance.space.diameter),
        },
        "loss": {
            "kind": instance.loss.kind,
            "dim": instance.loss.dim,
            "params": instance.loss.params,
        },
        "optimum_value": instance.optimum_value,
        "optimum_w": None if instance.optimum_w is None else [float(v) for v in instance.optimum_w],
        "meta": instance.meta,
    }
    if instance.distributions is not None:
        doc["distributions"] = [
            {
                "points": [_point_to_json(z) for z in dist.points],
                "probs": [float(q) for q in dist.probs],
            }
            for dist in instance.distributions
        ]
    if instance.collection is not None:
        doc["collection"] = [
            [_point_to_json(z) for z in g] for g in instance.collection.groups
        ]
    return json.dumps(doc, sort_keys=True)


def instance_from_json(text: str) -> Instance:
    doc = json.loads(text)
    if doc.get("schema") != 1:
        raise ValueError("unknown instance schema")
    space = ParamSpace(
        center=np.asarray(doc["space"]["center"], dtype=float),
        diameter=doc["space"]["diameter"],
    )
    loss = _loss_from_params(doc["loss"]["kind"], doc["loss"]["dim"], space, doc["loss"]["params"])
    dists = None
    if "distributions" in doc:
        dists = [
            DiscreteDistribution([_point_from_json(z) for z in d["points"]], d["probs"])
            for d in doc["distributions"]
        ]
    coll = None
    if "collection" in doc:
        coll = DatasetCollection([[_point_from_json(z) for z in g] for g in doc["collection"]])
    return Instance(
        kind=doc["kind"],
        space=space,
        loss=loss,
        distributions=dists,
        collection=coll,
        optimum_value=doc.get("optimum_value"),
        optimum_w=None if doc.get("optimum_w") is None else np.asarray(doc["optimum_w"], dtype=float),
        meta=doc.get("meta", {}),
    )

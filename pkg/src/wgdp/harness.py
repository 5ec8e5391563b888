"""Experiment harness: configs, trials, CSV output, and self-check audits.

A trial runs one algorithm on one instance at one seed and reports the
worst-group risk of the output (raw and projected into the feasible set)
against a non-private reference value.  Suites repeat over seeds and append
a summary row.  All randomness descends from the trial seed through named
child streams, so rows replay bit-identically when timing capture is off.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .empirical import (
    reweighting_default_params,
    run_reweighting,
    run_selection,
    selection_default_params,
)
from .mechanisms import TreeNoiseAggregator, laplace_noise
from .numkit import RandomStream, sample_categorical, uniform_in_ball
from .online import DpFtrlPlayer, exp3_update, make_game_config, run_game
from .phased_erm import default_eta, make_schedule, phase_sensitivity_probe, run_phased_erm
from .problem import (
    DatasetCollection,
    Instance,
    ParamSpace,
    build_hard_instance,
    build_two_point_instance,
    make_loss,
    make_neighbor,
    population_risk_mc,
    random_affine_instance,
    worst_group_risk,
)
from .saddle import (
    RegularizedObjective,
    nonprivate_baseline,
    solve_sc_sc,
    stability_alpha,
    stability_probe,
)

SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "schema_version",
    "algo",
    "instance",
    "d",
    "p",
    "K",
    "eps",
    "delta",
    "seed",
    "risk_raw",
    "risk_projected",
    "baseline",
    "excess",
    "draws_used",
    "wall_ms",
    "status",
]

ALGORITHMS = ("phased", "game", "reweighting", "selection", "baseline")

_ALGO_PARAM_KEYS = {
    "phased": {"eta", "project_anchors", "random_init", "max_phase_iterations"},
    "game": {"T", "random_init"},
    "reweighting": {"m", "t_cap", "random_init"},
    "selection": {"m", "t_cap", "random_init"},
    "baseline": {"max_iterations"},
}

_INSTANCE_KEYS = {
    "two-point": set(),
    "random-affine": {"d", "p", "n_support", "x_bound", "diameter", "b_spread", "seed"},
    "hard-empirical": {"p", "d", "n", "zero_base", "diameter", "seed"},
    "hard-population": {"p", "d", "n", "zero_base", "diameter", "seed"},
}


def _reject_unknown(given: dict, allowed: set, what: str):
    unknown = sorted(set(given) - allowed)
    if unknown:
        raise ValueError(f"unknown {what} keys: {unknown}")


def _parse_eps(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        return float(value)
    return float(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """One suite: an algorithm, an instance spec, a budget, and seeds."""

    algorithm: str
    instance: dict
    K: int
    epsilon: float
    delta: float = 1e-6
    seeds: tuple = (0,)
    out: Optional[str] = None
    record_timing: bool = False
    algo_params: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        kind = self.instance.get("kind")
        if kind not in _INSTANCE_KEYS:
            raise ValueError(f"unknown instance kind {kind!r}")
        _reject_unknown(
            {k: v for k, v in self.instance.items() if k != "kind"},
            _INSTANCE_KEYS[kind],
            f"instance[{kind}]",
        )
        _reject_unknown(self.algo_params, _ALGO_PARAM_KEYS[self.algorithm], "algo_params")
        _reject_unknown(self.eval, {"n_eval"}, "eval")
        if self.K < 1:
            raise ValueError("K must be positive")
        if len(self.seeds) == 0:
            raise ValueError("need at least one seed")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        allowed = {
            "algorithm",
            "instance",
            "K",
            "epsilon",
            "delta",
            "seeds",
            "out",
            "record_timing",
            "algo_params",
            "eval",
        }
        _reject_unknown(data, allowed, "config")
        for key in ("algorithm", "instance", "K", "epsilon"):
            if key not in data:
                raise ValueError(f"config is missing required key {key!r}")
        return cls(
            algorithm=data["algorithm"],
            instance=dict(data["instance"]),
            K=int(data["K"]),
            epsilon=_parse_eps(data["epsilon"]),
            delta=float(data.get("delta", 1e-6)),
            seeds=tuple(int(s) for s in data.get("seeds", [0])),
            out=data.get("out"),
            record_timing=bool(data.get("record_timing", False)),
            algo_params=dict(data.get("algo_params", {})),
            eval=dict(data.get("eval", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


def build_instance(spec: dict, K: int) -> Instance:
    """Instantiate the instance named by ``spec["kind"]``.

    The hard empirical instance sizes its datasets from the budget
    (n = K // p) unless ``n`` is given explicitly.
    """
    kind = spec["kind"]
    if kind not in _INSTANCE_KEYS:
        raise ValueError(f"unknown instance kind {kind!r}")
    params = {k: v for k, v in spec.items() if k != "kind"}
    _reject_unknown(params, _INSTANCE_KEYS[kind], f"instance[{kind}]")
    if kind == "two-point":
        return build_two_point_instance()
    seed = int(params.get("seed", 0))
    stream = RandomStream(seed).child("instance")
    if kind == "random-affine":
        return random_affine_instance(
            d=int(params["d"]),
            p=int(params["p"]),
            stream=stream,
            n_support=int(params.get("n_support", 8)),
            x_bound=float(params.get("x_bound", 1.0)),
            diameter=float(params.get("diameter", 1.0)),
            b_spread=float(params.get("b_spread", 0.0)),
        )
    p = int(params.get("p", 3))
    if kind == "hard-empirical":
        n = int(params.get("n", max(K // p, 1)))
    else:
        n = int(params.get("n", 32))
    return build_hard_instance(
        mode="empirical" if kind == "hard-empirical" else "population",
        p=p,
        d=int(params.get("d", 1)),
        n=n,
        stream=stream,
        zero_base=bool(params.get("zero_base", False)),
        diameter=float(params.get("diameter", 1.0)),
    )


def _groups_view(instance: Instance):
    return instance.distributions if instance.distributions is not None else instance.collection


def _exact_view(instance: Instance) -> bool:
    if instance.distributions is None:
        return True
    return all(getattr(d, "has_exact", False) for d in instance.distributions)


def evaluate_worst_risk(instance: Instance, w: np.ndarray, n_eval: int, rng: RandomStream) -> float:
    """Worst-group risk of w, exact when the instance supports it.

    Groups without exact risks are estimated by Monte Carlo with ``n_eval``
    fresh points each from a child stream, so evaluation never perturbs the
    algorithm's own draws.
    """
    if _exact_view(instance):
        value, _, _ = worst_group_risk(_groups_view(instance), w, instance.loss)
        return value
    estimates = []
    for i, dist in enumerate(instance.distributions):
        if getattr(dist, "has_exact", False):
            estimates.append(dist.exact_risk(w, instance.loss))
        else:
            mean, _ = population_risk_mc(dist, w, instance.loss, n_eval, rng.child("eval").child(i))
            estimates.append(mean)
    return float(max(estimates))


def _grid_minimum(instance: Instance, points: int = 10_000) -> float:
    space = instance.space
    groups = _groups_view(instance)
    if space.dim == 1:
        grid = np.linspace(-space.radius, space.radius, points + 1)
        best = math.inf
        for g in grid:
            w = space.center + np.array([g])
            value, _, _ = worst_group_risk(groups, w, instance.loss)
            best = min(best, value)
        return best
    n_r = max(int(math.sqrt(points)), 2)
    n_a = n_r
    best, _, _ = worst_group_risk(groups, space.center, instance.loss)
    for r in np.linspace(0.0, space.radius, n_r)[1:]:
        for a in np.linspace(0.0, 2.0 * math.pi, n_a, endpoint=False):
            w = space.center + r * np.array([math.cos(a), math.sin(a)])
            value, _, _ = worst_group_risk(groups, w, instance.loss)
            best = min(best, value)
    return best


def _solve_collection(collection: DatasetCollection, loss, space) -> np.ndarray:
    n = collection.n
    K = collection.p * n
    M = space.diameter
    bound = loss.bound
    mu_w = (bound / M) * math.sqrt(collection.p / K) * math.sqrt(
        max(math.log(K / collection.p), 1e-12) * math.log(K)
    )
    if collection.p > 1:
        mu_lam = bound * math.sqrt(
            collection.p * max(math.log(K / collection.p), 1e-12) * math.log(K)
            / (K * math.log(collection.p))
        )
    else:
        mu_lam = bound
    obj = RegularizedObjective(collection, loss, space, mu_w, mu_lam, space.center.copy())
    alpha = stability_alpha(n, loss.lipschitz, loss.range_bound, mu_w, mu_lam)
    sol = solve_sc_sc(obj, 200_000, target_gap=alpha)
    return sol.w


def compute_baseline(instance: Instance, K: int, instance_seed: int = 0) -> float:
    """Reference worst-group risk value for excess computation.

    Preference order: the instance's analytic optimum, a dense grid search
    (dimension at most 2 with exact risks), then a non-private regularized
    solve on 4K samples (or on the fixed datasets directly).
    """
    if instance.optimum_value is not None:
        return float(instance.optimum_value)
    if instance.space.dim <= 2 and _exact_view(instance):
        return _grid_minimum(instance)
    rng = RandomStream(instance_seed).child("baseline-ref")
    if instance.distributions is not None:
        oracles = instance.oracle_set(4 * K)
        result = nonprivate_baseline(oracles, 4 * K, instance.loss, instance.space, rng)
        w = result.w
    else:
        w = _solve_collection(instance.collection, instance.loss, instance.space)
    value, _, _ = worst_group_risk(_groups_view(instance), w, instance.loss)
    return value


def _trial_collection(instance: Instance, K: int, rng: RandomStream):
    """Fixed datasets for the empirical algorithms, plus the draw count."""
    if instance.collection is not None:
        return instance.collection, instance.collection.p * instance.collection.n
    p = instance.p
    n = K // p
    if n < 1:
        raise ValueError("budget smaller than the group count")
    oracles = instance.oracle_set(K)
    data_stream = rng.child("data")
    groups = [oracles.draw_batch(i, n, data_stream) for i in range(p)]
    return DatasetCollection(groups), oracles.draws_used


def _run_algorithm(instance, algorithm, K, epsilon, delta, rng, algo_params):
    """Dispatch one algorithm run; returns (w, draws_used, flags)."""
    loss, space = instance.loss, instance.space
    p, d = instance.p, space.dim
    L, B, M = loss.lipschitz, loss.range_bound, space.diameter
    flags = []
    w_init = None
    if algo_params.get("random_init", False):
        w_init = uniform_in_ball(space.center, space.radius, rng.child("init"))
    if algorithm == "phased":
        eta = algo_params.get("eta")
        if eta is None:
            eta = default_eta(M, loss.bound, K, p, epsilon, delta, d)
        schedule = make_schedule(K, p, eta, L, B, loss.bound, epsilon, delta)
        oracles = instance.oracle_set(K)
        result = run_phased_erm(
            oracles,
            schedule,
            loss,
            space,
            rng,
            w0=w_init,
            project_anchors=bool(algo_params.get("project_anchors", False)),
            max_phase_iterations=int(algo_params.get("max_phase_iterations", 2_000_000)),
        )
        if result.uncertified_phases:
            flags.append(f"uncertified={len(result.uncertified_phases)}")
        return result.w, oracles.draws_used, flags
    if algorithm == "game":
        config = make_game_config(K, p, loss, space, epsilon, delta, T=algo_params.get("T"))
        oracles = instance.oracle_set(K)
        result = run_game(oracles, config, loss, space, rng, w_init=w_init)
        if result.noise_tail_count:
            flags.append(f"tail={result.noise_tail_count}")
        if result.clip_count:
            flags.append(f"clip={result.clip_count}")
        return result.w, result.draws_used, flags
    if algorithm in ("reweighting", "selection"):
        collection, draws = _trial_collection(instance, K, rng)
        params_fn = (
            reweighting_default_params if algorithm == "reweighting" else selection_default_params
        )
        config = params_fn(
            K,
            p,
            d,
            M,
            L,
            B,
            epsilon,
            delta,
            m=int(algo_params.get("m", 1)),
            t_cap=int(algo_params.get("t_cap", 10**6)),
        )
        if config.capped:
            flags.append("capped")
        runner = run_reweighting if algorithm == "reweighting" else run_selection
        result = runner(collection, config, loss, space, rng, w_init=w_init)
        if result.floor_count:
            flags.append(f"floored={result.floor_count}")
        return result.w, draws, flags
    oracles = instance.oracle_set(K)
    result = nonprivate_baseline(
        oracles,
        K,
        loss,
        space,
        rng,
        max_iterations=int(algo_params.get("max_iterations", 200_000)),
    )
    return result.w, oracles.draws_used, flags


def run_trial(
    instance: Instance,
    algorithm: str,
    K: int,
    epsilon: float,
    delta: float,
    seed: int,
    baseline: float,
    algo_params: Optional[dict] = None,
    n_eval: int = 10_000,
    record_timing: bool = False,
) -> dict:
    """One seeded run; never raises, failures land in the status column."""
    algo_params = algo_params or {}
    rng = RandomStream(seed)
    row = {
        "schema_version": SCHEMA_VERSION,
        "algo": algorithm,
        "instance": instance.kind,
        "d": instance.space.dim,
        "p": instance.p,
        "K": K,
        "eps": float(epsilon),
        "delta": float(delta),
        "seed": seed,
        "risk_raw": math.nan,
        "risk_projected": math.nan,
        "baseline": baseline,
        "excess": math.nan,
        "draws_used": 0,
        "wall_ms": 0.0,
        "status": "ok",
    }
    start = time.perf_counter() if record_timing else None
    try:
        w, draws, flags = _run_algorithm(
            instance, algorithm, K, epsilon, delta, rng, algo_params
        )
        row["draws_used"] = int(draws)
        row["risk_raw"] = evaluate_worst_risk(instance, w, n_eval, rng)
        w_proj = instance.space.project(np.asarray(w, dtype=float))
        row["risk_projected"] = evaluate_worst_risk(instance, w_proj, n_eval, rng)
        row["excess"] = row["risk_projected"] - baseline
        row["status"] = ";".join(["ok"] + flags)
    except Exception as exc:  # noqa: BLE001 - suite must survive bad trials
        row["status"] = f"error:{type(exc).__name__}"
    if record_timing:
        row["wall_ms"] = (time.perf_counter() - start) * 1000.0
    return row


def _summary_row(rows: list[dict]) -> dict:
    ok = [r for r in rows if r["status"].startswith("ok")]
    base = dict(rows[0])
    base["seed"] = -1
    if ok:
        excesses = np.array([r["excess"] for r in ok], dtype=float)
        base["risk_raw"] = float(np.mean([r["risk_raw"] for r in ok]))
        base["risk_projected"] = float(np.mean([r["risk_projected"] for r in ok]))
        base["excess"] = float(np.mean(excesses))
        base["draws_used"] = int(round(np.mean([r["draws_used"] for r in ok])))
        se = float(np.std(excesses, ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else 0.0
    else:
        base["risk_raw"] = math.nan
        base["risk_projected"] = math.nan
        base["excess"] = math.nan
        base["draws_used"] = 0
        se = math.nan
    base["wall_ms"] = float(np.sum([r["wall_ms"] for r in rows]))
    base["status"] = f"summary;n_ok={len(ok)};se={se:.10g}"
    return base


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_format_cell(row[col]) for col in CSV_COLUMNS])
    return buf.getvalue()


def run_suite(config: ExperimentConfig) -> list[dict]:
    """All seeds of one config, plus a trailing summary row (seed -1)."""
    instance = build_instance(config.instance, config.K)
    baseline = compute_baseline(
        instance, config.K, instance_seed=int(config.instance.get("seed", 0))
    )
    n_eval = int(config.eval.get("n_eval", 10_000))
    rows = [
        run_trial(
            instance,
            config.algorithm,
            config.K,
            config.epsilon,
            config.delta,
            seed,
            baseline,
            algo_params=config.algo_params,
            n_eval=n_eval,
            record_timing=config.record_timing,
        )
        for seed in config.seeds
    ]
    rows.append(_summary_row(rows))
    if config.out:
        with open(config.out, "w", encoding="utf-8") as fh:
            fh.write(rows_to_csv(rows))
    return rows


def run_sweep(config: ExperimentConfig, param: str, values: list) -> list[dict]:
    """Repeat the suite across values of ``param`` ("K" or "epsilon")."""
    if param not in ("K", "epsilon"):
        raise ValueError("sweep parameter must be 'K' or 'epsilon'")
    rows: list[dict] = []
    for value in values:
        if param == "K":
            sub = replace(config, K=int(value), out=None)
        else:
            sub = replace(config, epsilon=_parse_eps(value), out=None)
        rows.extend(run_suite(sub))
    if config.out:
        with open(config.out, "w", encoding="utf-8") as fh:
            fh.write(rows_to_csv(rows))
    return rows


@dataclass
class AuditReport:
    kind: str
    ok: bool
    lines: list[str]

    def text(self) -> str:
        return "\n".join(self.lines)


def _audit_line(label: str, ok: bool, detail: str) -> str:
    return f"[{label}] {'PASS' if ok else 'FAIL'} ({detail})"


def _audit_stability(trials: int, seed: int) -> AuditReport:
    lines = []
    p, n, d = 3, 64, 2
    mu_w, mu_lam = 5.0, 0.625
    space = ParamSpace(center=np.zeros(d), diameter=1.0)
    loss = make_loss("affine", d, space, x_bound=1.0, b_range=(0.0, 0.5))

    def builder(stream):
        # Distinct group mean directions keep the saddle away from the
        # anchor, so the probe exercises real solves.
        means = [uniform_in_ball(np.zeros(d), 0.7, stream) for _ in range(p)]

        def draw_point(i):
            return (means[i] + uniform_in_ball(np.zeros(d), 0.3, stream), 0.5 * stream.uniform())

        groups = [[draw_point(i) for _ in range(n)] for i in range(p)]
        col = DatasetCollection(groups)
        j = stream.integers(p)
        k = stream.integers(n)
        neighbor = make_neighbor(col, j, k, draw_point(j))
        anchor = space.center.copy()
        return (
            RegularizedObjective(col, loss, space, mu_w, mu_lam, anchor),
            RegularizedObjective(neighbor, loss, space, mu_w, mu_lam, anchor),
        )

    report = stability_probe(builder, n, trials, RandomStream(seed).child("stability"))
    ok1 = report.violations == 0
    lines.append(
        _audit_line(
            "argument stability",
            ok1,
            f"max distance {report.max_distance:.6g} vs bound {report.bound:.6g}, "
            f"{report.violations}/{trials} violations",
        )
    )

    instance = build_hard_instance("population", p=3, d=2, n=16, stream=RandomStream(seed))
    K = 768
    eta = default_eta(
        instance.space.diameter, instance.loss.bound, K, 3, 1.0, 1e-6, 2
    )
    schedule = make_schedule(
        K, 3, eta, instance.loss.lipschitz, instance.loss.range_bound,
        instance.loss.bound, 1.0, 1e-6,
    )
    sens = phase_sensitivity_probe(
        schedule,
        instance.distributions,
        instance.loss,
        instance.space,
        min(trials, 50),
        RandomStream(seed).child("sensitivity"),
    )
    ok2 = int(np.sum(sens.distances > sens.bound)) == 0
    lines.append(
        _audit_line(
            "phase sensitivity",
            ok2,
            f"max distance {float(np.max(sens.distances)):.6g} vs bound {sens.bound:.6g}",
        )
    )
    return AuditReport("stability", ok1 and ok2, lines)


def _audit_mechanisms(trials: int, seed: int) -> AuditReport:
    del trials
    rng = RandomStream(seed).child("mechanisms")
    lines = []
    n = 1_000_000
    lap = laplace_noise(1.0, rng.child("lap"), size=n)
    var = float(np.var(lap))
    ok_lap = abs(var - 2.0) <= 0.1
    lines.append(_audit_line("laplace variance", ok_lap, f"scale 1: var {var:.4f} vs 2"))
    gauss = 2.0 * rng.child("gauss").gaussians(n)
    var = float(np.var(gauss))
    ok_gauss = abs(var - 4.0) <= 0.2
    lines.append(_audit_line("gaussian variance", ok_gauss, f"sigma 2: var {var:.4f} vs 4"))
    reps = 20_000
    tree_rng = rng.child("tree")
    samples = {1: np.empty(reps), 3: np.empty(reps), 7: np.empty(reps)}
    for r in range(reps):
        agg = TreeNoiseAggregator(8, 1.0, 1, tree_rng.child(r))
        for t in samples:
            samples[t][r] = agg.prefix_noise(t)[0]
    ok_tree = True
    details = []
    for t, expect in ((1, 1.0), (3, 2.0), (7, 3.0)):
        var = float(np.var(samples[t]))
        details.append(f"t={t}: {var:.3f} vs {expect}")
        ok_tree = ok_tree and abs(var - expect) <= 0.05 * expect
    lines.append(_audit_line("tree noise variance", ok_tree, "; ".join(details)))
    return AuditReport("mechanisms", ok_lap and ok_gauss and ok_tree, lines)


def _loss_sequence(
    kind: str, T: int, p: int, cap: float, gap: float, stream: RandomStream
) -> np.ndarray:
    """Oblivious loss sequences in [0, cap] for the regret checks.

    Deterministic kinds put one favored arm `gap` below the rest, so any
    play sequence has regret at most gap * T.
    """
    if kind == "iid":
        return cap * stream.uniforms(T * p).reshape(T, p)
    base = min(0.5 * cap + 0.5 * gap, cap)
    losses = np.full((T, p), base)
    for t in range(T):
        if kind == "drift":
            best = int(p * t / T) % p
        elif kind == "block":
            best = 0 if t < T // 2 else p - 1
        else:
            best = 0
        losses[t, best] = base - gap
    return losses


def _hedge_regret(losses: np.ndarray, eta: float) -> float:
    T, p = losses.shape
    lam = np.full(p, 1.0 / p)
    played = 0.0
    for t in range(T):
        played += float(lam @ losses[t])
        lam = lam * np.exp(-eta * losses[t])
        lam = lam / np.sum(lam)
    return played - float(np.min(np.sum(losses, axis=0)))


def _exp3_regret(losses: np.ndarray, eta: float, stream: RandomStream) -> float:
    T, p = losses.shape
    lam = np.full(p, 1.0 / p)
    played = 0.0
    for t in range(T):
        played += float(lam @ losses[t])
        arm = sample_categorical(lam, stream)
        lam, _ = exp3_update(lam, arm, float(losses[t, arm]), eta)
    return played - float(np.min(np.sum(losses, axis=0)))


def _audit_regret(trials: int, seed: int) -> AuditReport:
    rng = RandomStream(seed).child("regret")
    lines = []
    U = 1.0
    cap = 2.0 * U
    ok_hedge = True
    ok_exp3 = True
    hedge_details = []
    exp3_details = []
    n_seq = max(trials // 20, 3)
    # Hedge tolerates a large per-round gap; EXP3 learns at a slower rate, so
    # its sequences use a gap small enough that gap * T stays well inside the
    # target even if the weights never move.
    hedge_gap = 0.75 * cap
    exp3_gap = 0.02 * cap
    for p in (2, 8):
        for T in (100, 1000):
            bound = 2.0 * U * math.sqrt(T * math.log(p))
            worst_h = 0.0
            worst_e = 0.0
            for kind in ("iid", "drift", "gap", "block"):
                for trial in range(n_seq):
                    s = rng.child(kind).child(p).child(T).child(trial)
                    losses = _loss_sequence(kind, T, p, cap, hedge_gap, s)
                    worst_h = max(
                        worst_h, _hedge_regret(losses, math.sqrt(math.log(p) / (U * U * T)))
                    )
                    if kind == "block":
                        continue
                    losses = _loss_sequence(kind, T, p, cap, exp3_gap, s)
                    worst_e = max(
                        worst_e,
                        _exp3_regret(
                            losses,
                            math.sqrt(math.log(p) / (p * T * U * U)),
                            s.child("arms"),
                        ),
                    )
            hedge_details.append(f"p={p},T={T}: {worst_h:.3f} <= {bound:.3f}")
            exp3_details.append(f"p={p},T={T}: {worst_e:.3f} <= {bound:.3f}")
            ok_hedge = ok_hedge and worst_h <= bound
            ok_exp3 = ok_exp3 and worst_e <= bound
    lines.append(_audit_line("hedge regret", ok_hedge, "; ".join(hedge_details)))
    lines.append(_audit_line("exp3 regret", ok_exp3, "; ".join(exp3_details)))

    instance = build_two_point_instance()
    loss, space = instance.loss, instance.space
    T = 64
    player = DpFtrlPlayer(loss, space, T, eta=0.05, sigma_node=0.0, rng=RandomStream(seed))
    data_stream = RandomStream(seed).child("ftrl-data")
    data = []
    for _ in range(T - 1):
        x = np.array([1.0 if data_stream.uniform() < 0.5 else -1.0])
        data.append((x, 1.0))
    w_ref = space.center.copy()
    grad_sum = np.zeros(1)
    identical = True
    for z in data:
        player.step(z)
        grad_sum += loss.gradient(w_ref, z)
        w_ref = space.project(space.center - 0.05 * grad_sum)
        if not np.array_equal(player.current(), w_ref):
            identical = False
            break
    lines.append(
        _audit_line(
            "noise-free aggregation",
            identical,
            f"{T - 1} steps bit-identical to lazy projected descent: {identical}",
        )
    )
    return AuditReport("regret", ok_hedge and ok_exp3 and identical, lines)


def _audit_reduction(trials: int, seed: int) -> AuditReport:
    """Shift-dominance identity: worst-group minimization collapses to the
    dominant group's minimization, checked exactly on a d=1 grid."""
    del trials
    instance = build_hard_instance("empirical", p=3, d=1, n=64, stream=RandomStream(seed))
    space, loss = instance.space, instance.loss
    grid = np.linspace(-space.radius, space.radius, 101)
    worst_values = np.empty(grid.size)
    lead_values = np.empty(grid.size)
    argmax_ok = True
    equal_ok = True
    for g_idx, g in enumerate(grid):
        w = space.center + np.array([g])
        value, idx, risks = worst_group_risk(instance.collection, w, loss)
        worst_values[g_idx] = value
        lead_values[g_idx] = risks[0]
        argmax_ok = argmax_ok and idx == 0
        equal_ok = equal_ok and value == risks[0]
    minimax = float(np.min(worst_values))
    single = float(np.min(lead_values))
    identity_ok = equal_ok and minimax == single
    lines = [
        _audit_line(
            "dominant group argmax",
            argmax_ok,
            f"argmax group 0 at all {grid.size} grid points: {argmax_ok}",
        ),
        _audit_line(
            "minimax collapse",
            identity_ok,
            f"min-max {minimax:.12g} vs dominant-group min {single:.12g}, "
            f"difference {abs(minimax - single):.3g}",
        ),
    ]
    return AuditReport("reduction", argmax_ok and identity_ok, lines)


def run_audit(kind: str, trials: int = 100, seed: int = 0) -> AuditReport:
    """Self-check suite: stability, mechanisms, regret, or reduction."""
    audits = {
        "stability": _audit_stability,
        "mechanisms": _audit_mechanisms,
        "regret": _audit_regret,
        "reduction": _audit_reduction,
    }
    if kind not in audits:
        raise ValueError(f"unknown audit kind {kind!r}; choose from {sorted(audits)}")
    return audits[kind](trials, seed)

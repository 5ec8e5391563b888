"""Tests for the private online game: FTRL min player and bandit max player."""

import math

import numpy as np
import pytest

from wgdp.errors import DegenerateWeightError
from wgdp.numkit import RandomStream
from wgdp.problem import (
    DiscreteDistribution,
    LossSpec,
    ParamSpace,
    SampleOracleSet,
    build_two_point_instance,
    make_loss,
)
from wgdp.online import (
    DpFtrlPlayer,
    exp3_update,
    make_game_config,
    run_game,
    tree_node_sigma,
)


def affine_setup(d):
    space = ParamSpace(center=np.zeros(d), diameter=2.0)
    loss = make_loss("affine", d, space, x_bound=1.0)
    return loss, space


class FixedPlayer:
    """Min player that never moves, for isolating the bandit side."""

    privacy = (math.inf, 0.0)

    def __init__(self, w):
        self._w = np.asarray(w, dtype=float)

    def current(self):
        return self._w.copy()

    def step(self, datum):
        return self._w.copy()


class TestTreeNodeSigma:
    def test_known_value(self):
        # 2 * sqrt(2 * 3 * ln(1.25e5)) for L=1, T=8, eps=1, delta=1e-5
        sigma = tree_node_sigma(1.0, 8, 1.0, 1e-5)
        np.testing.assert_allclose(sigma, 16.782897735219223, rtol=1e-12)

    def test_infinite_epsilon_is_noiseless(self):
        assert tree_node_sigma(1.0, 8, math.inf, 1e-5) == 0.0

    def test_halving_epsilon_doubles_sigma(self):
        lo = tree_node_sigma(2.0, 64, 0.5, 1e-6)
        hi = tree_node_sigma(2.0, 64, 1.0, 1e-6)
        np.testing.assert_allclose(lo, 2.0 * hi, rtol=1e-15)

    def test_level_count_tracks_horizon(self):
        # 8 rounds need 3 tree levels, 9 rounds need 4
        s8 = tree_node_sigma(1.0, 8, 1.0, 1e-5)
        s9 = tree_node_sigma(1.0, 9, 1.0, 1e-5)
        np.testing.assert_allclose(s9 / s8, math.sqrt(4.0 / 3.0), rtol=1e-15)

    def test_short_horizons_share_one_level(self):
        assert tree_node_sigma(1.0, 1, 1.0, 1e-5) == tree_node_sigma(1.0, 2, 1.0, 1e-5)


class TestDpFtrlPlayer:
    def test_single_step(self):
        loss, space = affine_setup(2)
        player = DpFtrlPlayer(loss, space, horizon=4, eta=0.1, sigma_node=0.0, rng=RandomStream(0))
        np.testing.assert_array_equal(player.current(), np.zeros(2))
        w = player.step((np.array([1.0, 0.0]), 1.0))
        np.testing.assert_allclose(w, [-0.1, 0.0], rtol=1e-15)

    def test_iterates_saturate_at_boundary(self):
        loss, space = affine_setup(1)
        player = DpFtrlPlayer(loss, space, horizon=6, eta=0.3, sigma_node=0.0, rng=RandomStream(0))
        datum = (np.array([1.0]), 1.0)
        seen = [player.step(datum)[0] for _ in range(6)]
        np.testing.assert_allclose(seen[:3], [-0.3, -0.6, -0.9], rtol=1e-12)
        np.testing.assert_allclose(seen[3:], [-1.0, -1.0, -1.0], rtol=1e-12)
        assert space.contains(player.current())

    def test_zero_noise_matches_lazy_projected_descent(self):
        loss, space = affine_setup(3)
        rng = np.random.default_rng(42)
        data = []
        for _ in range(40):
            x = rng.normal(size=3)
            x = x / np.linalg.norm(x) * rng.uniform(0.1, 1.0)
            data.append((x, 1.0))
        eta = 0.07
        player = DpFtrlPlayer(
            loss, space, horizon=40, eta=eta, sigma_node=0.0, rng=RandomStream(3)
        )
        grad_sum = np.zeros(3)
        for datum in data:
            stepped = player.step(datum)
            grad_sum += datum[0]
            manual = space.project(space.center - eta * grad_sum)
            assert np.array_equal(stepped, manual)

    def test_gradients_above_declared_bound_are_clipped(self):
        # hand-built loss whose gradient triples the datum, exceeding L=1
        spec = LossSpec(
            kind="affine",
            dim=1,
            lipschitz=1.0,
            range_bound=2.0,
            n_scalars=1,
            params={},
            _eval_many=lambda w, X, S: X @ w + np.sum(S, axis=1),
            _grad_one=lambda w, x, s: 3.0 * x,
            _grad_mean=lambda w, X, S: 3.0 * np.mean(X, axis=0),
        )
        space = ParamSpace(center=np.zeros(1), diameter=2.0)
        player = DpFtrlPlayer(spec, space, horizon=4, eta=0.25, sigma_node=0.0, rng=RandomStream(0))
        player.step((np.array([1.0]), 1.0))
        player.step((np.array([1.0]), 1.0))
        assert player.clip_count == 2
        np.testing.assert_allclose(player.current(), [-0.5], rtol=1e-15)

    def test_step_past_horizon_raises(self):
        loss, space = affine_setup(1)
        player = DpFtrlPlayer(loss, space, horizon=1, eta=0.1, sigma_node=0.0, rng=RandomStream(0))
        player.step((np.array([1.0]), 1.0))
        with pytest.raises(ValueError, match="horizon"):
            player.step((np.array([1.0]), 1.0))

    def test_noisy_iterates_replay(self):
        loss, space = affine_setup(2)
        datum = (np.array([0.6, 0.8]), 1.0)
        runs = []
        for _ in range(2):
            player = DpFtrlPlayer(
                loss, space, horizon=8, eta=0.1, sigma_node=0.5, rng=RandomStream(11)
            )
            runs.append(np.stack([player.step(datum) for _ in range(8)]))
        assert np.array_equal(runs[0], runs[1])

    def test_validation(self):
        loss, space = affine_setup(1)
        with pytest.raises(ValueError):
            DpFtrlPlayer(loss, space, horizon=0, eta=0.1, sigma_node=0.0, rng=RandomStream(0))
        with pytest.raises(ValueError):
            DpFtrlPlayer(loss, space, horizon=4, eta=0.0, sigma_node=0.0, rng=RandomStream(0))
        with pytest.raises(ValueError):
            DpFtrlPlayer(
                loss,
                space,
                horizon=4,
                eta=0.1,
                sigma_node=0.0,
                rng=RandomStream(0),
                w_init=np.array([2.0]),
            )


class TestExp3Update:
    def test_known_update(self):
        # exp(-0.5 ln2 / 0.5) halves the played weight: (0.25, 0.5) -> (1/3, 2/3)
        out, floored = exp3_update(np.array([0.5, 0.5]), 0, math.log(2.0), 0.5)
        np.testing.assert_allclose(out, [1.0 / 3.0, 2.0 / 3.0], rtol=1e-14)
        assert floored == 0

    def test_zero_estimate_leaves_weights_unchanged(self):
        w = np.array([0.2, 0.3, 0.5])
        out, floored = exp3_update(w, 1, 0.0, 0.7)
        np.testing.assert_allclose(out, w, rtol=1e-15)
        assert floored == 0

    def test_positive_estimate_shrinks_played_arm(self):
        out, _ = exp3_update(np.array([0.5, 0.5]), 0, 1.0, 0.1)
        assert out[0] < 0.5
        assert out[1] > 0.5

    def test_negative_estimate_grows_played_arm(self):
        out, _ = exp3_update(np.array([0.5, 0.5]), 1, -1.0, 0.1)
        assert out[1] > 0.5

    def test_input_weights_not_mutated(self):
        w = np.array([0.5, 0.5])
        exp3_update(w, 0, 1.0, 0.1)
        np.testing.assert_array_equal(w, [0.5, 0.5])

    def test_underflow_hits_floor(self):
        out, floored = exp3_update(np.array([0.5, 0.5]), 0, 1e6, 1.0)
        assert floored == 1
        assert 0.0 < out[0] < 1e-250
        np.testing.assert_allclose(out[1], 1.0, rtol=1e-12)

    def test_zero_weight_arm_is_degenerate(self):
        with pytest.raises(DegenerateWeightError):
            exp3_update(np.array([0.0, 1.0]), 0, 1.0, 0.1)

    def test_validation(self):
        with pytest.raises(ValueError):
            exp3_update(np.array([0.5, 0.5]), 2, 1.0, 0.1)
        with pytest.raises(ValueError):
            exp3_update(np.array([0.5, 0.5]), -1, 1.0, 0.1)
        with pytest.raises(ValueError):
            exp3_update(np.array([0.5, 0.6]), 0, 1.0, 0.1)


class TestGameConfig:
    def test_known_calibration(self):
        inst = build_two_point_instance()
        cfg = make_game_config(16, 2, inst.loss, inst.space, 1.0, 1e-5)
        assert cfg.T == 8
        np.testing.assert_allclose(cfg.U, 10.317766166719344, rtol=1e-12)
        np.testing.assert_allclose(cfg.eta_exp3, 0.020172840654287147, rtol=1e-12)
        np.testing.assert_allclose(cfg.sigma_node, 16.782897735219223, rtol=1e-12)
        np.testing.assert_allclose(cfg.eta_ftrl, 0.039763304705178326, rtol=1e-12)

    def test_infinite_epsilon_limits(self):
        inst = build_two_point_instance()
        cfg = make_game_config(16, 2, inst.loss, inst.space, math.inf, 1e-5)
        assert cfg.U == inst.loss.range_bound
        assert cfg.sigma_node == 0.0
        np.testing.assert_allclose(cfg.eta_ftrl, 2.0 / math.sqrt(8.0), rtol=1e-15)

    def test_single_group_disables_bandit_step(self):
        inst = build_two_point_instance()
        cfg = make_game_config(16, 1, inst.loss, inst.space, 1.0, 1e-5)
        assert cfg.eta_exp3 == 0.0

    def test_default_round_count_spends_half_budget(self):
        inst = build_two_point_instance()
        assert make_game_config(64, 2, inst.loss, inst.space, 1.0, 1e-5).T == 32
        assert make_game_config(65, 2, inst.loss, inst.space, 1.0, 1e-5).T == 32

    def test_round_count_validation(self):
        inst = build_two_point_instance()
        with pytest.raises(ValueError, match="rounds"):
            make_game_config(16, 2, inst.loss, inst.space, 1.0, 1e-5, T=1)
        with pytest.raises(ValueError, match="budget"):
            make_game_config(4, 2, inst.loss, inst.space, 1.0, 1e-5, T=10)


class TestRunGame:
    def test_draw_accounting(self):
        inst = build_two_point_instance()
        cfg = make_game_config(64, 2, inst.loss, inst.space, 1.0, 1e-5)
        res = run_game(inst.oracle_set(64), cfg, inst.loss, inst.space, RandomStream(0))
        assert res.draws_used == 2 * (cfg.T - 1)
        assert res.rounds == cfg.T
        assert inst.space.contains(res.w)

    def test_replay_is_bit_identical(self):
        inst = build_two_point_instance()
        cfg = make_game_config(128, 2, inst.loss, inst.space, 1.0, 1e-5)
        runs = [
            run_game(inst.oracle_set(128), cfg, inst.loss, inst.space, RandomStream(7))
            for _ in range(2)
        ]
        assert np.array_equal(runs[0].w, runs[1].w)
        assert np.array_equal(runs[0].lam, runs[1].lam)
        assert runs[0].noise_tail_count == runs[1].noise_tail_count

    def test_single_group_keeps_point_mass(self):
        space = ParamSpace(center=np.zeros(1), diameter=2.0)
        loss = make_loss("affine", 1, space, x_bound=1.0)
        dist = DiscreteDistribution([(np.array([1.0]), 1.0)], [1.0])
        cfg = make_game_config(32, 1, loss, space, 1.0, 1e-5)
        res = run_game(SampleOracleSet([dist], budget=32), cfg, loss, space, RandomStream(0))
        np.testing.assert_array_equal(res.lam, [1.0])

    def test_weights_drift_to_high_loss_group(self):
        # constant group losses 1.0 vs 0.25 under a frozen min player
        space = ParamSpace(center=np.zeros(1), diameter=2.0)
        loss = make_loss("affine", 1, space, x_bound=1.0, b_range=(0.0, 1.0))
        dists = [
            DiscreteDistribution([(np.array([0.0]), 1.0)], [1.0]),
            DiscreteDistribution([(np.array([0.0]), 0.25)], [1.0]),
        ]
        cfg = make_game_config(8000, 2, loss, space, math.inf, 1e-5)
        for seed in range(3):
            res = run_game(
                SampleOracleSet(dists, budget=8000),
                cfg,
                loss,
                space,
                RandomStream(seed),
                player=FixedPlayer([0.0]),
            )
            assert res.lam[0] > 0.8
            assert res.floor_count == 0
            np.testing.assert_allclose(np.sum(res.lam), 1.0, rtol=1e-12)

    def test_trace_matches_average(self):
        inst = build_two_point_instance()
        cfg = make_game_config(40, 2, inst.loss, inst.space, 1.0, 1e-5)
        res = run_game(
            inst.oracle_set(40),
            cfg,
            inst.loss,
            inst.space,
            RandomStream(5),
            record_trace=True,
        )
        assert len(res.w_trace) == cfg.T
        np.testing.assert_array_equal(res.w_trace[0], inst.space.center)
        np.testing.assert_allclose(np.mean(res.w_trace, axis=0), res.w, rtol=1e-12)

    def test_noiseless_run_has_no_tail_events(self):
        inst = build_two_point_instance()
        cfg = make_game_config(64, 2, inst.loss, inst.space, math.inf, 1e-5)
        res = run_game(inst.oracle_set(64), cfg, inst.loss, inst.space, RandomStream(0))
        assert res.noise_tail_count == 0

    def test_tail_events_are_rare_at_long_horizons(self):
        # per-round tail probability is 1/T^2, so ~1/T events in expectation
        inst = build_two_point_instance()
        cfg = make_game_config(4000, 2, inst.loss, inst.space, 1.0, 1e-5)
        res = run_game(inst.oracle_set(4000), cfg, inst.loss, inst.space, RandomStream(0))
        assert res.noise_tail_count <= 2

    def test_tail_frequency_at_two_rounds(self):
        # tail threshold (2B/eps) ln2 is exceeded with probability exactly 1/4
        inst = build_two_point_instance()
        cfg = make_game_config(4, 2, inst.loss, inst.space, 1.0, 1e-5, T=2)
        total = 0
        for seed in range(200):
            res = run_game(inst.oracle_set(4), cfg, inst.loss, inst.space, RandomStream(seed))
            total += res.noise_tail_count
        assert 25 <= total <= 75

    def test_oracle_count_must_match(self):
        inst = build_two_point_instance()
        space = ParamSpace(center=np.zeros(1), diameter=2.0)
        loss = make_loss("affine", 1, space, x_bound=1.0)
        dist = DiscreteDistribution([(np.array([1.0]), 1.0)], [1.0])
        cfg = make_game_config(32, 2, inst.loss, inst.space, 1.0, 1e-5)
        with pytest.raises(ValueError, match="oracle count"):
            run_game(SampleOracleSet([dist], budget=32), cfg, loss, space, RandomStream(0))

    def test_w_init_seeds_the_trace(self):
        inst = build_two_point_instance()
        cfg = make_game_config(24, 2, inst.loss, inst.space, 1.0, 1e-5)
        res = run_game(
            inst.oracle_set(24),
            cfg,
            inst.loss,
            inst.space,
            RandomStream(2),
            w_init=np.array([0.5]),
            record_trace=True,
        )
        np.testing.assert_array_equal(res.w_trace[0], [0.5])

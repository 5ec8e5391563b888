"""Tests for the deterministic randomness layer and numeric helpers."""

import numpy as np
import pytest

from wgdp.numkit import (
    RandomStream,
    categorical_from_uniform,
    check_simplex,
    in_l2_ball,
    neg_entropy,
    project_l2_ball,
    sample_categorical,
    softmax_weights,
    uniform_in_ball,
)


class TestRandomStream:
    def test_replay_is_bit_exact(self):
        """Two streams built from the same seed produce identical draws."""
        a = RandomStream(7)
        b = RandomStream(7)
        assert np.array_equal(a.uniforms(100), b.uniforms(100))
        assert np.array_equal(a.gaussians(50), b.gaussians(50))
        assert np.array_equal(a.integers(13, size=40), b.integers(13, size=40))

    def test_different_seeds_differ(self):
        a = RandomStream(1).uniforms(16)
        b = RandomStream(2).uniforms(16)
        assert not np.array_equal(a, b)

    def test_child_same_key_same_stream(self):
        root = RandomStream(3)
        u1 = root.child("data").uniforms(8)
        u2 = root.child("data").uniforms(8)
        assert np.array_equal(u1, u2)

    def test_child_keys_are_independent(self):
        root = RandomStream(3)
        assert not np.array_equal(root.child("a").uniforms(8), root.child("b").uniforms(8))
        assert not np.array_equal(root.child(0).uniforms(8), root.child(1).uniforms(8))

    def test_child_int_and_str_keys_do_not_collide(self):
        root = RandomStream(3)
        assert not np.array_equal(root.child(0).uniforms(8), root.child("0").uniforms(8))

    def test_child_consumption_does_not_affect_parent(self):
        """Drawing from a child never perturbs the parent sequence."""
        a = RandomStream(11)
        b = RandomStream(11)
        a.child("side").uniforms(100)
        assert np.array_equal(a.uniforms(10), b.uniforms(10))

    def test_nested_children_replay(self):
        a = RandomStream(5).child("x").child(4).child("y")
        b = RandomStream(5).child("x").child(4).child("y")
        assert np.array_equal(a.uniforms(5), b.uniforms(5))

    def test_child_key_validation(self):
        root = RandomStream(0)
        with pytest.raises(ValueError):
            root.child(-1)
        with pytest.raises(TypeError):
            root.child(1.5)
        with pytest.raises(TypeError):
            root.child(("a", 1))

    def test_gaussian_uses_two_uniforms(self):
        s = RandomStream(9)
        s.gaussians(10)
        assert s.position == 20
        s.gaussian()
        assert s.position == 22

    def test_gaussian_split_invariance(self):
        """Splitting one gaussian request into pieces replays the same values."""
        whole = RandomStream(21).gaussians(7)
        s = RandomStream(21)
        parts = np.concatenate([s.gaussians(2), s.gaussians(4), s.gaussians(1)])
        assert np.array_equal(whole, parts)

    def test_position_counts_uniform_draws(self):
        s = RandomStream(2)
        s.uniform()
        assert s.position == 1
        s.uniforms(5)
        assert s.position == 6
        s.integers(10, size=4)
        assert s.position == 10
        s.integers(10)
        assert s.position == 11

    def test_integers_range_and_dtype(self):
        s = RandomStream(13)
        vals = s.integers(7, size=1000)
        assert vals.dtype == np.int64
        assert vals.min() >= 0
        assert vals.max() <= 6
        scalar = s.integers(7)
        assert isinstance(scalar, int)
        assert 0 <= scalar < 7

    def test_integers_rejects_nonpositive_high(self):
        with pytest.raises(ValueError):
            RandomStream(0).integers(0)

    def test_gaussian_moments(self):
        """Box-Muller output matches a standard normal in mean and variance."""
        g = RandomStream(17).gaussians(200_000)
        assert abs(float(np.mean(g))) < 0.01
        np.testing.assert_allclose(float(np.var(g)), 1.0, atol=0.02)


class TestProjection:
    def test_known_point(self):
        out = project_l2_ball(np.array([3.0, 4.0]), np.zeros(2), 1.0)
        np.testing.assert_allclose(out, [0.6, 0.8], rtol=1e-15)

    def test_interior_point_unchanged(self):
        v = np.array([0.1, -0.2])
        out = project_l2_ball(v, np.zeros(2), 1.0)
        assert np.array_equal(out, v)
        out[0] = 99.0
        assert v[0] == 0.1

    def test_idempotent_bit_exact(self):
        """Projecting a projected point returns it unchanged, bit for bit."""
        rng = np.random.default_rng(42)
        center = np.array([0.5, -1.0, 2.0])
        for _ in range(200):
            v = rng.normal(size=3) * 10.0
            once = project_l2_ball(v, center, 0.75)
            twice = project_l2_ball(once, center, 0.75)
            assert np.array_equal(once, twice)
            assert in_l2_ball(once, center, 0.75)

    def test_contraction(self):
        """Projection onto a convex set never expands distances."""
        rng = np.random.default_rng(7)
        center = np.zeros(4)
        for _ in range(200):
            x = rng.normal(size=4) * 5.0
            y = rng.normal(size=4) * 5.0
            px = project_l2_ball(x, center, 1.0)
            py = project_l2_ball(y, center, 1.0)
            assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            project_l2_ball(np.zeros(2), np.zeros(3), 1.0)

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            project_l2_ball(np.zeros(2), np.zeros(2), -1.0)

    def test_zero_radius_maps_to_center(self):
        center = np.array([1.0, 2.0])
        out = project_l2_ball(np.array([5.0, 5.0]), center, 0.0)
        np.testing.assert_allclose(out, center, atol=0)


class TestSimplexHelpers:
    def test_check_simplex_accepts_valid(self):
        w = check_simplex(np.array([0.25, 0.75]))
        np.testing.assert_allclose(w, [0.25, 0.75], atol=0)

    def test_check_simplex_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            check_simplex(np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            check_simplex(np.array([-0.1, 1.1]))
        with pytest.raises(ValueError):
            check_simplex(np.array([[0.5, 0.5]]))
        with pytest.raises(ValueError):
            check_simplex(np.array([]))

    def test_neg_entropy_known_values(self):
        np.testing.assert_allclose(
            neg_entropy(np.array([1.0 / 3.0, 2.0 / 3.0])), -0.6365141682948128, rtol=1e-15
        )
        np.testing.assert_allclose(
            neg_entropy(np.full(4, 0.25)), -np.log(4.0), rtol=1e-15
        )
        assert neg_entropy(np.array([0.0, 1.0])) == 0.0

    def test_neg_entropy_bounds(self):
        """w . log w lies in [-log p, 0] on the simplex."""
        rng = np.random.default_rng(3)
        for _ in range(100):
            p = int(rng.integers(2, 12))
            w = rng.random(p)
            w = w / w.sum()
            val = neg_entropy(w)
            assert -np.log(p) - 1e-12 <= val <= 0.0

    def test_softmax_known_value(self):
        out = softmax_weights(np.array([0.0, np.log(2.0)]), 1.0)
        np.testing.assert_allclose(out, [1.0 / 3.0, 2.0 / 3.0], rtol=1e-14)

    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            s = rng.normal(size=6) * 50.0
            base = softmax_weights(s, 0.7)
            shifted = softmax_weights(s + 123.456, 0.7)
            np.testing.assert_allclose(base, shifted, atol=1e-12)

    def test_softmax_matches_direct_formula(self):
        """Cross-check against the unshifted definition where it is stable."""
        rng = np.random.default_rng(11)
        for _ in range(100):
            s = rng.normal(size=5)
            t = float(rng.uniform(0.2, 3.0))
            direct = np.exp(s / t)
            direct = direct / direct.sum()
            np.testing.assert_allclose(softmax_weights(s, t), direct, rtol=1e-12)

    def test_softmax_extreme_scores(self):
        out = softmax_weights(np.array([1e6, -1e6, 0.0]), 1.0)
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out.sum(), 1.0, rtol=1e-12)
        assert out[0] > 0.999

    def test_softmax_rejects_bad_temperature(self):
        with pytest.raises(ValueError):
            softmax_weights(np.array([0.0, 1.0]), 0.0)


class TestCategorical:
    def test_known_value(self):
        assert categorical_from_uniform(np.array([0.5, 0.5]), 0.7) == 1

    def test_boundaries(self):
        w = np.array([0.5, 0.5])
        assert categorical_from_uniform(w, 0.0) == 0
        assert categorical_from_uniform(w, 0.4999999) == 0
        assert categorical_from_uniform(w, 0.5) == 1
        assert categorical_from_uniform(w, 0.9999999) == 1

    def test_point_mass(self):
        w = np.array([0.0, 1.0, 0.0])
        for u in (0.0, 0.3, 0.99):
            assert categorical_from_uniform(w, u) == 1

    def test_empirical_frequencies(self):
        """Sampled frequencies match the weights."""
        w = np.array([0.2, 0.5, 0.3])
        rng = RandomStream(23)
        counts = np.zeros(3)
        n = 50_000
        for _ in range(n):
            counts[sample_categorical(w, rng)] += 1
        np.testing.assert_allclose(counts / n, w, atol=0.01)

    def test_sample_consumes_one_draw(self):
        rng = RandomStream(1)
        sample_categorical(np.array([0.5, 0.5]), rng)
        assert rng.position == 1


class TestUniformInBall:
    def test_stays_inside(self):
        rng = RandomStream(31)
        center = np.array([1.0, -2.0, 0.5])
        for _ in range(200):
            x = uniform_in_ball(center, 0.8, rng)
            assert in_l2_ball(x, center, 0.8)

    def test_draw_count(self):
        """d-dimensional draw uses d gaussians (2d uniforms) plus one uniform."""
        rng = RandomStream(4)
        uniform_in_ball(np.zeros(5), 1.0, rng)
        assert rng.position == 11

    def test_zero_radius(self):
        rng = RandomStream(4)
        out = uniform_in_ball(np.array([2.0, 3.0]), 0.0, rng)
        np.testing.assert_allclose(out, [2.0, 3.0], atol=0)

    def test_mean_near_center(self):
        rng = RandomStream(6)
        draws = np.array([uniform_in_ball(np.zeros(2), 1.0, rng) for _ in range(20_000)])
        np.testing.assert_allclose(draws.mean(axis=0), [0.0, 0.0], atol=0.02)

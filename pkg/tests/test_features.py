import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_grid
from stereomem.features import (
    ContextWeights,
    ProjectionWeights,
    TokenGrid,
    build_pyramid,
    encode_context,
    pooled_phi,
    project_qk,
)
from stereomem.raster import FloatRaster


class TestPyramid:
    def test_constant_image_zero_gradients(self):
        image = FloatRaster(np.full((32, 32), 3.0, dtype=np.float32))
        pyramid = build_pyramid(image, channels=8, seed=0)
        for grid in pyramid.values():
            assert np.all(grid.data[:, :, 1] == 0.0)
            assert np.all(grid.data[:, :, 2] == 0.0)

    def test_shapes(self):
        image = FloatRaster(np.zeros((64, 64), dtype=np.float32))
        pyramid = build_pyramid(image, channels=8)
        assert pyramid[1 / 4].data.shape == (16, 16, 8)
        assert pyramid[1 / 8].data.shape == (8, 8, 8)
        assert pyramid[1 / 16].data.shape == (4, 4, 8)

    def test_horizontal_ramp_gradients(self):
        xs = np.arange(32, dtype=np.float32)
        image = FloatRaster(np.tile(xs, (32, 1)))
        pyramid = build_pyramid(image, channels=8)
        for s, grid in pyramid.items():
            factor = round(1 / s)
            gx = grid.data[:, :, 1]
            gy = grid.data[:, :, 2]
            # box-averaged ramp keeps slope = factor per downsampled pixel
            assert np.allclose(gx, factor, atol=1e-9)
            assert np.all(gx > 0)
            assert np.allclose(gy, 0.0, atol=1e-12)

    def test_small_image_rejected(self):
        with pytest.raises(ValueError):
            build_pyramid(FloatRaster(np.zeros((8, 32), dtype=np.float32)), channels=8)

    def test_channel_minimum(self):
        with pytest.raises(ValueError):
            build_pyramid(FloatRaster(np.zeros((32, 32), dtype=np.float32)), channels=3)

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(0)
        image = FloatRaster(rng.random((32, 32)).astype(np.float32))
        a = build_pyramid(image, channels=8, seed=7)
        b = build_pyramid(image, channels=8, seed=7)
        for s in a:
            assert np.array_equal(a[s].data, b[s].data)


class TestContextAndProjections:
    def test_identity_context(self, rng):
        grid = random_grid(rng, 4, 4, 6)
        out = encode_context({0.25: grid}, ContextWeights.identity(6))[0.25]
        assert np.array_equal(out.data, grid.data)

    def test_zero_input(self, rng):
        grid = TokenGrid(scale=0.25, data=np.zeros((4, 4, 6)))
        out = encode_context({0.25: grid}, ContextWeights.seeded(1, 6))[0.25]
        assert np.all(out.data == 0.0)

    def test_seeded_context_deterministic(self, rng):
        grid = random_grid(rng, 4, 4, 6)
        a = encode_context({0.25: grid}, ContextWeights.seeded(3, 6))[0.25]
        b = encode_context({0.25: grid}, ContextWeights.seeded(3, 6))[0.25]
        assert np.array_equal(a.data, b.data)

    def test_identity_projection(self, rng):
        grid = random_grid(rng, 3, 5, 4)
        q, k = project_qk(grid, ProjectionWeights.identity(4))
        assert np.array_equal(q.data, grid.data)
        assert np.array_equal(k.data, grid.data)

    def test_zero_projection(self, rng):
        grid = random_grid(rng, 3, 5, 4)
        q, k = project_qk(grid, ProjectionWeights.zeros(4))
        assert np.all(q.data == 0.0)
        assert np.all(k.data == 0.0)

    def test_projection_linearity(self, rng):
        weights = ProjectionWeights.seeded(5, 6)
        grid = random_grid(rng, 4, 4, 6)
        scaled = TokenGrid(scale=grid.scale, data=2.5 * grid.data)
        q1, k1 = project_qk(grid, weights)
        q2, k2 = project_qk(scaled, weights)
        assert np.allclose(q2.data, 2.5 * q1.data, rtol=1e-6)
        assert np.allclose(k2.data, 2.5 * k1.data, rtol=1e-6)

    def test_channel_mismatch(self, rng):
        grid = random_grid(rng, 3, 3, 5)
        with pytest.raises(ValueError):
            project_qk(grid, ProjectionWeights.seeded(0, 4))
        with pytest.raises(ValueError):
            encode_context({0.25: grid}, ContextWeights.seeded(0, 4))

    def test_seeded_regeneration_bit_identical(self):
        a = ProjectionWeights.seeded(9, 8)
        b = ProjectionWeights.seeded(9, 8)
        assert np.array_equal(a.w_query, b.w_query)
        assert np.array_equal(a.w_key, b.w_key)
        assert np.array_equal(a.w_value, b.w_value)


class TestPooledPhi:
    def test_unit_norm(self, rng):
        grid = random_grid(rng, 5, 7, 3)
        desc = pooled_phi(grid, 2)
        assert abs(np.linalg.norm(desc.vector) - 1.0) < 1e-6

    def test_scale_invariance_constant(self):
        g1 = TokenGrid(scale=0.25, data=np.full((4, 4, 2), 1.0))
        g2 = TokenGrid(scale=0.25, data=np.full((4, 4, 2), 2.0))
        d1 = pooled_phi(g1, 2)
        d2 = pooled_phi(g2, 2)
        assert np.allclose(d1.vector, d2.vector, atol=1e-12)

    def test_hand_computed_pooling(self):
        grid = TokenGrid(
            scale=0.25, data=np.arange(1.0, 17.0).reshape(4, 4, 1)
        )
        desc = pooled_phi(grid, 2)
        pooled = np.array([3.5, 5.5, 11.5, 13.5])
        expected = pooled / np.linalg.norm(pooled)
        assert np.allclose(desc.vector, expected, atol=1e-12)
        assert (desc.pooled_height, desc.pooled_width) == (2, 2)

    def test_zero_grid_flagged(self):
        desc = pooled_phi(TokenGrid(scale=0.25, data=np.zeros((4, 4, 2))), 2)
        assert desc.is_zero
        assert np.all(desc.vector == 0.0)

    def test_matches_oracle_with_padding(self, rng):
        for _ in range(20):
            h, w, c = rng.integers(1, 9, size=3)
            pf = int(rng.integers(1, 5))
            grid = random_grid(rng, int(h), int(w), int(c))
            desc = pooled_phi(grid, pf)
            vec, is_zero = oracles.pool_phi(grid.data, pf)
            assert not is_zero
            assert np.max(np.abs(desc.vector - vec)) < 1e-12

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), scale=st.floats(0.1, 50.0))
    def test_scale_invariance_property(self, seed, scale):
        rng = np.random.default_rng(seed)
        data = rng.standard_normal((4, 6, 3))
        d1 = pooled_phi(TokenGrid(scale=0.25, data=data), 2)
        d2 = pooled_phi(TokenGrid(scale=0.25, data=scale * data), 2)
        assert np.max(np.abs(d1.vector - d2.vector)) < 1e-6

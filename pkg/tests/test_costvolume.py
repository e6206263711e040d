import numpy as np
import pytest

import oracles
from conftest import random_grid
from stereomem.costvolume import (
    CostEncoderWeights,
    block_match_disparity,
    build_correlation,
    encode_cost,
    lookup,
    wta_disparity,
)
from stereomem.features import ProjectionWeights, TokenGrid


class TestCorrelation:
    def test_constant_unit_features_self_match(self):
        c = 9
        data = np.ones((3, 4, c))
        left = TokenGrid(scale=0.25, data=data)
        right = TokenGrid(scale=0.25, data=data.copy())
        vol = build_correlation(left, right, 3)
        assert np.allclose(vol.data[:, :, 0], np.sqrt(c), atol=1e-12)

    def test_orthogonal_features_zero(self):
        left = np.zeros((2, 3, 4))
        right = np.zeros((2, 3, 4))
        left[..., 0] = 1.0
        right[..., 1] = 1.0
        vol = build_correlation(
            TokenGrid(scale=0.25, data=left), TokenGrid(scale=0.25, data=right), 2
        )
        assert np.all(vol.data == 0.0)

    def test_shifted_argmax(self, rng):
        # unit-norm tokens make the aligned match the strict maximum
        c = 6
        left_data = rng.standard_normal((4, 10, c))
        left_data /= np.linalg.norm(left_data, axis=2, keepdims=True)
        right_data = np.zeros_like(left_data)
        right_data[:, :-2, :] = left_data[:, 2:, :]  # right = left shifted by 2
        vol = build_correlation(
            TokenGrid(scale=0.25, data=left_data),
            TokenGrid(scale=0.25, data=right_data),
            5,
        )
        arg = vol.data.argmax(axis=2)
        assert np.all(arg[:, 2:8] == 2)
        assert np.all(wta_disparity(vol)[:, 2:8] == 2.0)

    def test_matches_oracle(self, rng):
        for _ in range(10):
            h, w, c = int(rng.integers(2, 6)), int(rng.integers(3, 8)), int(rng.integers(2, 6))
            D = int(rng.integers(1, w + 1))
            left = random_grid(rng, h, w, c)
            right = random_grid(rng, h, w, c)
            vol = build_correlation(left, right, D)
            ref = oracles.correlation(left.data, right.data, D)
            assert np.max(np.abs(vol.data - ref)) < 1e-12

    def test_symmetry_relation(self, rng):
        # swapping views and negating the shift transposes the matching
        # relation: corr_LR(x+d, d) == <R(x), L(x+d)> / sqrt(C)
        left = random_grid(rng, 3, 7, 4)
        right = random_grid(rng, 3, 7, 4)
        D = 4
        lr = build_correlation(left, right, D).data
        for y in range(3):
            for x in range(7):
                for d in range(D):
                    if x + d < 7:
                        rl = float(right.data[y, x] @ left.data[y, x + d]) / np.sqrt(4)
                        assert abs(lr[y, x + d, d] - rl) < 1e-9

    def test_shape_and_range_errors(self, rng):
        a = random_grid(rng, 3, 4, 4)
        b = random_grid(rng, 3, 5, 4)
        with pytest.raises(ValueError):
            build_correlation(a, b, 2)
        with pytest.raises(ValueError):
            build_correlation(a, a, 5)


class TestLookup:
    def test_integer_disparity_equals_indexing(self, rng):
        left = random_grid(rng, 4, 8, 4)
        right = random_grid(rng, 4, 8, 4)
        vol = build_correlation(left, right, 6)
        disp = rng.integers(0, 6, size=(4, 8)).astype(np.float64)
        out = lookup(vol, disp, radius=0)
        rows, cols = np.indices((4, 8))
        expected = vol.data[rows, cols, disp.astype(int)]
        assert np.array_equal(out.data[:, :, 0], expected)

    def test_center_channel_is_max_for_exact_shift(self, rng):
        c = 6
        left_data = rng.standard_normal((4, 10, c))
        left_data /= np.linalg.norm(left_data, axis=2, keepdims=True)
        right_data = np.zeros_like(left_data)
        right_data[:, :-2, :] = left_data[:, 2:, :]
        vol = build_correlation(
            TokenGrid(scale=0.25, data=left_data),
            TokenGrid(scale=0.25, data=right_data),
            5,
        )
        out = lookup(vol, np.full((4, 10), 2.0), radius=1)
        interior = out.data[:, 2:8, :]
        assert np.all(interior.argmax(axis=2) == 1)

    def test_zero_volume(self):
        from stereomem.costvolume import CorrelationVolume

        vol = CorrelationVolume(scale=0.25, data=np.zeros((3, 4, 5)))
        out = lookup(vol, np.full((3, 4), 2.0), radius=2)
        assert out.data.shape == (3, 4, 5)
        assert np.all(out.data == 0.0)

    def test_radius_zero_single_channel(self, rng):
        left = random_grid(rng, 2, 4, 3)
        vol = build_correlation(left, left, 2)
        out = lookup(vol, np.zeros((2, 4)), radius=0)
        assert out.data.shape == (2, 4, 1)

    def test_matches_oracle_fractional(self, rng):
        for _ in range(10):
            h, w = int(rng.integers(2, 5)), int(rng.integers(3, 7))
            D = int(rng.integers(2, w + 1))
            vol_data = rng.standard_normal((h, w, D))
            from stereomem.costvolume import CorrelationVolume

            vol = CorrelationVolume(scale=0.25, data=vol_data)
            disp = rng.uniform(-2, D + 2, size=(h, w))
            radius = int(rng.integers(0, 4))
            out = lookup(vol, disp, radius)
            ref = oracles.lookup(vol_data, disp, radius)
            assert np.max(np.abs(out.data - ref)) < 1e-12


class TestEncodeCost:
    def test_zero_volume_zero_outputs(self):
        from stereomem.costvolume import CorrelationVolume

        vol = CorrelationVolume(scale=0.25, data=np.zeros((3, 4, 5)))
        cw = CostEncoderWeights.seeded(0, 5, 6)
        pw = ProjectionWeights.seeded(0, 6)
        cf = encode_cost(vol, cw, pw)
        assert np.all(cf.cost.data == 0.0)
        assert np.all(cf.value.data == 0.0)

    def test_deterministic(self, rng):
        from stereomem.costvolume import CorrelationVolume

        data = rng.standard_normal((3, 4, 5))
        vol = CorrelationVolume(scale=0.25, data=data)
        args = (CostEncoderWeights.seeded(7, 5, 6), ProjectionWeights.seeded(7, 6))
        a = encode_cost(vol, *args)
        b = encode_cost(vol, *args)
        assert np.array_equal(a.cost.data, b.cost.data)
        assert np.array_equal(a.value.data, b.value.data)

    def test_linearity(self, rng):
        from stereomem.costvolume import CorrelationVolume

        data = rng.standard_normal((3, 4, 5))
        cw = CostEncoderWeights.seeded(1, 5, 6)
        pw = ProjectionWeights.seeded(1, 6)
        a = encode_cost(CorrelationVolume(scale=0.25, data=data), cw, pw)
        b = encode_cost(CorrelationVolume(scale=0.25, data=3.0 * data), cw, pw)
        assert np.allclose(b.cost.data, 3.0 * a.cost.data, rtol=1e-6)
        assert np.allclose(b.value.data, 3.0 * a.value.data, rtol=1e-6)

    def test_dimension_mismatch(self, rng):
        from stereomem.costvolume import CorrelationVolume

        vol = CorrelationVolume(scale=0.25, data=rng.standard_normal((3, 4, 5)))
        with pytest.raises(ValueError):
            encode_cost(vol, CostEncoderWeights.seeded(0, 4, 6), ProjectionWeights.seeded(0, 6))


class TestBlockMatch:
    def test_recovers_constant_shift(self, rng):
        left = rng.random((12, 24))
        right = np.zeros_like(left)
        right[:, :-3] = left[:, 3:]
        disp = block_match_disparity(left, right, 6)
        assert np.all(disp[:, 6:20] == 3.0)

"""Per-frame correlation volume, cost encoding, and windowed lookup."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import ProjectionWeights, TokenGrid


@dataclass(frozen=True)
class CorrelationVolume:
    """corr[y, x, d] = <left(y, x), right(y, x - d)> / sqrt(C), zero out of bounds."""

    scale: float
    data: np.ndarray  # (sH, sW, D)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def max_disparity(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class CostFeature:
    """Encoded matching costs and their value embedding, both C channels."""

    cost: TokenGrid
    value: TokenGrid


@dataclass(frozen=True)
class CostEncoderWeights:
    """Seeded linear map from D correlation channels to C cost channels."""

    seed: int
    max_disparity: int
    channels: int
    w_cost: np.ndarray

    @classmethod
    def seeded(cls, seed: int, max_disparity: int, channels: int) -> "CostEncoderWeights":
        w = np.random.default_rng([seed, 41]).standard_normal((max_disparity, channels))
        return cls(seed, max_disparity, channels, w / np.sqrt(max_disparity))


def build_correlation(left: TokenGrid, right: TokenGrid, max_disparity: int) -> CorrelationVolume:
    """Dot-product correlation over candidate disparities d in [0, D)."""
    if left.data.shape != right.data.shape:
        raise ValueError(
            f"left/right grids differ: {left.data.shape} vs {right.data.shape}"
        )
    h, w, c = left.data.shape
    if not 1 <= max_disparity <= w:
        raise ValueError(f"max_disparity must be in [1, {w}], got {max_disparity}")
    vol = np.zeros((h, w, max_disparity))
    norm = np.sqrt(c)
    for d in range(max_disparity):
        if d == 0:
            vol[:, :, 0] = (left.data * right.data).sum(axis=2) / norm
        else:
            vol[:, d:, d] = (left.data[:, d:, :] * right.data[:, :-d, :]).sum(axis=2) / norm
    return CorrelationVolume(scale=left.scale, data=vol)


def lookup(volume: CorrelationVolume, disparity: np.ndarray, radius: int) -> TokenGrid:
    """Sample the volume in a window around each pixel's disparity.

    Per token, channels hold corr at d = disparity + offset for offsets in
    [-radius, radius], linearly interpolated along d; samples outside
    [0, D-1] read as zero.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    disparity = np.asarray(disparity, dtype=np.float64)
    if disparity.shape != (volume.height, volume.width):
        raise ValueError(
            f"disparity shape {disparity.shape} does not match volume "
            f"{(volume.height, volume.width)}"
        )
    D = volume.max_disparity
    out = np.zeros((volume.height, volume.width, 2 * radius + 1))
    for j, off in enumerate(range(-radius, radius + 1)):
        pos = disparity + off
        lo = np.floor(pos)
        frac = pos - lo
        lo_i = lo.astype(np.int64)
        hi_i = lo_i + 1
        lo_ok = (lo_i >= 0) & (lo_i < D)
        hi_ok = (hi_i >= 0) & (hi_i < D)
        lo_val = np.where(lo_ok, np.take_along_axis(
            volume.data, np.clip(lo_i, 0, D - 1)[..., None], axis=2)[..., 0], 0.0)
        hi_val = np.where(hi_ok, np.take_along_axis(
            volume.data, np.clip(hi_i, 0, D - 1)[..., None], axis=2)[..., 0], 0.0)
        out[:, :, j] = (1.0 - frac) * lo_val + frac * hi_val
    return TokenGrid(scale=volume.scale, data=out)


def encode_cost(
    volume: CorrelationVolume,
    weights: CostEncoderWeights,
    projection: ProjectionWeights,
) -> CostFeature:
    """Encode the volume to F_cost (D -> C) and project it to the value
    embedding (C -> C, using the projection's value map)."""
    if weights.max_disparity != volume.max_disparity:
        raise ValueError(
            f"cost encoder expects D={weights.max_disparity}, volume has {volume.max_disparity}"
        )
    if projection.channels != weights.channels:
        raise ValueError("projection and cost encoder channel counts differ")
    h, w, D = volume.data.shape
    cost_tokens = volume.data.reshape(-1, D) @ weights.w_cost
    value_tokens = cost_tokens @ projection.w_value
    shape = (h, w, weights.channels)
    return CostFeature(
        cost=TokenGrid(scale=volume.scale, data=cost_tokens.reshape(shape)),
        value=TokenGrid(scale=volume.scale, data=value_tokens.reshape(shape)),
    )


def wta_disparity(volume: CorrelationVolume) -> np.ndarray:
    """Winner-take-all argmax disparity per pixel (float array)."""
    return volume.data.argmax(axis=2).astype(np.float64)


def block_match_disparity(
    left: np.ndarray, right: np.ndarray, max_disparity: int, window: int = 3
) -> np.ndarray:
    """Window-aggregated absolute-difference block matching on intensities.

    A training-free full-resolution estimator used to seed the photometric
    confidence proxy.  Ties and out-of-range candidates resolve to the lower
    disparity; inputs may be (H, W) or (H, W, 3).
    """
    L = np.asarray(left, dtype=np.float64)
    R = np.asarray(right, dtype=np.float64)
    if L.ndim == 3:
        L = L.mean(axis=2)
    if R.ndim == 3:
        R = R.mean(axis=2)
    if L.shape != R.shape:
        raise ValueError("left/right shapes differ")
    if window % 2 != 1 or window < 1:
        raise ValueError("window must be odd and positive")
    h, w = L.shape
    max_disparity = min(max_disparity, w)
    half = window // 2
    oob_cost = 4.0  # larger than any real |difference| of unit-range images
    best = np.zeros((h, w))
    best_cost = np.full((h, w), np.inf)
    for d in range(max_disparity):
        diff = np.full((h, w), oob_cost)
        if d == 0:
            diff[:] = np.abs(L - R)
        else:
            diff[:, d:] = np.abs(L[:, d:] - R[:, :-d])
        padded = np.pad(diff, half, mode="edge")
        win = np.lib.stride_tricks.sliding_window_view(padded, (window, window))
        agg = win.mean(axis=(2, 3))
        better = agg < best_cost
        best[better] = d
        best_cost[better] = agg[better]
    return best

"""Deterministic multi-scale features and the query/key/value projections.

A seeded, training-free stand-in for learned encoders: per scale the token
grid carries box-downsampled intensity, horizontal and vertical gradients,
and fixed random projections of the local 3x3 intensity patch.  Every
operation here is a pure function of (input, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import FloatRaster

SCALES = (1 / 16, 1 / 8, 1 / 4)
MIN_IMAGE_SIDE = 16


@dataclass(frozen=True)
class TokenGrid:
    """A C-channel feature grid at scale ``scale``, viewable as tokens.

    ``data`` has shape (sH, sW, C); ``tokens()`` is the row-major
    (sH*sW, C) view.
    """

    scale: float
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"token grid must be (H, W, C), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("token grid contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def token_count(self) -> int:
        return self.data.shape[0] * self.data.shape[1]

    def tokens(self) -> np.ndarray:
        return self.data.reshape(-1, self.data.shape[2])


@dataclass(frozen=True)
class PooledDescriptor:
    """Average-pooled, flattened, L2-normalized grid descriptor.

    ``is_zero`` flags an all-zero input, whose normalization is undefined;
    callers treat its similarity as 0.
    """

    pooled_height: int
    pooled_width: int
    vector: np.ndarray
    is_zero: bool = False

    @property
    def dim(self) -> int:
        return self.vector.size


@dataclass(frozen=True)
class ProjectionWeights:
    """Per-token linear maps (C -> C) for query, key, and value embeddings."""

    seed: int | None
    channels: int
    w_query: np.ndarray
    w_key: np.ndarray
    w_value: np.ndarray

    @classmethod
    def seeded(cls, seed: int, channels: int) -> "ProjectionWeights":
        scale = 1.0 / np.sqrt(channels)
        mats = [
            np.random.default_rng([seed, 21 + k]).standard_normal((channels, channels)) * scale
            for k in range(3)
        ]
        return cls(seed, channels, *mats)

    @classmethod
    def identity(cls, channels: int) -> "ProjectionWeights":
        eye = np.eye(channels)
        return cls(None, channels, eye, eye.copy(), eye.copy())

    @classmethod
    def zeros(cls, channels: int) -> "ProjectionWeights":
        z = np.zeros((channels, channels))
        return cls(None, channels, z, z.copy(), z.copy())


@dataclass(frozen=True)
class ContextWeights:
    """Fixed linear map applied per token by the context encoder."""

    seed: int | None
    w: np.ndarray

    @classmethod
    def seeded(cls, seed: int, channels: int) -> "ContextWeights":
        w = np.random.default_rng([seed, 31]).standard_normal((channels, channels))
        return cls(seed, w / np.sqrt(channels))

    @classmethod
    def identity(cls, channels: int) -> "ContextWeights":
        return cls(None, np.eye(channels))


def _intensity(image) -> np.ndarray:
    arr = image.data if isinstance(image, FloatRaster) else np.asarray(image)
    arr = arr.astype(np.float64)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    return arr


def box_downsample(arr: np.ndarray, factor: int, out_h: int, out_w: int) -> np.ndarray:
    """Average over factor*factor blocks, edge-padding or truncating so the
    source covers exactly out_h*factor rows and out_w*factor columns."""
    need_h, need_w = out_h * factor, out_w * factor
    h, w = arr.shape
    if h < need_h or w < need_w:
        arr = np.pad(arr, ((0, max(0, need_h - h)), (0, max(0, need_w - w))), mode="edge")
    arr = arr[:need_h, :need_w]
    return arr.reshape(out_h, factor, out_w, factor).mean(axis=(1, 3))


def _patch_stack(arr: np.ndarray) -> np.ndarray:
    """3x3 neighborhoods with edge replication, shape (H, W, 9)."""
    padded = np.pad(arr, 1, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3))
    return windows.reshape(arr.shape[0], arr.shape[1], 9)


def patch_projection_matrix(seed: int, extra_channels: int) -> np.ndarray:
    """Fixed random projection from a flattened 3x3 patch to extra channels."""
    return np.random.default_rng([seed, 11]).standard_normal((9, extra_channels)) / 3.0


def build_pyramid(image, channels: int, seed: int = 0) -> dict:
    """Token grids at every scale in SCALES, keyed by scale.

    Channel layout per scale: [intensity, d/dx, d/dy, patch projections].
    Requires channels >= 4 and an image at least 16x16.
    """
    if channels < 4:
        raise ValueError(f"need at least 4 channels, got {channels}")
    intensity = _intensity(image)
    h, w = intensity.shape
    if h < MIN_IMAGE_SIDE or w < MIN_IMAGE_SIDE:
        raise ValueError(f"image {w}x{h} smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}")
    proj = patch_projection_matrix(seed, channels - 3)

    pyramid = {}
    for s in SCALES:
        factor = int(round(1 / s))
        out_h = int(round(h * s))
        out_w = int(round(w * s))
        base = box_downsample(intensity, factor, out_h, out_w)
        gx = np.gradient(base, axis=1) if out_w > 1 else np.zeros_like(base)
        gy = np.gradient(base, axis=0) if out_h > 1 else np.zeros_like(base)
        extra = _patch_stack(base) @ proj
        data = np.concatenate([base[..., None], gx[..., None], gy[..., None], extra], axis=2)
        pyramid[s] = TokenGrid(scale=s, data=data)
    return pyramid


def encode_context(pyramid: dict, weights: ContextWeights | None = None) -> dict:
    """Apply the context map per token at every scale; None means identity."""
    if weights is None:
        return dict(pyramid)
    out = {}
    for s, grid in pyramid.items():
        if grid.channels != weights.w.shape[0]:
            raise ValueError(
                f"context weights expect {weights.w.shape[0]} channels, grid has {grid.channels}"
            )
        data = grid.tokens() @ weights.w
        out[s] = TokenGrid(scale=s, data=data.reshape(grid.data.shape))
    return out


def project_qk(context: TokenGrid, weights: ProjectionWeights):
    """Per-token query and key projections of a context grid."""
    if context.channels != weights.channels:
        raise ValueError(
            f"projection expects {weights.channels} channels, grid has {context.channels}"
        )
    toks = context.tokens()
    q = (toks @ weights.w_query).reshape(context.data.shape)
    k = (toks @ weights.w_key).reshape(context.data.shape)
    return (
        TokenGrid(scale=context.scale, data=q),
        TokenGrid(scale=context.scale, data=k),
    )


def pooled_phi(grid: TokenGrid, pool_factor: int) -> PooledDescriptor:
    """Average-pool spatially, flatten, L2-normalize.

    Grids whose sides do not divide by pool_factor are edge-replicated up to
    the next multiple.  An all-zero grid returns the zero vector flagged.
    """
    if pool_factor < 1:
        raise ValueError("pool_factor must be >= 1")
    h, w = grid.height, grid.width
    out_h = -(-h // pool_factor)
    out_w = -(-w // pool_factor)
    arr = grid.data
    pad_h = out_h * pool_factor - h
    pad_w = out_w * pool_factor - w
    if pad_h or pad_w:
        arr = np.pad(arr, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
    pooled = arr.reshape(out_h, pool_factor, out_w, pool_factor, -1).mean(axis=(1, 3))
    vec = pooled.reshape(-1)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        return PooledDescriptor(out_h, out_w, np.zeros_like(vec), is_zero=True)
    return PooledDescriptor(out_h, out_w, vec / norm, is_zero=False)

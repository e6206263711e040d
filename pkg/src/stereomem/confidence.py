"""Frame confidence: a small convolutional head, its analytic gradients, the
exponential ground-truth target, the iteration-weighted L1 loss, and a
training-free photometric proxy.

The head maps a value embedding (C channels) through conv3x3 -> tanh ->
conv3x3 -> sigmoid to a per-pixel confidence in (0, 1).  Gradients are
hand-rolled and verified against central finite differences in the tests.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .convops import conv2d, conv2d_backward, sigmoid
from .errors import NumericsError
from .features import TokenGrid

HEAD_MAGIC = b"CFH1"
HEAD_VERSION = 1


@dataclass
class ConfidenceHead:
    """Two 3x3 conv layers (C -> hidden -> 1) with a sigmoid output."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    seed: int | None = None

    @property
    def in_channels(self) -> int:
        return self.w1.shape[2]

    @property
    def hidden_channels(self) -> int:
        return self.w1.shape[3]

    @classmethod
    def seeded(cls, seed: int, channels: int, hidden: int = 16) -> "ConfidenceHead":
        rng = np.random.default_rng([seed, 51])
        s1 = 1.0 / np.sqrt(9 * channels)
        s2 = 1.0 / np.sqrt(9 * hidden)
        return cls(
            w1=rng.standard_normal((3, 3, channels, hidden)) * s1,
            b1=rng.standard_normal(hidden) * 0.1,
            w2=rng.standard_normal((3, 3, hidden, 1)) * s2,
            b2=rng.standard_normal(1) * 0.1,
            seed=seed,
        )

    @classmethod
    def zeros(cls, channels: int, hidden: int = 16, final_bias: float = 0.0) -> "ConfidenceHead":
        return cls(
            w1=np.zeros((3, 3, channels, hidden)),
            b1=np.zeros(hidden),
            w2=np.zeros((3, 3, hidden, 1)),
            b2=np.array([final_bias], dtype=np.float64),
        )

    def copy(self) -> "ConfidenceHead":
        return ConfidenceHead(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.seed
        )


@dataclass
class ConfidenceGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def _as_array(value) -> np.ndarray:
    if isinstance(value, TokenGrid):
        return value.data
    return np.asarray(value, dtype=np.float64)


def confidence_forward(head: ConfidenceHead, value: TokenGrid) -> np.ndarray:
    """Per-pixel confidence map in (0, 1) at the grid's resolution."""
    x = _as_array(value)
    if x.shape[2] != head.in_channels:
        raise ValueError(f"head expects {head.in_channels} channels, got {x.shape[2]}")
    z1 = conv2d(x, head.w1, head.b1)
    a1 = np.tanh(z1)
    z2 = conv2d(a1, head.w2, head.b2)
    return sigmoid(z2[..., 0])


def gt_confidence(disparity, gt_disparity, sigma: float = 5.0) -> np.ndarray:
    """Target confidence exp(-|d - d_gt| / sigma)."""
    d = _as_array(disparity)
    g = _as_array(gt_disparity)
    if d.shape != g.shape:
        raise ValueError(f"disparity shapes differ: {d.shape} vs {g.shape}")
    return np.exp(-np.abs(d - g) / float(sigma))


def confidence_loss(maps, targets, gamma: float = 0.9) -> float:
    """Iteration-weighted L1 between confidence maps and their targets.

    ``maps[t][n]`` and ``targets[t][n]`` are rasters for frame t at iteration
    n; each iteration's mean absolute error is weighted by gamma^(N - n) so
    later iterations count more.  The mean (not sum) per raster keeps the
    loss resolution independent.
    """
    if len(maps) != len(targets):
        raise ValueError("frame counts differ")
    total = 0.0
    for u_frames, t_frames in zip(maps, targets):
        if len(u_frames) != len(t_frames):
            raise ValueError("iteration counts differ")
        n_iters = len(u_frames)
        for n, (u, t) in enumerate(zip(u_frames, t_frames), start=1):
            weight = gamma ** (n_iters - n)
            total += weight * float(np.mean(np.abs(_as_array(u) - _as_array(t))))
    return total


def confidence_grad(head: ConfidenceHead, value: TokenGrid, target) -> ConfidenceGrads:
    """Analytic gradients of mean|forward(value) - target| w.r.t. parameters.

    The L1 subgradient at exact zeros is taken as 0.
    """
    x = _as_array(value)
    t = _as_array(target)
    z1 = conv2d(x, head.w1, head.b1)
    a1 = np.tanh(z1)
    z2 = conv2d(a1, head.w2, head.b2)
    u = sigmoid(z2[..., 0])
    if u.shape != t.shape:
        raise ValueError(f"target shape {t.shape} does not match output {u.shape}")

    npix = u.size
    dl_du = np.sign(u - t) / npix
    delta2 = (dl_du * u * (1.0 - u))[..., None]
    da1, dw2, db2 = conv2d_backward(a1, head.w2, delta2)
    delta1 = da1 * (1.0 - a1 * a1)
    _, dw1, db1 = conv2d_backward(x, head.w1, delta1)
    return ConfidenceGrads(w1=dw1, b1=db1, w2=dw2, b2=db2)


def train_head(head: ConfidenceHead, dataset, steps: int, lr: float):
    """Plain gradient descent of the mean per-sample L1 loss.

    ``dataset`` is a sequence of (value grid, target map) pairs.  Returns
    (trained head, loss history including the initial loss).
    """
    head = head.copy()
    history = [_dataset_loss(head, dataset)]
    for step in range(steps):
        acc = None
        for value, target in dataset:
            g = confidence_grad(head, value, target)
            if acc is None:
                acc = g
            else:
                acc = ConfidenceGrads(
                    acc.w1 + g.w1, acc.b1 + g.b1, acc.w2 + g.w2, acc.b2 + g.b2
                )
        scale = lr / len(dataset)
        head.w1 -= scale * acc.w1
        head.b1 -= scale * acc.b1
        head.w2 -= scale * acc.w2
        head.b2 -= scale * acc.b2
        loss = _dataset_loss(head, dataset)
        if not np.isfinite(loss):
            raise NumericsError(f"non-finite loss at step {step}")
        history.append(loss)
    return head, history


def _dataset_loss(head: ConfidenceHead, dataset) -> float:
    losses = [
        float(np.mean(np.abs(confidence_forward(head, v) - _as_array(t))))
        for v, t in dataset
    ]
    return float(np.mean(losses))


def proxy_confidence(disparity, left, right, sigma_p: float = 0.25) -> np.ndarray:
    """Photometric-consistency confidence, no training required.

    exp(-|L(x, y) - R(x - d, y)| / sigma_p) with the right view sampled
    linearly along x; pixels whose match falls outside the image score 0.
    Multi-channel inputs are compared on their channel mean.
    """
    d = _as_array(disparity)
    L = _as_array(left)
    R = _as_array(right)
    if L.ndim == 3:
        L = L.mean(axis=2)
    if R.ndim == 3:
        R = R.mean(axis=2)
    if d.shape != L.shape or L.shape != R.shape:
        raise ValueError("disparity and images must share shape")
    h, w = d.shape
    xs = np.arange(w)[None, :] - d
    lo = np.floor(xs)
    frac = xs - lo
    lo_i = lo.astype(np.int64)
    hi_i = lo_i + 1
    valid = (xs >= 0.0) & (xs <= w - 1)
    lo_c = np.clip(lo_i, 0, w - 1)
    hi_c = np.clip(hi_i, 0, w - 1)
    rows = np.arange(h)[:, None]
    sampled = (1.0 - frac) * R[rows, lo_c] + frac * R[rows, hi_c]
    conf = np.exp(-np.abs(L - sampled) / float(sigma_p))
    return np.where(valid, conf, 0.0)


def save_head(head: ConfidenceHead, path) -> None:
    """Serialize to a flat little-endian float32 file with a 16-byte header."""
    header = HEAD_MAGIC + struct.pack(
        "<III", HEAD_VERSION, head.in_channels, head.hidden_channels
    )
    payload = b"".join(
        np.ascontiguousarray(p, dtype="<f4").tobytes()
        for p in (head.w1, head.b1, head.w2, head.b2)
    )
    Path(path).write_bytes(header + payload)


def load_head(path) -> ConfidenceHead:
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != HEAD_MAGIC:
        raise ValueError(f"not a confidence head file: {path}")
    version, channels, hidden = struct.unpack("<III", blob[4:16])
    if version != HEAD_VERSION:
        raise ValueError(f"unsupported head version {version}")
    counts = [9 * channels * hidden, hidden, 9 * hidden, 1]
    flat = np.frombuffer(blob[16:], dtype="<f4")
    if flat.size != sum(counts):
        raise ValueError("head payload size mismatch")
    parts = np.split(flat.astype(np.float64), np.cumsum(counts)[:-1])
    return ConfidenceHead(
        w1=parts[0].reshape(3, 3, channels, hidden),
        b1=parts[1],
        w2=parts[2].reshape(3, 3, hidden, 1),
        b2=parts[3],
    )

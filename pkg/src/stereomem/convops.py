"""3x3 convolution with edge-replication padding, forward and backward.

Shared by the confidence head (which needs parameter gradients) and the
recurrent update cell (forward only).  Weight layout is (3, 3, Cin, Cout);
inputs are (H, W, Cin) float arrays.
"""

from __future__ import annotations

import numpy as np


def _patches(x: np.ndarray) -> np.ndarray:
    """(H, W, 3, 3, Cin) view of edge-padded 3x3 neighborhoods."""
    padded = np.pad(x, ((1, 1), (1, 1), (0, 0)), mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(0, 1))
    # sliding_window_view appends window axes: (H, W, Cin, 3, 3)
    return np.moveaxis(win, 2, -1)


def im2col(x: np.ndarray) -> np.ndarray:
    """(H*W, 9*Cin) patch matrix matching the (3, 3, Cin, Cout) weight layout."""
    h, ww, cin = x.shape
    return _patches(x).reshape(h * ww, 9 * cin)


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-size 3x3 convolution, replicate padding."""
    h, ww = x.shape[:2]
    cin, cout = w.shape[2], w.shape[3]
    out = im2col(x) @ w.reshape(9 * cin, cout) + b
    return out.reshape(h, ww, cout)


def conv2d_backward(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray):
    """Gradients of a conv2d call: returns (dx, dw, db).

    Replicated border reads scatter their gradient back onto the edge
    pixels they were copied from.
    """
    h, ww = x.shape[:2]
    cin, cout = w.shape[2], w.shape[3]
    go = grad_out.reshape(h * ww, cout)

    cols = _patches(x).reshape(h * ww, 9 * cin)
    dw = (cols.T @ go).reshape(3, 3, cin, cout)
    db = go.sum(axis=0)

    dx = np.zeros_like(x)
    rows = np.arange(h)
    colsx = np.arange(ww)
    for dy in range(3):
        src_r = np.clip(rows + dy - 1, 0, h - 1)
        r_idx = np.broadcast_to(src_r[:, None], (h, ww))
        for dxo in range(3):
            src_c = np.clip(colsx + dxo - 1, 0, ww - 1)
            c_idx = np.broadcast_to(src_c[None, :], (h, ww))
            contrib = grad_out @ w[dy, dxo].T  # (H, W, Cin)
            np.add.at(dx, (r_idx, c_idx), contrib)
    return dx, dw, db


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out

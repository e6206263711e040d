"""Accuracy and temporal-consistency metrics for disparity sequences."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


def _pair(pred, gt, mask):
    p = np.asarray(pred.data if hasattr(pred, "data") else pred, dtype=np.float64)
    g = np.asarray(gt.data if hasattr(gt, "data") else gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"shapes differ: {p.shape} vs {g.shape}")
    m = np.isfinite(g) if mask is None else (np.asarray(mask, dtype=bool) & np.isfinite(g))
    return p, g, m


def epe(pred, gt, mask=None) -> float:
    """Mean absolute disparity error over valid pixels."""
    p, g, m = _pair(pred, gt, mask)
    if not m.any():
        raise ValueError("no valid pixels")
    return float(np.mean(np.abs(p - g)[m]))


def delta_npx(pred, gt, n: float, mask=None) -> float:
    """Fraction of valid pixels whose error exceeds n pixels."""
    p, g, m = _pair(pred, gt, mask)
    if not m.any():
        raise ValueError("no valid pixels")
    return float(np.mean(np.abs(p - g)[m] > n))


def _temporal_errors(preds, gts, masks):
    """|delta pred - delta gt| per frame pair, plus the pairwise valid masks."""
    if len(preds) != len(gts):
        raise ValueError("prediction and ground-truth frame counts differ")
    if len(preds) < 2:
        raise ValueError("temporal metrics need at least 2 frames")
    errs, valids = [], []
    for t in range(len(preds) - 1):
        p0, g0, m0 = _pair(preds[t], gts[t], None if masks is None else masks[t])
        p1, g1, m1 = _pair(preds[t + 1], gts[t + 1], None if masks is None else masks[t + 1])
        errs.append(np.abs((p1 - p0) - (g1 - g0)))
        valids.append(m0 & m1)
    return errs, valids


def tepe(preds, gts, masks=None, per_frame: bool = False) -> float:
    """Mean |temporal disparity change error| over frame pairs.

    Default pools every valid (pixel, pair) sample; ``per_frame`` averages
    each pair first, then averages the pairs.
    """
    errs, valids = _temporal_errors(preds, gts, masks)
    if per_frame:
        return float(np.mean([np.mean(e[v]) for e, v in zip(errs, valids)]))
    stacked = np.concatenate([e[v] for e, v in zip(errs, valids)])
    if stacked.size == 0:
        raise ValueError("no valid pixels")
    return float(np.mean(stacked))


def delta_t_npx(preds, gts, n: float, masks=None, aggregate: str = "mean") -> float:
    """Fraction of pixels whose temporal error exceeds n pixels.

    aggregate="mean" (default): threshold each pixel's temporal mean error.
    aggregate="per_step": threshold every (pixel, pair) sample individually.
    """
    errs, valids = _temporal_errors(preds, gts, masks)
    if aggregate == "per_step":
        stacked = np.concatenate([e[v] for e, v in zip(errs, valids)])
        return float(np.mean(stacked > n))
    if aggregate != "mean":
        raise ValueError("aggregate must be 'mean' or 'per_step'")
    err_sum = np.zeros_like(errs[0])
    count = np.zeros_like(errs[0])
    for e, v in zip(errs, valids):
        err_sum += np.where(v, e, 0.0)
        count += v
    pixel_ok = count > 0
    if not pixel_ok.any():
        raise ValueError("no valid pixels")
    mean_err = err_sum[pixel_ok] / count[pixel_ok]
    return float(np.mean(mean_err > n))


@dataclass
class MetricsReport:
    epe: float
    delta_npx: dict
    tepe: float | None
    delta_t_npx: dict
    valid_pixels: int
    frames: int

    def to_dict(self) -> dict:
        return {
            "epe": self.epe,
            "delta_npx": {str(k): v for k, v in self.delta_npx.items()},
            "tepe": self.tepe,
            "delta_t_npx": {str(k): v for k, v in self.delta_t_npx.items()},
            "valid_pixels": self.valid_pixels,
            "frames": self.frames,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        rows = [("epe", self.epe)]
        rows += [(f"delta_{k}px", v) for k, v in sorted(self.delta_npx.items())]
        rows.append(("tepe", self.tepe))
        rows += [(f"delta_t_{k}px", v) for k, v in sorted(self.delta_t_npx.items())]
        rows.append(("valid_pixels", self.valid_pixels))
        rows.append(("frames", self.frames))
        width = max(len(name) for name, _ in rows)
        lines = []
        for name, value in rows:
            if value is None:
                text = "n/a"
            elif isinstance(value, float):
                text = f"{value:.6f}"
            else:
                text = str(value)
            lines.append(f"{name.ljust(width)}  {text}")
        return "\n".join(lines)


def evaluate_sequence(preds, gts, masks=None, thresholds=(1.0, 3.0)) -> MetricsReport:
    """Full per-sequence report at the given pixel thresholds."""
    per_frame_epe = []
    valid_total = 0
    for t, (p, g) in enumerate(zip(preds, gts)):
        _, _, m = _pair(p, g, None if masks is None else masks[t])
        valid_total += int(m.sum())
        per_frame_epe.append(epe(p, g, None if masks is None else masks[t]))
    deltas = {
        _fmt_threshold(n): float(
            np.mean(
                [delta_npx(p, g, n, None if masks is None else masks[t])
                 for t, (p, g) in enumerate(zip(preds, gts))]
            )
        )
        for n in thresholds
    }
    if len(preds) >= 2:
        tepe_val = tepe(preds, gts, masks)
        t_deltas = {_fmt_threshold(n): delta_t_npx(preds, gts, n, masks) for n in thresholds}
    else:
        tepe_val = None
        t_deltas = {}
    return MetricsReport(
        epe=float(np.mean(per_frame_epe)),
        delta_npx=deltas,
        tepe=tepe_val,
        delta_t_npx=t_deltas,
        valid_pixels=valid_total,
        frames=len(preds),
    )


def _fmt_threshold(n: float):
    return int(n) if float(n).is_integer() else float(n)

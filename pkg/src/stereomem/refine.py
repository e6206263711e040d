"""Recurrent disparity refinement and the full sequence driver.

Each frame starts from zero disparity and zero hidden state; over N
iterations the memory read-out, the correlation lookup around the current
estimate, and the context feature feed a convolutional GRU whose head emits
the residual disparity.  Offline mode scores against all T reference frames,
causal mode only against frames up to the current one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .confidence import ConfidenceHead, confidence_forward, load_head, proxy_confidence
from .convops import conv2d, im2col, sigmoid
from .costvolume import (
    CostEncoderWeights,
    block_match_disparity,
    build_correlation,
    encode_cost,
    lookup,
)
from .errors import NumericsError
from .features import (
    ContextWeights,
    ProjectionWeights,
    TokenGrid,
    box_downsample,
    build_pyramid,
    encode_context,
    project_qk,
)
from .memory import init_vanilla_memory, qam_step, read_out, sinusoidal_positions
from .raster import StereoVideoSequence


@dataclass
class GruCell:
    """Convolutional GRU gates plus a two-layer residual-disparity head."""

    w_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    b_h: np.ndarray
    head_w1: np.ndarray
    head_b1: np.ndarray
    head_w2: np.ndarray
    head_b2: np.ndarray
    seed: int | None = None

    @property
    def input_channels(self) -> int:
        return self.w_z.shape[2] - self.hidden_channels

    @property
    def hidden_channels(self) -> int:
        return self.w_z.shape[3]

    @classmethod
    def seeded(cls, seed: int, input_channels: int, hidden: int) -> "GruCell":
        rng = np.random.default_rng([seed, 61])
        cin = input_channels + hidden
        sg = 1.0 / np.sqrt(9 * cin)
        sh = 1.0 / np.sqrt(9 * hidden)
        return cls(
            w_z=rng.standard_normal((3, 3, cin, hidden)) * sg,
            b_z=rng.standard_normal(hidden) * 0.1,
            w_r=rng.standard_normal((3, 3, cin, hidden)) * sg,
            b_r=rng.standard_normal(hidden) * 0.1,
            w_h=rng.standard_normal((3, 3, cin, hidden)) * sg,
            b_h=rng.standard_normal(hidden) * 0.1,
            head_w1=rng.standard_normal((3, 3, hidden, hidden)) * sh,
            head_b1=rng.standard_normal(hidden) * 0.1,
            head_w2=rng.standard_normal((3, 3, hidden, 1)) * sh,
            head_b2=rng.standard_normal(1) * 0.1,
            seed=seed,
        )

    @classmethod
    def zeros(cls, input_channels: int, hidden: int, head_bias: float = 0.0) -> "GruCell":
        cin = input_channels + hidden
        return cls(
            w_z=np.zeros((3, 3, cin, hidden)),
            b_z=np.zeros(hidden),
            w_r=np.zeros((3, 3, cin, hidden)),
            b_r=np.zeros(hidden),
            w_h=np.zeros((3, 3, cin, hidden)),
            b_h=np.zeros(hidden),
            head_w1=np.zeros((3, 3, hidden, hidden)),
            head_b1=np.zeros(hidden),
            head_w2=np.zeros((3, 3, hidden, 1)),
            head_b2=np.array([head_bias], dtype=np.float64),
        )


def gru_step(cell: GruCell, hidden: np.ndarray, inputs: np.ndarray):
    """One gated update; returns (hidden', residual disparity)."""
    if inputs.shape[2] != cell.input_channels:
        raise ValueError(
            f"cell expects {cell.input_channels} input channels, got {inputs.shape[2]}"
        )
    if hidden.shape[2] != cell.hidden_channels:
        raise ValueError(
            f"cell expects {cell.hidden_channels} hidden channels, got {hidden.shape[2]}"
        )
    h, w, _ = hidden.shape
    ch = cell.hidden_channels
    xh = np.concatenate([inputs, hidden], axis=2)
    cols = im2col(xh)  # z and r read the same input, build patches once
    z = sigmoid((cols @ cell.w_z.reshape(-1, ch) + cell.b_z).reshape(h, w, ch))
    r = sigmoid((cols @ cell.w_r.reshape(-1, ch) + cell.b_r).reshape(h, w, ch))
    xrh = np.concatenate([inputs, r * hidden], axis=2)
    h_cand = np.tanh(conv2d(xrh, cell.w_h, cell.b_h))
    hidden_next = (1.0 - z) * hidden + z * h_cand
    a = np.tanh(conv2d(hidden_next, cell.head_w1, cell.head_b1))
    delta = conv2d(a, cell.head_w2, cell.head_b2)[..., 0]
    return hidden_next, delta


def upsample_disparity(disparity: np.ndarray, scale: float, out_shape=None) -> np.ndarray:
    """Bilinear upsample by 1/scale with values multiplied by 1/scale
    (disparity is measured in pixels, so it grows with width)."""
    d = np.asarray(disparity, dtype=np.float64)
    factor = 1.0 / scale
    if out_shape is None:
        out_shape = (int(round(d.shape[0] * factor)), int(round(d.shape[1] * factor)))
    return _bilinear(d, out_shape[0], out_shape[1]) * factor


def _bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = arr.shape
    ys = np.arange(out_h) * ((h - 1) / (out_h - 1)) if out_h > 1 else np.zeros(1)
    xs = np.arange(out_w) * ((w - 1) / (out_w - 1)) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = (1 - fx) * arr[y0][:, x0] + fx * arr[y0][:, x1]
    bot = (1 - fx) * arr[y1][:, x0] + fx * arr[y1][:, x1]
    return (1 - fy) * top + fy * bot


@dataclass
class FramePrep:
    context: TokenGrid
    query: TokenGrid
    key: TokenGrid
    volume: object
    cost: TokenGrid
    value: TokenGrid
    confidence_map: np.ndarray | None


@dataclass
class RunResult:
    """Sequence outputs: full-resolution and scale-space disparities, the
    per-iteration estimates, and one trace record per (frame, iteration)."""

    disparities: list
    scale_disparities: list
    iteration_disparities: list
    iteration_deltas: list
    traces: list
    config: RunConfig


def prepare_frames(video: StereoVideoSequence, config: RunConfig):
    """Per-frame features, volumes, cost/value embeddings, confidence maps."""
    s = config.scale
    proj = ProjectionWeights.seeded(config.seed, config.channels)
    ctx_w = ContextWeights.seeded(config.seed, config.channels)
    cost_w = None
    head = None
    if config.confidence_source == "head":
        if config.head_path:
            head = load_head(config.head_path)
        else:
            head = ConfidenceHead.seeded(config.seed, config.channels, config.conf_hidden)

    preps = []
    for left, right in video.frames:
        pyr_l = build_pyramid(left, config.channels, config.seed)
        pyr_r = build_pyramid(right, config.channels, config.seed)
        grid_l, grid_r = pyr_l[s], pyr_r[s]
        if cost_w is None:
            D = config.max_disparity or max(1, grid_l.width // 2)
            cost_w = CostEncoderWeights.seeded(config.seed, D, config.channels)
        context = encode_context({s: grid_l}, ctx_w)[s]
        query, key = project_qk(context, proj)
        volume = build_correlation(grid_l, grid_r, cost_w.max_disparity)
        cf = encode_cost(volume, cost_w, proj)

        if config.confidence_source == "proxy":
            # Photometric check runs at full resolution (corruption noise
            # would average away at scale s), then pools back to the grid.
            factor = int(round(1 / s))
            bm = block_match_disparity(
                left.data, right.data, cost_w.max_disparity * factor
            )
            u_full = proxy_confidence(bm, left.data, right.data, config.sigma_p)
            u = box_downsample(u_full, factor, grid_l.height, grid_l.width)
        elif config.confidence_source == "head":
            u = confidence_forward(head, cf.value)
        else:
            u = None
        preps.append(
            FramePrep(
                context=context,
                query=query,
                key=key,
                volume=volume,
                cost=cf.cost,
                value=cf.value,
                confidence_map=u,
            )
        )
    return preps


def run_sequence(video: StereoVideoSequence, config: RunConfig) -> RunResult:
    """Run the full pipeline over a sequence; deterministic under the seed."""
    T = video.T
    H, W = video.height, video.width
    preps = prepare_frames(video, config)
    pe = sinusoidal_positions(T, config.channels)
    in_channels = (2 * config.radius + 1) + 2 * config.channels
    cell = GruCell.seeded(config.seed, in_channels, config.gru_hidden)

    full_memory = init_vanilla_memory(
        [p.key for p in preps], [p.value for p in preps]
    )
    have_conf = config.confidence_source != "none"
    counters = np.zeros(T, dtype=np.int64)

    disparities = []
    scale_disparities = []
    iteration_disparities = []
    iteration_deltas = []
    traces = []
    for t in range(T):
        prep = preps[t]
        if config.memory_mode == "causal":
            memory = full_memory.sliced(range(t + 1))
            conf = [preps[i].confidence_map for i in range(t + 1)] if have_conf else None
        else:
            memory = full_memory
            conf = [p.confidence_map for p in preps] if have_conf else None
        if config.counter_mode == "reset":
            counters[:] = 0

        sh, sw = prep.cost.height, prep.cost.width
        hidden = np.zeros((sh, sw, config.gru_hidden))
        d = np.zeros((sh, sw))
        per_iter = []
        per_iter_delta = []
        for n in range(1, config.N + 1):
            if config.memory:
                rng = (
                    np.random.default_rng([config.seed, 91, t, n])
                    if config.policy == "random"
                    else None
                )
                res = qam_step(
                    prep.query,
                    t,
                    memory,
                    counters,
                    conf,
                    config.K,
                    pe,
                    pool_factor=config.pool_factor,
                    total_frames=T,
                    policy=config.policy,
                    play=config.play,
                    rng=rng,
                    iteration=n,
                )
                try:
                    f_agg = read_out(res.query, res.dynamic, prep.cost, config.alpha)
                except NumericsError as exc:
                    raise NumericsError(str(exc), frame=t, iteration=n) from exc
                traces.append(res.trace)
            else:
                f_agg = prep.cost
            look = lookup(prep.volume, d, config.radius)
            inputs = np.concatenate([look.data, f_agg.data, prep.context.data], axis=2)
            hidden, delta = gru_step(cell, hidden, inputs)
            d = d + delta
            per_iter.append(d.copy())
            per_iter_delta.append(delta)
            if not np.all(np.isfinite(d)):
                raise NumericsError("non-finite disparity", frame=t, iteration=n)

        scale_disparities.append(d)
        iteration_disparities.append(per_iter)
        iteration_deltas.append(per_iter_delta)
        disparities.append(upsample_disparity(d, config.scale, (H, W)))
    return RunResult(
        disparities=disparities,
        scale_disparities=scale_disparities,
        iteration_disparities=iteration_disparities,
        iteration_deltas=iteration_deltas,
        traces=traces,
        config=config,
    )


def disparity_loss(iteration_disparities, gt, gamma: float = 0.9) -> float:
    """Iteration-weighted L1 between per-iteration estimates and ground truth.

    ``iteration_disparities[t][n]`` must match the resolution of ``gt[t]``.
    """
    if gt is None:
        raise ValueError("ground truth required for the disparity loss")
    if len(iteration_disparities) != len(gt):
        raise ValueError("frame counts differ")
    total = 0.0
    for per_iter, target in zip(iteration_disparities, gt):
        target = np.asarray(
            target.data if hasattr(target, "data") else target, dtype=np.float64
        )
        n_iters = len(per_iter)
        for n, pred in enumerate(per_iter, start=1):
            weight = gamma ** (n_iters - n)
            total += weight * float(np.mean(np.abs(np.asarray(pred) - target)))
    return total


def total_loss(l_disparity: float, l_confidence: float) -> float:
    """Combined training objective, a plain sum."""
    return float(l_disparity) + float(l_confidence)

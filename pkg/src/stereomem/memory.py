"""Reference-frame memory: scoring, top-K pick, weighted play, and read-out.

A vanilla memory holds key/value token grids for every reference frame.
Each refinement iteration scores the frames (pooled confidence plus a
redundancy-damped similarity), picks the top K into a compact dynamic
buffer, weights and position-tags the picked keys, and aggregates the
values through softmax attention into the cost feature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericsError
from .features import TokenGrid, pooled_phi

POLICIES = ("full", "latest", "random", "ppm")

WEIGHT_EPS = 1e-6  # per-entry clamp before normalizing play weights


@dataclass(frozen=True)
class VanillaMemory:
    """Key/value token grids for all available reference frames.

    ``frame_indices`` are the original 0-based frame ids (a causal slice of a
    longer sequence keeps its original ids).
    """

    keys: tuple
    values: tuple
    frame_indices: tuple

    def __post_init__(self):
        if len(self.keys) == 0:
            raise ValueError("memory needs at least one frame")
        if not (len(self.keys) == len(self.values) == len(self.frame_indices)):
            raise ValueError("keys, values, and frame indices must align")
        shape = self.keys[0].data.shape
        for g in list(self.keys) + list(self.values):
            if g.data.shape != shape:
                raise ValueError("all memory grids must share one shape")

    @property
    def size(self) -> int:
        return len(self.keys)

    @property
    def token_count(self) -> int:
        return self.size * self.keys[0].token_count

    def sliced(self, positions) -> "VanillaMemory":
        positions = list(positions)
        return VanillaMemory(
            keys=tuple(self.keys[p] for p in positions),
            values=tuple(self.values[p] for p in positions),
            frame_indices=tuple(self.frame_indices[p] for p in positions),
        )


@dataclass
class DynamicMemory:
    """The picked frames, ascending by original frame index.

    ``weights`` (set by play_weights) are the relative significances of the
    picked frames and sum to 1.
    """

    indices: np.ndarray
    keys: tuple
    values: tuple
    weights: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.keys)

    @property
    def token_count(self) -> int:
        return self.size * self.keys[0].token_count

    def stacked_keys(self) -> np.ndarray:
        return np.concatenate([k.tokens() for k in self.keys], axis=0)

    def stacked_values(self) -> np.ndarray:
        return np.concatenate([v.tokens() for v in self.values], axis=0)


@dataclass
class QualityState:
    """Per-candidate scores from one pick pass, aligned with ``frames``."""

    frames: tuple
    confidence: np.ndarray
    similarity: np.ndarray
    redundancy: np.ndarray
    relevance: np.ndarray
    total: np.ndarray
    counters: np.ndarray = field(default=None)


@dataclass
class QamResult:
    state: QualityState
    dynamic: DynamicMemory
    query: TokenGrid
    trace: dict


def sinusoidal_positions(frames: int, channels: int) -> np.ndarray:
    """Fixed sine/cosine position table over frame index, shape (T, C)."""
    pos = np.arange(frames)[:, None].astype(np.float64)
    dim = np.arange(channels)[None, :].astype(np.float64)
    angle = pos / np.power(10000.0, 2.0 * np.floor(dim / 2.0) / channels)
    table = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return table


def init_vanilla_memory(keys, values, frame_indices=None) -> VanillaMemory:
    """Order per-frame key/value grids into a vanilla memory."""
    keys = tuple(keys)
    values = tuple(values)
    if frame_indices is None:
        frame_indices = tuple(range(len(keys)))
    return VanillaMemory(keys=keys, values=values, frame_indices=tuple(frame_indices))


def similarity_score(query: TokenGrid, memory: VanillaMemory, pool_factor: int) -> np.ndarray:
    """Pooled-descriptor dot product of the query against every memory key.

    Entries lie in [-1, 1]; a zero-descriptor on either side scores 0.
    """
    phi_q = pooled_phi(query, pool_factor)
    sims = np.zeros(memory.size)
    if phi_q.is_zero:
        return sims
    for i, key in enumerate(memory.keys):
        phi_k = pooled_phi(key, pool_factor)
        if not phi_k.is_zero:
            sims[i] = float(phi_q.vector @ phi_k.vector)
    return sims


def redundancy_regularizer(counters, total_frames: int) -> np.ndarray:
    """Exponential decay exp(-t_k / T) of each frame's selection count."""
    counters = np.asarray(counters, dtype=np.float64)
    if np.any(counters < 0):
        raise ValueError("selection counters must be non-negative")
    return np.exp(-counters / float(total_frames))


def relevance_score(similarity, redundancy) -> np.ndarray:
    """Redundancy-damped similarity, elementwise product."""
    return np.asarray(redundancy, dtype=np.float64) * np.asarray(similarity, dtype=np.float64)


def quality_scores(confidence, relevance) -> np.ndarray:
    """Total per-frame quality: confidence plus relevance."""
    return np.asarray(confidence, dtype=np.float64) + np.asarray(relevance, dtype=np.float64)


def pick_topk(memory: VanillaMemory, scores, k: int, counters=None) -> DynamicMemory:
    """Keep the K highest-scoring frames (ties go to the lower frame index).

    The picked grids are concatenated in ascending frame order.  When
    ``counters`` is given, each picked frame's selection count is incremented
    in place (indexed by original frame id).
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (memory.size,):
        raise ValueError(f"scores must have shape ({memory.size},), got {scores.shape}")
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, memory.size)
    order = np.argsort(-scores, kind="stable")  # stable sort keeps lower index on ties
    positions = np.sort(order[:k])
    return _take(memory, positions, counters)


def _take(memory: VanillaMemory, positions, counters=None) -> DynamicMemory:
    positions = np.asarray(positions, dtype=np.int64)
    indices = np.array([memory.frame_indices[p] for p in positions], dtype=np.int64)
    if counters is not None:
        counters[indices] += 1
    return DynamicMemory(
        indices=indices,
        keys=tuple(memory.keys[p] for p in positions),
        values=tuple(memory.values[p] for p in positions),
    )


def play_weights(scores, positions) -> np.ndarray:
    """Relative significance of the picked frames.

    Scores are clamped to a small positive epsilon per entry before
    normalizing, so the result is always a valid convex weight vector.
    """
    scores = np.asarray(scores, dtype=np.float64)
    picked = np.maximum(scores[np.asarray(positions, dtype=np.int64)], WEIGHT_EPS)
    return picked / picked.sum()


def modulate(query: TokenGrid, frame_index: int, dynamic: DynamicMemory, pe: np.ndarray):
    """Scale each picked key grid by its weight, then tag query and keys with
    the position encoding of their original frame.

    Values are left untouched.  Returns (modulated query, modulated memory).
    """
    if dynamic.weights is None:
        raise ValueError("dynamic memory has no play weights set")
    if pe.shape[1] != query.channels:
        raise ValueError(f"PE channels {pe.shape[1]} != query channels {query.channels}")
    if frame_index < 0 or frame_index >= pe.shape[0]:
        raise IndexError(f"frame index {frame_index} outside PE table of {pe.shape[0]}")
    if np.any(dynamic.indices >= pe.shape[0]):
        raise IndexError("picked frame index outside PE table")

    q_mod = TokenGrid(scale=query.scale, data=query.data + pe[frame_index])
    keys_mod = tuple(
        TokenGrid(scale=k.scale, data=w * k.data + pe[idx])
        for k, w, idx in zip(dynamic.keys, dynamic.weights, dynamic.indices)
    )
    mem_mod = DynamicMemory(
        indices=dynamic.indices.copy(),
        keys=keys_mod,
        values=dynamic.values,
        weights=dynamic.weights.copy(),
    )
    return q_mod, mem_mod


def read_out(query: TokenGrid, dynamic: DynamicMemory, cost: TokenGrid, alpha: float) -> TokenGrid:
    """Attention-aggregate memory values into the cost feature.

    F_agg = F_cost + alpha * softmax(q k^T / sqrt(C)) v, rows normalized over
    all memory tokens.  alpha = 0 returns the cost feature unchanged up to
    float addition of zero.
    """
    q = query.tokens()
    k = dynamic.stacked_keys()
    v = dynamic.stacked_values()
    c = q.shape[1]
    if k.shape[1] != c:
        raise ValueError(f"key channels {k.shape[1]} != query channels {c}")
    if cost.channels != v.shape[1]:
        raise ValueError(f"cost channels {cost.channels} != value channels {v.shape[1]}")
    logits = q @ k.T
    logits /= np.sqrt(c)
    if not np.all(np.isfinite(logits)):
        raise NumericsError("non-finite attention logits")
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits, out=logits)
    weights /= weights.sum(axis=1, keepdims=True)
    agg = cost.tokens() + alpha * (weights @ v)
    return TokenGrid(scale=cost.scale, data=agg.reshape(cost.data.shape))


def pooled_confidence(confidence, memory_size: int) -> np.ndarray:
    """Frame-level confidence: spatial mean of each map.

    Accepts None (all zeros), a sequence of per-frame maps, or an already
    pooled 1-D array.
    """
    if confidence is None:
        return np.zeros(memory_size)
    if isinstance(confidence, np.ndarray) and confidence.ndim == 1:
        if confidence.shape != (memory_size,):
            raise ValueError("pooled confidence length must match memory size")
        return confidence.astype(np.float64)
    if len(confidence) != memory_size:
        raise ValueError("one confidence map per memory frame required")
    return np.array([float(np.mean(u)) for u in confidence])


def select_frames(
    policy: str,
    memory: VanillaMemory,
    scores: np.ndarray,
    k: int,
    counters=None,
    rng: np.random.Generator | None = None,
) -> DynamicMemory:
    """Pick frames by the requested policy; every policy returns min(K, T)."""
    if policy == "ppm":
        return pick_topk(memory, scores, k, counters)
    k = min(k, memory.size)
    if k < 1:
        raise ValueError("k must be >= 1")
    if policy == "full":
        positions = np.arange(memory.size)
    elif policy == "latest":
        # frame_indices ascend, so the last K positions are the newest frames
        positions = np.arange(memory.size - k, memory.size)
    elif policy == "random":
        if rng is None:
            raise ValueError("random policy needs a seeded generator")
        positions = np.sort(rng.choice(memory.size, size=k, replace=False))
    else:
        raise ValueError(f"unknown policy {policy!r}, expected one of {POLICIES}")
    return _take(memory, positions, counters)


def qam_step(
    query: TokenGrid,
    frame_index: int,
    memory: VanillaMemory,
    counters: np.ndarray,
    confidence,
    k: int,
    pe: np.ndarray,
    *,
    pool_factor: int = 4,
    total_frames: int | None = None,
    policy: str = "ppm",
    play: bool = True,
    rng: np.random.Generator | None = None,
    iteration: int | None = None,
) -> QamResult:
    """One scoring + pick + play pass for the current query frame.

    ``counters`` is indexed by original frame id and is incremented for the
    picked frames.  With ``play`` off, the raw query and picked grids feed the
    read-out unweighted and untagged.
    """
    total = total_frames if total_frames is not None else memory.size
    cand = np.asarray(memory.frame_indices, dtype=np.int64)

    s_conf = pooled_confidence(confidence, memory.size)
    sim = similarity_score(query, memory, pool_factor)
    red = redundancy_regularizer(counters[cand], total)
    rel = relevance_score(sim, red)
    score = quality_scores(s_conf, rel)

    dynamic = select_frames(policy, memory, score, k, counters, rng)
    positions = np.searchsorted(cand, dynamic.indices)
    dynamic.weights = play_weights(score, positions)

    if play:
        query_out, dynamic_out = modulate(query, frame_index, dynamic, pe)
    else:
        query_out, dynamic_out = query, dynamic

    state = QualityState(
        frames=tuple(int(i) for i in cand),
        confidence=s_conf,
        similarity=sim,
        redundancy=red,
        relevance=rel,
        total=score,
        counters=counters.copy(),
    )
    trace = {
        "t": int(frame_index),
        "n": None if iteration is None else int(iteration),
        "candidates": [int(i) for i in cand],
        "confidence": [float(x) for x in s_conf],
        "similarity": [float(x) for x in sim],
        "redundancy": [float(x) for x in red],
        "relevance": [float(x) for x in rel],
        "total": [float(x) for x in score],
        "picked": [int(i) for i in dynamic.indices],
        "weights": [float(w) for w in dynamic.weights],
        "counters": [int(c) for c in counters[cand]],
    }
    return QamResult(state=state, dynamic=dynamic_out, query=query_out, trace=trace)

"""Memory-buffered stereo video disparity estimation.

Builds per-frame correlation volumes, scores reference frames by confidence
and redundancy-damped similarity, picks the top K into a compact key/value
buffer, and aggregates it through attention into a recurrent disparity
refiner.  Ships a synthetic scene generator with exact ground truth, temporal
consistency metrics, and a selection-policy benchmark.
"""

from .config import RunConfig
from .confidence import (
    ConfidenceHead,
    confidence_forward,
    confidence_grad,
    confidence_loss,
    gt_confidence,
    proxy_confidence,
    train_head,
)
from .costvolume import CorrelationVolume, build_correlation, encode_cost, lookup
from .features import (
    PooledDescriptor,
    ProjectionWeights,
    TokenGrid,
    build_pyramid,
    encode_context,
    pooled_phi,
    project_qk,
)
from .memory import (
    DynamicMemory,
    QualityState,
    VanillaMemory,
    init_vanilla_memory,
    modulate,
    pick_topk,
    play_weights,
    qam_step,
    quality_scores,
    read_out,
    redundancy_regularizer,
    relevance_score,
    similarity_score,
    sinusoidal_positions,
)
from .metrics import MetricsReport, delta_npx, delta_t_npx, epe, evaluate_sequence, tepe
from .raster import (
    FloatRaster,
    StereoVideoSequence,
    read_manifest,
    read_pfm,
    write_manifest,
    write_pfm,
)
from .refine import (
    GruCell,
    RunResult,
    disparity_loss,
    gru_step,
    run_sequence,
    total_loss,
    upsample_disparity,
)
from .scene import CorruptionSpec, RectSpec, SceneSpec, generate_scene

__version__ = "0.1.0"

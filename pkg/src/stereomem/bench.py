"""Policy comparison harness: run each selection policy over a seeded suite
of generated scenes and report accuracy, temporal consistency, and how often
each policy picks the deliberately corrupted frames."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .errors import SceneSpecError
from .memory import POLICIES
from .metrics import evaluate_sequence
from .refine import run_sequence
from .scene import CorruptionSpec, RectSpec, SceneSpec, generate_scene


def random_scene_spec(
    seed: int,
    width: int = 64,
    height: int = 64,
    frames: int = 20,
    corrupted_frames: int = 3,
    amplitude: float = 0.6,
    texture_cell: int = 2,
) -> SceneSpec:
    """A randomized moving-rectangles scene with optional corrupted frames.

    Corrupted frames get uniform noise on the right view only, which breaks
    photometric consistency there and should depress their confidence.
    """
    rng = np.random.default_rng([seed, 500])
    n_rects = int(rng.integers(2, 5))
    rects = []
    for _ in range(n_rects):
        rw = int(rng.integers(8, 17))
        rh = int(rng.integers(8, 17))
        # disparities divisible by 4 stay block-exact at quarter scale
        disp = int(rng.choice([8, 12]))
        vx = float(rng.integers(-1, 2))
        span = int(abs(vx)) * (frames - 1)
        if span >= width - rw:
            vx, span = 0.0, 0
        if vx > 0:
            x = int(rng.integers(0, width - rw - span + 1))
        elif vx < 0:
            x = int(rng.integers(span, width - rw + 1))
        else:
            x = int(rng.integers(0, width - rw + 1))
        y = int(rng.integers(0, height - rh + 1))
        rects.append(RectSpec(x=x, y=y, width=rw, height=rh, disparity=disp, velocity=(vx, 0.0)))
    corrupt_ids = rng.choice(frames, size=min(corrupted_frames, frames), replace=False)
    corruption = tuple(CorruptionSpec(frame=int(f), amplitude=amplitude) for f in sorted(corrupt_ids))
    return SceneSpec(
        width=width,
        height=height,
        frames=frames,
        background_disparity=4,
        rectangles=tuple(rects),
        corruption=corruption,
        texture_cell=texture_cell,
    )


def default_suite(n_scenes: int, seed: int, **scene_kwargs):
    """(spec, seed) pairs for a reproducible comparison suite."""
    return [
        (random_scene_spec(seed * 1000 + i, **scene_kwargs), seed * 1000 + i)
        for i in range(n_scenes)
    ]


def load_suite(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneSpecError(f"suite is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "scenes" not in doc:
        raise SceneSpecError("suite file must contain a 'scenes' list")
    return [
        (SceneSpec.from_dict(entry["spec"]), int(entry.get("seed", i)))
        for i, entry in enumerate(doc["scenes"])
    ]


def corrupted_selection_rate(traces, corrupted) -> float:
    """Fraction of all picks that landed on corrupted frames."""
    corrupted = set(int(c) for c in corrupted)
    picks = 0
    hits = 0
    for rec in traces:
        picks += len(rec["picked"])
        hits += sum(1 for i in rec["picked"] if i in corrupted)
    return hits / picks if picks else 0.0


@dataclass
class PolicyOutcome:
    policy: str
    epe: float
    tepe: float
    delta_1px: float
    delta_t_1px: float
    corrupted_rate: float
    scenes: int

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "epe": self.epe,
            "tepe": self.tepe,
            "delta_1px": self.delta_1px,
            "delta_t_1px": self.delta_t_1px,
            "corrupted_selection_rate": self.corrupted_rate,
            "scenes": self.scenes,
        }


@dataclass
class ComparisonReport:
    outcomes: list

    def to_dict(self) -> dict:
        return {"policies": [o.to_dict() for o in self.outcomes]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        header = f"{'policy':8}  {'epe':>10}  {'tepe':>10}  {'d1px':>8}  {'dt1px':>8}  {'corrupt':>8}"
        lines = [header, "-" * len(header)]
        for o in self.outcomes:
            lines.append(
                f"{o.policy:8}  {o.epe:10.6f}  {o.tepe:10.6f}  {o.delta_1px:8.4f}  "
                f"{o.delta_t_1px:8.4f}  {o.corrupted_rate:8.4f}"
            )
        return "\n".join(lines)


def compare_policies(suite, config: RunConfig, policies=POLICIES) -> ComparisonReport:
    """Run every policy over the same seeded scenes and aggregate.

    Scenes are generated once per (spec, seed) and shared across policies, so
    differences come from frame selection alone.
    """
    videos = [(generate_scene(spec, scene_seed), spec) for spec, scene_seed in suite]
    outcomes = []
    for policy in policies:
        cfg = config.with_overrides(policy=policy)
        epes, tepes, d1s, dt1s, rates = [], [], [], [], []
        for video, spec in videos:
            result = run_sequence(video, cfg)
            gts = [g.data for g in video.gt_disparity]
            report = evaluate_sequence(result.disparities, gts, thresholds=(1.0, 3.0))
            epes.append(report.epe)
            tepes.append(report.tepe)
            d1s.append(report.delta_npx[1])
            dt1s.append(report.delta_t_npx[1])
            rates.append(
                corrupted_selection_rate(
                    result.traces, [c.frame for c in spec.corruption]
                )
            )
        outcomes.append(
            PolicyOutcome(
                policy=policy,
                epe=float(np.mean(epes)),
                tepe=float(np.mean(tepes)),
                delta_1px=float(np.mean(d1s)),
                delta_t_1px=float(np.mean(dt1s)),
                corrupted_rate=float(np.mean(rates)),
                scenes=len(videos),
            )
        )
    return ComparisonReport(outcomes=outcomes)

"""Command-line surface: generate | run | eval | compare-policies | trace-dump.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench
from .config import RunConfig
from .errors import ManifestError, NumericsError, PfmError, SceneSpecError, StereomemError
from .metrics import evaluate_sequence
from .raster import FloatRaster, read_manifest, read_pfm_file, write_manifest, write_pfm_file
from .refine import run_sequence
from .scene import SceneSpec, generate_scene


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stereomem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="render a synthetic scene to PFM files")
    p_gen.add_argument("--spec", required=True, help="scene spec JSON file")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True, help="output directory")

    p_run = sub.add_parser("run", help="estimate disparities for a sequence")
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--config", help="JSON config file; flags override its keys")
    p_run.add_argument("--K", type=int, dest="K")
    p_run.add_argument("--N", type=int, dest="N")
    p_run.add_argument("--alpha", type=float)
    p_run.add_argument("--gamma", type=float)
    p_run.add_argument("--sigma", type=float)
    p_run.add_argument("--sigma-p", type=float, dest="sigma_p")
    p_run.add_argument("--radius", type=int)
    p_run.add_argument("--channels", "--C", type=int, dest="channels")
    p_run.add_argument("--max-disparity", "--D", type=int, dest="max_disparity")
    p_run.add_argument("--pool-factor", type=int, dest="pool_factor")
    p_run.add_argument("--policy", choices=("full", "latest", "random", "ppm"))
    p_run.add_argument("--mode", choices=("offline", "causal"), dest="memory_mode")
    p_run.add_argument("--counter-mode", choices=("reset", "persist"), dest="counter_mode")
    p_run.add_argument("--confidence", choices=("proxy", "head", "none"), dest="confidence_source")
    p_run.add_argument("--head-path", dest="head_path")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--no-memory", action="store_const", const=False, dest="memory")
    p_run.add_argument("--no-play", action="store_const", const=False, dest="play")

    p_eval = sub.add_parser("eval", help="score predictions against a manifest's ground truth")
    p_eval.add_argument("--pred", required=True, help="directory holding disp_*.pfm")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--json", dest="json_out", help="also write the report JSON here")

    p_cmp = sub.add_parser("compare-policies", help="run every policy over a seeded scene suite")
    p_cmp.add_argument("--suite", help="suite JSON ({'scenes': [{'seed':., 'spec':{..}}]})")
    p_cmp.add_argument("--scenes", type=int, help="use N built-in random scenes instead")
    p_cmp.add_argument("--seed", type=int, default=0)
    p_cmp.add_argument("--frames", type=int, default=20, help="frames per built-in scene")
    p_cmp.add_argument("--corrupted", type=int, default=3, help="corrupted frames per built-in scene")
    p_cmp.add_argument("--out", required=True, help="output directory for the comparison report")
    p_cmp.add_argument("--config")
    p_cmp.add_argument("--policies", default="full,latest,random,ppm")
    p_cmp.add_argument("--K", type=int, dest="K")
    p_cmp.add_argument("--N", type=int, dest="N")
    p_cmp.add_argument("--alpha", type=float)

    p_dump = sub.add_parser("trace-dump", help="pretty-print trace records")
    p_dump.add_argument("--trace", required=True)
    p_dump.add_argument("--frame", type=int)
    p_dump.add_argument("--iteration", type=int)
    p_dump.add_argument("--limit", type=int)
    return parser


def _load_config(args, keys) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {k: getattr(args, k, None) for k in keys}
    return cfg.with_overrides(**overrides)


_RUN_KEYS = (
    "K", "N", "alpha", "gamma", "sigma", "sigma_p", "radius", "channels",
    "max_disparity", "pool_factor", "policy", "memory_mode", "counter_mode",
    "confidence_source", "head_path", "seed", "memory", "play",
)


def cmd_generate(args) -> int:
    spec = SceneSpec.from_json(Path(args.spec).read_text(encoding="utf-8"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    video = generate_scene(spec, args.seed)
    entries = []
    for t, (left, right) in enumerate(video.frames):
        names = {
            "left": f"frame_{t:04d}_left.pfm",
            "right": f"frame_{t:04d}_right.pfm",
            "gt": f"frame_{t:04d}_gt.pfm",
        }
        write_pfm_file(out / names["left"], left)
        write_pfm_file(out / names["right"], right)
        write_pfm_file(out / names["gt"], video.gt_disparity[t])
        entries.append(names)
    write_manifest(out / "manifest.json", entries, video.width, video.height)
    meta = {"seed": args.seed, "spec": spec.to_dict(),
            "corrupted_frames": [c.frame for c in spec.corruption]}
    (out / "scene.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {video.T} frames to {out}")
    return 0


def cmd_run(args) -> int:
    config = _load_config(args, _RUN_KEYS)
    video, _ = read_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_sequence(video, config)
    files = []
    for t, disp in enumerate(result.disparities):
        name = f"disp_{t:04d}.pfm"
        write_pfm_file(out / name, FloatRaster(disp.astype("float32")))
        files.append(name)
    with open(out / "trace.jsonl", "w", encoding="utf-8") as fh:
        for rec in result.traces:
            fh.write(json.dumps(rec) + "\n")
    run_manifest = {"disparities": files, "trace": "trace.jsonl", "config": config.to_dict()}
    (out / "run_manifest.json").write_text(json.dumps(run_manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(files)} disparity maps to {out}")
    return 0


def cmd_eval(args) -> int:
    video, _ = read_manifest(args.manifest)
    if video.gt_disparity is None:
        raise ManifestError("manifest has no ground-truth disparities")
    pred_dir = Path(args.pred)
    preds = []
    for t in range(video.T):
        path = pred_dir / f"disp_{t:04d}.pfm"
        if not path.exists():
            raise ManifestError(f"missing prediction: {path}")
        preds.append(read_pfm_file(path).data)
    report = evaluate_sequence(preds, [g.data for g in video.gt_disparity])
    print(report.to_table())
    if args.json_out:
        Path(args.json_out).write_text(report.to_json() + "\n", encoding="utf-8")
    return 0


def cmd_compare_policies(args) -> int:
    config = _load_config(args, ("K", "N", "alpha"))
    if args.suite:
        suite = bench.load_suite(args.suite)
    elif args.scenes:
        suite = bench.default_suite(
            args.scenes, args.seed, frames=args.frames, corrupted_frames=args.corrupted
        )
    else:
        raise UsageError("compare-policies needs --suite or --scenes")
    policies = tuple(p.strip() for p in args.policies.split(",") if p.strip())
    report = bench.compare_policies(suite, config, policies)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.json").write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.to_table())
    return 0


def cmd_trace_dump(args) -> int:
    path = Path(args.trace)
    if not path.exists():
        raise ManifestError(f"trace not found: {path}")
    shown = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if args.frame is not None and rec.get("t") != args.frame:
                continue
            if args.iteration is not None and rec.get("n") != args.iteration:
                continue
            print(json.dumps(rec, indent=2))
            shown += 1
            if args.limit is not None and shown >= args.limit:
                break
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "eval": cmd_eval,
    "compare-policies": cmd_compare_policies,
    "trace-dump": cmd_trace_dump,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (PfmError, SceneSpecError, ManifestError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except StereomemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

import json
from pathlib import Path

import numpy as np
import pytest

from stereomem.cli import main
from stereomem.raster import read_pfm_file

SCENE = {
    "width": 32,
    "height": 32,
    "frames": 3,
    "background_disparity": 4,
    "rectangles": [
        {"x": 8, "y": 8, "width": 8, "height": 8, "disparity": 8, "velocity": [1.0, 0.0]}
    ],
    "texture_cell": 2,
}

RUN_FLAGS = ["--channels", "8", "--K", "2", "--N", "2", "--radius", "2", "--max-disparity", "4"]


def write_scene(tmp_path, doc=None, name="scene.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc or SCENE))
    return path


def generate(tmp_path, seed=0, doc=None):
    spec = write_scene(tmp_path, doc)
    out = tmp_path / "data"
    assert main(["generate", "--spec", str(spec), "--seed", str(seed), "--out", str(out)]) == 0
    return out


class TestGenerate:
    def test_writes_frames_and_manifest(self, tmp_path):
        out = generate(tmp_path)
        pfms = sorted(p.name for p in out.glob("*.pfm"))
        assert len(pfms) == 9  # 3 left + 3 right + 3 gt
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["width"] == 32 and manifest["height"] == 32
        assert len(manifest["frames"]) == 3
        for entry in manifest["frames"]:
            for key in ("left", "right", "gt"):
                assert (out / entry[key]).exists()

    def test_same_seed_identical_bytes(self, tmp_path):
        a = generate(tmp_path / "a", seed=3)
        b = generate(tmp_path / "b", seed=3)
        for pa in sorted(a.glob("*.pfm")):
            assert pa.read_bytes() == (b / pa.name).read_bytes()

    def test_invalid_spec_exits_2(self, tmp_path, capsys):
        bad = dict(SCENE)
        bad["background_disparity"] = -2
        spec = write_scene(tmp_path, bad)
        code = main(["generate", "--spec", str(spec), "--out", str(tmp_path / "x")])
        assert code == 2
        assert "disparity" in capsys.readouterr().err

    def test_missing_subcommand_exits_1(self):
        assert main([]) == 1

    def test_unknown_flag_exits_1(self):
        assert main(["generate", "--nope"]) == 1


class TestRun:
    def test_outputs_and_trace(self, tmp_path):
        data = generate(tmp_path)
        out = tmp_path / "run"
        code = main(["run", "--manifest", str(data / "manifest.json"), "--out", str(out)]
                    + RUN_FLAGS)
        assert code == 0
        assert sorted(p.name for p in out.glob("disp_*.pfm")) == [
            "disp_0000.pfm", "disp_0001.pfm", "disp_0002.pfm"
        ]
        records = [json.loads(line) for line in (out / "trace.jsonl").read_text().splitlines()]
        assert len(records) == 3 * 2
        assert all(len(r["picked"]) == 2 for r in records)
        run_manifest = json.loads((out / "run_manifest.json").read_text())
        assert run_manifest["config"]["K"] == 2

    def test_alpha_zero_matches_no_memory(self, tmp_path):
        data = generate(tmp_path)
        out_a = tmp_path / "alpha0"
        out_b = tmp_path / "nomem"
        manifest = str(data / "manifest.json")
        assert main(["run", "--manifest", manifest, "--out", str(out_a), "--alpha", "0"]
                    + RUN_FLAGS) == 0
        assert main(["run", "--manifest", manifest, "--out", str(out_b), "--no-memory"]
                    + RUN_FLAGS) == 0
        for pa in sorted(out_a.glob("disp_*.pfm")):
            assert pa.read_bytes() == (out_b / pa.name).read_bytes()

    def test_policy_ppm_pick_counts(self, tmp_path):
        doc = dict(SCENE)
        doc["frames"] = 6
        data = generate(tmp_path, doc=doc)
        out = tmp_path / "run"
        assert main(["run", "--manifest", str(data / "manifest.json"), "--out", str(out),
                     "--policy", "ppm", "--K", "5", "--channels", "8", "--N", "2",
                     "--radius", "2", "--max-disparity", "4"]) == 0
        records = [json.loads(line) for line in (out / "trace.jsonl").read_text().splitlines()]
        assert all(len(r["picked"]) == 5 for r in records)

    def test_causal_first_frame(self, tmp_path):
        data = generate(tmp_path)
        out = tmp_path / "run"
        assert main(["run", "--manifest", str(data / "manifest.json"), "--out", str(out),
                     "--mode", "causal"] + RUN_FLAGS) == 0
        records = [json.loads(line) for line in (out / "trace.jsonl").read_text().splitlines()]
        for rec in records:
            if rec["t"] == 0:
                assert rec["picked"] == [0]

    def test_missing_manifest_exits_2(self, tmp_path):
        assert main(["run", "--manifest", str(tmp_path / "none.json"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_config_file_with_overrides(self, tmp_path):
        data = generate(tmp_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"K": 1, "N": 2, "C": 8, "radius": 2, "D": 4}))
        out = tmp_path / "run"
        assert main(["run", "--manifest", str(data / "manifest.json"), "--out", str(out),
                     "--config", str(cfg), "--K", "2"]) == 0
        run_manifest = json.loads((out / "run_manifest.json").read_text())
        assert run_manifest["config"]["K"] == 2  # flag wins
        assert run_manifest["config"]["N"] == 2


class TestEval:
    def test_gt_as_prediction_scores_zero(self, tmp_path, capsys):
        data = generate(tmp_path)
        pred = tmp_path / "pred"
        pred.mkdir()
        manifest = json.loads((data / "manifest.json").read_text())
        for t, entry in enumerate(manifest["frames"]):
            (pred / f"disp_{t:04d}.pfm").write_bytes((data / entry["gt"]).read_bytes())
        report_path = tmp_path / "report.json"
        code = main(["eval", "--pred", str(pred), "--manifest", str(data / "manifest.json"),
                     "--json", str(report_path)])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["epe"] == 0.0
        assert report["tepe"] == 0.0
        assert all(v == 0.0 for v in report["delta_npx"].values())
        assert all(v == 0.0 for v in report["delta_t_npx"].values())

    def test_missing_prediction_lists_path(self, tmp_path, capsys):
        data = generate(tmp_path)
        pred = tmp_path / "pred"
        pred.mkdir()
        code = main(["eval", "--pred", str(pred), "--manifest", str(data / "manifest.json")])
        assert code == 2
        assert "disp_0000.pfm" in capsys.readouterr().err


class TestComparePolicies:
    def test_degenerate_full_equals_ppm(self, tmp_path):
        # with K = T the quality pick keeps every frame, so outputs coincide
        data = generate(tmp_path)
        manifest = str(data / "manifest.json")
        outs = {}
        for policy in ("full", "ppm"):
            out = tmp_path / policy
            assert main(["run", "--manifest", manifest, "--out", str(out),
                         "--policy", policy, "--channels", "8", "--K", "3", "--N", "2",
                         "--radius", "2", "--max-disparity", "4", "--alpha", "1.0"]) == 0
            outs[policy] = out
        for pa in sorted(outs["full"].glob("disp_*.pfm")):
            a = read_pfm_file(pa).data
            b = read_pfm_file(outs["ppm"] / pa.name).data
            assert np.max(np.abs(a - b)) < 1e-5

    def test_compare_command_runs_and_reports(self, tmp_path):
        out = tmp_path / "cmp"
        code = main(["compare-policies", "--scenes", "2", "--seed", "1",
                     "--frames", "4", "--corrupted", "1", "--out", str(out),
                     "--K", "2", "--N", "2"])
        assert code == 0
        doc = json.loads((out / "comparison.json").read_text())
        names = [p["policy"] for p in doc["policies"]]
        assert names == ["full", "latest", "random", "ppm"]
        for entry in doc["policies"]:
            assert entry["scenes"] == 2
            assert 0.0 <= entry["corrupted_selection_rate"] <= 1.0

    def test_requires_suite_or_scenes(self, tmp_path):
        assert main(["compare-policies", "--out", str(tmp_path / "x")]) == 1

    def test_suite_file(self, tmp_path):
        suite = {"scenes": [{"seed": 5, "spec": SCENE}]}
        suite_path = tmp_path / "suite.json"
        suite_path.write_text(json.dumps(suite))
        out = tmp_path / "cmp"
        code = main(["compare-policies", "--suite", str(suite_path), "--out", str(out),
                     "--K", "2", "--N", "2", "--policies", "random,ppm"])
        assert code == 0
        doc = json.loads((out / "comparison.json").read_text())
        assert [p["policy"] for p in doc["policies"]] == ["random", "ppm"]


class TestTraceDump:
    def test_filtering(self, tmp_path, capsys):
        data = generate(tmp_path)
        out = tmp_path / "run"
        assert main(["run", "--manifest", str(data / "manifest.json"), "--out", str(out)]
                    + RUN_FLAGS) == 0
        capsys.readouterr()
        assert main(["trace-dump", "--trace", str(out / "trace.jsonl"),
                     "--frame", "1", "--limit", "1"]) == 0
        printed = capsys.readouterr().out
        rec = json.loads(printed)
        assert rec["t"] == 1

    def test_missing_trace_exits_2(self, tmp_path):
        assert main(["trace-dump", "--trace", str(tmp_path / "none.jsonl")]) == 2

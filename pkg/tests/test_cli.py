"""
Command-line tests: each subcommand end to end on temp files, plus exit codes.
"""

import json
import os

import numpy as np
import pytest


def run(*argv):
    from niom.main import main

    return main(["--log-level", "WARNING", *argv])


@pytest.fixture
def square_png(write_png, square_image):
    return write_png("square.png", square_image)


class TestParser:

    def test_version(self, capsys):
        from niom import __version__

        with pytest.raises(SystemExit) as info:
            run("--version")
        assert info.value.code == 0
        assert f"niom {__version__}" in capsys.readouterr().out

    def test_command_required(self):
        with pytest.raises(SystemExit) as info:
            run()
        assert info.value.code == 2

    def test_every_command_registered(self):
        from niom.main import build_parser

        parser = build_parser()
        for command in ("detect", "corrupt", "weight", "match", "evalpose", "pipeline", "report", "viz", "synth"):
            with pytest.raises(SystemExit) as info:
                parser.parse_args([command, "--help"])
            assert info.value.code == 0


class TestDetectWeightMatch:

    def test_detect(self, square_png, tmp_path, capsys):
        from niom.features import DescriptorSet

        out = str(tmp_path / "square.niok")
        assert run("detect", "--image", square_png, "--out", out) == 0
        assert len(DescriptorSet.load(out)) == 4
        assert "[Detect] 4 keypoints" in capsys.readouterr().out

    def test_detect_missing_image(self, tmp_path, capsys):
        code = run("detect", "--image", str(tmp_path / "none.png"), "--out", str(tmp_path / "x.niok"))
        assert code == 2
        assert "[Detect ERROR] FileNotFoundError" in capsys.readouterr().err

    def test_weight_then_match(self, write_png, textured_image, tmp_path):
        from niom.heatmap import Heatmap
        from niom.matching import MatchSet
        from niom.weighting import WeightedDescriptorSet

        image = write_png("tex.png", textured_image)
        keypoints = str(tmp_path / "tex.niok")
        assert run("detect", "--image", image, "--out", keypoints, "--max-keypoints", "100") == 0

        heat = np.zeros((160, 160))
        heat[:, 80:] = 1.0
        heatmap = str(tmp_path / "half.nioh")
        Heatmap(heat).save(heatmap)
        weighted = str(tmp_path / "tex_w.niok")
        assert run("weight", "--keypoints", keypoints, "--heatmap", heatmap, "--image", image,
                   "--out", weighted) == 0
        loaded = WeightedDescriptorSet.load(weighted)
        assert loaded.weights.min() >= 0.5 and loaded.weights.max() == 1.0

        matches = str(tmp_path / "m.csv")
        assert run("match", "--a", weighted, "--b", weighted, "--out", matches) == 0
        result = MatchSet.load_csv(matches)
        assert len(result) > 0
        assert np.array_equal(result.index_a, result.index_b)

    def test_sinkhorn_cross_attention(self, write_png, textured_image, tmp_path):
        from niom.matching import MatchSet

        image = write_png("tex.png", textured_image)
        keypoints = str(tmp_path / "tex.niok")
        run("detect", "--image", image, "--out", keypoints, "--max-keypoints", "50")
        out = str(tmp_path / "m.csv")
        code = run("match", "--a", keypoints, "--b", keypoints, "--out", out,
                   "--matcher", "sinkhorn", "--scores", "cross-attention")
        assert code == 0
        assert all(0.0 <= c <= 1.0 for c in MatchSet.load_csv(out).confidence)

    def test_match_bad_weights_file(self, write_png, textured_image, tmp_path, capsys):
        image = write_png("tex.png", textured_image)
        keypoints = str(tmp_path / "tex.niok")
        run("detect", "--image", image, "--out", keypoints, "--max-keypoints", "20")
        code = run("match", "--a", keypoints, "--b", keypoints, "--out", str(tmp_path / "m.csv"),
                   "--matcher", "sinkhorn", "--scores", "cross-attention", "--weights", str(tmp_path / "none.niow"))
        assert code == 2


class TestCorrupt:

    def test_single_image(self, square_png, tmp_path):
        from niom.formats import read_image

        out = str(tmp_path / "noisy.png")
        assert run("corrupt", "--kind", "gaussian_noise", "--severity", "3", "--in-a", square_png,
                   "--out-a", out) == 0
        assert read_image(out).shape == (256, 256, 3)

    def test_pair_a_only(self, square_png, tmp_path):
        from niom.formats import read_image

        out_a, out_b = str(tmp_path / "a.png"), str(tmp_path / "b.png")
        assert run("corrupt", "--kind", "Motion Blur", "--severity", "5", "--side", "a",
                   "--in-a", square_png, "--in-b", square_png, "--out-a", out_a, "--out-b", out_b) == 0
        assert np.array_equal(read_image(out_b), read_image(square_png))
        assert not np.array_equal(read_image(out_a), read_image(square_png))

    @pytest.mark.parametrize("extra", [
        ["--kind", "sepia", "--severity", "1"],
        ["--kind", "fog", "--severity", "9"],
        ["--kind", "fog", "--severity", "1", "--side", "b"],
    ])
    def test_bad_input_exits_2(self, square_png, tmp_path, extra):
        assert run("corrupt", *extra, "--in-a", square_png, "--out-a", str(tmp_path / "o.png")) == 2


class TestEvaluation:

    def test_evalpose_on_scene(self, scene_dir, scene_pairs, tmp_path, capsys):
        record = scene_pairs[0]
        kp_a, kp_b = str(tmp_path / "a.niok"), str(tmp_path / "b.niok")
        assert run("detect", "--image", record.image_a, "--out", kp_a, "--max-keypoints", "512") == 0
        assert run("detect", "--image", record.image_b, "--out", kp_b, "--max-keypoints", "512") == 0
        matches = str(tmp_path / "m.csv")
        assert run("match", "--a", kp_a, "--b", kp_b, "--out", matches) == 0

        pair = tmp_path / "pair.json"
        pair.write_text(record.model_copy(update={"keypoints_a": kp_a, "keypoints_b": kp_b}).model_dump_json())
        capsys.readouterr()
        assert run("evalpose", "--matches", matches, "--pair", str(pair)) == 0
        error = float(capsys.readouterr().out.strip().splitlines()[-1])
        assert 0.0 <= error <= 180.0

    def test_evalpose_without_ground_truth(self, tmp_path, write_png):
        write_png("a.png", np.zeros((40, 40, 3)))
        pair = tmp_path / "pair.json"
        pair.write_text(json.dumps({"pair_id": "p", "image_a": "a.png", "image_b": "a.png"}))
        (tmp_path / "m.csv").write_text("index_a,index_b,confidence\n")
        assert run("evalpose", "--matches", str(tmp_path / "m.csv"), "--pair", str(pair)) == 2

    def test_pipeline_report_viz(self, scene_dir, scene_pairs, tmp_path):
        from niom.harness.report import RunReport

        run_json = str(tmp_path / "run.json")
        manifest = os.path.join(scene_dir, "manifest.jsonl")
        assert run("pipeline", "--manifest", manifest, "--out", run_json, "--workers", "2",
                   "--max-keypoints", "256", "--corruption", "defocus_blur", "--severity", "2") == 0
        report = RunReport.load(run_json)
        assert len(report.records) == 3
        assert report.records[0].corruption == "Defocus Blur"

        table = str(tmp_path / "table.csv")
        assert run("report", "--run", run_json, "--format", "csv", "--out", table) == 0
        assert open(table).readline().startswith("protocol,corruption,")
        assert run("report", "--run", run_json, "--out", str(tmp_path / "t.md"), "--threshold", "7") == 2

        record = scene_pairs[1]
        kp_a, kp_b = str(tmp_path / "a.niok"), str(tmp_path / "b.niok")
        run("detect", "--image", record.image_a, "--out", kp_a, "--max-keypoints", "128")
        run("detect", "--image", record.image_b, "--out", kp_b, "--max-keypoints", "128")
        matches = str(tmp_path / "m.csv")
        run("match", "--a", kp_a, "--b", kp_b, "--out", matches)
        viz = str(tmp_path / "viz.png")
        assert run("viz", "--image-a", record.image_a, "--image-b", record.image_b, "--a", kp_a, "--b", kp_b,
                   "--matches", matches, "--out", viz) == 0
        assert os.path.getsize(viz) > 0

    def test_pipeline_suite(self, scene_dir, tmp_path):
        from niom.harness.report import RunReport

        run_json = str(tmp_path / "suite.json")
        assert run("pipeline", "--manifest", os.path.join(scene_dir, "manifest.jsonl"), "--out", run_json,
                   "--workers", "1", "--max-keypoints", "128", "--suite", "--kinds", "brightness",
                   "--protocols", "a") == 0
        report = RunReport.load(run_json)
        assert report.sides() == ["AOnly"]
        assert sorted(report.columns()) == ["mnn/None", "mnn/PaperNormalized"]

    def test_synth(self, tmp_path):
        from niom.harness.manifest import load_manifest

        out = str(tmp_path / "bench")
        assert run("synth", "--out", out, "--pairs", "2", "--width", "96", "--height", "72",
                   "--categories", "SameObject,DomainShift") == 0
        records = load_manifest(os.path.join(out, "manifest.jsonl"))
        assert [r.category.value for r in records] == ["SameObject", "DomainShift"]

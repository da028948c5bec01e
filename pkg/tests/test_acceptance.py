"""
Benchmark-level tests: object weighting against the unweighted baseline on
the 50-pair synthetic benchmark under severity-5 corruptions, the
clean-versus-corrupted gap, and reproducibility of a default-config run.
"""

import filecmp
import os
import time

import numpy as np
import pytest

KINDS = ("gaussian_noise", "defocus_blur", "motion_blur")
PAPER, NONE = "mnn/PaperNormalized", "mnn/None"


@pytest.fixture(scope="module")
def benchmark_suite(tmp_path_factory):
    """The 50-pair benchmark through the clean run and three corruptions under Both and AOnly."""
    from niom.corruptions import CorruptionKind, CorruptionSide
    from niom.harness.pipeline import RunConfig, run_suite
    from niom.harness.scenes import build_benchmark
    from niom.weighting import WeightMode

    start = time.perf_counter()
    records = build_benchmark(str(tmp_path_factory.mktemp("benchmark")), n_pairs=50, seed=0)
    report = run_suite(records, RunConfig(global_seed=0), kinds=[CorruptionKind(k) for k in KINDS],
                       modes=[WeightMode.PAPER_NORMALIZED, WeightMode.NONE],
                       protocols=[CorruptionSide.BOTH, CorruptionSide.A_ONLY], severity=5)
    return report, time.perf_counter() - start


def _corrupted(report, side, column):
    from niom.harness.report import CLEAN_LABEL

    return {(r.pair_id, r.corruption): r for r in report.records
            if r.side == side and r.column == column and r.corruption != CLEAN_LABEL}


def _mean_auc20(report, side, column, corruptions):
    return float(np.mean([report.lookup(side, c, column).auc["20"] for c in corruptions]))


@pytest.mark.slow
class TestObjectWeighting:

    def test_runtime(self, benchmark_suite):
        _, elapsed = benchmark_suite
        assert elapsed < 300.0

    @pytest.mark.parametrize("side", ["Both", "AOnly"])
    def test_auc_not_below_unweighted(self, benchmark_suite, side):
        """Averaged over the three kinds, PaperNormalized AUC@20 >= None AUC@20."""
        from niom.harness.report import CLEAN_LABEL

        report, _ = benchmark_suite
        corruptions = [c for c in report.corruptions(side) if c != CLEAN_LABEL]
        assert len(corruptions) == len(KINDS)
        assert _mean_auc20(report, side, PAPER, corruptions) >= _mean_auc20(report, side, NONE, corruptions)

    @pytest.mark.parametrize("side", ["Both", "AOnly"])
    def test_precision_higher_on_most_pairs(self, benchmark_suite, side):
        """PaperNormalized match precision is strictly higher than None on >= 60% of corrupted pairs."""
        report, _ = benchmark_suite
        paper, none = _corrupted(report, side, PAPER), _corrupted(report, side, NONE)
        assert set(paper) == set(none) and len(paper) == 50 * len(KINDS)

        higher = sum((paper[key].precision or 0.0) > (none[key].precision or 0.0) for key in paper)
        assert higher / len(paper) >= 0.6

    @pytest.mark.parametrize("side", ["Both", "AOnly"])
    @pytest.mark.parametrize("column", [PAPER, NONE])
    def test_clean_beats_corrupted_average(self, benchmark_suite, side, column):
        from niom.harness.report import CLEAN_LABEL

        report, _ = benchmark_suite
        corruptions = [c for c in report.corruptions(side) if c != CLEAN_LABEL]
        clean = report.lookup(side, CLEAN_LABEL, column).auc["20"]
        assert clean > _mean_auc20(report, side, column, corruptions)


class TestReproducibility:

    def test_benchmark_files_repeat(self, tmp_path):
        """Same seed renders byte-identical images and an identical manifest."""
        from niom.harness.scenes import build_benchmark

        first = build_benchmark(str(tmp_path / "one"), n_pairs=10, seed=0)
        second = build_benchmark(str(tmp_path / "two"), n_pairs=10, seed=0)
        for a, b in zip(first, second):
            assert filecmp.cmp(a.image_a, b.image_a, shallow=False)
            assert filecmp.cmp(a.image_b, b.image_b, shallow=False)
            assert a.gt_pose == b.gt_pose
        names = sorted(os.listdir(tmp_path / "one"))
        assert names == sorted(os.listdir(tmp_path / "two"))

    def test_default_run_repeats_across_workers(self, tmp_path):
        """Ten pairs with the default configuration: one worker and eight workers give the same records."""
        from niom.corruptions import CorruptionSpec
        from niom.harness.pipeline import RunConfig, run_pipeline
        from niom.harness.scenes import build_benchmark

        records = build_benchmark(str(tmp_path), n_pairs=10, seed=0)
        config = RunConfig(global_seed=0, corruption=CorruptionSpec(kind="motion_blur", severity=5, seed=3))
        serial = run_pipeline(records, config, workers=1)
        parallel = run_pipeline(records, config, workers=8)

        def outcome(r):
            return (r.pair_id, r.num_keypoints_a, r.num_keypoints_b, r.num_matches, r.pose_error,
                    r.precision, r.inlier_ratio, r.status, r.sequence)

        assert [outcome(r) for r in serial.records] == [outcome(r) for r in parallel.records]
        assert len(serial.records) == 10
        assert all(np.isfinite(v) for v in serial.aggregates[0].auc.values())

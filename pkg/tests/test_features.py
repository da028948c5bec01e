"""
Keypoint detection and description tests.
"""

import numpy as np
import pytest


class TestDetect:

    def test_constant_image(self):
        """Zero gradients everywhere: no keypoints."""
        from niom.features import detect

        assert detect(np.full((64, 64), 0.5)) == []

    def test_square_corners(self, square_image):
        """A white 64x64 square on 256x256 black gives its four corners."""
        from niom.features import detect

        keypoints = detect(square_image)
        assert len(keypoints) == 4
        corners = np.array([[95.5, 95.5], [159.5, 95.5], [95.5, 159.5], [159.5, 159.5]])
        for kp in keypoints:
            distances = np.linalg.norm(corners - np.array(kp.position), axis=1)
            assert distances.min() < 2.0
        found = {int(np.argmin(np.linalg.norm(corners - np.array(kp.position), axis=1))) for kp in keypoints}
        assert found == {0, 1, 2, 3}

    def test_cap(self, textured_image):
        """max_keypoints bounds the output."""
        from niom.features import detect

        assert len(detect(textured_image, max_keypoints=10)) <= 10

    def test_sorted_by_response(self, textured_image):
        """Strongest corners first."""
        from niom.features import detect

        responses = [kp.response for kp in detect(textured_image)]
        assert len(responses) > 10
        assert responses == sorted(responses, reverse=True)

    def test_nms_radius(self, textured_image):
        """No two keypoints closer than nms_radius."""
        from niom.features import detect

        for radius in (2.0, 4.0, 8.0):
            positions = np.array([kp.position for kp in detect(textured_image, nms_radius=radius)])
            diff = positions[:, None, :] - positions[None, :, :]
            dist = np.sqrt((diff ** 2).sum(-1))
            np.fill_diagonal(dist, np.inf)
            assert dist.min() >= radius

    def test_threshold_filters(self, textured_image):
        """Raising the threshold never adds keypoints."""
        from niom.features import detect

        low = detect(textured_image, threshold=1e-4)
        high = detect(textured_image, threshold=1e-2)
        assert len(high) <= len(low)
        assert all(kp.response >= 1e-2 for kp in high)

    def test_image_too_small(self):
        """Images under 32x32 are rejected."""
        from niom.features import detect

        with pytest.raises(ValueError, match="too small"):
            detect(np.zeros((31, 64)))

    def test_non_finite_pixels(self):
        """NaN pixels are rejected."""
        from niom.features import detect

        image = np.zeros((40, 40))
        image[5, 5] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            detect(image)


class TestDescribe:

    def test_uniform_region_is_zero(self):
        """A flat patch yields the all-zero descriptor."""
        from niom.features import Keypoint, describe

        out = describe(np.full((64, 64), 0.3), [Keypoint(32.0, 32.0, 1.0)])
        assert out.descriptors.shape == (1, 128)
        assert not out.descriptors.any()

    def test_brightness_offset_invariance(self):
        """Adding a constant leaves descriptors bit-identical."""
        from niom.features import Keypoint, describe

        # dyadic pixel values so the offset is exact in float64
        gray = np.random.default_rng(5).integers(0, 128, (64, 64)) / 256.0
        keypoints = [Keypoint(20.0, 20.0, 1.0), Keypoint(31.5, 40.25, 1.0), Keypoint(44.0, 25.0, 1.0)]
        assert np.array_equal(describe(gray, keypoints).descriptors,
                              describe(gray + 0.25, keypoints).descriptors)

    def test_textured_norm(self, textured_image):
        """Textured patches are unit-norm within 1e-6, entries in [0, 0.2 * renorm]."""
        from niom.features import describe, detect

        keypoints = detect(textured_image, max_keypoints=50)
        out = describe(textured_image, keypoints)
        norms = np.linalg.norm(out.descriptors, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-6)
        assert out.descriptors.min() >= 0.0
        assert out.descriptors.max() <= 1.0

    def test_empty_keypoints(self, textured_image):
        """No keypoints gives an empty 128-d set."""
        from niom.features import describe

        out = describe(textured_image, [])
        assert len(out) == 0
        assert out.dim == 128

    def test_matches_independent_renormalization(self, textured_image):
        """Clip-and-renormalize agrees with a recomputation from the clipped vector."""
        from niom.features import describe, detect

        out = describe(textured_image, detect(textured_image, max_keypoints=20)).descriptors
        for d in out:
            assert np.allclose(d / np.linalg.norm(d), d, atol=1e-12)


class TestDetectAndDescribe:

    def test_constant_image(self):
        """Flat image: empty set."""
        from niom.features import detect_and_describe

        out = detect_and_describe(np.full((64, 64, 3), 0.5))
        assert len(out) == 0

    def test_chessboard(self, chessboard_image):
        """A chessboard yields at least 50 keypoints with nonzero descriptors."""
        from niom.features import detect_and_describe

        out = detect_and_describe(chessboard_image)
        nonzero = np.linalg.norm(out.descriptors, axis=1) > 0
        assert nonzero.sum() >= 50

    def test_deterministic(self, textured_image):
        """Same input, same output."""
        from niom.features import FeatureConfig, detect_and_describe

        config = FeatureConfig(max_keypoints=300)
        a = detect_and_describe(textured_image, config)
        b = detect_and_describe(textured_image, config)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.descriptors, b.descriptors)

    def test_patches_stay_inside(self, textured_image):
        """Returned keypoints keep the descriptor margin from the border."""
        from niom.features import DESCRIPTOR_MARGIN, detect_and_describe

        out = detect_and_describe(textured_image)
        height, width = textured_image.shape[:2]
        margin = DESCRIPTOR_MARGIN - 1
        assert np.all(out.positions >= margin)
        assert np.all(out.positions[:, 0] <= width - 1 - margin)
        assert np.all(out.positions[:, 1] <= height - 1 - margin)

    def test_niok_roundtrip(self, tmp_path, textured_image):
        """DescriptorSet save/load keeps positions and descriptors (float32)."""
        from niom.features import DescriptorSet, detect_and_describe

        out = detect_and_describe(textured_image)
        path = str(tmp_path / "k.niok")
        out.save(path)
        loaded = DescriptorSet.load(path)
        assert len(loaded) == len(out)
        assert np.allclose(loaded.positions, out.positions, atol=1e-4)
        assert np.allclose(loaded.descriptors, out.descriptors, atol=1e-6)


class TestDescriptorSet:

    def test_rejects_entries_above_one(self):
        """Entries outside [0, 1] are invalid."""
        from niom.features import DescriptorSet

        with pytest.raises(ValueError):
            DescriptorSet(np.zeros((1, 2)), np.zeros(1), np.array([[1.5, 0.0]]))

    def test_rejects_long_vectors(self):
        """Norm above 1 + 1e-6 is invalid."""
        from niom.features import DescriptorSet

        with pytest.raises(ValueError, match="norm"):
            DescriptorSet(np.zeros((1, 2)), np.zeros(1), np.array([[0.9, 0.9]]))

    def test_keypoints_view(self):
        """keypoints exposes (x, y, response)."""
        from niom.features import DescriptorSet

        ds = DescriptorSet(np.array([[1.0, 2.0]]), np.array([0.5]), np.zeros((1, 4)))
        assert ds.keypoints[0].position == (1.0, 2.0)
        assert ds.keypoints[0].response == 0.5

    def test_grayscale_rec601(self):
        """Color input converts with Rec. 601 luma weights."""
        from niom.features import to_grayscale

        pixel = np.array([[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]])
        assert to_grayscale(pixel)[0].tolist() == pytest.approx([0.299, 0.587, 0.114])

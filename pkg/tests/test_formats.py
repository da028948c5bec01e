"""
Binary container tests: NIOH, NIOK, NIOW, PGM and PNG.
"""

import struct

import numpy as np
import pytest


class TestNioh:

    def test_roundtrip_exact_for_float32_values(self, tmp_path):
        """Grid values representable in float32 survive write -> read bit-exactly."""
        from niom.formats import read_nioh, write_nioh

        grid = np.array([[0.0, 0.5, 0.25], [1.0, 0.125, 0.75]])
        path = str(tmp_path / "h.nioh")
        write_nioh(path, grid)
        out = read_nioh(path)
        assert out.shape == (2, 3)
        assert np.array_equal(out, grid)

    def test_header_layout(self, tmp_path):
        """Header is magic, version, width, height, little-endian."""
        from niom.formats import write_nioh

        path = tmp_path / "h.nioh"
        write_nioh(str(path), np.zeros((4, 7)))
        raw = path.read_bytes()
        assert raw[:4] == b"NIOH"
        assert struct.unpack_from("<III", raw, 4) == (1, 7, 4)
        assert len(raw) == 16 + 4 * 28

    def test_bad_magic(self, tmp_path):
        """Wrong magic is a FormatError."""
        from niom.formats import FormatError, read_nioh

        path = tmp_path / "h.nioh"
        path.write_bytes(b"XXXX" + struct.pack("<III", 1, 1, 1) + b"\x00" * 4)
        with pytest.raises(FormatError):
            read_nioh(str(path))

    def test_truncated_payload(self, tmp_path):
        """Fewer payload bytes than width*height floats is a FormatError."""
        from niom.formats import FormatError, read_nioh

        path = tmp_path / "h.nioh"
        path.write_bytes(b"NIOH" + struct.pack("<III", 1, 2, 2) + b"\x00" * 12)
        with pytest.raises(FormatError, match="truncated"):
            read_nioh(str(path))

    def test_non_finite_values(self, tmp_path):
        """NaN in the payload is rejected."""
        from niom.formats import FormatError, read_nioh

        path = tmp_path / "h.nioh"
        payload = np.array([0.0, np.nan], dtype="<f4").tobytes()
        path.write_bytes(b"NIOH" + struct.pack("<III", 1, 2, 1) + payload)
        with pytest.raises(FormatError, match="non-finite"):
            read_nioh(str(path))

    def test_unsupported_version(self, tmp_path):
        """Only version 1 is understood."""
        from niom.formats import FormatError, read_nioh

        path = tmp_path / "h.nioh"
        path.write_bytes(b"NIOH" + struct.pack("<III", 2, 1, 1) + b"\x00" * 4)
        with pytest.raises(FormatError, match="version"):
            read_nioh(str(path))

    def test_missing_file(self, tmp_path):
        """A missing path raises FileNotFoundError."""
        from niom.formats import read_nioh

        with pytest.raises(FileNotFoundError):
            read_nioh(str(tmp_path / "nope.nioh"))


class TestNiok:

    def test_without_weights(self, tmp_path):
        """has_weights = 0 reads back with weights None."""
        from niom.formats import read_niok, write_niok

        positions = np.array([[1.5, 2.0], [10.0, 20.25]])
        responses = np.array([0.5, 0.25])
        descriptors = np.array([[1.0, 0.0, 0.0], [0.0, 0.5, 0.5]])
        path = str(tmp_path / "k.niok")
        write_niok(path, positions, responses, descriptors)

        kf = read_niok(path)
        assert kf.weights is None
        assert np.array_equal(kf.positions, positions)
        assert np.array_equal(kf.responses, responses)
        assert np.array_equal(kf.descriptors, descriptors)

    def test_with_weights(self, tmp_path):
        """The weights column follows the descriptors."""
        from niom.formats import read_niok, write_niok

        path = tmp_path / "k.niok"
        write_niok(str(path), np.zeros((2, 2)), np.zeros(2), np.zeros((2, 4)), np.array([0.5, 1.0]))
        raw = path.read_bytes()
        assert raw[16] == 1
        assert len(raw) == 17 + 4 * (2 * 2 + 2 + 2 * 4 + 2)
        assert np.array_equal(read_niok(str(path)).weights, [0.5, 1.0])

    def test_empty_set(self, tmp_path):
        """n = 0 is a valid file."""
        from niom.formats import read_niok, write_niok

        path = str(tmp_path / "k.niok")
        write_niok(path, np.zeros((0, 2)), np.zeros(0), np.zeros((0, 128)))
        kf = read_niok(path)
        assert kf.positions.shape == (0, 2)
        assert kf.descriptors.shape == (0, 128)

    def test_bad_weights_flag(self, tmp_path):
        """has_weights other than 0/1 is rejected."""
        from niom.formats import FormatError, read_niok

        path = tmp_path / "k.niok"
        path.write_bytes(b"NIOK" + struct.pack("<IIIB", 1, 0, 4, 7))
        with pytest.raises(FormatError, match="has_weights"):
            read_niok(str(path))

    def test_truncated_descriptors(self, tmp_path):
        """A cut-off descriptor block is a FormatError."""
        from niom.formats import FormatError, read_niok

        path = tmp_path / "k.niok"
        body = np.zeros(2 + 1 + 2, dtype="<f4").tobytes()
        path.write_bytes(b"NIOK" + struct.pack("<IIIB", 1, 1, 4, 0) + body)
        with pytest.raises(FormatError, match="descriptors"):
            read_niok(str(path))


class TestNiow:

    def test_roundtrip(self, tmp_path):
        """W_q then W_k, d x d each."""
        from niom.formats import read_niow, write_niow

        w_q = np.arange(9, dtype=np.float64).reshape(3, 3)
        w_k = -w_q
        path = str(tmp_path / "w.niow")
        write_niow(path, w_q, w_k)
        q, k = read_niow(path)
        assert np.array_equal(q, w_q)
        assert np.array_equal(k, w_k)

    def test_bad_magic(self, tmp_path):
        """Non-NIOW bytes are rejected."""
        from niom.formats import FormatError, read_niow

        path = tmp_path / "w.niow"
        path.write_bytes(b"NIOH" + struct.pack("<I", 1) + b"\x00" * 8)
        with pytest.raises(FormatError):
            read_niow(str(path))


class TestImages:

    def test_pgm_normalization(self, tmp_path):
        """8-bit PGM pixels are divided by 255."""
        from PIL import Image
        from niom.formats import read_pgm

        path = str(tmp_path / "h.pgm")
        Image.fromarray(np.array([[0, 255], [51, 102]], dtype=np.uint8)).save(path)
        out = read_pgm(path)
        assert out[0, 0] == 0.0
        assert out[0, 1] == 1.0
        assert out[1, 0] == pytest.approx(0.2)

    def test_pgm_rejects_other_files(self, tmp_path):
        """Non-P5 bytes are not a PGM."""
        from niom.formats import FormatError, read_pgm

        path = tmp_path / "h.pgm"
        path.write_bytes(b"P2\n1 1\n255\n0\n")
        with pytest.raises(FormatError):
            read_pgm(str(path))

    def test_png_roundtrip_rgb(self, tmp_path):
        """read_image(write_image(x)) recovers 8-bit quantized RGB."""
        from niom.formats import read_image, write_image

        image = np.random.default_rng(3).integers(0, 256, (40, 50, 3)) / 255.0
        path = str(tmp_path / "x.png")
        write_image(path, image)
        out = read_image(path)
        assert out.shape == (40, 50, 3)
        assert np.allclose(out, image, atol=1e-12)

    def test_grayscale_png_reads_as_rgb(self, tmp_path):
        """2-D input is written as L and read back as three equal channels."""
        from niom.formats import read_image, write_image

        path = str(tmp_path / "g.png")
        write_image(path, np.full((33, 34), 0.5))
        out = read_image(path)
        assert out.shape == (33, 34, 3)
        assert np.all(out[..., 0] == out[..., 1])

    def test_unreadable_image(self, tmp_path):
        """Garbage bytes raise FormatError."""
        from niom.formats import FormatError, read_image

        path = tmp_path / "x.png"
        path.write_bytes(b"not an image")
        with pytest.raises(FormatError):
            read_image(str(path))

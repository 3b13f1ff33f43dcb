import math

import numpy as np
import pytest
from PIL import Image

from csiris import imagekit
from csiris.errors import DimensionMismatch, ImageTooSmall, ManifestError, UnsupportedFormat
from conftest import write_pgm


def test_load_zero_pgm(tmp_path):
    p = write_pgm(tmp_path / "z.pgm", np.zeros((8, 8)))
    img = imagekit.load_image(p)
    assert img.shape == (8, 8)
    assert np.all(img == 0.0)


def test_load_byte_ramp(tmp_path):
    raw = np.arange(256, dtype=np.uint8).reshape(16, 16)
    p = write_pgm(tmp_path / "ramp.pgm", raw)
    img = imagekit.load_image(p)
    assert img.dtype == np.float64
    np.testing.assert_array_equal(img, raw.astype(float))


def test_load_pgm_with_comments_and_nonsquare(tmp_path):
    raw = (np.arange(8 * 12) % 251).astype(np.uint8).reshape(8, 12)
    p = write_pgm(tmp_path / "c.pgm", raw, header=b"P5\n# made by hand\n12 8\n# max\n255\n")
    np.testing.assert_array_equal(imagekit.load_image(p), raw)


def test_low_maxval_rescaled(tmp_path):
    raw = np.full((8, 8), 15, dtype=np.uint8)
    p = write_pgm(tmp_path / "m.pgm", raw, maxval=15)
    np.testing.assert_allclose(imagekit.load_image(p), 255.0)


def test_reject_16bit(tmp_path):
    p = tmp_path / "d.pgm"
    p.write_bytes(b"P5\n8 8\n65535\n" + bytes(128))
    with pytest.raises(UnsupportedFormat):
        imagekit.load_image(p)


@pytest.mark.parametrize("blob", [b"P5\n8 x\n255\n" + bytes(64), b"P5\n8 8\n255\n" + bytes(10), b"P2\n8 8\n255\n", b"junk"])
def test_reject_malformed(tmp_path, blob):
    p = tmp_path / "bad.pgm"
    p.write_bytes(blob)
    with pytest.raises(UnsupportedFormat):
        imagekit.load_image(p)


def test_reject_small(tmp_path):
    p = write_pgm(tmp_path / "s.pgm", np.zeros((4, 4)))
    with pytest.raises(ImageTooSmall):
        imagekit.load_image(p)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        imagekit.load_image(tmp_path / "nope.pgm")


def test_png_gray_and_rgb(tmp_path):
    raw = (np.arange(100) * 2).astype(np.uint8).reshape(10, 10)
    Image.fromarray(raw, mode="L").save(tmp_path / "g.png")
    np.testing.assert_array_equal(imagekit.load_image(tmp_path / "g.png"), raw)
    Image.fromarray(np.zeros((10, 10, 3), np.uint8), mode="RGB").save(tmp_path / "c.png")
    with pytest.raises(UnsupportedFormat):
        imagekit.load_image(tmp_path / "c.png")


@pytest.mark.parametrize("suffix", [".pgm", ".png"])
def test_save_roundtrip_rounds_and_clamps(tmp_path, suffix):
    ramp = np.add.outer(np.arange(16), np.arange(16)) * 8.3 - 10.0
    ramp[0, 0] = 255.4
    ramp[0, 1] = 254.5
    path = tmp_path / ("r" + suffix)
    imagekit.save_image(ramp, path)
    back = imagekit.load_image(path)
    expect = np.clip(np.floor(ramp + 0.5), 0, 255)
    np.testing.assert_array_equal(back, expect)
    assert back[0, 0] == 255 and back[0, 1] == 255
    # second round trip is a fixed point
    imagekit.save_image(back, path)
    np.testing.assert_array_equal(imagekit.load_image(path), back)


def test_saved_pgm_bytes(tmp_path):
    img = np.arange(64, dtype=float).reshape(8, 8)
    imagekit.save_image(img, tmp_path / "b.pgm")
    assert (tmp_path / "b.pgm").read_bytes() == b"P5\n8 8\n255\n" + bytes(range(64))


def test_save_unwritable(tmp_path):
    with pytest.raises(OSError):
        imagekit.save_image(np.zeros((8, 8)), tmp_path / "no" / "such" / "dir" / "x.pgm")


def test_psnr_values(rng):
    a = rng.uniform(0, 200, (16, 16))
    assert imagekit.psnr(a, a) == math.inf
    assert imagekit.psnr(a, a + 1) == pytest.approx(48.1308, abs=1e-3)
    b = a + rng.normal(0, 5, a.shape)
    assert imagekit.psnr(a, b) == imagekit.psnr(b, a)
    with pytest.raises(DimensionMismatch):
        imagekit.psnr(a, a[:8])


def test_psnr_decreases_with_noise_amplitude():
    rng = np.random.default_rng(7)
    ref = rng.uniform(0, 255, (64, 64))
    noise = rng.standard_normal(ref.shape)
    vals = [imagekit.psnr(ref, ref + amp * noise) for amp in (1, 4, 16)]
    assert vals[0] > vals[1] > vals[2]


def test_as_image_validation():
    with pytest.raises(UnsupportedFormat):
        imagekit.as_image(np.zeros((8, 8, 3)))
    with pytest.raises(ImageTooSmall):
        imagekit.as_image(np.zeros((8, 7)))
    bad = np.zeros((8, 8))
    bad[1, 1] = np.nan
    with pytest.raises(ValueError):
        imagekit.as_image(bad)
    img = imagekit.as_image(np.ones((8, 8)))
    with pytest.raises(ValueError):
        img[0, 0] = 2.0


def test_manifest(tmp_path):
    write_pgm(tmp_path / "a.pgm", np.zeros((8, 8)))
    (tmp_path / "sub").mkdir()
    write_pgm(tmp_path / "sub" / "b.pgm", np.zeros((8, 8)))
    (tmp_path / "m.txt").write_text("# comment\na.pgm\tsubject1\n\nsub/b.pgm\tsubject 2\n")
    man = imagekit.load_manifest(tmp_path / "m.txt")
    assert [lab for _, lab in man] == ["subject1", "subject 2"]
    assert man.entries[1][0] == tmp_path / "sub" / "b.pgm"
    assert len(man) == 2


@pytest.mark.parametrize("text", ["a.pgm subject\n", "a.pgm\t\n", "missing.pgm\tx\n", "# only comments\n"])
def test_manifest_errors(tmp_path, text):
    write_pgm(tmp_path / "a.pgm", np.zeros((8, 8)))
    (tmp_path / "m.txt").write_text(text)
    with pytest.raises(ManifestError):
        imagekit.load_manifest(tmp_path / "m.txt")


def test_manifest_missing(tmp_path):
    with pytest.raises(ManifestError):
        imagekit.load_manifest(tmp_path / "none.txt")

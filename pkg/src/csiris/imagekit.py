"""Grayscale image I/O, dataset manifests and PSNR.

Images live in memory as 2D ``float64`` arrays with intensities on the 8-bit
scale [0, 255]; values are only rounded and clamped when written to disk.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from csiris.errors import (
    DimensionMismatch,
    ImageTooSmall,
    ManifestError,
    UnsupportedFormat,
)

MIN_SIZE = 8
PEAK = 255.0

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_PNM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def as_image(data) -> np.ndarray:
    """Validate ``data`` as a grayscale image and return a read-only float copy."""
    img = np.array(data, dtype=np.float64)
    if img.ndim != 2:
        raise UnsupportedFormat(f"expected a 2D grayscale grid, got shape {img.shape}")
    if img.shape[0] < MIN_SIZE or img.shape[1] < MIN_SIZE:
        raise ImageTooSmall(f"image {img.shape} is smaller than {MIN_SIZE}x{MIN_SIZE}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite intensities")
    img.setflags(write=False)
    return img


def quantize(img: np.ndarray) -> np.ndarray:
    """Round half away from zero and clamp to the 8-bit range."""
    q = np.floor(np.asarray(img, dtype=np.float64) + 0.5)
    return np.clip(q, 0, 255).astype(np.uint8)


def _read_pgm(raw: bytes, path) -> np.ndarray:
    pos = 2
    header = []
    for _ in range(3):
        m = _PNM_TOKEN.match(raw, pos)
        if m is None:
            raise UnsupportedFormat(f"{path}: truncated PGM header")
        header.append(m.group(1))
        pos = m.end()
    try:
        width, height, maxval = (int(tok) for tok in header)
    except ValueError:
        raise UnsupportedFormat(f"{path}: malformed PGM header") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise UnsupportedFormat(f"{path}: malformed PGM header")
    if maxval > 255:
        raise UnsupportedFormat(f"{path}: 16-bit PGM is not supported")
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    body = raw[pos:pos + width * height]
    if len(body) != width * height:
        raise UnsupportedFormat(f"{path}: raster shorter than {width}x{height}")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width).astype(np.float64)
    if maxval != 255:
        pixels *= PEAK / maxval
    return pixels


def _read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "L":
            raise UnsupportedFormat(f"{path}: PNG mode {im.mode!r} is not 8-bit grayscale")
        return np.asarray(im, dtype=np.float64)


def load_image(path) -> np.ndarray:
    """Read an 8-bit grayscale PGM (P5) or PNG file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image: {path}")
    raw = path.read_bytes()
    if raw[:2] == b"P5":
        pixels = _read_pgm(raw, path)
    elif raw[:8] == _PNG_MAGIC:
        pixels = _read_png(path)
    else:
        raise UnsupportedFormat(f"{path}: not a binary PGM or PNG file")
    return as_image(pixels)


def save_image(img, path) -> None:
    """Write ``img`` as PGM or PNG, chosen by file extension (default PGM).

    Intensities are rounded to the nearest integer and clamped to [0, 255].
    """
    path = Path(path)
    data = quantize(as_image(img))
    if path.suffix.lower() == ".png":
        Image.fromarray(data, mode="L").save(path, format="PNG")
        return
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(data.tobytes())


def save_pbm(bits, path) -> None:
    """Write a boolean grid as a binary PBM (P4); True is rendered black."""
    bits = np.asarray(bits, dtype=bool)
    h, w = bits.shape
    packed = np.packbits(bits, axis=1, bitorder="big")
    with open(path, "wb") as fh:
        fh.write(b"P4\n%d %d\n" % (w, h))
        fh.write(packed.tobytes())


def psnr(reference, test) -> float:
    """Peak signal-to-noise ratio in dB with the peak fixed at 255.

    Returns ``math.inf`` for identical images.
    """
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / mse)


@dataclass
class DatasetManifest:
    root: Path
    entries: list[tuple[Path, str]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


def load_manifest(path) -> DatasetManifest:
    """Parse a ``relative/path<TAB>label`` manifest; paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    root = path.parent
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) != 2:
            raise ManifestError(f"{path}:{lineno}: expected 'path<TAB>label'")
        rel, label = parts[0].strip(), parts[1].strip()
        if not label:
            raise ManifestError(f"{path}:{lineno}: empty label")
        image_path = root / rel
        if not image_path.is_file() or not os.access(image_path, os.R_OK):
            raise ManifestError(f"{path}:{lineno}: unreadable image {image_path}")
        entries.append((image_path, label))
    if not entries:
        raise ManifestError(f"{path}: no entries")
    return DatasetManifest(root=root, entries=entries)

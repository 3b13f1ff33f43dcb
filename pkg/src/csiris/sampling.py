"""Random pixel subsampling (the measurement operator) and its adjoint.

Masks are drawn with a self-contained generator so that a given
``(height, width, fraction, seed)`` always selects the same pixels, on any
platform and independent of the installed numpy version:

1. ``m = floor(fraction * height * width + 0.5)``; ``m == 0`` is rejected.
2. A SplitMix64 stream is seeded with ``seed mod 2**64``.
3. A forward Fisher-Yates shuffle of the row-major indices ``0..n-1`` is run
   for its first ``m`` steps: at step ``i`` a uniform ``j`` in ``[i, n)`` is
   drawn and entries ``i`` and ``j`` swapped. Bounded draws use rejection:
   64-bit outputs below ``2**64 mod k`` are discarded, the rest reduced ``mod k``.
4. The first ``m`` shuffled indices, sorted ascending, are the kept pixels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from csiris.errors import DimensionMismatch, InconsistentMeasurements, InvalidFraction
from csiris.imagekit import save_pbm

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """The SplitMix64 generator (Steele, Lea & Flood), one 64-bit word per call."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, k: int) -> int:
        """Uniform integer in [0, k)."""
        reject = (1 << 64) % k
        while True:
            x = self.next()
            if x >= reject:
                return x % k


def mix64(value: int) -> int:
    """SplitMix64 output finalizer applied to a single 64-bit word."""
    z = value & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def kept_count(n: int, fraction: float) -> int:
    if not 0.0 < fraction <= 1.0:
        raise InvalidFraction(f"fraction must be in (0, 1], got {fraction}")
    return int(np.floor(fraction * n + 0.5))


@dataclass(frozen=True)
class SampleMask:
    kept: np.ndarray
    fraction: float
    seed: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.kept.shape

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.kept))

    def to_pbm(self, path) -> None:
        save_pbm(self.kept, path)


@dataclass(frozen=True)
class Measurements:
    """Observed pixels in row-major order."""

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    shape: tuple[int, int]

    def __len__(self):
        return len(self.values)

    @property
    def flat_index(self) -> np.ndarray:
        return self.rows * self.shape[1] + self.cols

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["row", "col", "value"])
            for r, c, v in zip(self.rows, self.cols, self.values):
                writer.writerow([int(r), int(c), repr(float(v))])


def generate_mask(height: int, width: int, fraction: float, seed: int) -> SampleMask:
    n = height * width
    m = kept_count(n, fraction)
    if m == 0:
        raise InvalidFraction(f"fraction {fraction} keeps no pixels of a {height}x{width} grid")
    rng = SplitMix64(seed)
    idx = list(range(n))
    for i in range(m):
        j = i + rng.below(n - i)
        idx[i], idx[j] = idx[j], idx[i]
    kept = np.zeros(n, dtype=bool)
    kept[idx[:m]] = True
    kept = kept.reshape(height, width)
    kept.setflags(write=False)
    return SampleMask(kept=kept, fraction=float(fraction), seed=int(seed))


def full_mask(height: int, width: int, seed: int = 0) -> SampleMask:
    kept = np.ones((height, width), dtype=bool)
    kept.setflags(write=False)
    return SampleMask(kept=kept, fraction=1.0, seed=seed)


def measure(img, mask: SampleMask) -> Measurements:
    x = np.asarray(img, dtype=np.float64)
    if x.shape != mask.shape:
        raise DimensionMismatch(f"image {x.shape} vs mask {mask.shape}")
    rows, cols = np.nonzero(mask.kept)
    return Measurements(rows=rows, cols=cols, values=x[rows, cols].copy(), shape=x.shape)


def embed(meas: Measurements, fill: float = 0.0) -> np.ndarray:
    """Place measurements on a grid, every other pixel set to ``fill``."""
    out = np.full(meas.shape, float(fill))
    out[meas.rows, meas.cols] = meas.values
    return out


def check_consistent(meas: Measurements, mask: SampleMask) -> None:
    if tuple(meas.shape) != tuple(mask.shape):
        raise InconsistentMeasurements(f"measurements {meas.shape} vs mask {mask.shape}")
    h, w = mask.shape
    if len(meas) and (
        meas.rows.min() < 0 or meas.cols.min() < 0
        or meas.rows.max() >= h or meas.cols.max() >= w
    ):
        raise InconsistentMeasurements("measurement position outside the grid")
    if not np.all(mask.kept[meas.rows, meas.cols]):
        raise InconsistentMeasurements("measurement at a position the mask does not keep")
    flat = meas.flat_index
    if np.any(np.diff(flat) <= 0):
        raise InconsistentMeasurements("measurement positions not strictly row-major")

"""Orthonormal 2D DCT and unitary 2D DFT sparsity bases, plus thresholding.

Both transforms use the same energy convention (Parseval holds exactly), so a
threshold expressed relative to coefficient magnitudes means the same thing in
either domain. Coefficient grids are always complex; DCT grids have a zero
imaginary part.
"""

from __future__ import annotations

import enum
import math

import numpy as np
from scipy import fft

from csiris.errors import DimensionMismatch, InvalidFraction


class Domain(enum.Enum):
    DCT = "dct"
    DFT = "dft"

    @classmethod
    def parse(cls, value) -> "Domain":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown transform domain {value!r} (expected dct or dft)") from None


def forward(img, domain) -> np.ndarray:
    """Analysis transform of a real image; returns a complex coefficient grid."""
    domain = Domain.parse(domain)
    x = np.asarray(img, dtype=np.float64)
    if domain is Domain.DCT:
        return fft.dctn(x, type=2, norm="ortho").astype(np.complex128)
    return fft.fft2(x, norm="ortho")


def inverse(coeffs, domain, shape=None, full_output=False):
    """Synthesis transform returning the real part of the image.

    For the DFT the coefficients need not be conjugate symmetric; the energy
    of the discarded imaginary part is returned as a second value when
    ``full_output`` is true.
    """
    domain = Domain.parse(domain)
    c = np.asarray(coeffs)
    if c.ndim != 2 or (shape is not None and tuple(shape) != c.shape):
        raise DimensionMismatch(f"coefficient grid {c.shape} does not match {shape}")
    if domain is Domain.DCT:
        x = fft.idctn(c.real, type=2, norm="ortho")
        if np.iscomplexobj(c) and np.any(c.imag):
            xi = fft.idctn(c.imag, type=2, norm="ortho")
        else:
            xi = None
    else:
        z = fft.ifft2(c, norm="ortho")
        x, xi = z.real.copy(), z.imag
    if full_output:
        discarded = 0.0 if xi is None else float(np.sum(xi * xi))
        return x, discarded
    return x


def _keep_count(keep_fraction: float, n: int) -> int:
    if not 0.0 < keep_fraction <= 1.0:
        raise InvalidFraction(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    # round away float noise before the ceiling so 0.3 * 100 keeps 30, not 31
    return min(n, max(1, math.ceil(round(keep_fraction * n, 9))))


def keep_largest(coeffs, count: int) -> np.ndarray:
    """Zero all but the ``count`` largest-magnitude coefficients.

    Ties go to the lower row-major index. Kept values are copied bit-exactly.
    """
    c = np.asarray(coeffs)
    flat = c.ravel()
    out = np.zeros_like(flat)
    if count >= flat.size:
        return c.copy()
    if count > 0:
        order = np.argsort(-np.abs(flat), kind="stable")[:count]
        out[order] = flat[order]
    return out.reshape(c.shape)


def hard_threshold(coeffs, keep_fraction: float) -> np.ndarray:
    """Keep the ceil(keep_fraction * size) largest-magnitude coefficients."""
    c = np.asarray(coeffs)
    return keep_largest(c, _keep_count(keep_fraction, c.size))


def soft_threshold(coeffs, tau: float) -> np.ndarray:
    """Shrink magnitudes by ``tau`` toward zero, preserving phase."""
    c = np.asarray(coeffs)
    mag = np.abs(c)
    scale = np.zeros_like(mag)
    big = mag > tau
    scale[big] = 1.0 - tau / mag[big]
    return c * scale

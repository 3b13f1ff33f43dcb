"""Iris recognition: circle localization, rubber-sheet unwrapping, Gabor
phase codes and masked Hamming matching.

Angles follow image coordinates: a contour point at angle ``t`` about
``(cx, cy)`` is ``(cx + r cos t, cy + r sin t)`` with ``y`` growing downward,
so ``t = pi/2`` points to the bottom of the image.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import numpy as np

from csiris.errors import (
    DegenerateContour,
    EmptyJointMask,
    LatticeMismatch,
    LocalizationFailed,
    OutOfRange,
    VisibilityRejected,
)
from csiris.imagekit import save_image

MATCH_THRESHOLD = 0.36

# Upper and lower eyelid regions marked invalid in the unwrapped iris.
DEFAULT_EXCLUSION_ARCS = ((math.pi / 4, 3 * math.pi / 4), (5 * math.pi / 4, 7 * math.pi / 4))
# Narrower wedges for the boundary search: lateral arcs alone leave the
# vertical center coordinate almost unconstrained.
LOCALIZER_EXCLUSION_ARCS = ((math.pi / 3, 2 * math.pi / 3), (4 * math.pi / 3, 5 * math.pi / 3))

_MIN_CONTOUR_SAMPLES = 8
_CENTER_CHUNK = 512
_RESPONSE_DECIMALS = 8


@dataclass(frozen=True)
class LocalizerConfig:
    pupil_radius: tuple[int, int] = (12, 32)
    iris_radius: tuple[int, int] = (36, 60)
    stride: int = 2
    sigma: float = 1.0
    angular_samples: int = 128
    exclusion_arcs: tuple = LOCALIZER_EXCLUSION_ARCS
    floor: float = 1.0
    iris_center_tolerance: float = 10.0
    min_visible: float = 0.5
    pupil_min_visible: float = 1.0

    def validate(self, height: int, width: int) -> None:
        half = min(height, width) / 2
        for name, (lo, hi) in (("pupil_radius", self.pupil_radius), ("iris_radius", self.iris_radius)):
            if not 0 < lo < hi < half:
                raise ValueError(f"{name} {lo}..{hi} must satisfy 0 < min < max < {half}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.angular_samples < 64:
            raise ValueError("angular_samples must be >= 64")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass(frozen=True)
class IrisGeometry:
    pupil_x: float
    pupil_y: float
    pupil_r: float
    iris_x: float
    iris_y: float
    iris_r: float
    visible_fraction: float

    def __post_init__(self):
        gap = math.hypot(self.iris_x - self.pupil_x, self.iris_y - self.pupil_y)
        if not gap + self.pupil_r < self.iris_r:
            raise ValueError("pupil circle must lie strictly inside the iris circle")

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


@dataclass(frozen=True)
class PolarIris:
    samples: np.ndarray
    validity: np.ndarray

    @property
    def radial_res(self) -> int:
        return self.samples.shape[0]

    @property
    def angular_res(self) -> int:
        return self.samples.shape[1]

    def to_pgm(self, path) -> None:
        save_image(self.samples, path)


@dataclass(frozen=True)
class GaborBank:
    """Polar Gabor filters placed on a regular lattice over the unwrapped iris.

    Radial quantities are in polar-grid rows, angular ones in radians.
    ``None`` widths and frequencies are derived from the polar resolution.
    """

    frequencies: tuple | None = None
    radial_width: float | None = None
    angular_width: float | None = None
    radial_sites: int = 8
    angular_sites: int = 30
    support: float = 1.5

    def resolved(self, radial_res: int, angular_res: int) -> "GaborBank":
        beta = self.angular_width or 2 * math.pi * 8 / angular_res
        alpha = self.radial_width or radial_res / 3
        freqs = self.frequencies or (2 * math.pi / (2 * beta),)
        return replace(self, frequencies=tuple(float(f) for f in freqs),
                       radial_width=float(alpha), angular_width=float(beta))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["frequencies"] = None if self.frequencies is None else list(self.frequencies)
        return d


class Decision(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"


_CODE_MAGIC = b"IRISCODE"


@dataclass(frozen=True)
class IrisCode:
    """Bits and validity mask shaped (radial sites, angular sites, bits per site)."""

    bits: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.bits.shape != self.mask.shape or self.bits.ndim != 3:
            raise ValueError("bits and mask must share one 3D shape")

    def __len__(self):
        return self.bits.size

    @property
    def shape(self):
        return self.bits.shape

    def to_bytes(self) -> bytes:
        head = _CODE_MAGIC + struct.pack("<3I", *self.bits.shape)
        return (
            head
            + np.packbits(self.bits.ravel(), bitorder="little").tobytes()
            + np.packbits(self.mask.ravel(), bitorder="little").tobytes()
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "IrisCode":
        if blob[:8] != _CODE_MAGIC:
            raise ValueError("not a serialized iris code")
        shape = struct.unpack("<3I", blob[8:20])
        n = int(np.prod(shape))
        nbytes = (n + 7) // 8
        body = np.frombuffer(blob[20:], dtype=np.uint8)
        if body.size != 2 * nbytes:
            raise ValueError("iris code payload has the wrong length")
        bits = np.unpackbits(body[:nbytes], count=n, bitorder="little").astype(bool)
        mask = np.unpackbits(body[nbytes:], count=n, bitorder="little").astype(bool)
        return cls(bits.reshape(shape), mask.reshape(shape))


# --------------------------------------------------------------------------
# localization


def _angles(count: int, arcs) -> np.ndarray:
    t = 2 * math.pi * np.arange(count) / count
    keep = np.ones(count, dtype=bool)
    for lo, hi in arcs:
        keep &= ~((t >= lo) & (t < hi))
    return t[keep]


def _in_arcs(t: np.ndarray, arcs) -> np.ndarray:
    t = np.mod(t, 2 * math.pi)
    hit = np.zeros(t.shape, dtype=bool)
    for lo, hi in arcs:
        hit |= (t >= lo) & (t < hi)
    return hit


def _bilinear(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interpolate at (x, y); returns values (0 outside) and an inside flag."""
    h, w = img.shape
    inside = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    xc = np.clip(x, 0, w - 1)
    yc = np.clip(y, 0, h - 1)
    x0 = np.minimum(np.floor(xc).astype(np.intp), w - 2)
    y0 = np.minimum(np.floor(yc).astype(np.intp), h - 2)
    fx = xc - x0
    fy = yc - y0
    v = (
        (1 - fx) * (1 - fy) * img[y0, x0]
        + fx * (1 - fy) * img[y0, x0 + 1]
        + (1 - fx) * fy * img[y0 + 1, x0]
        + fx * fy * img[y0 + 1, x0 + 1]
    )
    return np.where(inside, v, 0.0), inside


def _kernel(sigma: float) -> np.ndarray:
    half = int(math.ceil(3 * sigma))
    k = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-k * k / (2 * sigma * sigma))
    return g / g.sum()


def _derivative_weights(sigma: float) -> np.ndarray:
    """Weights on consecutive contour means equal to a central difference
    followed by Gaussian smoothing across radius."""
    g = _kernel(sigma)
    c = np.zeros(len(g) + 2)
    for k, gk in enumerate(g):
        c[k + 2] += gk / 2
        c[k] -= gk / 2
    return c


def _radial_responses(img, cx, cy, r_lo, r_hi, cfg: LocalizerConfig, min_coverage=0.0):
    """Blurred radial derivative of contour means for radii r_lo..r_hi.

    Every response averages over one fixed set of angles: those whose points
    lie inside the image for all radii the smoothed derivative touches, so
    the frame edge cannot masquerade as an intensity step. Returns
    (responses, usable) shaped (centers, radii); ``usable`` is false when
    that set has fewer than 8 angles or covers less than ``min_coverage`` of
    the contour outside the exclusion arcs.
    """
    c = _derivative_weights(cfg.sigma)
    half = (len(c) - 3) // 2
    radii = np.arange(r_lo - half - 1, r_hi + half + 2, dtype=np.float64)
    t = _angles(cfg.angular_samples, cfg.exclusion_arcs)
    rr = np.maximum(radii, 0.0)[None, :, None]
    x = cx[:, None, None] + rr * np.cos(t)[None, None, :]
    y = cy[:, None, None] + rr * np.sin(t)[None, None, :]
    vals, inside = _bilinear(img, x, y)

    n_out = r_hi - r_lo + 1
    deriv = np.zeros((len(cx), n_out, len(t)))
    usable_angle = np.ones((len(cx), n_out, len(t)), dtype=bool)
    for i, ci in enumerate(c):
        deriv += ci * vals[:, i:i + n_out, :]
        usable_angle &= inside[:, i:i + n_out, :]
    counts = usable_angle.sum(axis=-1)
    total = np.where(usable_angle, deriv, 0.0).sum(axis=-1)
    need = max(_MIN_CONTOUR_SAMPLES, math.ceil(min_coverage * len(t) - 1e-9))
    return np.abs(total) / np.maximum(counts, 1), counts >= need


def integrodiff_response(img, cx: float, cy: float, r: int, cfg: LocalizerConfig | None = None) -> float:
    """Magnitude of the Gaussian-blurred radial derivative of the mean contour
    intensity of circle ``(cx, cy, r)``."""
    cfg = cfg or LocalizerConfig()
    img = np.asarray(img, dtype=np.float64)
    resp, usable = _radial_responses(
        img, np.array([float(cx)]), np.array([float(cy)]), int(r), int(r), cfg
    )
    if not usable[0, 0]:
        raise DegenerateContour(f"circle ({cx}, {cy}, {r}) has fewer than "
                                f"{_MIN_CONTOUR_SAMPLES} in-image contour samples")
    return float(resp[0, 0])


def _best_circle(img, centers, r_lo, r_hi, cfg, radius_ok=None, min_coverage=0.0):
    """Argmax over (center, radius); ties -> smaller radius, then row-major center.

    Returns (response, x, y, r) or None when no candidate is usable.
    """
    best = None
    for start in range(0, len(centers), _CENTER_CHUNK):
        chunk = centers[start:start + _CENTER_CHUNK]
        cx = chunk[:, 0].astype(np.float64)
        cy = chunk[:, 1].astype(np.float64)
        resp, usable = _radial_responses(img, cx, cy, r_lo, r_hi, cfg, min_coverage)
        if radius_ok is not None:
            usable &= radius_ok(cx, cy, np.arange(r_lo, r_hi + 1))
        resp = np.where(usable, np.round(resp, _RESPONSE_DECIMALS), -np.inf)
        ci, ri = np.nonzero(resp == resp.max())
        if not np.isfinite(resp.max()):
            continue
        cand = min(zip(ri, chunk[ci, 1], chunk[ci, 0], ci))
        key = (-resp[cand[3], cand[0]], r_lo + int(cand[0]), int(cand[1]), int(cand[2]))
        if best is None or key < best:
            best = key
    if best is None:
        return None
    neg, r, y, x = best
    return -neg, x, y, r


def _lattice(h, w, stride):
    ys, xs = np.meshgrid(np.arange(0, h, stride), np.arange(0, w, stride), indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def _neighborhood(x, y, reach, h, w):
    ys, xs = np.meshgrid(np.arange(y - reach, y + reach + 1), np.arange(x - reach, x + reach + 1), indexing="ij")
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1)
    ok = (pts[:, 0] >= 0) & (pts[:, 0] < w) & (pts[:, 1] >= 0) & (pts[:, 1] < h)
    return pts[ok]


def visible_fraction(shape, cx, cy, r, cfg: LocalizerConfig) -> float:
    """Share of the contour outside the exclusion arcs that falls inside the image."""
    h, w = shape
    t = _angles(cfg.angular_samples, cfg.exclusion_arcs)
    x = cx + r * np.cos(t)
    y = cy + r * np.sin(t)
    inside = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    return float(np.count_nonzero(inside)) / len(t)


def localize(img, cfg: LocalizerConfig | None = None) -> IrisGeometry:
    """Find the pupil and iris boundaries by maximizing the integro-differential
    response, first over the pupil radius range on the whole image, then over
    the iris range with centers near the pupil center."""
    cfg = cfg or LocalizerConfig()
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    cfg.validate(h, w)

    p_lo, p_hi = cfg.pupil_radius
    cover = cfg.pupil_min_visible
    coarse = _best_circle(img, _lattice(h, w, cfg.stride), p_lo, p_hi, cfg, min_coverage=cover)
    if coarse is None:
        raise LocalizationFailed("no usable pupil candidate")
    fine = _best_circle(img, _neighborhood(coarse[1], coarse[2], cfg.stride, h, w),
                        p_lo, p_hi, cfg, min_coverage=cover)
    pupil = min(coarse, fine, key=lambda c: (-c[0], c[3], c[2], c[1]))
    if pupil[0] < cfg.floor:
        raise LocalizationFailed(f"pupil response {pupil[0]:.3g} below floor {cfg.floor}")
    _, px, py, pr = pupil

    tol = cfg.iris_center_tolerance
    reach = int(math.floor(tol))

    def near_pupil(pts):
        d = np.hypot(pts[:, 0] - px, pts[:, 1] - py)
        ok = (d <= tol) & (pts[:, 0] >= 0) & (pts[:, 0] < w) & (pts[:, 1] >= 0) & (pts[:, 1] < h)
        return pts[ok]

    def contains_pupil(cx, cy, radii):
        gap = np.hypot(cx - px, cy - py)
        return (gap[:, None] + pr) < radii[None, :]

    i_lo, i_hi = cfg.iris_radius
    offsets = np.arange(-(reach // cfg.stride) * cfg.stride, reach + 1, cfg.stride)
    grid = np.array([(px + dx, py + dy) for dy in offsets for dx in offsets])
    coarse = _best_circle(img, near_pupil(grid), i_lo, i_hi, cfg, contains_pupil)
    if coarse is None:
        raise LocalizationFailed("no usable iris candidate")
    fine = _best_circle(img, near_pupil(_neighborhood(coarse[1], coarse[2], cfg.stride, h, w)),
                        i_lo, i_hi, cfg, contains_pupil)
    iris = min(coarse, fine, key=lambda c: (-c[0], c[3], c[2], c[1]))
    if iris[0] < cfg.floor:
        raise LocalizationFailed(f"iris response {iris[0]:.3g} below floor {cfg.floor}")
    _, ix, iy, ir = iris

    vis = visible_fraction(img.shape, ix, iy, ir, cfg)
    if vis < cfg.min_visible:
        raise VisibilityRejected(f"only {vis:.0%} of the iris boundary is visible")
    return IrisGeometry(float(px), float(py), float(pr), float(ix), float(iy), float(ir), vis)


# --------------------------------------------------------------------------
# normalization


def normalize(img, geo: IrisGeometry, radial_res: int = 16, angular_res: int = 240,
              exclusion_arcs=DEFAULT_EXCLUSION_ARCS) -> PolarIris:
    """Rubber-sheet unwrapping of the annulus between the pupil and iris circles.

    Row ``i`` sits at normalized radius ``(i + 0.5) / radial_res`` on the
    segment joining the pupil boundary point (about the pupil center) to the
    iris boundary point (about the iris center) at angle ``2 pi j / angular_res``.
    """
    img = np.asarray(img, dtype=np.float64)
    rho = (np.arange(radial_res) + 0.5) / radial_res
    theta = 2 * math.pi * np.arange(angular_res) / angular_res
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    inner_x = geo.pupil_x + geo.pupil_r * cos_t
    inner_y = geo.pupil_y + geo.pupil_r * sin_t
    outer_x = geo.iris_x + geo.iris_r * cos_t
    outer_y = geo.iris_y + geo.iris_r * sin_t
    x = (1 - rho)[:, None] * inner_x[None, :] + rho[:, None] * outer_x[None, :]
    y = (1 - rho)[:, None] * inner_y[None, :] + rho[:, None] * outer_y[None, :]
    samples, inside = _bilinear(img, x, y)
    validity = inside & ~_in_arcs(theta, exclusion_arcs)[None, :]
    return PolarIris(samples=samples, validity=validity)


# --------------------------------------------------------------------------
# encoding


def _lattice_layout(bank: GaborBank, radial_res: int, angular_res: int):
    if angular_res % bank.angular_sites:
        raise LatticeMismatch(
            f"{bank.angular_sites} angular sites do not divide {angular_res} polar columns")
    if not 0 < bank.radial_sites <= radial_res:
        raise LatticeMismatch(f"{bank.radial_sites} radial sites on {radial_res} polar rows")
    rows = (np.arange(bank.radial_sites) + 0.5) * radial_res / bank.radial_sites - 0.5
    cols = np.arange(bank.angular_sites) * (angular_res // bank.angular_sites)
    return rows, cols


def encode(polar: PolarIris, bank: GaborBank | None = None) -> IrisCode:
    """Two phase bits (sign of real and imaginary part) per lattice site and
    frequency of the DC-free polar Gabor response."""
    bank = (bank or GaborBank()).resolved(polar.radial_res, polar.angular_res)
    n_rows, n_cols = polar.samples.shape
    site_rows, site_cols = _lattice_layout(bank, n_rows, n_cols)
    dtheta = 2 * math.pi / n_cols
    alpha, beta = bank.radial_width, bank.angular_width

    reach = int(math.floor(bank.support * beta / dtheta + 1e-9))
    offsets = np.arange(-reach, reach + 1)
    ang_env = np.exp(-((offsets * dtheta) / beta) ** 2)
    cols = (site_cols[:, None] + offsets[None, :]) % n_cols          # (A, D)
    patch = polar.samples[:, cols]                                      # (R, A, D)
    bad = ~polar.validity[:, cols]

    mu = (np.arange(n_rows) + 0.5) / n_rows
    dist = site_rows[:, None] - np.arange(n_rows)[None, :]              # (S, R)
    in_support = np.abs(dist) <= bank.support * alpha
    rad_env = np.where(in_support, mu[None, :] * np.exp(-(dist / alpha) ** 2), 0.0)

    weight = rad_env[:, :, None] * ang_env[None, None, :]               # (S, R, D)
    wsum = weight.sum(axis=(1, 2))
    local_mean = np.einsum("srd,rad->sa", weight, patch) / wsum[:, None]
    centered = patch[None, :, :, :] - local_mean[:, None, :, None]      # (S, R, A, D)
    scale = np.einsum("srd,srad->sa", weight, np.abs(patch)[None]) + 1e-300
    masked_site = np.einsum("sr,ra->sa", in_support.astype(np.int64),
                            bad.sum(axis=2, dtype=np.int64)) > 0

    bits, mask = [], []
    for freq in bank.frequencies:
        carrier = np.exp(1j * freq * offsets * dtheta)
        resp = np.einsum("srd,srad->sa", weight * carrier[None, None, :], centered)
        for part in (resp.real, resp.imag):
            zero = np.abs(part) <= 1e-9 * scale
            bits.append(np.where(zero, True, part >= 0))
            mask.append(~(zero | masked_site))
    return IrisCode(bits=np.stack(bits, axis=-1), mask=np.stack(mask, axis=-1))


# --------------------------------------------------------------------------
# matching


def _hd_at(a: IrisCode, b: IrisCode, shift: int):
    bits = np.roll(b.bits, shift, axis=1)
    mask = np.roll(b.mask, shift, axis=1)
    joint = a.mask & mask
    total = int(np.count_nonzero(joint))
    if total == 0:
        return None
    return Fraction(int(np.count_nonzero((a.bits ^ bits) & joint)), total)


def hamming(a: IrisCode, b: IrisCode, max_shift: int = 8) -> tuple[float, int]:
    """Smallest masked fractional Hamming distance over cyclic angular shifts of ``b``.

    Ties prefer the smaller absolute shift, then the negative one.
    """
    if a.shape != b.shape:
        raise ValueError(f"code shapes differ: {a.shape} vs {b.shape}")
    best = None
    for shift in range(-max_shift, max_shift + 1):
        hd = _hd_at(a, b, shift)
        if hd is None:
            continue
        key = (hd, abs(shift), shift)
        if best is None or key < best:
            best = key
    if best is None:
        raise EmptyJointMask("no shift leaves any jointly valid bit")
    return float(best[0]), best[2]


def decide(hd: float) -> Decision:
    if not 0.0 <= hd <= 1.0:
        raise OutOfRange(f"Hamming distance {hd} outside [0, 1]")
    return Decision.PASS if hd < MATCH_THRESHOLD else Decision.FAIL


# --------------------------------------------------------------------------
# end to end


@dataclass(frozen=True)
class IrisPipeline:
    localizer: LocalizerConfig = field(default_factory=LocalizerConfig)
    bank: GaborBank = field(default_factory=GaborBank)
    radial_res: int = 16
    angular_res: int = 240
    max_shift: int = 8
    exclusion_arcs: tuple = DEFAULT_EXCLUSION_ARCS

    def extract(self, img):
        """Localize, unwrap and encode; returns (IrisCode, IrisGeometry)."""
        geo = localize(img, self.localizer)
        polar = normalize(img, geo, self.radial_res, self.angular_res, self.exclusion_arcs)
        return encode(polar, self.bank), geo

    def match(self, probe: IrisCode, gallery: IrisCode):
        hd, shift = hamming(gallery, probe, self.max_shift)
        return hd, shift, decide(hd)

    def as_dict(self) -> dict:
        loc = asdict(self.localizer)
        loc["exclusion_arcs"] = [list(a) for a in self.localizer.exclusion_arcs]
        loc["pupil_radius"] = list(self.localizer.pupil_radius)
        loc["iris_radius"] = list(self.localizer.iris_radius)
        bank = self.bank.resolved(self.radial_res, self.angular_res)
        return {
            "localizer": loc,
            "gabor": bank.as_dict(),
            "radial_res": self.radial_res,
            "angular_res": self.angular_res,
            "max_shift": self.max_shift,
            "exclusion_arcs": [list(a) for a in self.exclusion_arcs],
        }

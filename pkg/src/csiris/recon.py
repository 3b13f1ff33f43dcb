"""Compressive-sensing recovery of subsampled images.

Three solvers share one entry point, :func:`reconstruct`:

``TV``
    Projected gradient descent on the (smoothed) total variation, with the
    iterate projected onto the data-fidelity ball after every step.
``L1``
    Iterative soft thresholding in a transform domain with a geometrically
    decaying threshold (measured pixels re-imposed every iteration).
``TV_DOMAIN``
    Iterative hard thresholding in a transform domain plus one smoothed-TV
    gradient step per iteration. The retained support never exceeds
    ``max_support`` times the number of measurements; past that point the
    data no longer pin down the coefficients and the domain stops mattering.

Thresholds for L1/TV_DOMAIN are ``start * decay**t`` times the largest
coefficient magnitude of the current iterate.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from csiris import transforms
from csiris.sampling import Measurements, SampleMask, check_consistent, embed
from csiris.transforms import Domain

# Iterative thresholding moves slowly while the threshold is large; declaring
# convergence is only allowed once the schedule has fallen below this share of
# its starting value.
_ARM_CONVERGENCE = 1e-2


class Mode(enum.Enum):
    TV = "tv"
    L1 = "l1"
    TV_DOMAIN = "tv_domain"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown solver mode {value!r}") from None


@dataclass(frozen=True)
class SolverConfig:
    mode: Mode = Mode.TV_DOMAIN
    domain: Domain = Domain.DCT
    epsilon: float = 0.0
    max_iters: int = 300
    step_size: float = 0.25
    tv_smoothing: float = 1e-3
    threshold_start: float = 0.30
    threshold_decay: float = 0.95
    convergence_tol: float = 1e-5
    max_support: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        object.__setattr__(self, "domain", Domain.parse(self.domain))
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.step_size <= 0 or self.tv_smoothing <= 0:
            raise ValueError("step_size and tv_smoothing must be positive")
        if not 0 < self.threshold_decay <= 1:
            raise ValueError("threshold_decay must be in (0, 1]")
        if self.threshold_start <= 0:
            raise ValueError("threshold_start must be positive")
        if self.max_support <= 0:
            raise ValueError("max_support must be positive")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["domain"] = self.domain.value
        return d

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.as_dict().items())

    @classmethod
    def from_mapping(cls, mapping) -> "SolverConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            key = key.strip().lower()
            if key not in types:
                raise ValueError(f"unknown solver option {key!r}")
            if key in ("mode", "domain"):
                kwargs[key] = raw
            elif types[key] in (int, "int"):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str) -> "SolverConfig":
        mapping = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"expected key = value, got {line!r}")
            mapping[key.strip()] = value.strip()
        return cls.from_mapping(mapping)


@dataclass
class ReconReport:
    iterations: int
    final_tv: float
    final_residual: float
    converged: bool
    tv_trace: list = field(default_factory=list)
    discarded_imag_energy: float = 0.0
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def forward_differences(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertical and horizontal forward differences, zero across the far borders."""
    x = np.asarray(x, dtype=np.float64)
    dv = np.zeros_like(x)
    dh = np.zeros_like(x)
    dv[:-1, :] = x[1:, :] - x[:-1, :]
    dh[:, :-1] = x[:, 1:] - x[:, :-1]
    return dv, dh


def tv(img, smoothing: float = 0.0) -> float:
    """Isotropic total variation, sum over pixels of the forward-difference norm.

    With ``smoothing > 0`` this is the differentiable surrogate
    ``sum(sqrt(|D x|^2 + smoothing^2))`` that :func:`tv_gradient` differentiates.
    The sum is exactly rounded, so the value does not depend on summation order.
    """
    dv, dh = forward_differences(img)
    return math.fsum(np.sqrt(dv * dv + dh * dh + smoothing * smoothing).ravel().tolist())


def tv_gradient(img, smoothing: float = 1e-3) -> np.ndarray:
    if smoothing <= 0:
        raise ValueError("smoothing must be positive")
    dv, dh = forward_differences(img)
    norm = np.sqrt(dv * dv + dh * dh + smoothing * smoothing)
    a = dv / norm
    b = dh / norm
    a[-1, :] = 0.0
    b[:, -1] = 0.0
    g = -a - b
    g[1:, :] += a[:-1, :]
    g[:, 1:] += b[:, :-1]
    return g


def _project(x: np.ndarray, meas: Measurements, epsilon: float) -> None:
    """In place: pull the kept pixels into the ball ||x_kept - y||_2 <= epsilon."""
    r, c = meas.rows, meas.cols
    resid = x[r, c] - meas.values
    norm = float(np.sqrt(np.sum(resid * resid)))
    if norm <= epsilon:
        return
    if epsilon == 0.0:
        x[r, c] = meas.values
    else:
        x[r, c] = meas.values + resid * (epsilon / norm)


def _residual(x: np.ndarray, meas: Measurements) -> float:
    resid = x[meas.rows, meas.cols] - meas.values
    return float(np.sqrt(np.sum(resid * resid)))


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    denom = float(np.sqrt(np.sum(old * old)))
    diff = float(np.sqrt(np.sum((new - old) ** 2)))
    return diff / denom if denom > 0 else diff


def reconstruct(meas: Measurements, mask: SampleMask, cfg: SolverConfig | None = None):
    """Recover a full image from pixel measurements.

    Returns ``(image, ReconReport)``. The image is clamped to [0, 255]; hitting
    ``max_iters`` is reported through ``converged=False``, not raised.
    """
    cfg = cfg or SolverConfig()
    check_consistent(meas, mask)
    fill = float(np.mean(meas.values)) if len(meas) else 0.0
    x = embed(meas, fill)
    _project(x, meas, cfg.epsilon)

    trace = []
    converged = False
    discarded = 0.0
    level = cfg.threshold_start
    it = 0
    for it in range(1, cfg.max_iters + 1):
        prev = x
        if cfg.mode is Mode.TV:
            x = x - cfg.step_size * tv_gradient(x, cfg.tv_smoothing)
            armed = True
        else:
            z = x.copy()
            _project(z, meas, cfg.epsilon)
            coeffs = transforms.forward(z, cfg.domain)
            tau = level * float(np.max(np.abs(coeffs)))
            if cfg.mode is Mode.L1:
                coeffs = transforms.soft_threshold(coeffs, tau)
            else:
                keep = int(np.count_nonzero(np.abs(coeffs) >= tau))
                keep = max(1, min(keep, int(cfg.max_support * len(meas))))
                coeffs = transforms.keep_largest(coeffs, keep)
            x, discarded = transforms.inverse(coeffs, cfg.domain, full_output=True)
            if cfg.mode is Mode.TV_DOMAIN:
                x -= cfg.step_size * tv_gradient(x, cfg.tv_smoothing)
            armed = level < _ARM_CONVERGENCE * cfg.threshold_start
            level *= cfg.threshold_decay
        _project(x, meas, cfg.epsilon)
        trace.append(tv(x))
        if armed and _relative_change(x, prev) < cfg.convergence_tol:
            converged = True
            break

    x = np.clip(x, 0.0, 255.0)
    report = ReconReport(
        iterations=it,
        final_tv=tv(x),
        final_residual=_residual(x, meas),
        converged=converged,
        tv_trace=trace,
        discarded_imag_energy=discarded,
        config=cfg.as_dict(),
    )
    return x, report


def with_domain(cfg: SolverConfig, domain) -> SolverConfig:
    return replace(cfg, domain=Domain.parse(domain))

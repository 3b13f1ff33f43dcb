"""Synthetic eye images for tests and the bundled fixture set.

``synthetic_eye`` draws flat concentric disks with exactly known geometry.
``iris_like`` adds what makes recognition non-trivial: radially streaked
stroma texture, crypts, a collarette, soft limbus, eyelids and sensor noise.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy import ndimage


def synthetic_eye(size=128, center=(64.0, 64.0), pupil_r=20.0, iris_r=50.0,
                  pupil=10.0, iris=100.0, sclera=220.0, shape=None) -> np.ndarray:
    h, w = shape or (size, size)
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    d = np.hypot(x - center[0], y - center[1])
    img = np.full((h, w), float(sclera))
    img[d <= iris_r] = iris
    img[d <= pupil_r] = pupil
    return img


def _polar_texture(rng, n_rho=48, n_theta=720, rho_sigma=3.0, theta_sigma=1.2):
    field = rng.standard_normal((n_rho, n_theta))
    field = ndimage.gaussian_filter(field, (rho_sigma, theta_sigma), mode=("nearest", "wrap"))
    return field / field.std()


def iris_like(seed: int, size: int = 128, texture: float = 30.0, grain: float = 4.0,
              coarse_weight: float = 0.0, crypt_depth: float = 0.3,
              ramp=(0.5, 0.7)) -> np.ndarray:
    """A textured, iris-like eye image, deterministic in ``seed``.

    ``texture`` is the stroma contrast, ``grain`` the angular correlation length
    of the streaks (in 1/720ths of a turn), ``coarse_weight`` mixes in a blotchy
    low-frequency layer, ``crypt_depth`` scales the dark crypts and ``ramp`` is
    the range of the illumination gradient in gray levels per pixel.
    """
    rng = np.random.default_rng(seed)
    c = size / 2
    cx = c + rng.uniform(-4, 4)
    cy = c + rng.uniform(-4, 4)
    iris_r = rng.uniform(0.36, 0.42) * size
    pupil_r = iris_r * rng.uniform(0.35, 0.45)
    px = cx + rng.uniform(-1.5, 1.5)
    py = cy + rng.uniform(-1.0, 1.0)

    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    d_iris = np.hypot(x - cx, y - cy)
    d_pupil = np.hypot(x - px, y - py)
    theta = np.mod(np.arctan2(y - cy, x - cx), 2 * math.pi)

    # normalized radius across the annulus, 0 at the pupil edge, 1 at the limbus
    rho = np.clip((d_pupil - pupil_r) / np.maximum(iris_r - pupil_r, 1e-6), 0.0, 1.0)

    n_rho, n_theta = 48, 720
    fine = _polar_texture(rng, n_rho, n_theta, rho_sigma=3.0, theta_sigma=grain)
    coarse = _polar_texture(rng, n_rho, n_theta, rho_sigma=6.0, theta_sigma=6.0)
    coords = np.stack([rho * (n_rho - 1), theta / (2 * math.pi) * n_theta])
    tex = (ndimage.map_coordinates(fine, coords, order=1, mode="wrap")
           + coarse_weight * ndimage.map_coordinates(coarse, coords, order=1, mode="wrap"))

    base = rng.uniform(85, 115)
    collarette = 0.35 + rng.uniform(-0.05, 0.05)
    stroma = base + 14 * rho - 12 * np.exp(-((rho - collarette) / 0.06) ** 2) + texture * tex
    for _ in range(rng.integers(5, 9)):
        cr = rng.uniform(0.15, 0.85)
        ct = rng.uniform(0, 2 * math.pi)
        dt = np.angle(np.exp(1j * (theta - ct)))
        stroma -= crypt_depth * rng.uniform(15, 30) * np.exp(-((rho - cr) / 0.06) ** 2 - (dt / 0.08) ** 2)

    sclera = rng.uniform(190, 215) - 0.08 * np.abs(x - cx)
    pupil = rng.uniform(12, 25)

    # soft boundaries (about one pixel wide)
    limbus = 1.0 / (1.0 + np.exp((d_iris - iris_r) / 0.8))
    pupil_edge = 1.0 / (1.0 + np.exp((d_pupil - pupil_r) / 0.6))
    img = sclera * (1 - limbus) + stroma * limbus
    img = pupil * pupil_edge + img * (1 - pupil_edge)

    # eyelids: parabolas crossing the top and bottom of the iris
    skin = rng.uniform(140, 165) + 12 * ndimage.gaussian_filter(rng.standard_normal((size, size)), 1.2) / 0.23
    top = cy - iris_r * rng.uniform(0.88, 0.98) + 0.012 * (x - cx) ** 2
    bottom = cy + iris_r * rng.uniform(0.95, 1.05) - 0.010 * (x - cx) ** 2
    lid = 1.0 / (1.0 + np.exp((y - top) / 1.0)) + 1.0 / (1.0 + np.exp((bottom - y) / 1.0))
    lid = np.clip(lid, 0.0, 1.0)
    img = skin * lid + img * (1 - lid)

    # eyelashes: thin dark strands hanging from the upper lid
    for _ in range(int(rng.integers(25, 45))):
        x0 = cx + rng.uniform(-1.1, 1.1) * iris_r
        y0 = cy - iris_r * 0.95 + 0.012 * (x0 - cx) ** 2
        length = rng.uniform(0.15, 0.45) * iris_r
        bend = rng.uniform(-0.4, 0.4)
        s = np.linspace(0, 1, 60)
        lx = x0 + bend * length * s ** 2
        ly = y0 + length * s
        dist = np.full((size, size), np.inf)
        for px_, py_ in zip(lx, ly):
            dist = np.minimum(dist, np.hypot(x - px_, y - py_))
        img -= rng.uniform(40, 80) * np.exp(-(dist / 0.7) ** 2)

    # uneven illumination from an off-axis illuminator
    tilt = rng.uniform(0, 2 * math.pi)
    img += rng.uniform(*ramp) * ((x - c) * math.cos(tilt) + (y - c) * math.sin(tilt))

    img = img + 3.0 * rng.standard_normal((size, size))
    return np.clip(img, 0.0, 255.0)


FIXTURE_SEEDS = (0, 1, 2)


def write_fixtures(directory, seeds=FIXTURE_SEEDS, size: int = 128) -> Path:
    """Quantize ``iris_like`` eyes to PGM files plus a manifest; returns its path."""
    from csiris.imagekit import save_image

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = ["# bundled iris-like fixtures: synth.iris_like(seed, size)"]
    for seed in seeds:
        name = f"eye_{seed:02d}.pgm"
        save_image(iris_like(seed, size), directory / name)
        lines.append(f"{name}\teye{seed:02d}")
    manifest = directory / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest

"""Compressive-sensing reconstruction of undersampled iris images and
Daugman-style recognition over the reconstructions."""

from csiris.errors import CSIrisError
from csiris.imagekit import as_image, load_image, save_image, psnr, load_manifest
from csiris.transforms import Domain, forward, inverse, hard_threshold, soft_threshold
from csiris.sampling import SampleMask, Measurements, generate_mask, measure, embed
from csiris.recon import Mode, SolverConfig, ReconReport, tv, tv_gradient, reconstruct
from csiris.iris import (
    LocalizerConfig,
    IrisGeometry,
    PolarIris,
    GaborBank,
    IrisCode,
    integrodiff_response,
    localize,
    normalize,
    encode,
    hamming,
    decide,
    MATCH_THRESHOLD,
)

__version__ = "0.1.0"

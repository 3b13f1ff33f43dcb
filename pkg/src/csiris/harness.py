"""Experiment driver: sampling fraction x sparsity domain sweeps over a dataset.

For every image in a manifest the fully sampled original is enrolled (localized,
unwrapped and encoded). Then for every (domain, fraction) cell the image is
subsampled, reconstructed, scored by PSNR, pushed through the same iris pipeline
and matched against its enrollment template.

Cell seeds
----------
Each cell draws its mask from a seed that depends only on the cell identity, so
adding, removing or reordering fractions never changes another cell::

    data = u64le(base_seed mod 2**64) + utf8(label) + u8(domain_id) + u32le(permille)
    seed = mix64(fnv1a64(data))

``domain_id`` is 0 for DCT and 1 for DFT, ``permille = round(1000 * fraction)``,
``fnv1a64`` is 64-bit FNV-1a (offset 0xcbf29ce484222325, prime 0x100000001b3)
and ``mix64`` is the SplitMix64 finalizer from :mod:`csiris.sampling`.

Config files
------------
INI with three sections; every key is optional except ``manifest``::

    [experiment]
    manifest = fixtures/manifest.txt   ; relative to the config file
    output = results
    fractions = 0.1, 0.2, 0.3, 0.4
    domains = dct, dft
    seed = 0
    workers = 1
    save_images = yes

    [solver]
    mode = tv_domain
    max_iters = 300
    ...                                 ; any SolverConfig field

    [iris]
    pupil_radius = 12, 32
    iris_radius = 36, 60
    localizer_arcs = 60-120, 240-300    ; degrees
    exclusion_arcs = 45-135, 225-315    ; degrees
    radial_res = 16
    angular_res = 240
    max_shift = 8
    ...                                 ; other LocalizerConfig / GaborBank fields
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from csiris import imagekit, iris, sampling
from csiris.errors import EmptyJointMask, EnrollmentFailed, LocalizationFailed
from csiris.recon import SolverConfig, reconstruct
from csiris.transforms import Domain

DEFAULT_FRACTIONS = (0.10, 0.20, 0.30, 0.40)
DEFAULT_DOMAINS = (Domain.DCT, Domain.DFT)
DOMAIN_IDS = {Domain.DCT: 0, Domain.DFT: 1}

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def cell_seed(base_seed: int, label: str, domain, fraction: float) -> int:
    """Mask seed for one experiment cell (see the module docstring)."""
    domain = Domain.parse(domain)
    permille = int(round(fraction * 1000))
    data = ((base_seed & _MASK64).to_bytes(8, "little") + label.encode("utf-8")
            + bytes([DOMAIN_IDS[domain]]) + permille.to_bytes(4, "little"))
    return sampling.mix64(fnv1a64(data))


def fixture_manifest() -> Path:
    """Path of the manifest for the image set bundled with the package."""
    return Path(__file__).parent / "data" / "fixtures" / "manifest.txt"


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ExperimentConfig:
    manifest: Path
    output: Path = Path("results")
    fractions: tuple = DEFAULT_FRACTIONS
    domains: tuple = DEFAULT_DOMAINS
    solver: SolverConfig = field(default_factory=SolverConfig)
    pipeline: iris.IrisPipeline = field(default_factory=iris.IrisPipeline)
    base_seed: int = 0
    workers: int = 1
    save_images: bool = True

    def __post_init__(self):
        object.__setattr__(self, "manifest", Path(self.manifest))
        object.__setattr__(self, "output", Path(self.output))
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        object.__setattr__(self, "domains", tuple(Domain.parse(d) for d in self.domains))
        if not self.fractions or not self.domains:
            raise ValueError("fractions and domains must be nonempty")
        for f in self.fractions:
            if not 0.0 < f <= 1.0:
                raise ValueError(f"fraction {f} outside (0, 1]")
        if len(set(self.fractions)) != len(self.fractions):
            raise ValueError("duplicate fractions")
        if len(set(self.domains)) != len(self.domains):
            raise ValueError("duplicate domains")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.output.exists() and not self.output.is_dir():
            raise ValueError(f"output {self.output} exists and is not a directory")

    def as_dict(self) -> dict:
        return {
            "manifest": str(self.manifest),
            "fractions": list(self.fractions),
            "domains": [d.value for d in self.domains],
            "base_seed": self.base_seed,
            "solver": self.solver.as_dict(),
            "iris": self.pipeline.as_dict(),
        }


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in re.split(r"[,\s]+", text.strip()) if v)


def _arcs(text: str) -> tuple:
    """'45-135, 225-315' (degrees) -> ((rad, rad), (rad, rad))."""
    arcs = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        if not sep:
            raise ValueError(f"arc {part!r} is not of the form start-end (degrees)")
        arcs.append((math.radians(float(lo)), math.radians(float(hi))))
    return tuple(arcs)


def _typed(cls, key: str, raw: str):
    kind = {f.name: str(f.type) for f in fields(cls)}[key]
    if "tuple[int" in kind:
        return tuple(int(v) for v in _floats(raw))
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("tuple"):
        return _floats(raw)
    if "None" in kind:
        return None if raw.strip().lower() in ("", "none", "auto") else float(raw)
    return float(raw)


def pipeline_from_mapping(mapping) -> iris.IrisPipeline:
    loc_fields = {f.name for f in fields(iris.LocalizerConfig)}
    bank_fields = {f.name for f in fields(iris.GaborBank)}
    loc, bank, top = {}, {}, {}
    for key, raw in mapping.items():
        key = key.strip().lower()
        if key == "localizer_arcs":
            loc["exclusion_arcs"] = _arcs(raw)
        elif key == "exclusion_arcs":
            top["exclusion_arcs"] = _arcs(raw)
        elif key in ("radial_res", "angular_res", "max_shift"):
            top[key] = int(raw)
        elif key in loc_fields:
            loc[key] = _typed(iris.LocalizerConfig, key, raw)
        elif key in bank_fields:
            bank[key] = _typed(iris.GaborBank, key, raw)
        else:
            raise ValueError(f"unknown iris option {key!r}")
    return iris.IrisPipeline(localizer=iris.LocalizerConfig(**loc), bank=iris.GaborBank(**bank), **top)


def load_config(path) -> ExperimentConfig:
    """Read an INI experiment description; relative paths resolve against it."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.read(path, encoding="utf-8")
    unknown = set(parser.sections()) - {"experiment", "solver", "iris"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    if not parser.has_section("experiment") or "manifest" not in parser["experiment"]:
        raise ValueError("config needs [experiment] manifest = ...")
    exp = dict(parser["experiment"])
    base = path.parent
    kwargs = {"manifest": base / exp.pop("manifest")}
    if "output" in exp:
        kwargs["output"] = base / exp.pop("output")
    if "fractions" in exp:
        kwargs["fractions"] = _floats(exp.pop("fractions"))
    if "domains" in exp:
        kwargs["domains"] = tuple(d for d in re.split(r"[,\s]+", exp.pop("domains")) if d)
    if "seed" in exp:
        kwargs["base_seed"] = int(exp.pop("seed"))
    if "workers" in exp:
        kwargs["workers"] = int(exp.pop("workers"))
    if "save_images" in exp:
        kwargs["save_images"] = parser["experiment"].getboolean("save_images")
        exp.pop("save_images")
    if exp:
        raise ValueError(f"unknown experiment options: {sorted(exp)}")
    if parser.has_section("solver"):
        kwargs["solver"] = SolverConfig.from_mapping(dict(parser["solver"]))
    if parser.has_section("iris"):
        kwargs["pipeline"] = pipeline_from_mapping(dict(parser["iris"]))
    return ExperimentConfig(**kwargs)


# ---------------------------------------------------------------------------
# running

@dataclass
class CellRecord:
    label: str
    domain: str
    fraction: float
    seed: int
    psnr: float
    hd: float | None
    shift: int | None
    decision: str
    reason: str
    iterations: int
    converged: bool

    def as_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.psnr):
            d["psnr"] = "inf"
        return d


@dataclass
class ExperimentReport:
    records: list
    skipped: list
    config: dict
    fractions: tuple
    domains: tuple
    labels: list = field(default_factory=list)
    images: dict = field(default_factory=dict, repr=False)

    def cell(self, label, domain, fraction) -> CellRecord:
        domain = Domain.parse(domain).value
        for r in self.records:
            if r.label == label and r.domain == domain and r.fraction == fraction:
                return r
        raise KeyError((label, domain, fraction))

    def psnr_matrix(self) -> dict:
        """Mean PSNR over images, {domain: [per fraction]}."""
        out = {}
        for d in self.domains:
            row = []
            for f in self.fractions:
                vals = [r.psnr for r in self.records if r.domain == d.value and r.fraction == f]
                row.append(float(np.mean(vals)) if vals else float("nan"))
            out[d.value] = row
        return out

    def decision_matrix(self) -> dict:
        """PASS for a (domain, fraction) cell only if every image passed there."""
        out = {}
        for d in self.domains:
            row = []
            for f in self.fractions:
                recs = [r for r in self.records if r.domain == d.value and r.fraction == f]
                ok = bool(recs) and all(r.decision == iris.Decision.PASS.value for r in recs)
                row.append(iris.Decision.PASS.value if ok else iris.Decision.FAIL.value)
            out[d.value] = row
        return out

    def hd_curves(self) -> dict:
        """{(label, domain): [hd or None per fraction]} in fraction order."""
        curves = {}
        for label in self.labels:
            for d in self.domains:
                curves[(label, d.value)] = [self.cell(label, d, f).hd for f in self.fractions]
        return curves

    def to_dict(self) -> dict:
        psnr = {k: [_json_float(v) for v in row] for k, row in self.psnr_matrix().items()}
        return {
            "config": self.config,
            "fractions": list(self.fractions),
            "domains": [d.value for d in self.domains],
            "records": [r.as_dict() for r in self.records],
            "skipped": [{"label": label, "reason": reason} for label, reason in self.skipped],
            "psnr_matrix": psnr,
            "decision_matrix": self.decision_matrix(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _json_float(v):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return None
    return v


def _run_cell(img, label, gallery, domain, fraction, seed, solver, pipeline):
    """One (image, domain, fraction) cell; returns (CellRecord, reconstruction)."""
    mask = sampling.generate_mask(img.shape[0], img.shape[1], fraction, seed)
    meas = sampling.measure(img, mask)
    x, rep = reconstruct(meas, mask, replace(solver, domain=domain))
    quality = imagekit.psnr(img, x)
    hd = shift = None
    reason = ""
    try:
        probe, _ = pipeline.extract(x)
        hd, shift, decision = pipeline.match(probe, gallery)
        hd = float(hd)
    except LocalizationFailed as exc:
        decision, reason = iris.Decision.FAIL, f"localization failed: {exc}"
    except EmptyJointMask as exc:
        decision, reason = iris.Decision.FAIL, f"no comparable bits: {exc}"
    record = CellRecord(label=label, domain=domain.value, fraction=fraction, seed=seed,
                        psnr=quality, hd=hd, shift=shift, decision=decision.value,
                        reason=reason, iterations=rep.iterations, converged=rep.converged)
    return record, x


def _run_cell_packed(args):
    return _run_cell(*args)


def enroll(img, pipeline: iris.IrisPipeline) -> iris.IrisCode:
    try:
        code, _ = pipeline.extract(img)
    except LocalizationFailed as exc:
        raise EnrollmentFailed(str(exc)) from exc
    if not np.any(code.mask):
        raise EnrollmentFailed("enrollment code has no valid bits")
    return code


def run_experiment(cfg: ExperimentConfig, keep_images: bool = False) -> ExperimentReport:
    """Run the whole grid. Reconstructions are kept on the report if asked."""
    manifest = imagekit.load_manifest(cfg.manifest)
    jobs = []
    skipped = []
    labels = []
    for path, label in manifest:
        img = imagekit.load_image(path)
        try:
            gallery = enroll(img, cfg.pipeline)
        except EnrollmentFailed as exc:
            skipped.append((label, f"enrollment failed: {exc}"))
            continue
        labels.append(label)
        for domain in cfg.domains:
            for fraction in cfg.fractions:
                seed = cell_seed(cfg.base_seed, label, domain, fraction)
                jobs.append((img, label, gallery, domain, fraction, seed, cfg.solver, cfg.pipeline))

    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_cell_packed, jobs))
    else:
        results = [_run_cell_packed(job) for job in jobs]

    results.sort(key=lambda rx: (rx[0].label, rx[0].domain, rx[0].fraction))
    report = ExperimentReport(
        records=[r for r, _ in results],
        skipped=sorted(skipped),
        config=cfg.as_dict(),
        fractions=tuple(sorted(cfg.fractions)),
        domains=tuple(sorted(cfg.domains, key=lambda d: d.value)),
        labels=sorted(labels),
    )
    if keep_images or cfg.save_images:
        report.images = {(r.label, r.domain, r.fraction): x for r, x in results}
    return report


# ---------------------------------------------------------------------------
# output

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6f}"
    return str(v)


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", label) or "_"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def emit_tables(report: ExperimentReport, out_dir) -> Path:
    """Write psnr.csv, decisions.csv, hd_curve.csv, report.json and recon/ PNGs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ["domain"] + [f"{f:.2f}" for f in report.fractions]

    _write_csv(out / "psnr.csv", header,
               [[d] + [_fmt(v) for v in row] for d, row in report.psnr_matrix().items()])
    _write_csv(out / "decisions.csv", header,
               [[d] + row for d, row in report.decision_matrix().items()])
    _write_csv(out / "hd_curve.csv", ["label", "domain", "fraction", "hd", "shift", "decision"],
               [[r.label, r.domain, f"{r.fraction:.2f}", _fmt(r.hd), _fmt(r.shift), r.decision]
                for r in report.records])
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")

    for (label, domain, fraction), x in sorted(report.images.items()):
        target = out / "recon" / _safe_name(label)
        target.mkdir(parents=True, exist_ok=True)
        imagekit.save_image(x, target / f"{domain}_{int(round(fraction * 1000)):04d}.png")
    return out


def run_and_emit(cfg: ExperimentConfig) -> ExperimentReport:
    report = run_experiment(cfg)
    emit_tables(report, cfg.output)
    return report


__all__ = [
    "ExperimentConfig", "ExperimentReport", "CellRecord", "cell_seed",
    "fnv1a64", "load_config", "run_experiment", "emit_tables", "run_and_emit",
    "fixture_manifest", "pipeline_from_mapping", "enroll",
]

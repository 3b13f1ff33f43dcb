import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest

from csiris import harness, imagekit, iris, sampling
from csiris.errors import ManifestError
from csiris.recon import SolverConfig
from csiris.transforms import Domain

FAST = SolverConfig(max_iters=25)


def test_fnv1a64_reference_vectors():
    assert harness.fnv1a64(b"") == 0xCBF29CE484222325
    assert harness.fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert harness.fnv1a64(b"foobar") == 0x85944171F73967E8


def test_cell_seed_documented_formula():
    data = (7).to_bytes(8, "little") + "eye00".encode() + bytes([1]) + (300).to_bytes(4, "little")
    assert harness.cell_seed(7, "eye00", "dft", 0.3) == sampling.mix64(harness.fnv1a64(data))
    neg = (2 ** 64 - 1).to_bytes(8, "little") + b"x" + bytes([0]) + (100).to_bytes(4, "little")
    assert harness.cell_seed(-1, "x", Domain.DCT, 0.1) == sampling.mix64(harness.fnv1a64(neg))
    seeds = {harness.cell_seed(0, lab, d, f) for lab in ("a", "b") for d in ("dct", "dft") for f in (0.1, 0.2)}
    assert len(seeds) == 8


@pytest.fixture(scope="module")
def one_image_manifest(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    src = harness.fixture_manifest().parent / "eye_00.pgm"
    (d / "eye.pgm").write_bytes(src.read_bytes())
    (d / "manifest.txt").write_text("eye.pgm\teye00\n")
    return d / "manifest.txt"


@pytest.fixture(scope="module")
def small_report(one_image_manifest, tmp_path_factory):
    cfg = harness.ExperimentConfig(manifest=one_image_manifest, output=tmp_path_factory.mktemp("out"),
                                   fractions=(0.2, 0.4), solver=FAST)
    return cfg, harness.run_experiment(cfg)


def test_report_records(small_report):
    cfg, rep = small_report
    assert len(rep.records) == 4
    assert [(r.domain, r.fraction) for r in rep.records] == [("dct", 0.2), ("dct", 0.4), ("dft", 0.2), ("dft", 0.4)]
    for r in rep.records:
        assert r.seed == harness.cell_seed(cfg.base_seed, r.label, r.domain, r.fraction)
        assert r.decision == iris.decide(r.hd).value
        assert r.iterations <= 25


def test_cell_independence(one_image_manifest, small_report, tmp_path):
    cfg, rep = small_report
    other = harness.run_experiment(replace(cfg, fractions=(0.4,), domains=("dft", "dct")))
    for r in other.records:
        assert r == rep.cell(r.label, r.domain, r.fraction)


def test_full_sampling_is_exact(one_image_manifest, tmp_path):
    cfg = harness.ExperimentConfig(manifest=one_image_manifest, output=tmp_path, fractions=(1.0,),
                                   domains=("dct",), solver=FAST)
    (r,) = harness.run_experiment(cfg).records
    assert r.psnr == math.inf and r.hd == 0.0 and r.decision == "PASS"


def test_emit_tables(small_report, tmp_path):
    _, rep = small_report
    harness.emit_tables(rep, tmp_path)
    with open(tmp_path / "psnr.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["domain", "0.20", "0.40"] and len(rows) == 3 and all(len(r) == 3 for r in rows)
    with open(tmp_path / "decisions.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert {c for r in rows[1:] for c in r[1:]} <= {"PASS", "FAIL"}
    with open(tmp_path / "hd_curve.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) - 1 == 1 * 2 * 2
    assert b"\r\n" not in (tmp_path / "hd_curve.csv").read_bytes()
    report = json.loads((tmp_path / "report.json").read_text())
    assert len(report["records"]) == 4 and report["config"]["solver"]["max_iters"] == 25
    pngs = sorted(p.relative_to(tmp_path).as_posix() for p in (tmp_path / "recon").rglob("*.png"))
    assert pngs == ["recon/eye00/dct_0200.png", "recon/eye00/dct_0400.png",
                    "recon/eye00/dft_0200.png", "recon/eye00/dft_0400.png"]
    assert imagekit.load_image(tmp_path / pngs[0]).shape == (128, 128)


def test_report_json_handles_infinity(one_image_manifest, tmp_path):
    cfg = harness.ExperimentConfig(manifest=one_image_manifest, output=tmp_path, fractions=(1.0,),
                                   domains=("dft",), solver=FAST, save_images=False)
    text = harness.run_experiment(cfg).to_json()
    d = json.loads(text)
    assert d["records"][0]["psnr"] == "inf" and d["psnr_matrix"]["dft"] == ["inf"]
    assert "Infinity" not in text and "NaN" not in text


def test_localization_failure_is_recorded(fixture_images):
    _, img = fixture_images[0]
    gallery, _ = iris.IrisPipeline().extract(img)
    picky = iris.IrisPipeline(localizer=iris.LocalizerConfig(floor=1e9))
    rec, _ = harness._run_cell(img, "eye00", gallery, Domain.DCT, 0.3, 1, FAST, picky)
    assert rec.decision == "FAIL" and rec.hd is None and rec.reason.startswith("localization failed")


def test_enrollment_failure_is_skipped(tmp_path):
    imagekit.save_image(np.full((128, 128), 90.0), tmp_path / "blank.pgm")
    src = harness.fixture_manifest().parent / "eye_01.pgm"
    (tmp_path / "eye.pgm").write_bytes(src.read_bytes())
    (tmp_path / "m.txt").write_text("blank.pgm\tblank\neye.pgm\teye01\n")
    cfg = harness.ExperimentConfig(manifest=tmp_path / "m.txt", output=tmp_path / "o", fractions=(0.4,),
                                   domains=("dct",), solver=FAST)
    rep = harness.run_experiment(cfg)
    assert [lab for lab, _ in rep.skipped] == ["blank"]
    assert [r.label for r in rep.records] == ["eye01"]
    assert "skipped" in rep.to_dict() and rep.to_dict()["skipped"][0]["label"] == "blank"


def test_workers_do_not_change_output(small_report):
    cfg, rep = small_report
    par = harness.run_experiment(replace(cfg, workers=2))
    assert par.to_json() == rep.to_json()


def test_aggregates():
    recs = [harness.CellRecord("a", "dct", 0.1, 1, 20.0, 0.2, 0, "PASS", "", 3, True),
            harness.CellRecord("b", "dct", 0.1, 2, 22.0, 0.5, 1, "FAIL", "", 3, True)]
    rep = harness.ExperimentReport(records=recs, skipped=[], config={}, fractions=(0.1,),
                                   domains=(Domain.DCT,), labels=["a", "b"])
    assert rep.psnr_matrix() == {"dct": [21.0]}
    assert rep.decision_matrix() == {"dct": ["FAIL"]}
    assert rep.hd_curves() == {("a", "dct"): [0.2], ("b", "dct"): [0.5]}


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        harness.ExperimentConfig(manifest="m", fractions=())
    with pytest.raises(ValueError):
        harness.ExperimentConfig(manifest="m", fractions=(0.0,))
    with pytest.raises(ValueError):
        harness.ExperimentConfig(manifest="m", fractions=(0.1, 0.1))
    with pytest.raises(ValueError):
        harness.ExperimentConfig(manifest="m", domains=("dct", "wavelet"))
    (tmp_path / "file").write_text("")
    with pytest.raises(ValueError):
        harness.ExperimentConfig(manifest="m", output=tmp_path / "file")


def test_load_config(tmp_path):
    ini = tmp_path / "exp.ini"
    ini.write_text(
        "[experiment]\nmanifest = data/m.txt\noutput = out\nfractions = 0.1, 0.25\n"
        "domains = dft\nseed = 11\nworkers = 2\nsave_images = no\n"
        "[solver]\nmode = l1\nmax_iters = 40 ; short\n"
        "[iris]\npupil_radius = 10, 30\nlocalizer_arcs = 60-120, 240-300\nexclusion_arcs = 30-150, 210-330\n"
        "max_shift = 4\nangular_sites = 60\nfrequencies = 0.5, 1.0\nradial_width = auto\n")
    cfg = harness.load_config(ini)
    assert cfg.manifest == tmp_path / "data" / "m.txt" and cfg.output == tmp_path / "out"
    assert cfg.fractions == (0.1, 0.25) and cfg.domains == (Domain.DFT,)
    assert cfg.base_seed == 11 and cfg.workers == 2 and cfg.save_images is False
    assert cfg.solver.max_iters == 40 and cfg.solver.mode.value == "l1"
    p = cfg.pipeline
    assert p.localizer.pupil_radius == (10, 30) and p.max_shift == 4
    np.testing.assert_allclose(p.localizer.exclusion_arcs, [[math.pi / 3, 2 * math.pi / 3], [4 * math.pi / 3, 5 * math.pi / 3]])
    assert p.exclusion_arcs[0] == pytest.approx((math.pi / 6, 5 * math.pi / 6))
    assert p.bank.angular_sites == 60 and p.bank.frequencies == (0.5, 1.0) and p.bank.radial_width is None


@pytest.mark.parametrize("text", [
    "[solver]\nmode = tv\n",
    "[experiment]\nmanifest = m\nbogus = 1\n",
    "[experiment]\nmanifest = m\n[extra]\n",
    "[experiment]\nmanifest = m\n[iris]\nwhatever = 1\n",
    "[experiment]\nmanifest = m\n[solver]\nstep = 1\n",
])
def test_load_config_errors(tmp_path, text):
    (tmp_path / "c.ini").write_text(text)
    with pytest.raises(ValueError):
        harness.load_config(tmp_path / "c.ini")


def test_missing_config_and_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        harness.load_config(tmp_path / "none.ini")
    cfg = harness.ExperimentConfig(manifest=tmp_path / "none.txt", output=tmp_path)
    with pytest.raises(ManifestError):
        harness.run_experiment(cfg)


def test_bundled_fixture_manifest(fixture_images):
    assert len(fixture_images) >= 3
    for _, img in fixture_images:
        assert img.shape == (128, 128)

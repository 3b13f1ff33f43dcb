import numpy as np
import pytest

from csiris import harness, imagekit, synth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def eye():
    """Flat synthetic eye with known geometry (pupil r=20, iris r=50 at (64, 64))."""
    return synth.synthetic_eye()


@pytest.fixture(scope="session")
def fixture_images():
    manifest = imagekit.load_manifest(harness.fixture_manifest())
    return [(label, imagekit.load_image(path)) for path, label in manifest]


def write_pgm(path, pixels, maxval=255, header=None):
    """Byte-level P5 writer, independent of the package."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    head = header if header is not None else b"P5\n%d %d\n%d\n" % (w, h, maxval)
    path.write_bytes(head + pixels.tobytes())
    return path


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance criterion lines at the end of the session."""
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])

import numpy as np
import pytest

from crosscam.scenario import Frame

# verdict lines recorded by the release-gate tests; shown after the run
GATE_VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if GATE_VERDICTS:
        terminalreporter.section("release gate")
        for line in GATE_VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_frame(camera_id, t, pixels):
    return Frame(camera_id=camera_id, t=t, pixels=np.asarray(pixels, dtype=np.uint8))


def noise_frame(rng, camera_id=0, t=0, width=32, height=24):
    return make_frame(camera_id, t, rng.integers(0, 256, (height, width), dtype=np.uint8))

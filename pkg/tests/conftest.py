import numpy as np
import pytest

from world4d.geometry import CameraIntrinsics
from world4d.synth import fixed_multiview_rig, randomize_scene, simulate, write_sequence


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def K64():
    return CameraIntrinsics.from_fov(64, 48, 60.0)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A short 64x64 synthetic sequence written to disk once per session."""
    root = tmp_path_factory.mktemp("seq")
    spec = randomize_scene("two_body", seed=5, duration=8 / 24, fps=24.0)
    trace = simulate(spec)
    K = CameraIntrinsics.from_fov(64, 64)
    rig = fixed_multiview_rig(K, trace.num_frames)
    return write_sequence(trace, rig, 0, root / "view_00", samples_per_object=200)


_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; returns the verdict."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

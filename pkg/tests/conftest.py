import numpy as np
import pytest
from hypothesis import settings

from asyncfusion.core import Dataset, FeatureFrame, Role, SensorSpec

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

_ACCEPTANCE: list[tuple[int, str, str]] = []


def acceptance(number: int, title: str):
    """Tag a test as one line of the acceptance gate."""

    def mark(fn):
        fn._acceptance = (number, title)
        return fn

    return mark


def pytest_runtest_makereport(item, call):
    tag = getattr(getattr(item, "function", None), "_acceptance", None)
    if tag is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        _ACCEPTANCE.append((*tag, "FAIL" if call.excinfo is not None else "PASS"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"[{status}] {number:2d}. {title}")


def tiny_dataset(ticks: int = 6, fast_fovs=(((-45.0, 45.0),),), slow_fov=((-30.0, 30.0),), dim: int = 2) -> Dataset:
    rng = np.random.default_rng(0)
    sensors = [SensorSpec("slow", Role.SLOW, slow_fov, 1000, 100.0, dim=dim)]
    sensors += [SensorSpec(f"fast{i}", Role.FAST, fov, 100, 100.0, dim=dim) for i, fov in enumerate(fast_fovs)]
    frames = {
        s.id: tuple(FeatureFrame(s.id, t, 100.0 * t, rng.normal(size=dim)) for t in range(ticks)) for s in sensors
    }
    return Dataset(tuple(sensors), frames, ticks)


@pytest.fixture
def tiny():
    return tiny_dataset()

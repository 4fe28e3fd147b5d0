import numpy as np
import pytest

from sepmp.process import EventPath, IntensityModel, intensity_flow


def hand_path(times, marks, model=None, horizon=2.0, pending_mark=1.0, mode="predictable"):
    """EventPath with given events; intensities follow the model's flow and jumps."""
    model = model or IntensityModel.poisson(1.0)
    times = np.asarray(times, dtype=float)
    marks = np.asarray(marks, dtype=float)
    pre, post = [], []
    lam, last = model.lambda0, 0.0
    for t, y in zip(times, marks):
        lam_minus = intensity_flow(model, lam, t - last)
        pre.append(lam_minus)
        lam = lam_minus + model.beta * y
        post.append(lam)
        last = t
    return EventPath(model, horizon, times, marks, np.array(pre), np.array(post),
                     float(pending_mark), mode, 0.0, model.lambda0)


@pytest.fixture
def default_model():
    return IntensityModel(lambda0=1.0, beta=1.0, delta=0.5)


ACCEPTANCE_LINES = []


@pytest.fixture
def ac_line():
    """Record ``AC-n: PASS|FAIL detail`` for the end-of-run acceptance summary."""
    def record(criterion, passed, detail=""):
        line = f"{criterion}: {'PASS' if passed else 'FAIL'} {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0][3:])):
            terminalreporter.write_line(line)

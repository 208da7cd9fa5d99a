import numpy as np
import pytest

from selftest_bnn.data import make_synthetic
from selftest_bnn.nn import binary_mlp
from selftest_bnn.training import TrainConfig, split_dataset, train_two_stage


@pytest.fixture(scope="session")
def blobs():
    return make_synthetic("blobs", 600, classes=3, noise=0.6, seed=11, shape=(12,))


@pytest.fixture(scope="session")
def trained_mlp(blobs):
    """Small two-stage-trained MLP plus its held-out (test, calibration) split."""
    train = blobs.subset(np.arange(400))
    held = split_dataset(blobs.subset(np.arange(400, 600)), 0.8, 5)
    m = binary_mlp(12, 3, hidden=(32, 32), uncertainty_width=8, seed=1)
    cfg = TrainConfig(epochs_stage1=6, epochs_stage2=40, learning_rate=3e-3, learning_rate_stage2=1e-2, seed=3)
    m, split, hist = train_two_stage(m, train, cfg)
    return m, held, hist


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def log(number: int, title: str, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2])):
            terminalreporter.write_line(line)

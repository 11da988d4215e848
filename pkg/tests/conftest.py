"""Shared scenario builders for the test suite."""

import numpy as np
import pytest

from hacal.channel import MismatchModel, SystemConfig, sample_channel, sample_mismatch
from hacal.seeding import substream


def small_config(n=16, m=4, k=2, **changes):
    """Square link with minimum analog pilot lengths."""
    q = n - k + 1
    base = SystemConfig(n_t=n, n_r=n, m_t=m, m_r=m, k_paths=k, pilot_plan=(m, 1, q, q))
    return base.replace(**changes) if changes else base


def draw_scenario(cfg, seed, trial=0, model=None):
    ch = sample_channel(cfg, substream(seed, "channel", trial))
    mm = sample_mismatch(cfg, substream(seed, "mismatch", trial), model or MismatchModel())
    return ch, mm


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def collinearity(a, b):
    """``1 - |<a, b>|^2 / (||a||^2 ||b||^2)``, zero iff collinear."""
    a, b = np.ravel(a), np.ravel(b)
    return 1.0 - abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    """Print and keep one verdict line per acceptance criterion."""
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

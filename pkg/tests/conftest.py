from __future__ import annotations

import numpy as np
import pytest

from trotterscar.models import build_model
from trotterscar.variational import LossConfig, OptimizerConfig, optimize


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_state(rng, dim):
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_hermitian(rng, dim):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (a + a.conj().T) / 2


@pytest.fixture(scope="session")
def optimized_heisenberg8():
    """Default-hyperparameter optimization at L=8, h_x=0.5 (shared, about 25 s)."""
    ham = build_model("heisenberg", 8, h_x=0.5)
    cfg = LossConfig()
    params, history = optimize(ham, cfg, OptimizerConfig(seed=0), jobs=4)
    return ham, cfg, params, history


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

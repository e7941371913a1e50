import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from elblock import BlockDesign, generate_pair_design  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_incidence(rng, n, p, density=0.6, min_rep=2):
    while True:
        inc = rng.random((n, p)) < density
        if inc.any(axis=1).all() and (inc.sum(axis=0) >= min_rep).all():
            return inc


def small_instances(seed, count):
    """Random constrained problems with ``p <= 3``, ``n <= 10`` and integer-ish data.

    Treatments have at least two replications and values carry a small
    continuous jitter, so no parameter is pinned to a single point; the
    hypothesis leaves exactly one free direction.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        p = int(rng.integers(2, 4))
        n = int(rng.integers(p + 2, 11))
        inc = random_incidence(rng, n, p)
        x = np.where(inc, rng.integers(-3, 4, size=(n, p)) + rng.uniform(-0.3, 0.3, (n, p)), 0.0)
        jac = rng.integers(-2, 3, size=(p - 1, p)).astype(float)
        if np.linalg.matrix_rank(jac) < p - 1:
            continue
        rhs = rng.integers(-1, 2, size=p - 1).astype(float)
        out.append((x, inc, jac, rhs))
    return out


def pair_data(n, seed, theta=(0, 0, 0, 0, 0)):
    """Normal block-plus-error data on the five-treatment pair design."""
    rng = np.random.default_rng(seed)
    d = generate_pair_design(5, n // 10)
    x = np.asarray(theta, float) + rng.normal(size=(n, 1)) + rng.normal(size=(n, 5))
    return d.with_values(x)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def bibd50():
    return pair_data(50, 3)


def design_of(blocks):
    """Design from a list of ``{treatment index: value}`` dicts."""
    p = 1 + max(k for b in blocks for k in b)
    inc = np.zeros((len(blocks), p), dtype=bool)
    x = np.zeros((len(blocks), p))
    for i, b in enumerate(blocks):
        for k, v in b.items():
            inc[i, k] = True
            x[i, k] = v
    return BlockDesign.from_arrays(inc, x)

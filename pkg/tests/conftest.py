import numpy as np
import pytest

from ipwdist import Sample
from ipwdist.propensity import PropensityModel, SieveBasis


def fixed_propensity(p, delta=0.01) -> PropensityModel:
    """Model whose fitted values are ``p`` as given (no fitting)."""
    p = np.asarray(p, dtype=float)
    return PropensityModel(
        basis=SieveBasis(1, 0),
        coef=np.zeros(1),
        center=np.zeros(1),
        scale=np.ones(1),
        delta=delta,
        fitted=p,
    )


def random_sample(rng: np.random.Generator, n: int, l: int = 1, discrete: bool = False) -> Sample:  # noqa: E741
    x = rng.integers(0, 2, size=(n, l)).astype(float) if discrete else rng.normal(size=(n, l))
    p = 1.0 / (1.0 + np.exp(-(x.sum(axis=1) - 0.3)))
    t = (rng.random(n) < p).astype(np.int8)
    t[0], t[1] = 0, 1
    y = 50.0 + 10.0 * rng.random(n) + 3.0 * t + x[:, 0]
    return Sample(x, t, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Lines appended by the acceptance checks; echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

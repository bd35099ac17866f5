import numpy as np
import pytest

from selective_debias.data import LabeledEmbeddings, SplitSpec, generate_synthetic, split


@pytest.fixture(scope="session")
def synthetic():
    return generate_synthetic(10000, 42)


@pytest.fixture(scope="session")
def splits(synthetic):
    return split(synthetic, SplitSpec())


def concept_blobs(n, d, groups, seed, shift=2.0):
    """Gaussian features whose group means differ along random directions."""
    rng = np.random.default_rng(seed)
    z = rng.integers(0, groups, size=n)
    z[:groups] = np.arange(groups)
    means = rng.normal(size=(groups, d)) * shift
    mix = rng.normal(size=(d, d)) / np.sqrt(d) + np.eye(d)
    x = (rng.normal(size=(n, d)) + means[z]) @ mix
    return x, z


def two_class(x, z, labels=None, seed=0):
    """Wrap features into a two-class dataset with the given protected groups."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=len(z)) if labels is None else labels
    y[:2] = (0, 1)
    return LabeledEmbeddings(x, y, z, 2, int(z.max()) + 1)


ACCEPTANCE_LINES = []


def report(criterion, passed, detail):
    """Record one acceptance line; printed now and again in the terminal summary."""
    line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

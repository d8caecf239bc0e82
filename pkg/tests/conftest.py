import numpy as np
import pytest

from featgen.data import SyntheticSpec, make_synthetic
from featgen.numerics import Rng

_acceptance = []


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture(scope="session")
def tiny_bench():
    """Small synthetic problem: 6 classes (4 seen), quick to train on."""
    spec = SyntheticSpec(
        num_classes=6, seen_count=4, attr_dim=4, feature_dim=8,
        examples_per_class_train=20, examples_per_class_test=10, seed=3,
    )
    return make_synthetic(spec)


@pytest.fixture(scope="session")
def default_bench():
    return make_synthetic(SyntheticSpec())


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")


def assert_finite(*arrays):
    for a in arrays:
        assert np.all(np.isfinite(a))

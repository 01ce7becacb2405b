import numpy as np
import pytest

from lls.patterns import Schema
from lls.simulator import DiscreteMixing, ExactMoments, random_basis


@pytest.fixture
def small_model():
    """J=5 binary, K=2, two point masses on g1."""
    schema = Schema.binary(5)
    basis = random_basis(schema, 2, seed=7)
    mixing = DiscreteMixing.from_g1([0.2, 0.7], [0.4, 0.6])
    return schema, basis, mixing, ExactMoments(basis, mixing)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

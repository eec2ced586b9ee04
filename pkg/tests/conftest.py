import numpy as np
import pytest

from formctl.graph import build_graph


@pytest.fixture
def paper_graph():
    """Five followers on a path; agents 1, 3, 5 see the leader."""
    return build_graph(5, [(1, 2), (2, 3), (3, 4), (4, 5)], [1, 0, 1, 0, 1])


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

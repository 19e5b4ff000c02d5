import numpy as np
import pytest

from fairweigh.data import Encoder
from fairweigh.graph import parse_graph, total_path_set
from fairweigh.model import StructuredModel
from fairweigh.synth import benchmark_scm, generate

DIAMOND_DOC = """
[nodes]
a continuous
s categorical 2
b continuous
y categorical 2

[edges]
a -> s
a -> y
s -> b
s -> y
b -> y

[roles]
sensitive s
outcome y
"""

NO_PATH_DOC = """
[nodes]
a continuous
s categorical 2
y categorical 2

[edges]
a -> s
a -> y

[roles]
sensitive s
outcome y
"""


@pytest.fixture
def diamond_graph():
    """Four observed variables: a root cause, the sensitive node, one
    mediator, and the outcome; both a direct and a mediated route."""
    return parse_graph(DIAMOND_DOC)


@pytest.fixture
def no_path_graph():
    return parse_graph(NO_PATH_DOC)


@pytest.fixture(scope="session")
def bench_small():
    """Benchmark SCM with a small sample, shared encoder and total-mode model."""
    scm = benchmark_scm(seed=3)
    ds = generate(scm, 512)
    enc = Encoder().fit(ds)
    model = StructuredModel(scm.graph, enc, total_path_set(scm.graph), seed=7)
    return scm, ds, enc, model


def relative_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    """Norm-relative disagreement; the floor absorbs central-difference
    roundoff (~1e-11 per entry) when the true gradient is identically zero."""
    num = np.linalg.norm(np.asarray(analytic) - np.asarray(reference))
    den = max(np.linalg.norm(analytic), np.linalg.norm(reference), 1e-6)
    return num / den

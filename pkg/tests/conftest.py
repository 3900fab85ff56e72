import numpy as np
import pytest

from entcov.model import GraphSpec, subspace_from_graph
from entcov.specfun import LinkFunction

CHAIN_S = np.array([[4.0, 1.0, 2.0], [1.0, 4.0, 3.0], [2.0, 3.0, 4.0]])

ALL_LINKS = [
    LinkFunction.logdet(),
    LinkFunction.von_neumann(),
    LinkFunction.power(1),
    LinkFunction.power(0.5),
    LinkFunction.power(-2),
    LinkFunction.power(-0.5),
    LinkFunction.shifted(1.0),
    LinkFunction.shifted(0.3),
]
SMOOTH_LINKS = [lk for lk in ALL_LINKS if lk.essential_smooth]


def random_pd(rng, m, floor=0.2):
    a = rng.standard_normal((m, m + 2))
    return a @ a.T / (m + 2) + floor * np.eye(m)


def random_sym(rng, m):
    a = rng.standard_normal((m, m))
    return 0.5 * (a + a.T)


def random_orthogonal(rng, m):
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))


@pytest.fixture
def rng():
    return np.random.default_rng(20260516)


@pytest.fixture
def chain3():
    return subspace_from_graph(GraphSpec.from_edges(3, [(0, 1), (1, 2)]))


def link_id(link):
    return link.name

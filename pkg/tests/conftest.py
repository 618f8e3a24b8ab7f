import warnings

import numpy as np
import pytest

from flatext.algebra import commutative
from flatext.extension import extend
from flatext.filtration import build_truncated_basis
from flatext.hankel import RankDecisionWarning
from flatext.solvers import vector_functional

RANK_TOL = 1e-10


def atomic_moment(word, points, weights):
    """Brute-force oracle: sum_k w_k prod_letters t_k[letter]."""
    points = np.atleast_2d(points)
    return complex(sum(w * np.prod([t[l] for l in word]) for t, w in zip(points, weights)))


def functional_from(pres, mats, v, m, y_cap=None):
    chain = build_truncated_basis(pres, m, y_cap=y_cap)
    return vector_functional(mats, v, chain)


def quiet_extend(L, **kw):
    kw.setdefault("tol", RANK_TOL)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDecisionWarning)
        return extend(L, **kw)


@pytest.fixture
def two_atom():
    """L = (delta_0 + delta_1) / 2 on C[x], B = {1, x}, C = {1, x, x^2}."""
    chain = build_truncated_basis(commutative(1), 1)
    mats = [np.diag([0.0, 1.0]).astype(complex)]
    v = np.array([1.0, 1.0]) / np.sqrt(2)
    return vector_functional(mats, v, chain)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

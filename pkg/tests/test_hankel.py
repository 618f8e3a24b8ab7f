import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatext.algebra import commutative
from flatext.exceptions import MissingMoment, NonHermitianMoments, NotFlat
from flatext.filtration import build_truncated_basis, chain_from_words
from flatext.hankel import (
    HankelMatrix,
    RankDecisionWarning,
    TruncatedFunctional,
    build_hankel,
    is_flat,
    is_positive,
    kernel,
    shmuljan_factor,
)

TWO_ATOM_G = np.array([[1, 0.5, 0.5], [0.5, 0.5, 0.5], [0.5, 0.5, 0.5]])


def _delta0(chain):
    return TruncatedFunctional({w: 1.0 if not w else 0.0 for w in chain.square_words()}, chain)


def test_delta0_hankel():
    pres = commutative(1)
    chain = chain_from_words(pres, [()], [(), (0,)])
    H = build_hankel(_delta0(chain))
    assert np.allclose(H.G, [[1, 0], [0, 0]])


def test_zero_functional_hankel():
    chain = build_truncated_basis(commutative(2), 1)
    L = TruncatedFunctional({w: 0.0 for w in chain.square_words()}, chain)
    assert not np.any(build_hankel(L).G)


def test_two_atom_hankel(two_atom):
    H = build_hankel(two_atom)
    assert np.allclose(H.G, TWO_ATOM_G, atol=1e-15)


def test_missing_moment():
    chain = build_truncated_basis(commutative(1), 1)
    L = TruncatedFunctional({(): 1.0, (0,): 0.0}, chain)
    with pytest.raises(MissingMoment):
        build_hankel(L)


def test_non_hermitian_rejected():
    pres = commutative(1)
    chain = chain_from_words(pres, [()], [(), (0,)])
    L = TruncatedFunctional({(): 1.0, (0,): 1j, (0, 0): 1.0}, chain)
    with pytest.raises(NonHermitianMoments):
        build_hankel(L)


def test_kernel_examples(two_atom):
    H = HankelMatrix.from_matrix([[1, 0], [0, 0]], 1)
    K = kernel(H)
    assert K.shape == (2, 1) and np.isclose(abs(K[1, 0]), 1)
    assert kernel(HankelMatrix.from_matrix(np.eye(2), 1)).shape[1] == 0
    K = kernel(build_hankel(two_atom))
    assert K.shape[1] == 1
    k = K[:, 0] / K[2, 0]
    assert np.allclose(k, [0, -1, 1])


def test_is_flat_examples(two_atom):
    cert = is_flat(HankelMatrix.from_matrix([[1, 1], [1, 1]], 1))
    assert cert.is_flat and cert.rank_C == cert.rank_B == 1
    k = cert.kernel_basis[:, 0]
    assert np.isclose(k[0], -k[1])
    cert = is_flat(HankelMatrix.from_matrix(np.eye(2), 1))
    assert not cert.is_flat and cert.rank_gap == 1
    cert = is_flat(build_hankel(two_atom))
    assert cert.is_flat and cert.rank_C == cert.rank_B == 2 and cert.is_positive


def test_shmuljan_examples(two_atom):
    f = shmuljan_factor(HankelMatrix.from_matrix([[1, 1], [1, 1]], 1))
    assert np.allclose(f.W, [[1]])
    f = shmuljan_factor(HankelMatrix.from_matrix([[2, 4], [4, 8]], 1))
    assert np.allclose(f.W, [[2]])
    f = shmuljan_factor(build_hankel(two_atom))
    # A W = [.5, .5]^T with A = [[1, .5], [.5, .5]] forces W = (0, 1)^T
    assert np.allclose(f.W[:, 0], [0, 1])
    assert f.residual_C < 1e-12 and f.residual_B < 1e-12
    with pytest.raises(NotFlat):
        shmuljan_factor(HankelMatrix.from_matrix(np.eye(2), 1))


def test_is_positive_examples(two_atom):
    assert is_positive(HankelMatrix.from_matrix(np.zeros((2, 2)), 1))
    assert not is_positive(HankelMatrix.from_matrix(np.diag([1.0, -1.0]), 1))
    assert is_positive(build_hankel(two_atom))


def test_rank_warning_near_threshold():
    G = np.diag([1.0, 1e-15])
    with pytest.warns(RankDecisionWarning, match="gap"):
        is_flat(HankelMatrix.from_matrix(G, 1), tol=2e-15)


def test_unit_in_kernel_forces_zero():
    H = HankelMatrix.from_matrix(np.zeros((3, 3)), 2)
    cert = is_flat(H)
    assert cert.unit_in_kernel and cert.is_flat


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 4), k=st.integers(1, 4), r=st.integers(1, 4),
    seed=st.integers(0, 2**32 - 1),
)
def test_positive_kernel_is_isotropic_set(n, k, r, seed):
    # for a positive form the kernel equals {a : <a, a> = 0}
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((min(r, n + k), n + k)) + 1j * rng.standard_normal((min(r, n + k), n + k))
    G = V.conj().T @ V
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDecisionWarning)
        K = kernel(HankelMatrix.from_matrix(G, n), tol=1e-10)
    lam, U = np.linalg.eigh(G)
    null = U[:, lam <= 1e-10 * lam.max()]
    P1, P2 = K @ K.conj().T, null @ null.conj().T
    assert np.linalg.norm(P1 - P2) < 1e-8

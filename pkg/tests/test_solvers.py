import dataclasses

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from flatext.algebra import NCPolynomial, abelian_lie, commutative, cylinder, heisenberg, matrix_poly, su2
from flatext.datasets import atomic_representation, matrix_poly_representation, pauli_spin_half, preset, spin_one
from flatext.exceptions import GramNotPD, NegativeWeight, NonCommutingOps, RelationViolation
from flatext.filtration import build_truncated_basis
from flatext.solvers import (
    FlatMomentSolver,
    extract_atoms_commutative,
    joint_diagonalize,
    solve_cylinder,
    solve_enveloping,
    solve_matrix_poly,
    vector_functional,
)

from conftest import RANK_TOL, atomic_moment, functional_from, quiet_extend

W = NCPolynomial.word


def _atoms(points, weights, pres, m, y_cap=None):
    mats, v = atomic_representation(points, weights)
    return quiet_extend(functional_from(pres, mats, v, m, y_cap))


def _match(a, b):
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    r, c = linear_sum_assignment(cost)
    return r, c, cost[r, c].max()


# -- vector functionals ---------------------------------------------------------

def test_vector_functional_point_evaluation():
    chain = build_truncated_basis(commutative(1), 2)
    L = vector_functional([np.array([[1.5]])], np.ones(1), chain)
    for w, v in L.values.items():
        assert np.isclose(v, 1.5 ** len(w))


def test_vector_functional_su2_spin_half():
    chain = build_truncated_basis(su2(), 1)
    L = vector_functional(pauli_spin_half(), np.array([1, 0]), chain)
    assert np.isclose(L.value((2,)), 0.5)
    assert np.isclose(L.value(()), 1.0)


def test_vector_functional_two_atom(two_atom):
    for k in range(5):
        assert np.isclose(two_atom.value((0,) * k), 0.5 if k else 1.0)


def test_vector_functional_rejects_bad_matrices():
    chain = build_truncated_basis(commutative(2), 1)
    A = np.array([[0, 1], [1, 0]], complex)
    B = np.diag([1.0, -1.0]).astype(complex)
    with pytest.raises(RelationViolation):
        vector_functional([A, B], np.array([1, 0]), chain)
    with pytest.raises(RelationViolation):
        vector_functional([np.array([[0, 1], [0, 0]], complex), A], np.array([1, 0]), chain)


# -- commutative atoms ----------------------------------------------------------

def test_delta0_atom():
    m = extract_atoms_commutative(_atoms([[0.0]], [1.0], commutative(1), 1))
    assert m.n_atoms == 1 and np.allclose(m.atoms, 0) and np.allclose(m.weights, 1)


def test_two_atom_recovery(two_atom):
    m = extract_atoms_commutative(quiet_extend(two_atom))
    assert np.allclose(m.atoms[:, 0], [0, 1]) and np.allclose(m.weights, [0.5, 0.5])
    assert m.certificate["rank"] == 2


def test_three_random_atoms_in_the_plane(rng):
    pts = np.array([[-0.7, 0.2], [0.5, 0.9], [0.1, -0.6]])
    w = np.array([0.2, 0.3, 0.5])
    m = extract_atoms_commutative(_atoms(pts, w, commutative(2), 2), seed=1)
    r, c, err = _match(pts, m.atoms)
    assert err < 1e-7 and np.allclose(w[r], m.weights[c], atol=1e-7)
    assert abs(m.weights.sum() - 1) < 1e-9


def test_abelian_lie_reduces_to_commutative():
    pres = abelian_lie(2)
    pts = np.array([[0.3, -0.4], [-0.5, 0.5]])
    res = _atoms(pts, [0.5, 0.5], pres, 1)
    m = extract_atoms_commutative(res)
    assert _match(pts, m.atoms)[2] < 1e-8


def test_joint_diagonalize_rejects_noncommuting(rng):
    A = np.array([[0, 1], [1, 0]], complex)
    B = np.diag([1.0, -1.0]).astype(complex)
    with pytest.raises(NonCommutingOps):
        joint_diagonalize([A, B], rng)


def test_signed_measure_rejected(two_atom):
    res = quiet_extend(two_atom)
    bad = dataclasses.replace(res, prime=dataclasses.replace(res.prime, gram=np.diag([1.0, -0.5])))
    with pytest.raises((GramNotPD, NegativeWeight)):
        extract_atoms_commutative(bad)


# -- cylinder -------------------------------------------------------------------

def test_cylinder_single_line():
    pts = np.array([[0.0, -1.0], [0.0, 1.0]])
    meas = solve_cylinder(_atoms(pts, [0.5, 0.5], cylinder(1), 1, y_cap=1))
    assert np.allclose(meas.atoms, pts, atol=1e-9) and np.allclose(meas.weights, 0.5)
    assert meas.certificate["n_lines"] == 1


def test_cylinder_product_delta():
    meas = solve_cylinder(_atoms([[0.0, 0.0]], [1.0], cylinder(1), 1, y_cap=1))
    assert meas.n_atoms == 1 and np.allclose(meas.atoms, 0)


def test_cylinder_two_lines():
    pts = np.array([[0.0, -0.5], [0.0, 0.8], [1.0, -0.2], [1.0, 0.4]])
    w = np.array([0.1, 0.2, 0.3, 0.4])
    meas = solve_cylinder(_atoms(pts, w, cylinder(1), 1, y_cap=2))
    r, c, err = _match(pts, meas.atoms)
    assert meas.n_atoms == 4 and err < 1e-7
    assert meas.certificate["n_lines"] == 2 and meas.certificate["line_bound"] == 3
    assert meas.certificate["x_marginal_mismatch"] < 1e-7
    assert np.allclose(sorted(meas.marginal.weights), [0.3, 0.7])


# -- matrix polynomials -----------------------------------------------------------

def _eq4(points, vectors, p, pres):
    """Direct evaluation of sum_i sum_jk p_jk(t_i) u_ki conj(u_ji)."""
    total = 0j
    for w, c in pres.normal_form(p).items():
        j, k = pres.split_unit(w[-1])
        for t, u in zip(points, vectors):
            total += c * np.prod([t[l] for l in w[:-1]]) * u[k] * np.conj(u[j])
    return total


def test_matrix_poly_single_point():
    pres = matrix_poly(2, 1)
    mats, v = matrix_poly_representation([[2.0]], [[1.0, 0.0]], 2)
    res = quiet_extend(functional_from(pres, mats, v, 1))
    dec = solve_matrix_poly(res)
    assert len(dec.points) == 1 and np.isclose(dec.points[0, 0], 2)
    assert np.allclose(np.abs(dec.vectors[0]), [1, 0])
    # L((p_jk)) = p_11(2)
    p = W((0, 0, pres.unit_index(0, 0))) + W((pres.unit_index(1, 1),), 5)
    assert np.isclose(dec.evaluate(p, pres), 4)


def test_matrix_poly_single_point_full_rank(rng):
    # one point with a full-rank vector set: the repeated x-eigenvalue must not split
    pres = matrix_poly(3, 1)
    us = rng.standard_normal((1, 3)) + 1j * rng.standard_normal((1, 3))
    mats, v = matrix_poly_representation([[0.7]], us, 3)
    L = functional_from(pres, mats, v, 1)
    dec = solve_matrix_poly(quiet_extend(L))
    assert np.allclose(dec.points, 0.7)
    assert dec.certificate["reproduction_error"] < 1e-10


def test_matrix_poly_constant_matrices():
    pres = matrix_poly(2, 0)
    u = np.array([0.6, 0.8j])
    mats, v = matrix_poly_representation(np.zeros((1, 0)), [u], 2)
    res = quiet_extend(functional_from(pres, mats, v, 1))
    dec = solve_matrix_poly(res)
    assert len(dec.vectors) == 1
    phase = dec.vectors[0] @ u.conj()
    assert np.isclose(abs(phase), 1) and np.allclose(dec.vectors[0], phase * u)


def test_matrix_poly_two_points(rng):
    pres = matrix_poly(2, 1)
    pts = np.array([[-0.5], [1.0]])
    us = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    mats, v = matrix_poly_representation(pts, us, 2)
    L = functional_from(pres, mats, v, 1)
    dec = solve_matrix_poly(quiet_extend(L))
    assert np.allclose(sorted(dec.points[:, 0]), [-0.5, 1.0])
    worst = max(abs(_eq4(dec.points, dec.vectors, W(w), pres) - val) for w, val in L.values.items())
    assert worst < 1e-8
    # the solver output is phase-invariant as a functional
    rot = dec.vectors * np.exp(1j * rng.uniform(0, 2 * np.pi, size=(len(dec.vectors), 1)))
    for w in list(L.values)[:20]:
        assert np.isclose(_eq4(dec.points, rot, W(w), pres), _eq4(dec.points, dec.vectors, W(w), pres))


# -- enveloping algebras --------------------------------------------------------

def _commutator_residual(H, c):
    d = len(H)
    return max(
        np.linalg.norm(H[j] @ H[k] - H[k] @ H[j] - 1j * sum(c[j, k, l] * H[l] for l in range(d)), 2)
        for j in range(d) for k in range(d)
    )


def test_su2_spin_half_package():
    pres = su2()
    res = quiet_extend(functional_from(pres, pauli_spin_half(), np.array([1, 0]), 1))
    pkg = solve_enveloping(res)
    assert len(pkg.vector) == 2
    assert _commutator_residual(pkg.H, pres.structure_constants) < 1e-10
    for H in pkg.H:
        assert np.allclose(H, H.conj().T)
        assert np.allclose(np.linalg.eigvalsh(H), [-0.5, 0.5])
    assert pkg.certificate["moment_residual"] < 1e-10


def test_su2_spin_one_package():
    pres = su2()
    _, mats, v, m, _ = preset("su2-spin-one")
    pkg = solve_enveloping(quiet_extend(functional_from(pres, mats, v, m)))
    assert len(pkg.vector) == 3
    assert np.allclose(np.linalg.eigvalsh(pkg.H[2]), [-1, 0, 1])


def test_heisenberg_trivial():
    pres = heisenberg()
    res = quiet_extend(functional_from(pres, [np.zeros((1, 1), complex)] * 3, np.ones(1), 1))
    pkg = solve_enveloping(res)
    assert all(np.allclose(H, 0) for H in pkg.H)
    assert np.isclose(pkg.evaluate(W((0, 1, 2))), 0) and np.isclose(pkg.evaluate(NCPolynomial.one()), 1)


def test_enveloping_requires_positive_gram():
    res = quiet_extend(functional_from(su2(), pauli_spin_half(), np.array([1, 0]), 1))
    bad = dataclasses.replace(res, prime=dataclasses.replace(res.prime, gram=np.diag([1.0, -1.0])))
    with pytest.raises(GramNotPD):
        solve_enveloping(bad)


# -- estimator --------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["commutative", "cylinder", "matrix_poly", "su2", "heisenberg"])
def test_moment_solver_round_trip(kind):
    rng = np.random.default_rng(4)
    pres, mats, v, m, y_cap = preset("random", kind, rng)
    L = functional_from(pres, mats, v, m, y_cap)
    est = FlatMomentSolver(tol_rank=RANK_TOL, seed=0).fit(L)
    words = sorted(L.values)
    pred = est.predict([W(w) for w in words])
    truth = np.array([L.values[w] for w in words])
    assert np.max(np.abs(pred - truth)) <= 1e-7 * L.scale
    assert set(est.get_params()) == {"tol_rank", "tol_psd", "seed", "pivot_order"}


def test_moment_solver_atom_oracle():
    pts = np.array([[0.2], [-0.9], [0.6]])
    w = np.array([0.5, 0.3, 0.2])
    mats, v = atomic_representation(pts, w)
    L = functional_from(commutative(1), mats, v, 2)
    est = FlatMomentSolver(tol_rank=RANK_TOL).fit(L)
    for k in range(10):
        assert np.isclose(est.predict(W((0,) * k))[0], atomic_moment((0,) * k, pts, w))

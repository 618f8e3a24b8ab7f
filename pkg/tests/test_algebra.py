import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatext.algebra import (
    GeneratorSet,
    NCPolynomial,
    abelian_lie,
    commutative,
    delta_of,
    free_with_relations,
    heisenberg,
    index_of,
    lie,
    matrix_poly,
    normal_form,
    poly_add,
    poly_involution,
    poly_mul,
    su2,
    word_involution,
)
from flatext.exceptions import ConfluenceError, InputError, NonTerminatingRewrite, ZeroElement

W = NCPolynomial.word


def _presentations():
    return [commutative(2), commutative(3), matrix_poly(2, 1), su2(), heisenberg()]


# -- involution -----------------------------------------------------------

def test_word_involution_examples():
    herm = GeneratorSet(("x1", "x2", "x3"), (0, 1, 2), "commutative")
    assert word_involution((), herm) == ()
    assert word_involution((0, 1), herm) == (1, 0)
    swap = GeneratorSet(("x1", "x2", "x3"), (1, 0, 2), "free_with_relations")
    assert word_involution((0, 2), swap) == (2, 1)


def test_involution_is_an_involution():
    swap = GeneratorSet(("a", "b", "c"), (1, 0, 2), "free_with_relations")
    for w in [(0,), (0, 1, 2), (2, 2, 0, 1)]:
        assert word_involution(word_involution(w, swap), swap) == w


def test_generator_set_rejects_non_involution():
    with pytest.raises(InputError):
        GeneratorSet(("a", "b", "c"), (1, 2, 0), "free_with_relations")


def test_poly_involution_antilinear():
    gens = commutative(1).gens
    assert poly_involution(W((0,), 1j), gens) == W((0,), -1j)


def test_ring_identities():
    p = W((0, 1), 2.0) + W((), 1 - 1j)
    assert poly_add(p, NCPolynomial.zero()) == p
    assert poly_mul(NCPolynomial.one(), p) == p
    assert poly_mul(p, NCPolynomial.one()) == p


def test_no_zero_coefficients_stored():
    p = W((0,), 1.0) - W((0,), 1.0)
    assert p.is_zero() and len(p) == 0


# -- normal forms ---------------------------------------------------------

def test_commutative_sorts():
    assert normal_form(W((1, 0)), commutative(2)) == W((0, 1))


def test_matrix_units_fuse():
    pres = matrix_poly(2, 1)
    e12, e21, e11 = pres.unit_index(0, 1), pres.unit_index(1, 0), pres.unit_index(0, 0)
    assert normal_form(W((e12, e21)), pres) == W((e11,))
    assert normal_form(W((e12, e12)), pres).is_zero()


def test_matrix_units_diagonal_products():
    pres = matrix_poly(3, 0)
    for i in range(3):
        for j in range(3):
            eii, ejj = pres.unit_index(i, i), pres.unit_index(j, j)
            got = normal_form(W((eii, ejj)), pres)
            assert got == (W((eii,)) if i == j else NCPolynomial.zero())


def test_matrix_unit_sum_acts_as_unit():
    pres = matrix_poly(2, 1)
    total = sum((W((pres.unit_index(i, i),)) for i in range(2)), NCPolynomial.zero())
    assert normal_form(total, pres).allclose(normal_form(NCPolynomial.one(), pres))
    p = W((0, pres.unit_index(0, 1)))
    assert pres.multiply(total, p).allclose(normal_form(p, pres))


def test_su2_commutator_rule():
    # [x1, x2] = i x3; normal words keep indices nondecreasing
    pres = su2()
    assert normal_form(W((1, 0)), pres).allclose(W((0, 1)) - W((2,), 1j))
    assert normal_form(W((0, 1)), pres) == W((0, 1))
    comm = normal_form(W((0, 1)) - W((1, 0)), pres)
    assert comm.allclose(W((2,), 1j))


def test_heisenberg_third_order_word():
    pres = heisenberg()
    got = normal_form(W((2, 1, 0)), pres)
    assert got.allclose(W((0, 1, 2)) - W((2, 2), 1j))


def test_index_of_examples():
    pres = commutative(3)
    assert index_of(NCPolynomial.one(), pres) == 0
    assert index_of(W((0, 1)) + W((2,)), pres) == 2
    assert index_of(W((0, 1)) - W((1, 0)), su2()) == 1
    with pytest.raises(ZeroElement):
        index_of(NCPolynomial.zero(), pres)


def test_delta_examples():
    assert delta_of(commutative(2)) == 2
    assert delta_of(commutative(3)) == 2
    assert delta_of(matrix_poly(2, 1)) == 2
    assert delta_of(su2()) == 2
    assert delta_of(heisenberg()) == 2
    # one commuting variable: no relations at all
    assert delta_of(commutative(1)) == 0
    assert delta_of(free_with_relations(["a"], {})) == 0


def test_relations_reduce_to_zero():
    for pres in _presentations():
        for r in pres.relations:
            assert normal_form(r, pres).allclose(NCPolynomial.zero(), 1e-12)
            assert normal_form(r.star(pres.gens), pres).allclose(NCPolynomial.zero(), 1e-12)


def test_pbw_words_are_ordered():
    for pres in (su2(), heisenberg()):
        for w in pres.truncation_words(3):
            for v in normal_form(W(w[::-1]), pres).words():
                assert list(v) == sorted(v)


def test_lie_rejects_jacobi_violation():
    c = np.zeros((3, 3, 3))
    # [y1, y2] = y3, [y1, y3] = y1: the Jacobi sum equals y3
    c[0, 1, 2], c[1, 0, 2] = 1, -1
    c[0, 2, 0], c[2, 0, 0] = 1, -1
    with pytest.raises(InputError):
        lie(c)


def test_lie_rejects_non_antisymmetric():
    c = np.zeros((2, 2, 2))
    c[0, 1, 0] = 1
    with pytest.raises(InputError):
        lie(c)


def test_abelian_lie_is_commutative():
    pres = abelian_lie(2)
    assert pres.is_commutative
    assert normal_form(W((1, 0)), pres) == W((0, 1))


def test_free_relations_confluence_checked():
    # a a -> b and a a -> 1 style ambiguity: overlap a|a|a resolves differently
    with pytest.raises(ConfluenceError):
        free_with_relations(["a", "b"], {(0, 0): W((1,)), (1, 0): W(())})


def test_free_relations_step_budget():
    pres = free_with_relations(["a", "b"], {(1, 0): W((0, 1))}, step_budget=5)
    with pytest.raises(NonTerminatingRewrite):
        pres.reduce_word((1,) * 6 + (0,) * 6)


def test_free_relations_normal_form():
    # b a -> a b on hermitian letters is *-compatible only with its mirror; use a commuting pair
    pres = free_with_relations(["a", "b"], {(1, 0): W((0, 1))})
    assert normal_form(W((1, 1, 0)), pres) == W((0, 1, 1))


# -- properties -----------------------------------------------------------

def _poly_strategy(n_gens, max_len=4):
    word = st.lists(st.integers(0, n_gens - 1), max_size=max_len).map(tuple)
    coef = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)
    return st.dictionaries(word, coef, max_size=4).map(NCPolynomial)


@pytest.mark.parametrize("pres", _presentations(), ids=lambda p: repr(p))
@settings(max_examples=25, deadline=None)
@given(data=st.data())
def test_involution_commutes_with_normal_form(pres, data):
    p = data.draw(_poly_strategy(len(pres.gens)))
    lhs = normal_form(normal_form(p, pres).star(pres.gens), pres)
    rhs = normal_form(p.star(pres.gens), pres)
    assert lhs.allclose(rhs, 1e-9)


@pytest.mark.parametrize("pres", _presentations(), ids=lambda p: repr(p))
@settings(max_examples=25, deadline=None)
@given(data=st.data())
def test_normal_form_is_a_homomorphism(pres, data):
    p = data.draw(_poly_strategy(len(pres.gens), 3))
    q = data.draw(_poly_strategy(len(pres.gens), 3))
    nf = lambda a: normal_form(a, pres)  # noqa: E731
    assert nf(p * q).allclose(nf(nf(p) * nf(q)), 1e-9)
    assert nf(p + q).allclose(nf(p) + nf(q), 1e-9)
    assert nf(nf(p)).allclose(nf(p), 1e-12)

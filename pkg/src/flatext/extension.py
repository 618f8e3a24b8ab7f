"""Unique flat extension of a flat truncated functional and its GNS representation.

Given L on C² that is flat with respect to B, pick B′ ⊆ B with 1 ∈ B′ and
C = B′ ⊕ K_L(C).  The projection π onto B′ along the kernel defines the
multiplication operators ``X_i b = π(a_i b)``; then ``φ(p) = p(X)·1`` and the
extension is ``L̃(a) = L(φ(a))`` with representation ``ρ(a) = a(X)``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .algebra import NCPolynomial
from .exceptions import EscapesC, HypothesisError, NotFlat, SingularGram
from .filtration import build_truncated_basis, check_hypotheses
from .hankel import (
    PSD_TOL,
    HankelMatrix,
    TruncatedFunctional,
    build_hankel,
    is_flat,
    pivot_columns,
)
from .validation import check_functional, check_polys, check_tolerance

GRAM_COND_MAX = 1e13


@dataclass
class PrimeBasis:
    """B′ as C-coordinate columns (first column = the unit) and its Gram matrix."""

    coords: np.ndarray
    columns: list
    gram: np.ndarray
    cond: float

    @property
    def dim(self):
        return self.coords.shape[1]


@dataclass
class MultiplicationOperators:
    X: list
    relation_residual: float
    adjoint_residual: float


@dataclass(eq=False)
class ExtensionResult:
    functional: TruncatedFunctional
    hankel: HankelMatrix
    certificate: object
    hypotheses: object
    prime: PrimeBasis
    projection: np.ndarray
    ops: MultiplicationOperators
    kernel_generators: np.ndarray
    moments: np.ndarray
    _phi_cache: dict = field(default_factory=dict, repr=False)
    _mat_cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def chain(self):
        return self.functional.chain

    @property
    def pres(self):
        return self.functional.chain.pres

    @property
    def dim(self):
        return self.prime.dim

    @property
    def is_zero(self):
        return self.prime.dim == 0

    def kernel_polys(self, atol=1e-12):
        return [self.chain.poly(k, atol) for k in self.kernel_generators.T]

    def prime_polys(self, atol=0.0):
        return [self.chain.poly(c, atol) for c in self.prime.coords.T]


def select_bprime(cert, H, order=None):
    """B′ basis: the unit followed by ``rank - 1`` pivoted B-columns.

    Returns an empty basis when the unit lies in the kernel (then L ≡ 0).
    """
    n = H.dim
    if cert.unit_in_kernel:
        if np.any(np.abs(H.G) > max(cert.atol, 0.0)):
            raise HypothesisError("1 lies in the kernel but the moment matrix is nonzero")
        return PrimeBasis(np.zeros((n, 0), complex), [], np.zeros((0, 0), complex), 1.0)
    if order is None and cert.bprime_columns:
        cols = list(cert.bprime_columns)
    else:
        cols = pivot_columns(H, cert.rank_C, cert.atol, order)
    if len(cols) != cert.rank_C:
        raise SingularGram(f"could only select {len(cols)} of {cert.rank_C} B′ columns")
    P = np.zeros((n, len(cols)), complex)
    P[:, 0] = H.unit
    for k, j in enumerate(cols[1:], start=1):
        P[j, k] = 1
    gram = P.conj().T @ H.G @ P
    gram = (gram + gram.conj().T) / 2
    cond = float(np.linalg.cond(gram))
    return PrimeBasis(P, cols, gram, cond)


def build_projection(prime, H):
    """Matrix of π: C-coordinates -> B′-coordinates, ``π = gram⁻¹ P* G``."""
    if prime.dim == 0:
        return np.zeros((0, H.dim), complex)
    if not np.isfinite(prime.cond) or prime.cond > GRAM_COND_MAX:
        raise SingularGram(f"Gram matrix on B′ is singular (condition number {prime.cond:.3e})")
    return np.linalg.solve(prime.gram, prime.coords.conj().T @ H.G)


def _left_products(prime, chain, i):
    """C-coordinates of a_i·b′ for every B′ column."""
    pres = chain.pres
    out = np.zeros((chain.dim, prime.dim), complex)
    for k in range(prime.dim):
        col = prime.coords[:, k]
        for idx in np.flatnonzero(col):
            w = chain.words[idx]
            for v, c in pres.reduce_word((i,) + w).items():
                j = chain.index.get(v)
                if j is None:
                    raise EscapesC(v, pres.format_word(v))
                out[j, k] += col[idx] * c
    return out


def _eval_poly(p, X, dim):
    out = np.zeros((dim, dim), complex)
    for w, c in p.items():
        m = np.eye(dim, dtype=complex)
        for letter in w:
            m = m @ X[letter]
        out += c * m
    return out


def build_multiplication_ops(prime, proj, chain):
    """X_i = π(a_i ·) on B′, together with relation and adjointness residuals."""
    pres = chain.pres
    r = prime.dim
    X, products = [], []
    for i in range(len(pres.gens)):
        prod = _left_products(prime, chain, i)
        products.append(prod)
        X.append(proj @ prod)
    rel = max((float(np.linalg.norm(_eval_poly(g, X, r), 2)) if r else 0.0 for g in pres.relations),
              default=0.0)
    adj = 0.0
    gnorm = float(np.linalg.norm(prime.gram, 2)) if r else 0.0
    if r:
        for i, Xi in enumerate(X):
            Xj = X[pres.gens.inv[i]]
            adj = max(adj, float(np.linalg.norm(prime.gram @ Xi - Xj.conj().T @ prime.gram, 2)) / gnorm)
    ops = MultiplicationOperators(X, rel, adj)
    return ops, products


def _kernel_generators(prime, ops, products, tol=1e-10):
    """Prolongation defects a_i b′ - π(a_i b′), orthonormalized."""
    defects = [products[i] - prime.coords @ Xi for i, Xi in enumerate(ops.X)]
    if not defects or prime.dim == 0:
        return np.zeros((prime.coords.shape[0], 0), complex)
    D = np.hstack(defects)
    u, s, _ = np.linalg.svd(D, full_matrices=False)
    if not s.size or s[0] == 0:
        return np.zeros((D.shape[0], 0), complex)
    keep = s > tol * max(1.0, s[0])
    return u[:, keep]


def extend(L, tol=None, psd_tol=PSD_TOL, order=None, require_hypotheses=True):
    """Run the whole construction; raises NotFlat or HypothesisError on bad input."""
    chain = L.chain
    hyp = check_hypotheses(chain)
    if require_hypotheses and not hyp.passed:
        raise HypothesisError(
            "truncation violates the extension hypotheses: " + ", ".join(hyp.failures()), hyp
        )
    H = build_hankel(L)
    cert = is_flat(H, tol, psd_tol)
    if not cert.is_flat:
        raise NotFlat(cert)
    prime = select_bprime(cert, H, order)
    proj = build_projection(prime, H)
    ops, products = build_multiplication_ops(prime, proj, chain)
    kern = _kernel_generators(prime, ops, products)
    moments = H.unit.conj() @ H.G @ prime.coords if prime.dim else np.zeros(0, complex)
    return ExtensionResult(L, H, cert, hyp, prime, proj, ops, kern, moments)


def _phi_word(w, result):
    hit = result._phi_cache.get(w)
    if hit is not None:
        return hit
    if not w:
        vec = np.zeros(result.dim, complex)
        vec[0] = 1
    else:
        vec = result.ops.X[w[0]] @ _phi_word(w[1:], result)
    with result._lock:
        result._phi_cache[w] = vec
    return vec


def phi(p, result):
    """``φ(p) = p(X)·1`` in B′-coordinates (p is an element of the free algebra)."""
    out = np.zeros(result.dim, complex)
    if result.dim == 0:
        return out
    for w, c in p.items():
        out = out + c * _phi_word(w, result)
    return out


def extended_value(a, result):
    """``L̃(a) = L(φ(a))``."""
    if result.dim == 0:
        return 0j
    return complex(result.moments @ phi(a, result))


def _word_matrix(w, result):
    hit = result._mat_cache.get(w)
    if hit is not None:
        return hit
    if not w:
        mat = np.eye(result.dim, dtype=complex)
    else:
        mat = result.ops.X[w[0]] @ _word_matrix(w[1:], result)
    with result._lock:
        result._mat_cache[w] = mat
    return mat


def gns_representation(a, result):
    """Matrix of ρ_L(a) = a(X) acting on B′-coordinates."""
    out = np.zeros((result.dim, result.dim), complex)
    for w, c in a.items():
        out = out + c * _word_matrix(w, result)
    return out


def extended_functional(result, chain):
    """L̃ restricted to the C² of another chain, as a TruncatedFunctional."""
    values = {w: extended_value(NCPolynomial.word(w), result) for w in chain.square_words()}
    return TruncatedFunctional(values, chain)


def uniqueness_check(result_a, result_b, degree=None, atol=1e-8):
    """Compare two extensions of the same L on all normal-form monomials up to ``degree``."""
    pres = result_a.pres
    m = result_a.chain.m or 0
    degree = 2 * m + 4 if degree is None else degree
    words = pres.truncation_words(degree)
    worst = 0.0
    for w in words:
        p = NCPolynomial.word(w)
        worst = max(worst, abs(extended_value(p, result_a) - extended_value(p, result_b)))
    return {"passed": worst <= atol, "max_difference": worst, "degree": degree, "n_words": len(words)}


def kernel_ideal_residual(result, polys):
    """max |L̃(b*·a·κ)| over B′-basis b, the given a and all kernel generators κ.

    Small values certify that the kernel generators lie in the left ideal K_L̃.
    """
    pres = result.pres
    worst = 0.0
    for kappa in result.kernel_polys(atol=0.0):
        for a in polys:
            ak = pres.multiply(a, kappa)
            for b in result.prime_polys():
                worst = max(worst, abs(extended_value(pres.multiply(pres.star(b), ak), result)))
    return worst


def certificates(result):
    """All residuals certifying the construction, keyed by name."""
    L = result.functional
    scale = max(L.scale, 1e-300)
    agree = 0.0
    for w, v in L.values.items():
        agree = max(agree, abs(extended_value(NCPolynomial.word(w), result) - v))
    r = result.dim
    proj_id = float(np.linalg.norm(result.projection @ result.prime.coords - np.eye(r))) if r else 0.0
    G = result.hankel.G
    gnorm = max(result.hankel.norm, 1e-300)
    kern_res = (
        float(np.linalg.norm(G @ result.kernel_generators, 2)) / gnorm
        if result.kernel_generators.size else 0.0
    )
    return {
        "dim_bprime": r,
        "bprime": [result.chain.pres.format_word(result.chain.words[j]) if j >= 0 else "1"
                   for j in result.prime.columns],
        "gram_condition": result.prime.cond,
        "projection_identity_residual": proj_id,
        "relation_residual": result.ops.relation_residual,
        "adjoint_residual": result.ops.adjoint_residual,
        "kernel_generator_residual": kern_res,
        "n_kernel_generators": int(result.kernel_generators.shape[1]),
        "extension_agreement": agree / scale if L.scale > 0 else agree,
    }


class FlatExtension(BaseEstimator):
    """Estimator wrapper: ``fit`` a flat truncated functional, ``predict`` L̃ on algebra elements.

    Parameters
    ----------
    tol_rank : float or None
        Relative singular-value threshold for rank decisions; ``None`` uses
        ``dim * machine epsilon``.
    tol_psd : float
        Relative eigenvalue slack for the positivity test.
    pivot_order : sequence of int or None
        Priority order of B-columns when choosing B′ (default: pivoted).
    require_hypotheses : bool
        Raise ``HypothesisError`` if the truncation violates the extension hypotheses.
    """

    def __init__(self, tol_rank=None, tol_psd=PSD_TOL, pivot_order=None, require_hypotheses=True):
        self.tol_rank = tol_rank
        self.tol_psd = tol_psd
        self.pivot_order = pivot_order
        self.require_hypotheses = require_hypotheses

    def fit(self, L, y=None):
        L = check_functional(L)
        tol = check_tolerance(self.tol_rank, "tol_rank")
        psd = check_tolerance(self.tol_psd, "tol_psd", allow_none=False)
        self.result_ = extend(L, tol, psd, self.pivot_order, self.require_hypotheses)
        self.certificate_ = self.result_.certificate
        self.n_components_ = self.result_.dim
        return self

    def predict(self, X):
        """Extended functional values L̃(a) for each element of ``X``."""
        check_is_fitted(self, "result_")
        polys = check_polys(X, self.result_.pres)
        return np.array([extended_value(p, self.result_) for p in polys], dtype=complex)

    def transform(self, X):
        """B′-coordinates φ(a) of each element, shape ``(n_samples, n_components_)``."""
        check_is_fitted(self, "result_")
        polys = check_polys(X, self.result_.pres)
        return np.array([phi(p, self.result_) for p in polys], dtype=complex).reshape(
            len(polys), self.n_components_
        )

    def represent(self, a):
        """Matrix of ρ_L(a) on B′."""
        check_is_fitted(self, "result_")
        (p,) = check_polys(a, self.result_.pres)
        return gns_representation(p, self.result_)

    def certificates(self):
        check_is_fitted(self, "result_")
        return certificates(self.result_)

    def extended_gram(self, degree):
        """Hankel matrix of L̃ on C = A_{degree} (with B = A_{degree-1})."""
        check_is_fitted(self, "result_")
        chain = self.result_.chain
        cap = chain.y_cap + (degree - 1 - (chain.m or 0)) if chain.y_cap is not None else None
        big = build_truncated_basis(self.result_.pres, degree - 1, y_cap=cap)
        return build_hankel(extended_functional(self.result_, big))


__all__ = [
    "ExtensionResult",
    "FlatExtension",
    "MultiplicationOperators",
    "PrimeBasis",
    "build_multiplication_ops",
    "build_projection",
    "certificates",
    "extend",
    "extended_functional",
    "extended_value",
    "gns_representation",
    "kernel_ideal_residual",
    "phi",
    "select_bprime",
    "uniqueness_check",
]

"""Moment-problem solvers built on the flat extension.

* vector functionals ``L(a) = <π(a) v, v>`` from a finite *-representation
  (test data generation),
* finitely atomic measures for commutative and cylinder algebras,
* ``L((p_jk)) = sum_i sum_jk p_jk(t_i) u_ki conj(u_ji)`` for matrix polynomials,
* hermitian representation packages for enveloping algebras.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.linalg import cholesky
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .algebra import NCPolynomial
from .exceptions import (
    BoundViolation,
    CenterNotDiagonalizable,
    GramNotPD,
    InputError,
    NegativeWeight,
    NonCommutingOps,
    RelationViolation,
)
from .extension import FlatExtension, extended_value
from .filtration import build_truncated_basis
from .hankel import PSD_TOL, TruncatedFunctional, build_hankel, is_flat
from .validation import check_functional, check_polys, check_random_state

RELATION_TOL = 1e-10
CLUSTER_TOL = 1e-6
WEIGHT_FLOOR = -1e-9


# -- test data ----------------------------------------------------------

def _word_matrices(mats, dim):
    cache = {(): np.eye(dim, dtype=complex)}

    def get(w):
        hit = cache.get(w)
        if hit is None:
            hit = mats[w[0]] @ get(w[1:])
            cache[w] = hit
        return hit

    return get


def relation_residual(mats, pres):
    """max over relations g of ||g(M)|| (spectral norm)."""
    dim = mats[0].shape[0] if mats else 0
    get = _word_matrices(mats, dim)
    worst = 0.0
    for g in pres.relations:
        val = sum((c * get(w) for w, c in g.items()), np.zeros((dim, dim), complex))
        worst = max(worst, float(np.linalg.norm(val, 2)))
    return worst


def vector_functional(mats, v, chain, rel_tol=RELATION_TOL):
    """``L(w) = <w(M) v, v>`` on every word of C².

    ``mats[i]`` represents generator ``i``; the matrices must satisfy the
    presentation's relations and ``M_{i*} = M_i^H``.
    """
    pres = chain.pres
    mats = [np.asarray(M, dtype=complex) for M in mats]
    v = np.asarray(v, dtype=complex)
    if len(mats) != len(pres.gens):
        raise InputError(f"need {len(pres.gens)} matrices, got {len(mats)}")
    if not np.any(v):
        raise InputError("the cyclic vector must be nonzero")
    scale = max(1.0, max(float(np.linalg.norm(M, 2)) for M in mats))
    for i, M in enumerate(mats):
        if not np.allclose(mats[pres.gens.inv[i]], M.conj().T, atol=rel_tol * scale):
            raise RelationViolation(f"matrix for {pres.gens.names[i]}* is not the adjoint")
    res = relation_residual(mats, pres)
    if res > rel_tol * scale**2:
        raise RelationViolation(f"matrices violate the relations (residual {res:.3e})")
    get = _word_matrices(mats, len(v))
    values = {w: complex(v.conj() @ get(w) @ v) for w in chain.square_words()}
    return TruncatedFunctional(values, chain)


# -- shared linear algebra ------------------------------------------------

def _orthonormal_frame(result):
    """Cholesky factor R with gram = R^H R; returns (R, R^{-1})."""
    gram = result.prime.gram
    try:
        R = cholesky(gram, lower=False)
    except np.linalg.LinAlgError:
        raise GramNotPD("Gram matrix on B′ is not positive definite (input not positive)") from None
    return R, np.linalg.inv(R)


def _hermitian_ops(result, indices):
    R, Rinv = _orthonormal_frame(result)
    out = []
    for i in indices:
        Y = R @ result.ops.X[i] @ Rinv
        out.append((Y + Y.conj().T) / 2)
    return out, R


def _cluster(values, tol):
    order = np.argsort(values)
    vals = values[order]
    # gaps are measured against the spread, floored by the magnitude so that
    # rounding noise in a single repeated eigenvalue is never split
    scale = max(vals[-1] - vals[0], np.abs(vals).max()) if len(vals) else 0.0
    groups, cur = [], [order[0]]
    for a, b, idx in zip(vals[:-1], vals[1:], order[1:]):
        if b - a > tol * scale and scale > 0:
            groups.append(cur)
            cur = [idx]
        else:
            cur.append(idx)
    groups.append(cur)
    return groups


def joint_diagonalize(mats, rng, cluster_tol=CLUSTER_TOL, res_tol=1e-7, attempts=3):
    """Joint eigenspaces of commuting hermitian matrices.

    Diagonalize a random real combination, cluster its eigenvalues and read
    the joint eigenvalue of each cluster off the compressed matrices.  A
    cluster whose compressions are not scalar triggers a new combination.

    Returns a list of ``(point, Q)`` with ``Q`` an orthonormal basis.
    """
    dim = mats[0].shape[0] if mats else 0
    if dim == 0:
        return []
    scale = max(1.0, max(float(np.linalg.norm(M, 2)) for M in mats))
    for a in range(len(mats)):
        for b in range(a):
            if np.linalg.norm(mats[a] @ mats[b] - mats[b] @ mats[a], 2) > res_tol * scale**2:
                raise NonCommutingOps(f"operators {b} and {a} do not commute")
    worst = np.inf
    for _ in range(attempts):
        coef = rng.standard_normal(len(mats))
        S = sum(c * M for c, M in zip(coef, mats))
        lam, V = np.linalg.eigh(S)
        out, worst = [], 0.0
        for g in _cluster(lam, cluster_tol):
            Q = V[:, g]
            point = []
            for M in mats:
                comp = Q.conj().T @ M @ Q
                t = float(np.real(np.trace(comp))) / len(g)
                worst = max(worst, float(np.linalg.norm(comp - t * np.eye(len(g)), 2)),
                            float(np.linalg.norm(M @ Q - t * Q, 2)))
                point.append(t)
            out.append((np.array(point), Q))
        if worst <= res_tol * scale:
            return out
    raise NonCommutingOps(f"joint diagonalization failed (residual {worst:.3e})")


def _eval_commutative(p, point):
    total = 0j
    for w, c in p.items():
        term = c
        for letter in w:
            term = term * point[letter]
        total += term
    return total


# -- commutative / cylinder -----------------------------------------------

@dataclass
class AtomicMeasure:
    """Finitely atomic positive measure: rows of ``atoms`` with positive ``weights``."""

    atoms: np.ndarray
    weights: np.ndarray
    names: tuple = ()
    certificate: dict = field(default_factory=dict)

    @property
    def n_atoms(self):
        return len(self.weights)

    def integrate(self, p):
        return complex(sum(w * _eval_commutative(p, t) for t, w in zip(self.atoms, self.weights)))

    def to_dict(self):
        return {
            "variables": list(self.names),
            "atoms": self.atoms.tolist(),
            "weights": self.weights.tolist(),
            "certificate": dict(self.certificate),
        }


def _reproduction_error(L, evaluate):
    worst = 0.0
    for w, v in L.values.items():
        worst = max(worst, abs(evaluate(NCPolynomial.word(w)) - v))
    return worst / max(L.scale, 1e-300)


def extract_atoms_commutative(result, seed=0, cluster_tol=CLUSTER_TOL):
    """Atoms = joint eigenvalues of the X_i; weights by least squares on B′ moments."""
    pres = result.pres
    names = tuple(pres.gens.names)
    if not pres.is_commutative:
        raise InputError("atom extraction needs a commutative presentation")
    if result.is_zero:
        return AtomicMeasure(np.zeros((0, len(names))), np.zeros(0), names,
                             {"rank": 0, "reproduction_error": 0.0})
    rng = check_random_state(seed)
    ops, _ = _hermitian_ops(result, range(len(names)))
    clusters = joint_diagonalize(ops, rng, cluster_tol)
    atoms = np.array([t for t, _ in clusters])
    bprime = result.prime_polys()
    V = np.array([[_eval_commutative(b, t) for t in atoms] for b in bprime])
    w, *_ = np.linalg.lstsq(V, result.moments, rcond=None)
    w = np.real(w)
    if np.any(w < WEIGHT_FLOOR):
        raise NegativeWeight(f"negative weight {w.min():.3e}: input is not positive")
    keep = w > 0
    atoms, w = atoms[keep], w[keep]
    order = np.lexsort(np.round(atoms, 8).T[::-1]) if len(atoms) else np.zeros(0, int)
    atoms, w = atoms[order], w[order]
    measure = AtomicMeasure(atoms, w, names)
    measure.certificate = {
        "rank": result.certificate.rank_C,
        "n_atoms": measure.n_atoms,
        "mass_error": abs(float(w.sum()) - result.functional(NCPolynomial.one()).real),
        "reproduction_error": _reproduction_error(result.functional, measure.integrate),
    }
    return measure


def x_marginal(measure, x_count, tol=1e-6):
    """Aggregate atoms by their first ``x_count`` coordinates."""
    pts, wts = [], []
    for t, w in zip(measure.atoms, measure.weights):
        x = t[:x_count]
        for k, p in enumerate(pts):
            if np.max(np.abs(p - x), initial=0.0) <= tol:
                wts[k] += w
                break
        else:
            pts.append(x.copy())
            wts.append(w)
    return AtomicMeasure(np.array(pts).reshape(len(pts), x_count), np.array(wts),
                         measure.names[:x_count])


def _x_subalgebra_recovery(result, seed, max_degree=8):
    """Atoms of L̃ restricted to C[x], by running the commutative pipeline on it."""
    from .algebra import commutative

    d = result.pres.d
    sub = commutative(d)
    for m in range(result.chain.m or 0, max_degree):
        chain = build_truncated_basis(sub, m)
        values = {w: extended_value(NCPolynomial.word(w), result) for w in chain.square_words()}
        L0 = TruncatedFunctional(values, chain)
        cert = is_flat(build_hankel(L0), result.certificate.tol)
        if cert.is_flat:
            est = FlatExtension(tol_rank=result.certificate.tol).fit(L0)
            return extract_atoms_commutative(est.result_, seed), m
    return None, None


def solve_cylinder(result, seed=0, cluster_tol=CLUSTER_TOL):
    """Atoms (t_j, s) on finitely many lines t_j × R, with the line-count bound certified."""
    pres = result.pres
    if not getattr(pres, "cylinder", False):
        raise InputError("solve_cylinder needs a cylinder presentation")
    measure = extract_atoms_commutative(result, seed, cluster_tol)
    d, m = pres.d, result.chain.m or 0
    marginal = x_marginal(measure, d)
    bound = comb(d + 1 + m, m)
    k = marginal.n_atoms
    if k > bound:
        raise BoundViolation(f"{k} distinct x-projections exceed the bound C({d + 1 + m}, {m}) = {bound}")
    cert = dict(measure.certificate)
    cert.update({"n_lines": k, "line_bound": bound})
    # y-cap stabilization: rank on B equals rank with the y-degree raised by one
    cert["y_cap_stabilized"] = result.certificate.is_flat
    sub, m0 = _x_subalgebra_recovery(result, seed)
    if sub is not None:
        err = _measure_distance(sub, marginal)
        cert.update({"x_subalgebra_degree": m0, "x_marginal_mismatch": err})
    measure.certificate = cert
    measure.marginal = marginal
    return measure


def _measure_distance(a, b):
    if a.n_atoms != b.n_atoms:
        return float("inf")
    if a.n_atoms == 0:
        return 0.0
    from scipy.optimize import linear_sum_assignment

    cost = np.linalg.norm(a.atoms[:, None, :] - b.atoms[None, :, :], axis=2)
    r, c = linear_sum_assignment(cost)
    return float(max(cost[r, c].max(), np.abs(a.weights[r] - b.weights[c]).max()))


# -- matrix polynomials ----------------------------------------------------

@dataclass
class MatrixPolyDecomposition:
    """Points t_i in R^d and vectors u_i in C^n reproducing L via the point-evaluation formula."""

    points: np.ndarray
    vectors: np.ndarray
    certificate: dict = field(default_factory=dict)

    def evaluate(self, p, pres):
        """sum_i sum_jk p_jk(t_i) u_ki conj(u_ji) for a normal-form matrix polynomial."""
        p = pres.normal_form(p)
        total = 0j
        for w, c in p.items():
            xs, e = w[:-1], w[-1]
            j, k = pres.split_unit(e)
            for t, u in zip(self.points, self.vectors):
                val = c
                for letter in xs:
                    val = val * t[letter]
                total += val * u[k] * np.conj(u[j])
        return complex(total)

    def to_dict(self):
        return {
            "points": self.points.tolist(),
            "vectors": [[[z.real, z.imag] for z in u] for u in self.vectors],
            "certificate": dict(self.certificate),
        }


def _fix_phase(u):
    k = int(np.argmax(np.abs(u)))
    if abs(u[k]) == 0:
        return u
    return u * (abs(u[k]) / u[k])


def solve_matrix_poly(result, seed=0, cluster_tol=CLUSTER_TOL, tol=1e-9):
    """Split B′ into joint eigenspaces of the central x-operators and read u_i off ρ(e_jk)v."""
    pres = result.pres
    if pres.kind != "matrix_poly":
        raise InputError("solve_matrix_poly needs a matrix_poly presentation")
    n, d = pres.n, pres.d
    if result.is_zero:
        return MatrixPolyDecomposition(np.zeros((0, d)), np.zeros((0, n), complex),
                                       {"reproduction_error": 0.0})
    rng = check_random_state(seed)
    R, Rinv = _orthonormal_frame(result)
    Y = [R @ X @ Rinv for X in result.ops.X]
    v = R[:, 0].copy()  # coordinates of 1 are e_1
    r = result.dim
    scale = max(1.0, max(float(np.linalg.norm(M, 2)) for M in Y))
    central = 0.0
    for i in range(d):
        for q in range(n * n):
            central = max(central, float(np.linalg.norm(Y[i] @ Y[d + q] - Y[d + q] @ Y[i], 2)))
    if central > 1e-7 * scale**2:
        raise CenterNotDiagonalizable(f"x-operators are not central (residual {central:.3e})")
    if d:
        xs = [(M + M.conj().T) / 2 for M in Y[:d]]
        try:
            clusters = joint_diagonalize(xs, rng, cluster_tol)
        except NonCommutingOps as exc:
            raise CenterNotDiagonalizable(str(exc)) from None
    else:
        clusters = [(np.zeros(0), np.eye(r, dtype=complex))]
    points, vectors = [], []
    for t, Q in clusters:
        vt = Q.conj().T @ v
        omega = np.zeros((n, n), complex)
        for j in range(n):
            for k in range(n):
                E = Q.conj().T @ Y[pres.unit_index(j, k)] @ Q
                omega[k, j] = vt.conj() @ E @ vt
        omega = (omega + omega.conj().T) / 2
        lam, U = np.linalg.eigh(omega)
        top = max(lam.max(), 0.0)
        for q in range(n):
            if lam[q] > tol * max(top, 1.0):
                points.append(t)
                vectors.append(_fix_phase(np.sqrt(lam[q]) * U[:, q]))
    dec = MatrixPolyDecomposition(np.array(points).reshape(len(points), d),
                                  np.array(vectors, dtype=complex).reshape(len(vectors), n))
    dec.certificate = {
        "central_residual": central,
        "n_terms": len(points),
        "reproduction_error": _reproduction_error(result.functional, lambda p: dec.evaluate(p, pres)),
    }
    return dec


# -- enveloping algebras ---------------------------------------------------

@dataclass
class LieRepresentationPackage:
    """Hermitian H_j = ρ(x_j) = ρ(i y_j) in an orthonormal frame, cyclic vector v and Gram form."""

    H: list
    vector: np.ndarray
    gram: np.ndarray
    certificate: dict = field(default_factory=dict)

    def evaluate(self, p):
        """<p(H) v, v>."""
        dim = len(self.vector)
        get = _word_matrices(self.H, dim)
        total = 0j
        for w, c in p.items():
            total += c * (self.vector.conj() @ get(w) @ self.vector)
        return complex(total)

    def to_dict(self):
        enc = lambda M: [[[z.real, z.imag] for z in row] for row in M]  # noqa: E731
        return {
            "H": [enc(M) for M in self.H],
            "vector": [[z.real, z.imag] for z in self.vector],
            "certificate": dict(self.certificate),
        }


def solve_enveloping(result):
    """Package ρ_L(x_j) as hermitian matrices via Cholesky of the B′ Gram matrix."""
    pres = result.pres
    if pres.kind != "lie":
        raise InputError("solve_enveloping needs a lie presentation")
    if result.is_zero:
        return LieRepresentationPackage([], np.zeros(0, complex), np.zeros((0, 0)),
                                        {"commutator_residual": 0.0, "moment_residual": 0.0})
    H, R = _hermitian_ops(result, range(pres.d))
    raw = [R @ X @ np.linalg.inv(R) for X in result.ops.X]
    herm = max(float(np.linalg.norm(Y - Y.conj().T, 2)) for Y in raw)
    v = R[:, 0].copy()
    c = pres.structure_constants
    comm = 0.0
    for j in range(pres.d):
        for k in range(pres.d):
            target = 1j * sum(c[j, k, l] * H[l] for l in range(pres.d))
            comm = max(comm, float(np.linalg.norm(H[j] @ H[k] - H[k] @ H[j] - target, 2)))
    pkg = LieRepresentationPackage(H, v, result.prime.gram)
    moment = _reproduction_error(result.functional, pkg.evaluate)
    pkg.certificate = {
        "dim": result.dim,
        "hermiticity_residual": herm,
        "commutator_residual": comm,
        "moment_residual": moment,
    }
    return pkg


def generic_representation(result):
    """ρ_L of each generator in an orthonormal frame (positive L) or raw B′ coordinates."""
    try:
        R, Rinv = _orthonormal_frame(result)
        mats = [R @ X @ Rinv for X in result.ops.X]
        frame = "orthonormal"
    except GramNotPD:
        mats = list(result.ops.X)
        frame = "bprime"
    return mats, frame


# -- estimator -------------------------------------------------------------

def _solve(result, seed):
    pres = result.pres
    if getattr(pres, "cylinder", False):
        return "cylinder", solve_cylinder(result, seed)
    if pres.kind == "commutative":
        return "atoms", extract_atoms_commutative(result, seed)
    if pres.kind == "matrix_poly":
        return "matrix_poly", solve_matrix_poly(result, seed)
    if pres.kind == "lie":
        return "enveloping", solve_enveloping(result)
    mats, frame = generic_representation(result)
    return "representation", {"matrices": mats, "frame": frame}


class FlatMomentSolver(BaseEstimator):
    """Fit the flat extension and the representing object for the algebra family.

    ``solution_`` is an AtomicMeasure (commutative / cylinder), a
    MatrixPolyDecomposition or a LieRepresentationPackage.  ``predict``
    evaluates that representing object, so it reproduces L on C².
    """

    def __init__(self, tol_rank=None, tol_psd=PSD_TOL, seed=0, pivot_order=None):
        self.tol_rank = tol_rank
        self.tol_psd = tol_psd
        self.seed = seed
        self.pivot_order = pivot_order

    def fit(self, L, y=None):
        L = check_functional(L)
        self.extension_ = FlatExtension(self.tol_rank, self.tol_psd, self.pivot_order).fit(L)
        if not self.extension_.certificate_.is_positive:
            raise GramNotPD("moment matrix is not positive semidefinite")
        self.kind_, self.solution_ = _solve(self.extension_.result_, self.seed)
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        pres = self.extension_.result_.pres
        polys = [pres.normal_form(p) for p in check_polys(X, pres)]
        sol = self.solution_
        if self.kind_ in ("atoms", "cylinder"):
            return np.array([sol.integrate(p) for p in polys])
        if self.kind_ == "matrix_poly":
            return np.array([sol.evaluate(p, pres) for p in polys])
        if self.kind_ == "enveloping":
            return np.array([sol.evaluate(p) for p in polys])
        return self.extension_.predict(polys)


def binomial_bound(d, m):
    return comb(d + 1 + m, m)


__all__ = [
    "AtomicMeasure",
    "FlatMomentSolver",
    "LieRepresentationPackage",
    "MatrixPolyDecomposition",
    "extract_atoms_commutative",
    "joint_diagonalize",
    "solve_cylinder",
    "solve_enveloping",
    "solve_matrix_poly",
    "vector_functional",
    "x_marginal",
]

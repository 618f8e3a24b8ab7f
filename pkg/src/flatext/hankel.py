"""Truncated hermitian functionals, their Hankel (Gram) matrices and the flatness test."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .algebra import NCPolynomial, word_involution
from .exceptions import HypothesisError, MissingMoment, NonHermitianMoments, NotFlat

EPS = np.finfo(float).eps
HERMITIAN_TOL = 1e-8
PSD_TOL = 1e-9
AMBIGUITY_BAND = 10.0


class RankDecisionWarning(UserWarning):
    """A singular value sits close to the rank threshold."""


@dataclass(eq=False)
class TruncatedFunctional:
    """Hermitian linear functional on C², given on normal-form words."""

    values: dict
    chain: object

    def __post_init__(self):
        self.values = {tuple(w): complex(v) for w, v in dict(self.values).items()}

    @property
    def pres(self):
        return self.chain.pres

    def value(self, w):
        w = tuple(w)
        try:
            return self.values[w]
        except KeyError:
            raise MissingMoment(w, self.pres.format_word(w)) from None

    def __call__(self, p):
        """Evaluate on a polynomial (reduced to normal form first)."""
        if isinstance(p, dict):
            items = p.items()
        else:
            items = self.pres.normal_form(p).items()
        return sum((c * self.value(w) for w, c in items), 0j)

    def hermitian_defect(self):
        """max |L(w*) - conj(L(w))| over stored words whose adjoint is fully stored."""
        worst = 0.0
        for w, v in self.values.items():
            img = self.pres.reduce_word(word_involution(w, self.pres.gens))
            if all(u in self.values for u in img):
                lw = sum(c * self.values[u] for u, c in img.items())
                worst = max(worst, abs(lw - np.conj(v)))
        return worst

    @property
    def scale(self):
        return max((abs(v) for v in self.values.values()), default=0.0)


@dataclass(eq=False)
class HankelMatrix:
    """``G[b, a] = L(b* a)`` over the C-basis; leading ``b_size`` block is the Gram matrix on B."""

    G: np.ndarray
    b_size: int
    unit: np.ndarray | None = None
    labels: list | None = None
    hermitian_deviation: float = 0.0

    @classmethod
    def from_matrix(cls, X, b_size):
        """Wrap a raw hermitian block matrix; the first coordinate plays the unit."""
        X = np.asarray(X, dtype=complex)
        unit = np.zeros(X.shape[0], complex)
        if X.shape[0]:
            unit[0] = 1
        return cls(X, b_size, unit)

    @property
    def dim(self):
        return self.G.shape[0]

    @property
    def norm(self):
        return float(np.linalg.norm(self.G, 2)) if self.dim else 0.0

    @property
    def blocks(self):
        n = self.b_size
        return self.G[:n, :n], self.G[:n, n:], self.G[n:, n:]


def build_hankel(L, symmetrize=True):
    """Gram matrix ``G[r, c] = L(w_r* w_c)`` of ``L`` over the chain's C-basis."""
    chain = L.chain
    n = chain.dim
    G = np.zeros((n, n), complex)
    for r in range(n):
        for c in range(n):
            G[r, c] = sum((coef * L.value(w) for w, coef in chain.product(r, c).items()), 0j)
    dev = 0.0
    if symmetrize and n:
        norm = np.linalg.norm(G)
        dev = float(np.linalg.norm(G - G.conj().T) / norm) if norm > 0 else 0.0
        if dev > HERMITIAN_TOL:
            raise NonHermitianMoments(
                f"moment data is not hermitian: relative deviation {dev:.3e} > {HERMITIAN_TOL:g}"
            )
        G = (G + G.conj().T) / 2
    labels = [chain.label(i) for i in range(n)]
    return HankelMatrix(G, chain.b_size, chain.unit, labels, dev)


def rank_threshold(singular_values, dim, tol=None):
    """Absolute threshold: ``tol`` (default ``dim * eps``) times the largest singular value."""
    rel = dim * EPS if tol is None else tol
    smax = singular_values[0] if len(singular_values) else 0.0
    return rel * smax, rel


def _svd(G):
    if G.shape[0] == 0:
        return np.zeros((0, 0), complex), np.zeros(0), np.zeros((0, 0), complex)
    return np.linalg.svd(G)


def _numerical_rank(s, atol):
    return int(np.sum(s > atol))


def kernel(H, tol=None):
    """Orthonormal basis (columns) of the numerical null space of G."""
    _, s, vh = _svd(H.G)
    atol, _ = rank_threshold(s, H.dim, tol)
    r = _numerical_rank(s, atol)
    return vh[r:].conj().T.copy()


def is_positive(H, tol=PSD_TOL):
    if H.dim == 0:
        return True
    lmin = float(np.linalg.eigvalsh(H.G).min())
    return lmin >= -tol * max(1.0, H.norm)


@dataclass
class FlatnessCertificate:
    """Outcome of the rank test, with the data needed to audit it."""

    rank_C: int
    rank_B: int
    kernel_basis: np.ndarray
    is_flat: bool
    is_positive: bool
    tol: float
    atol: float
    singular_values: np.ndarray
    sv_gap: float
    decomposition_ok: bool
    bprime_columns: list = field(default_factory=list)
    unit_in_kernel: bool = False
    min_eigenvalue: float = 0.0

    @property
    def rank_gap(self):
        return self.rank_C - self.rank_B

    def to_dict(self):
        return {
            "is_flat": self.is_flat,
            "is_positive": self.is_positive,
            "rank_C": self.rank_C,
            "rank_B": self.rank_B,
            "rank_gap": self.rank_gap,
            "kernel_dim": int(self.kernel_basis.shape[1]),
            "tol": self.tol,
            "atol": self.atol,
            "sv_gap": self.sv_gap,
            "decomposition_ok": self.decomposition_ok,
            "bprime_columns": list(self.bprime_columns),
            "unit_in_kernel": self.unit_in_kernel,
            "min_eigenvalue": self.min_eigenvalue,
            "singular_values": [float(x) for x in self.singular_values],
        }


def _sv_gap(s, r):
    if r == 0 or r >= len(s):
        return float("inf")
    return float(s[r - 1] / s[r]) if s[r] > 0 else float("inf")


def _warn_if_ambiguous(s, atol):
    if atol <= 0:
        return
    near = s[(s > atol / AMBIGUITY_BAND) & (s < atol * AMBIGUITY_BAND)]
    if near.size:
        r = _numerical_rank(s, atol)
        warnings.warn(
            f"rank decision is close to the threshold {atol:.3e}: singular values {near}, "
            f"gap s[r-1]/s[r] = {_sv_gap(s, r):.3e}; consider setting tol_rank explicitly",
            RankDecisionWarning,
            stacklevel=3,
        )


def is_flat(H, tol=None, psd_tol=PSD_TOL):
    """Rank test ``rank G == rank G_BB`` plus the decomposition cross-check C = B + ker G."""
    n, b = H.dim, H.b_size
    u, s, vh = _svd(H.G)
    atol, rel = rank_threshold(s, n, tol)
    _warn_if_ambiguous(s, atol)
    rank_c = _numerical_rank(s, atol)
    sb = np.linalg.svd(H.G[:b, :b], compute_uv=False) if b else np.zeros(0)
    rank_b = _numerical_rank(sb, atol)
    kern = vh[rank_c:].conj().T.copy()
    # C = B + K  <=>  [E_B | K] has full row rank
    if n:
        stacked = np.hstack([np.eye(n)[:, :b], kern])
        ss = np.linalg.svd(stacked, compute_uv=False)
        decomposition_ok = bool(len(ss) >= n and ss[n - 1] > 1e-8)
    else:
        decomposition_ok = True
    lmin = float(np.linalg.eigvalsh(H.G).min()) if n else 0.0
    cert = FlatnessCertificate(
        rank_C=rank_c,
        rank_B=rank_b,
        kernel_basis=kern,
        is_flat=rank_c == rank_b,
        is_positive=lmin >= -psd_tol * max(1.0, s[0] if n else 0.0),
        tol=rel,
        atol=atol,
        singular_values=s,
        sv_gap=_sv_gap(s, rank_c),
        decomposition_ok=decomposition_ok,
        min_eigenvalue=lmin,
    )
    if H.unit is not None and n:
        cert.unit_in_kernel = bool(np.linalg.norm(H.G @ H.unit) <= max(atol, 0.0) * np.linalg.norm(H.unit))
    if cert.is_flat and not cert.unit_in_kernel and H.unit is not None:
        cert.bprime_columns = pivot_columns(H, rank_c, atol)
    return cert


def pivot_columns(H, rank, atol, order=None):
    """Choose B-basis columns completing the unit to a basis of B′.

    The unit is forced first.  With ``order=None`` the remaining columns are
    picked by largest residual (column-pivoted Gram-Schmidt on the images
    ``G_BB e_j``, ties to the lowest index); otherwise the first column in
    ``order`` whose residual is within 1e-3 of the best remaining one is taken.
    """
    b = H.b_size
    M = H.G[:b, :b]
    unit = H.unit[:b]
    if np.any(H.unit[b:]):
        raise HypothesisError("1 is not in span(B)")
    q = M @ unit
    nq = np.linalg.norm(q)
    if nq <= atol * max(1.0, np.linalg.norm(unit)):
        raise HypothesisError("the unit lies in the kernel of the Hankel form")
    basis = [q / nq]
    unit_col = [j for j in range(b) if unit[j] != 0]
    chosen = [unit_col[0] if len(unit_col) == 1 and unit[unit_col[0]] == 1 else -1]
    candidates = [j for j in (range(b) if order is None else order) if j not in chosen]
    resid = {j: M[:, j].copy() for j in candidates}
    for j in candidates:
        resid[j] = resid[j] - basis[0] * (basis[0].conj() @ resid[j])
    while len(chosen) < rank and candidates:
        norms = {j: np.linalg.norm(resid[j]) for j in candidates}
        best = max(norms.values())
        if best <= atol:
            break
        if order is None:
            pick = max(candidates, key=lambda j: (norms[j], -j))
        else:
            pick = next(j for j in candidates if norms[j] >= 1e-3 * best)
        v = resid[pick] / norms[pick]
        basis.append(v)
        chosen.append(pick)
        candidates.remove(pick)
        for j in candidates:
            resid[j] = resid[j] - v * (v.conj() @ resid[j])
    return chosen


@dataclass
class ShmuljanFactor:
    W: np.ndarray
    residual_B: float
    residual_C: float


def shmuljan_factor(H, tol=None):
    """Least-squares ``W`` with ``B = A W`` and ``C = W* A W`` for a flat block matrix."""
    cert = is_flat(H, tol)
    if not cert.is_flat:
        raise NotFlat(cert)
    A, B, C = H.blocks
    lam, U = np.linalg.eigh(A) if A.size else (np.zeros(0), np.zeros((0, 0)))
    keep = np.abs(lam) > cert.atol
    Ainv = (U[:, keep] / lam[keep]) @ U[:, keep].conj().T
    W = Ainv @ B
    res_b = float(np.linalg.norm(B - A @ W, 2)) if B.size else 0.0
    res_c = float(np.linalg.norm(C - W.conj().T @ A @ W, 2)) if C.size else 0.0
    return ShmuljanFactor(W, res_b, res_c)

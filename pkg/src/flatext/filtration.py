"""Connected-to-1 filtered bases of the truncations B ⊆ C and their prolongations."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import NCPolynomial, word_involution
from .exceptions import DimensionOverflow, EscapesC, InputError

DEFAULT_MAX_SIZE = 20000
DEDUP_TOL = 1e-12


def _word_key(w):
    return (len(w), w)


@dataclass(frozen=True, eq=False)
class BasisChain:
    """Monomial basis of C whose first ``b_size`` words span B.

    ``levels[i]`` is the filtration level of ``words[i]`` (its word length).
    ``unit`` holds the C-coordinates of 1, or ``None`` if 1 is not in span(C).
    ``star`` is the matrix of the anti-linear involution in these coordinates:
    ``coords(p*) = star @ conj(coords(p))``.  ``star_ok`` is False when some
    ``w*`` leaves span(C); the offending terms are then missing from ``star``.
    """

    pres: object
    words: tuple
    b_size: int
    m: int | None = None
    y_cap: int | None = None
    levels: tuple = field(init=False)
    index: dict = field(init=False, repr=False)
    unit: np.ndarray | None = field(init=False, repr=False)
    star: np.ndarray = field(init=False, repr=False)
    star_ok: bool = field(init=False)
    _products: dict = field(init=False, repr=False)

    def __post_init__(self):
        words = tuple(tuple(w) for w in self.words)
        object.__setattr__(self, "words", words)
        if len(set(words)) != len(words):
            raise InputError("basis words must be distinct")
        if not 0 <= self.b_size <= len(words):
            raise InputError("b_size out of range")
        index = {w: i for i, w in enumerate(words)}
        object.__setattr__(self, "levels", tuple(len(w) for w in words))
        object.__setattr__(self, "index", index)
        try:
            unit = self.coords(self.pres.normal_form(NCPolynomial.one()))
        except EscapesC:
            unit = None
        object.__setattr__(self, "unit", unit)
        n = len(words)
        star = np.zeros((n, n), complex)
        ok = True
        for j, w in enumerate(words):
            img = self.pres.reduce_word(word_involution(w, self.pres.gens))
            for v, c in img.items():
                i = index.get(v)
                if i is None:
                    ok = False
                    continue
                star[i, j] = c
        object.__setattr__(self, "star", star)
        object.__setattr__(self, "star_ok", ok)
        object.__setattr__(self, "_products", {})

    @property
    def dim(self):
        return len(self.words)

    @property
    def b_words(self):
        return self.words[: self.b_size]

    @property
    def elements(self):
        return [NCPolynomial.word(w) for w in self.words]

    @property
    def level_of(self):
        return dict(zip(self.words, self.levels))

    def label(self, i):
        return self.pres.format_word(self.words[i])

    def coords(self, p):
        """C-coordinates of a normal-form polynomial; raises EscapesC outside span(C)."""
        out = np.zeros(len(self.words), complex)
        for w, c in p.items():
            i = self.index.get(w)
            if i is None:
                raise EscapesC(w, self.pres.format_word(w))
            out[i] += c
        return out

    def poly(self, coords, atol=0.0):
        return NCPolynomial({w: c for w, c in zip(self.words, coords) if abs(c) > atol})

    def product(self, r, c):
        """Normal form of ``words[r]* · words[c]`` as ``{word: coef}`` (memoized)."""
        key = (r, c)
        hit = self._products.get(key)
        if hit is None:
            gens = self.pres.gens
            hit = self.pres.reduce_word(word_involution(self.words[r], gens) + self.words[c])
            self._products[key] = hit
        return hit

    def square_words(self):
        """All normal-form words occurring in products b*·a with a, b in C (a basis of C²)."""
        seen = set()
        n = self.dim
        for r in range(n):
            for c in range(n):
                seen.update(self.product(r, c))
        return sorted(seen, key=_word_key)


def build_truncated_basis(pres, m, y_cap=None, max_size=DEFAULT_MAX_SIZE):
    """Chain with B = A_m and C = A_{m+1} for a built-in algebra family.

    For the cylinder algebra ``y_cap`` bounds the y-degree of B; C allows
    y-degree ``y_cap + 1`` so that B⁺ ⊆ C.
    """
    if m < 0:
        raise InputError("truncation degree m must be >= 0")
    if getattr(pres, "cylinder", False):
        if y_cap is None or y_cap < 1:
            raise InputError("cylinder truncations need a y-degree cap y_cap >= 1")
        b = pres.truncation_words(m, y_cap)
        c = pres.truncation_words(m + 1, y_cap + 1)
    else:
        b = pres.truncation_words(m)
        c = pres.truncation_words(m + 1)
    if len(c) > max_size:
        raise DimensionOverflow(f"basis of C has {len(c)} elements (cap {max_size})")
    return chain_from_words(pres, b, c, m=m, y_cap=y_cap)


def chain_from_words(pres, b_words, c_words, m=None, y_cap=None):
    """Chain from explicit monomial word lists; C-words not in B follow B in graded order."""
    b_words = sorted({tuple(w) for w in b_words}, key=_word_key)
    bset = set(b_words)
    rest = sorted({tuple(w) for w in c_words} - bset, key=_word_key)
    for w in b_words + rest:
        nf = pres.reduce_word(w)
        if nf != {w: 1.0}:
            raise InputError(f"basis word {pres.format_word(w)} is not in normal form")
    return BasisChain(pres, tuple(b_words + rest), len(b_words), m=m, y_cap=y_cap)


def _coefficient_matrix(polys):
    words = sorted({w for p in polys for w in p.words()}, key=_word_key)
    pos = {w: i for i, w in enumerate(words)}
    mat = np.zeros((len(polys), len(words)), complex)
    for r, p in enumerate(polys):
        for w, c in p.items():
            mat[r, pos[w]] = c
    return mat, words


def _row_echelon(mat, tol=DEDUP_TOL):
    """Reduced row echelon form with partial pivoting; returns the nonzero rows."""
    a = np.array(mat, dtype=complex)
    rows, cols = a.shape
    if rows == 0:
        return a
    scale = max(np.abs(a).max(), 1.0)
    r = 0
    for c in range(cols):
        if r == rows:
            break
        p = r + int(np.argmax(np.abs(a[r:, c])))
        if abs(a[p, c]) <= tol * scale:
            continue
        a[[r, p]] = a[[p, r]]
        a[r] /= a[r, c]
        for q in range(rows):
            if q != r and a[q, c] != 0:
                a[q] -= a[q, c] * a[r]
        r += 1
    out = a[:r]
    out[np.abs(out) <= tol * scale] = 0
    return out


def span_basis(polys, tol=DEDUP_TOL):
    """Echelon basis of span(polys) as polynomials."""
    polys = [p for p in polys if not p.is_zero()]
    if not polys:
        return []
    mat, words = _coefficient_matrix(polys)
    ech = _row_echelon(mat, tol)
    return [NCPolynomial({w: c for w, c in zip(words, row) if c != 0}) for row in ech]


def in_span(p, basis, tol=1e-10):
    """True if polynomial ``p`` lies in span(basis) (rank test)."""
    if p.is_zero():
        return True
    if not basis:
        return False
    mat, words = _coefficient_matrix(list(basis) + [p])
    r0 = np.linalg.matrix_rank(mat[:-1], tol=tol * max(1.0, np.abs(mat).max()))
    r1 = np.linalg.matrix_rank(mat, tol=tol * max(1.0, np.abs(mat).max()))
    return r1 == r0


def _all_in_span(polys, basis, tol=1e-10):
    if not basis:
        return all(p.is_zero() for p in polys)
    mat, _ = _coefficient_matrix(list(basis) + list(polys))
    atol = tol * max(1.0, np.abs(mat).max())
    nb = len(basis)
    return np.linalg.matrix_rank(mat, tol=atol) == np.linalg.matrix_rank(mat[:nb], tol=atol)


def prolongation(V, pres, tol=DEDUP_TOL):
    """Basis of V⁺ = span{a_i v : i, v in V} after normal form."""
    prods = [
        pres.normal_form(pres.generator(i) * v) for v in V for i in range(len(pres.gens))
    ]
    return span_basis(prods, tol)


def iterated_prolongation(V, pres, times):
    """V^[l]: ``times``-fold prolongation."""
    out = list(V)
    for _ in range(times):
        out = prolongation(out, pres)
    return out


@dataclass
class HypothesisReport:
    """Pass/fail outcome of each extension hypothesis on a chain."""

    checks: dict
    details: dict
    m_used: int
    delta: int

    @property
    def passed(self):
        return all(self.checks.values())

    def failures(self):
        return [k for k, v in self.checks.items() if not v]

    def to_dict(self):
        return {
            "passed": self.passed,
            "checks": dict(self.checks),
            "details": dict(self.details),
            "m": self.m_used,
            "delta": self.delta,
        }


def _connected_to_one(chain, upto, pres):
    """Every level-(l+1) word is a combination of a_i·(level ≤ l elements)."""
    if chain.unit is None:
        return False, "1 is not in the span of the basis"
    words = chain.words[:upto]
    levels = chain.levels[:upto]
    if not words:
        return False, "empty basis"
    max_level = max(levels)
    lower = [NCPolynomial.one()]
    for level in range(1, max_level + 1):
        new = [NCPolynomial.word(w) for w, l in zip(words, levels) if l == level]
        if not new:
            continue
        prol = prolongation(lower, pres)
        if not _all_in_span(new, prol):
            for p in new:
                if not in_span(p, prol):
                    (w,) = p.words()
                    return False, f"{pres.format_word(w)} is not in the prolongation of lower levels"
        lower = lower + [NCPolynomial.word(w) for w, l in zip(words, levels) if l == level]
        lower = span_basis(lower)
    return True, ""


def _star_invariant(chain, upto):
    pres = chain.pres
    allowed = set(chain.words[:upto])
    for w in chain.words[:upto]:
        for v in pres.reduce_word(word_involution(w, pres.gens)):
            if v not in allowed:
                return False, f"({pres.format_word(w)})* leaves the subspace"
    return True, ""


def check_hypotheses(chain, pres=None):
    """Verify connectedness, *-invariance and B^[m] ⊆ C for the smallest m ≥ 1 with 2m ≥ δ."""
    pres = pres or chain.pres
    delta = pres.delta
    m = max(1, -(-delta // 2))
    checks, details = {}, {}
    for name, upto in (("B", chain.b_size), ("C", chain.dim)):
        ok, why = _connected_to_one(chain, upto, pres)
        checks[f"{name}_connected_to_1"] = ok
        if why:
            details[f"{name}_connected_to_1"] = why
        ok, why = _star_invariant(chain, upto)
        checks[f"{name}_star_invariant"] = ok
        if why:
            details[f"{name}_star_invariant"] = why
    checks["unit_in_B"] = chain.unit is not None and not np.any(chain.unit[chain.b_size:])
    if not checks["unit_in_B"]:
        details["unit_in_B"] = "1 is not in span(B)"
    # B^[m] ⊆ C
    cset = set(chain.words)
    frontier = [NCPolynomial.word(w) for w in chain.b_words]
    ok, why = True, ""
    for _ in range(m):
        frontier = prolongation(frontier, pres)
        for p in frontier:
            bad = [w for w in p.words() if w not in cset]
            if bad:
                ok, why = False, f"{pres.format_word(bad[0])} in B^[{m}] is outside C"
                break
        if not ok:
            break
    checks[f"B^[{m}]_subset_C"] = ok
    if why:
        details[f"B^[{m}]_subset_C"] = why
    return HypothesisReport(checks, details, m, delta)

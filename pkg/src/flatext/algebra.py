"""Words, noncommutative polynomials and normal forms modulo a defining ideal.

A word is a plain tuple of generator indices; the empty tuple is the unit.
Polynomials are finite maps word -> complex coefficient.  Each supported
algebra family provides a confluent rewriting to a unique normal form:

* ``commutative`` (and the cylinder variant with an extra variable ``y``):
  letters are sorted.
* ``matrix_poly``: n x n matrices over C[x_1..x_d]; the x-letters are
  sorted and the matrix units fused, ``e_ij e_kl = delta_jk e_il``.
* ``lie``: universal enveloping algebra.  Generators are the hermitian
  elements ``x_j = i y_j``; out-of-order pairs are straightened with
  ``x_j x_k -> x_k x_j + i sum_l c_jkl x_l`` (j > k), giving PBW words.
* ``free_with_relations``: user supplied rewrite rules.
"""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfluenceError, InputError, NonTerminatingRewrite, ZeroElement

DEFAULT_STEP_BUDGET = 10**6


def word_involution(w, gens):
    """Return ``w*``: the reversed word with the generator involution applied letterwise."""
    inv = gens.inv
    return tuple(inv[i] for i in reversed(w))


class NCPolynomial:
    """Element of the free unital algebra, stored as ``{word: coefficient}``.

    Instances are treated as immutable.  Exact zero coefficients are never
    stored.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms=None):
        out = {}
        if terms:
            for w, c in dict(terms).items():
                c = complex(c)
                if c != 0:
                    out[tuple(w)] = c
        self._terms = out

    @classmethod
    def _raw(cls, terms):
        p = cls.__new__(cls)
        p._terms = terms
        return p

    @classmethod
    def word(cls, w, coef=1.0):
        return cls({tuple(w): coef})

    @classmethod
    def one(cls):
        return cls({(): 1.0})

    @classmethod
    def zero(cls):
        return cls()

    @property
    def terms(self):
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def words(self):
        return list(self._terms)

    def coefficient(self, w):
        return self._terms.get(tuple(w), 0j)

    def is_zero(self):
        return not self._terms

    def degree(self):
        if not self._terms:
            raise ZeroElement("degree of the zero polynomial")
        return max(len(w) for w in self._terms)

    def __len__(self):
        return len(self._terms)

    def __bool__(self):
        return bool(self._terms)

    def __add__(self, other):
        if not isinstance(other, NCPolynomial):
            other = NCPolynomial.one() * other
        out = dict(self._terms)
        for w, c in other._terms.items():
            s = out.get(w, 0) + c
            if s == 0:
                out.pop(w, None)
            else:
                out[w] = s
        return NCPolynomial._raw(out)

    __radd__ = __add__

    def __neg__(self):
        return NCPolynomial._raw({w: -c for w, c in self._terms.items()})

    def __sub__(self, other):
        if not isinstance(other, NCPolynomial):
            other = NCPolynomial.one() * other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, NCPolynomial):
            out = {}
            for w1, c1 in self._terms.items():
                for w2, c2 in other._terms.items():
                    w = w1 + w2
                    out[w] = out.get(w, 0) + c1 * c2
            return NCPolynomial(out)
        c = complex(other)
        if c == 0:
            return NCPolynomial()
        return NCPolynomial._raw({w: c * v for w, v in self._terms.items()})

    def __rmul__(self, other):
        # scalar * poly; poly * poly is handled by __mul__
        return self * other

    def __eq__(self, other):
        if isinstance(other, NCPolynomial):
            return self._terms == other._terms
        return NotImplemented

    __hash__ = None

    def allclose(self, other, atol=1e-12):
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coefficient(k) - other.coefficient(k)) <= atol for k in keys)

    def star(self, gens):
        """Anti-linear involution: conjugate coefficients and reverse words."""
        return NCPolynomial._raw(
            {word_involution(w, gens): c.conjugate() for w, c in self._terms.items()}
        )

    def __repr__(self):
        if not self._terms:
            return "NCPolynomial(0)"
        parts = ", ".join(f"{w}: {c:.6g}" for w, c in sorted(self._terms.items()))
        return f"NCPolynomial({{{parts}}})"


@dataclass(frozen=True)
class GeneratorSet:
    """Generator labels and the involution ``a_i* = a_{inv[i]}``."""

    names: tuple
    inv: tuple
    kind: str

    def __post_init__(self):
        n = len(self.names)
        if len(self.inv) != n:
            raise InputError("involution table must have one entry per generator")
        if len(set(self.names)) != n:
            raise InputError("generator names must be distinct")
        for i, j in enumerate(self.inv):
            if not 0 <= j < n or self.inv[j] != i:
                raise InputError(f"generator involution is not an involution at {self.names[i]}")

    def __len__(self):
        return len(self.names)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise InputError(f"unknown generator {name!r}") from None


class Presentation:
    """A finitely presented unital *-algebra together with its normal-form rewriter.

    Subclasses implement ``_reduce_word`` (word -> {normal word: coef}) and
    ``truncation_words``.  Word reductions are memoized; the cache only ever
    receives identical values for a key, so concurrent use is safe.
    """

    kind = "abstract"

    def __init__(self, gens, relations, step_budget=DEFAULT_STEP_BUDGET):
        self.gens = gens
        self.relations = tuple(relations)
        self.step_budget = step_budget
        self._cache = {}
        self._lock = threading.Lock()

    # -- normal forms --------------------------------------------------
    def reduce_word(self, w):
        w = tuple(w)
        hit = self._cache.get(w)
        if hit is None:
            hit = self._reduce_word(w)
            with self._lock:
                self._cache[w] = hit
        return hit

    def _reduce_word(self, w):
        raise NotImplementedError

    def normal_form(self, p):
        """Unique normal-form representative of ``p`` in the quotient algebra."""
        if not isinstance(p, NCPolynomial):
            p = NCPolynomial.one() * p
        out = {}
        for w, c in p.items():
            for v, cv in self.reduce_word(w).items():
                out[v] = out.get(v, 0) + c * cv
        if not out:
            return NCPolynomial()
        # drop cancellation debris so it cannot leak words outside a truncation
        floor = 1e-14 * max(abs(c) for c in out.values())
        return NCPolynomial({v: c for v, c in out.items() if abs(c) > floor})

    def multiply(self, p, q):
        return self.normal_form(p * q)

    def star(self, p):
        return self.normal_form(p.star(self.gens))

    def generator(self, i):
        return NCPolynomial.word((i,))

    @property
    def delta(self):
        return delta_of(self)

    @property
    def is_commutative(self):
        return False

    def truncation_words(self, k, y_cap=None):
        """Normal-form words spanning the truncation ``A_k``."""
        raise NotImplementedError

    def index_of(self, p):
        nf = self.normal_form(p)
        if nf.is_zero():
            raise ZeroElement("the index of 0 is undefined")
        return max(len(w) for w in nf.words())

    def format_word(self, w):
        return format_word(w, self.gens.names)

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(self.gens.names)})"


def delta_of(pres):
    """Maximal word index appearing in the relation set (0 for a free algebra)."""
    lengths = [len(w) for r in pres.relations for w in r.words()]
    return max(lengths, default=0)


def index_of(p, pres):
    return pres.index_of(p)


def normal_form(p, pres):
    return pres.normal_form(p)


def poly_involution(p, gens):
    return p.star(gens)


def poly_add(p, q):
    return p + q


def poly_mul(p, q):
    return p * q


def format_word(w, names):
    """``(0, 0, 1)`` -> ``"x1^2*x2"``; the empty word is ``"1"``."""
    if not w:
        return "1"
    parts = []
    for letter, run in itertools.groupby(w):
        n = len(list(run))
        parts.append(names[letter] if n == 1 else f"{names[letter]}^{n}")
    return "*".join(parts)


def _commutator_relations(idx_pairs):
    rels = []
    for i, j in idx_pairs:
        rels.append(NCPolynomial({(i, j): 1, (j, i): -1}))
    return rels


class CommutativeAlgebra(Presentation):
    """Polynomial *-algebra C[x_1..x_d] (plus ``y`` for the cylinder case) in hermitian variables."""

    kind = "commutative"

    def __init__(self, d, cylinder=False, step_budget=DEFAULT_STEP_BUDGET):
        if d < 0 or (d == 0 and not cylinder):
            raise InputError("commutative algebra needs at least one variable")
        names = tuple(f"x{i + 1}" for i in range(d)) + (("y",) if cylinder else ())
        n = len(names)
        gens = GeneratorSet(names, tuple(range(n)), "commutative")
        rels = _commutator_relations(itertools.combinations(range(n), 2))
        super().__init__(gens, rels, step_budget)
        self.d = d
        self.cylinder = cylinder

    @property
    def is_commutative(self):
        return True

    @property
    def x_indices(self):
        return list(range(self.d))

    @property
    def y_index(self):
        return self.d if self.cylinder else None

    def _reduce_word(self, w):
        return {tuple(sorted(w)): 1.0}

    def truncation_words(self, k, y_cap=None):
        if self.cylinder and y_cap is not None:
            out = []
            for deg in range(k + 1):
                for xs in itertools.combinations_with_replacement(range(self.d), deg):
                    for j in range(y_cap + 1):
                        out.append(xs + (self.d,) * j)
            return sorted(out, key=lambda w: (len(w), w))
        n = len(self.gens)
        return [
            w for deg in range(k + 1) for w in itertools.combinations_with_replacement(range(n), deg)
        ]


class MatrixPolyAlgebra(Presentation):
    """n x n matrices over C[x_1..x_d], generated by hermitian x_l and matrix units e_jk.

    Normal words are ``x^alpha e_jk``: sorted x-letters followed by exactly one
    matrix unit.  The unit ``1`` reduces to ``sum_i e_ii``.
    """

    kind = "matrix_poly"

    def __init__(self, n, d, step_budget=DEFAULT_STEP_BUDGET):
        if n < 1 or d < 0:
            raise InputError("matrix_poly needs n >= 1 and d >= 0")
        self.n, self.d = n, d
        sep = "" if n < 10 else "_"
        names = [f"x{i + 1}" for i in range(d)]
        inv = list(range(d))
        for j in range(n):
            for k in range(n):
                names.append(f"e{j + 1}{sep}{k + 1}")
                inv.append(d + k * n + j)
        gens = GeneratorSet(tuple(names), tuple(inv), "matrix_poly")
        rels = _commutator_relations(itertools.combinations(range(d), 2))
        rels += _commutator_relations((i, d + q) for i in range(d) for q in range(n * n))
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    for e in range(n):
                        r = {(self.unit_index(a, b), self.unit_index(c, e)): 1}
                        if b == c:
                            r[(self.unit_index(a, e),)] = -1
                        rels.append(NCPolynomial(r))
        rels.append(NCPolynomial({(self.unit_index(i, i),): 1 for i in range(n)}) - 1)
        super().__init__(gens, rels, step_budget)

    def unit_index(self, j, k):
        """Generator index of the matrix unit e_{j+1,k+1} (0-based j, k)."""
        return self.d + j * self.n + k

    def split_unit(self, g):
        q = g - self.d
        return divmod(q, self.n)

    def _reduce_word(self, w):
        xs = sorted(g for g in w if g < self.d)
        es = [g for g in w if g >= self.d]
        xs = tuple(xs)
        if not es:
            return {xs + (self.unit_index(i, i),): 1.0 for i in range(self.n)}
        row, col = self.split_unit(es[0])
        for g in es[1:]:
            j, k = self.split_unit(g)
            if j != col:
                return {}
            col = k
        return {xs + (self.unit_index(row, col),): 1.0}

    def index_of(self, p):
        nf = self.normal_form(p)
        if nf.is_zero():
            raise ZeroElement("the index of 0 is undefined")
        blocks = {}
        for w, c in nf.items():
            blocks.setdefault(w[:-1], np.zeros((self.n, self.n), complex))[self.split_unit(w[-1])] = c
        best = 0
        for xs, mat in blocks.items():
            scalar = np.allclose(mat, mat[0, 0] * np.eye(self.n), atol=1e-14)
            best = max(best, len(xs) + (0 if scalar else 1))
        return best

    def truncation_words(self, k, y_cap=None):
        out = []
        for deg in range(k + 1):
            for xs in itertools.combinations_with_replacement(range(self.d), deg):
                for q in range(self.n * self.n):
                    out.append(xs + (self.d + q,))
        return out


class RewritingAlgebra(Presentation):
    """Quotient of a free *-algebra by terminating rewrite rules ``lhs -> rhs``."""

    kind = "free_with_relations"

    def __init__(self, gens, rules, step_budget=DEFAULT_STEP_BUDGET, check=True):
        self.rules = {tuple(lhs): NCPolynomial(rhs) if not isinstance(rhs, NCPolynomial) else rhs
                      for lhs, rhs in dict(rules).items()}
        for lhs in self.rules:
            if not lhs:
                raise InputError("a rewrite rule cannot have the unit as left-hand side")
        self._lhs_lengths = sorted({len(lhs) for lhs in self.rules})
        rels = [NCPolynomial.word(lhs) - rhs for lhs, rhs in self.rules.items()]
        super().__init__(gens, rels, step_budget)
        if check:
            self.check_confluence()
            self.check_star_invariance()

    def _rewrite_once(self, u):
        for pos in range(len(u)):
            for n in self._lhs_lengths:
                if pos + n > len(u):
                    break
                rhs = self.rules.get(u[pos:pos + n])
                if rhs is not None:
                    head, tail = u[:pos], u[pos + n:]
                    return [(head + v + tail, c) for v, c in rhs.items()]
        return None

    def _reduce_word(self, w):
        out = {}
        stack = [(w, 1.0 + 0j)]
        steps = 0
        while stack:
            u, c = stack.pop()
            hit = self._cache.get(u)
            if hit is not None:
                for v, cv in hit.items():
                    out[v] = out.get(v, 0) + c * cv
                continue
            red = self._rewrite_once(u)
            if red is None:
                out[u] = out.get(u, 0) + c
                continue
            steps += 1
            if steps > self.step_budget:
                raise NonTerminatingRewrite(
                    f"rewriting {self.format_word(w)} exceeded {self.step_budget} steps"
                )
            stack.extend((v, c * cv) for v, cv in red)
        return {v: c for v, c in out.items() if c != 0}

    def is_irreducible(self, w):
        return self._rewrite_once(tuple(w)) is None

    def check_confluence(self, atol=1e-12):
        """Check that every critical pair of rule left-hand sides resolves.

        Covers proper overlaps (suffix of one lhs = prefix of another) and
        inclusions, i.e. all ambiguities of length up to ``2 * delta``.
        """
        items = list(self.rules.items())
        for l1, r1 in items:
            for l2, r2 in items:
                # proper overlaps
                for k in range(1, min(len(l1), len(l2))):
                    if l1[-k:] != l2[:k]:
                        continue
                    a = r1 * NCPolynomial.word(l2[k:])
                    b = NCPolynomial.word(l1[:-k]) * r2
                    self._compare_pair(l1 + l2[k:], a, b, atol)
                # inclusions
                if l1 != l2 and len(l2) < len(l1):
                    for pos in range(len(l1) - len(l2) + 1):
                        if l1[pos:pos + len(l2)] == l2:
                            a = r1
                            b = NCPolynomial.word(l1[:pos]) * r2 * NCPolynomial.word(l1[pos + len(l2):])
                            self._compare_pair(l1, a, b, atol)

    def _compare_pair(self, w, a, b, atol):
        na, nb = self.normal_form(a), self.normal_form(b)
        if not na.allclose(nb, atol):
            raise ConfluenceError(
                f"rewrite rules are not confluent on {self.format_word(w)}: "
                f"{self._fmt(na)} != {self._fmt(nb)}"
            )

    def check_star_invariance(self, atol=1e-12):
        for r in self.relations:
            if not self.normal_form(r.star(self.gens)).allclose(NCPolynomial(), atol):
                raise InputError(
                    f"relation set is not *-invariant: star of {self._fmt(r)} does not reduce to 0"
                )

    def _fmt(self, p):
        if p.is_zero():
            return "0"
        return " + ".join(f"({c:.6g})*{self.format_word(w)}" for w, c in sorted(p.items()))

    def truncation_words(self, k, y_cap=None):
        out = [()]
        frontier = [()]
        for _ in range(k):
            nxt = []
            for w in frontier:
                for g in range(len(self.gens)):
                    u = w + (g,)
                    if self.is_irreducible(u):
                        nxt.append(u)
            out.extend(sorted(nxt))
            frontier = nxt
        return out


class LieEnvelopingAlgebra(RewritingAlgebra):
    """Universal enveloping algebra of a real Lie algebra with structure constants ``c[j, k, l]``.

    ``[y_j, y_k] = sum_l c_jkl y_l``; the hermitian generators are ``x_j = i y_j``
    so ``x_j x_k - x_k x_j = i sum_l c_jkl x_l``.
    """

    kind = "lie"

    def __init__(self, structure_constants, step_budget=DEFAULT_STEP_BUDGET):
        c = np.asarray(structure_constants, dtype=float)
        if c.ndim != 3 or c.shape[0] != c.shape[1] or c.shape[1] != c.shape[2]:
            raise InputError("structure constants must have shape (d, d, d)")
        if not np.allclose(c, -c.transpose(1, 0, 2), atol=1e-12):
            raise InputError("structure constants must be antisymmetric in (j, k)")
        d = c.shape[0]
        self.d = d
        self.structure_constants = c
        names = tuple(f"x{i + 1}" for i in range(d))
        gens = GeneratorSet(names, tuple(range(d)), "lie")
        rules = {}
        for j in range(d):
            for k in range(j):
                rhs = {(k, j): 1.0}
                for l in range(d):
                    if c[j, k, l] != 0:
                        rhs[(l,)] = 1j * c[j, k, l]
                rules[(j, k)] = NCPolynomial(rhs)
        try:
            super().__init__(gens, rules, step_budget)
        except ConfluenceError as exc:
            raise InputError(f"structure constants violate the Jacobi identity: {exc}") from None

    @property
    def is_commutative(self):
        return not np.any(self.structure_constants)

    def commutator_relations(self):
        """Relations ``x_j x_k - x_k x_j - i sum_l c_jkl x_l`` for all j < k."""
        return [NCPolynomial.word(l) - r for l, r in self.rules.items()]

    def truncation_words(self, k, y_cap=None):
        return [
            w for deg in range(k + 1) for w in itertools.combinations_with_replacement(range(self.d), deg)
        ]


class FreeAlgebraWithRelations(RewritingAlgebra):
    pass


# -- factories ----------------------------------------------------------

def commutative(d, cylinder=False):
    return CommutativeAlgebra(d, cylinder=cylinder)


def cylinder(d):
    return CommutativeAlgebra(d, cylinder=True)


def matrix_poly(n, d):
    return MatrixPolyAlgebra(n, d)


def lie(structure_constants):
    return LieEnvelopingAlgebra(structure_constants)


def su2():
    """su(2) with c_123 = c_231 = c_312 = 1."""
    c = np.zeros((3, 3, 3))
    for j, k, l in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        c[j, k, l] = 1.0
        c[k, j, l] = -1.0
    return LieEnvelopingAlgebra(c)


def heisenberg():
    """Heisenberg algebra: [y1, y2] = y3, y3 central."""
    c = np.zeros((3, 3, 3))
    c[0, 1, 2] = 1.0
    c[1, 0, 2] = -1.0
    return LieEnvelopingAlgebra(c)


def abelian_lie(d):
    return LieEnvelopingAlgebra(np.zeros((d, d, d)))


def free_with_relations(names, rules, involution=None, step_budget=DEFAULT_STEP_BUDGET):
    """Build a presentation from generator names and ``{lhs word: rhs polynomial}`` rules.

    ``involution`` maps a generator name to the name of its adjoint; unlisted
    generators are hermitian.
    """
    names = tuple(names)
    inv = list(range(len(names)))
    for a, b in (involution or {}).items():
        i, j = names.index(a), names.index(b)
        inv[i], inv[j] = j, i
    gens = GeneratorSet(names, tuple(inv), "free_with_relations")
    return FreeAlgebraWithRelations(gens, rules, step_budget)

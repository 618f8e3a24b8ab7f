"""Input validation helpers shared by the estimators."""
from __future__ import annotations

import numbers

import numpy as np

from .algebra import NCPolynomial
from .exceptions import InputError


def check_functional(L):
    from .hankel import TruncatedFunctional

    if not isinstance(L, TruncatedFunctional):
        raise InputError(f"expected a TruncatedFunctional, got {type(L).__name__}")
    if L.chain.dim == 0:
        raise InputError("the truncation basis is empty")
    return L


def as_poly(a, pres):
    """Coerce a polynomial, word tuple, word string or scalar to an NCPolynomial."""
    if isinstance(a, NCPolynomial):
        return a
    if isinstance(a, str):
        from .io import parse_polynomial

        return parse_polynomial(a, pres)
    if isinstance(a, tuple):
        return NCPolynomial.word(a)
    if isinstance(a, numbers.Number):
        return NCPolynomial.one() * a
    raise InputError(f"cannot interpret {a!r} as an algebra element")


def check_polys(X, pres):
    """Sequence of algebra elements; a single element is wrapped in a list."""
    if isinstance(X, (NCPolynomial, str, tuple)) or isinstance(X, numbers.Number):
        X = [X]
    return [as_poly(a, pres) for a in X]


def check_tolerance(tol, name, allow_none=True):
    if tol is None and allow_none:
        return None
    if not isinstance(tol, numbers.Real) or not np.isfinite(tol) or tol <= 0:
        raise InputError(f"{name} must be a positive finite number, got {tol!r}")
    return float(tol)


def check_random_state(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)

"""Finite *-representations used to generate vector-functional test data.

Every generator returns ``(pres, mats, v, m, y_cap)`` where ``m`` is the
smallest truncation degree for which the vector functional is flat.  Flatness
of a vector functional only depends on the Krylov-type spaces ``{w(M)v}``, so
it is decided on those directly.
"""
from __future__ import annotations

import numpy as np
from scipy.stats import unitary_group

from . import algebra as alg
from .exceptions import InputError
from .filtration import build_truncated_basis

SEPARATION = 0.2
MIN_WEIGHT = 0.1


def pauli_spin_half():
    sx = np.array([[0, 1], [1, 0]], complex) / 2
    sy = np.array([[0, -1j], [1j, 0]], complex) / 2
    sz = np.array([[1, 0], [0, -1]], complex) / 2
    return [sx, sy, sz]


def spin_one():
    s = 1 / np.sqrt(2)
    jx = s * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], complex)
    jy = s * np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], complex)
    jz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return [jx, jy, jz]


def _krylov_rank(pres, mats, v, words, tol=1e-9):
    cols = []
    for w in words:
        x = v.astype(complex)
        for letter in reversed(w):
            x = mats[letter] @ x
        cols.append(x)
    if not cols:
        return 0
    s = np.linalg.svd(np.array(cols).T, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def flat_degree(pres, mats, v, y_cap=None, max_m=4, tol=1e-9):
    """Smallest m ≥ 1 with rank{w(M)v : w ∈ B} = rank{w(M)v : w ∈ C}, or None."""
    for m in range(1, max_m + 1):
        chain = build_truncated_basis(pres, m, y_cap=y_cap)
        rb = _krylov_rank(pres, mats, v, chain.b_words, tol)
        rc = _krylov_rank(pres, mats, v, chain.words, tol)
        if rb == rc:
            return m, rb
    return None, None


def separated_points(rng, k, d, sep=SEPARATION, lo=-1.0, hi=1.0, tries=1000):
    """k points in [lo, hi]^d with pairwise distance >= sep (rejection sampling)."""
    for _ in range(tries):
        pts = rng.uniform(lo, hi, size=(k, d))
        if k < 2:
            return pts
        dist = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        if dist[np.triu_indices(k, 1)].min() >= sep:
            return pts
    raise InputError(f"could not place {k} points with separation {sep}")


def random_weights(rng, k, floor=MIN_WEIGHT):
    w = rng.uniform(floor, 1.0, size=k)
    return w / w.sum()


def atomic_representation(points, weights):
    """Diagonal multiplication operators and v = sqrt(weights): L = integration against the measure."""
    points = np.atleast_2d(np.asarray(points, float))
    mats = [np.diag(points[:, j]).astype(complex) for j in range(points.shape[1])]
    return mats, np.sqrt(np.asarray(weights, float)).astype(complex)


def random_commutative(rng, d=None, k=None, max_m=2, max_dim=6):
    """Random atomic measure in [-1, 1]^d whose functional is flat at some m <= max_m."""
    while True:
        dd = d or int(rng.integers(1, 4))
        kk = k or int(rng.integers(1, max_dim + 1))
        pres = alg.commutative(dd)
        pts = separated_points(rng, kk, dd)
        w = random_weights(rng, kk)
        mats, v = atomic_representation(pts, w)
        m, rank = flat_degree(pres, mats, v, max_m=max_m)
        if m is not None and rank == kk:
            return pres, mats, v, m, None, (pts, w)


def random_cylinder(rng, d=None, max_lines=3, max_y=2, max_m=2):
    """Atoms on a few lines t_j x R; returns a flat (m, y_cap) pair."""
    while True:
        dd = d or int(rng.integers(1, 3))
        lines = separated_points(rng, int(rng.integers(1, max_lines + 1)), dd)
        pts = []
        for t in lines:
            ys = separated_points(rng, int(rng.integers(1, max_y + 1)), 1)[:, 0]
            pts += [np.append(t, y) for y in ys]
        pts = np.array(pts)
        w = random_weights(rng, len(pts))
        mats, v = atomic_representation(pts, w)
        pres = alg.cylinder(dd)
        for y_cap in (1, 2, 3):
            m, rank = flat_degree(pres, mats, v, y_cap=y_cap, max_m=max_m)
            if m is not None and rank == len(pts):
                return pres, mats, v, m, y_cap, (pts, w)


def matrix_poly_representation(points, vectors, n):
    """Rep on ⊕_i C^n: x_l -> t_il·I, e_jk -> E_jk in each block; v = ⊕ u_i."""
    points = np.atleast_2d(np.asarray(points, float))
    r, d = points.shape
    mats = [np.kron(np.diag(points[:, l]), np.eye(n)).astype(complex) for l in range(d)]
    eye = np.eye(n)
    for j in range(n):
        for k in range(n):
            mats.append(np.kron(np.eye(r), np.outer(eye[j], eye[k])).astype(complex))
    return mats, np.concatenate([np.asarray(u, complex) for u in vectors])


def random_matrix_poly(rng, n=None, d=None, r=None, max_m=2, max_dim=9):
    while True:
        nn = n or int(rng.integers(1, 4))
        dd = d if d is not None else int(rng.integers(1, 3))
        rr = r or int(rng.integers(1, max(1, min(3, max_dim // nn)) + 1))
        if nn * rr > max_dim:
            continue
        pts = separated_points(rng, rr, max(dd, 1))[:, :dd] if dd else np.zeros((1, 0))
        rr = len(pts)
        us = rng.standard_normal((rr, nn)) + 1j * rng.standard_normal((rr, nn))
        us /= np.sqrt(rr * nn)
        pres = alg.matrix_poly(nn, dd)
        mats, v = matrix_poly_representation(pts, us, nn)
        m, rank = flat_degree(pres, mats, v, max_m=max_m)
        if m is not None:
            return pres, mats, v, m, None, (pts, us)


def random_su2(rng, max_dim=6, max_m=2):
    """Direct sum of spin-1/2 and spin-1 blocks, randomly rotated, with a random vector."""
    blocks = {2: pauli_spin_half(), 3: spin_one()}
    while True:
        sizes = []
        while not sizes or (sum(sizes) < max_dim and rng.random() < 0.4):
            sizes.append(int(rng.choice([2, 3])))
        if sum(sizes) > max_dim:
            continue
        dim = sum(sizes)
        mats = []
        for j in range(3):
            M = np.zeros((dim, dim), complex)
            at = 0
            for s in sizes:
                M[at:at + s, at:at + s] = blocks[s][j]
                at += s
            mats.append(M)
        U = unitary_group.rvs(dim, random_state=rng) if dim > 1 else np.eye(1)
        mats = [U @ M @ U.conj().T for M in mats]
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        pres = alg.su2()
        m, _ = flat_degree(pres, mats, v, max_m=max_m)
        if m is not None:
            return pres, mats, v, m, None, sizes


def random_heisenberg(rng, max_dim=6, max_m=2):
    """Finite-dimensional Heisenberg reps: commuting hermitian H1, H2 and H3 = 0."""
    while True:
        dim = int(rng.integers(1, max_dim + 1))
        pts = separated_points(rng, dim, 2)
        U = unitary_group.rvs(dim, random_state=rng) if dim > 1 else np.eye(1)
        mats = [U @ np.diag(pts[:, j]).astype(complex) @ U.conj().T for j in range(2)]
        mats.append(np.zeros((dim, dim), complex))
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        pres = alg.heisenberg()
        m, _ = flat_degree(pres, mats, v, max_m=max_m)
        if m is not None:
            return pres, mats, v, m, None, pts


PRESET_REPS = ("two-atom", "su2-spin-half", "su2-spin-one", "heisenberg-trivial", "random")


def preset(rep, kind=None, rng=None, **kw):
    """Named representation -> (pres, mats, v, m, y_cap)."""
    rng = np.random.default_rng(0) if rng is None else rng
    fixed = {
        "two-atom": lambda: (alg.commutative(1), *atomic_representation([[0.0], [1.0]], [0.5, 0.5])),
        "su2-spin-half": lambda: (alg.su2(), pauli_spin_half(), np.array([1, 0], complex)),
        "su2-spin-one": lambda: (alg.su2(), spin_one(), np.array([1, 0, 0], complex)),
        "heisenberg-trivial": lambda: (alg.heisenberg(), [np.zeros((1, 1), complex)] * 3, np.ones(1, complex)),
    }
    if rep in fixed:
        pres, mats, v = fixed[rep]()
        m, _ = flat_degree(pres, mats, v)
        return pres, mats, v, m, None
    if rep == "random":
        makers = {
            "commutative": random_commutative,
            "cylinder": random_cylinder,
            "matrix_poly": random_matrix_poly,
            "su2": random_su2,
            "lie": random_su2,
            "heisenberg": random_heisenberg,
        }
        if kind not in makers:
            raise InputError(f"random generation needs --kind in {sorted(makers)}")
        return makers[kind](rng, **kw)[:5]
    raise InputError(f"unknown representation {rep!r}; choose from {PRESET_REPS}")

"""Flat extensions of truncated hermitian functionals on finitely presented *-algebras."""
from .algebra import (
    NCPolynomial,
    abelian_lie,
    commutative,
    cylinder,
    free_with_relations,
    heisenberg,
    lie,
    matrix_poly,
    su2,
)
from .exceptions import (
    FlatExtError,
    InputError,
    NonTerminatingRewrite,
    ConfluenceError,
    ZeroElement,
    DimensionOverflow,
    MissingMoment,
    NonHermitianMoments,
    NotFlat,
    HypothesisError,
    SingularGram,
    EscapesC,
    RelationViolation,
    NonCommutingOps,
    NegativeWeight,
    BoundViolation,
    CenterNotDiagonalizable,
    GramNotPD,
    ParseError,
    ValidationError,
)
from .extension import FlatExtension, extend, extended_value, gns_representation, phi, uniqueness_check
from .filtration import build_truncated_basis, chain_from_words, check_hypotheses
from .hankel import HankelMatrix, TruncatedFunctional, build_hankel, is_flat, shmuljan_factor
from .solvers import (
    FlatMomentSolver,
    extract_atoms_commutative,
    solve_cylinder,
    solve_enveloping,
    solve_matrix_poly,
    vector_functional,
)

__version__ = "0.1.0"

"""Positive eigenvectors of nonnegative multilinear forms and polynomial maps.

The critical points of a nonnegative multilinear form on a product of
``l^p`` spheres, and the positive solutions of ``P_i(x) = lam x_i^{delta_i}``
for a polynomial map with nonnegative coefficients, are the eigenvectors of
a degree-one homogeneous map on the positive orthant. This package builds
those maps, tests the structural conditions (irreducibility, primitivity)
that make the eigenvector unique, and computes it with a power algorithm
certified by Collatz-Wielandt brackets.
"""

from .core import (
    NonnegTensor,
    NormWeights,
    PolynomialMap,
    evaluate_form,
    evaluate_poly,
    evaluate_slot,
    evaluate_slots,
    tensor_system,
)
from .dynamics import (
    MonotoneMap,
    PolyMap,
    TensorMap,
    apply,
    build_poly_map,
    build_tensor_map,
    hilbert_distance,
    normalize,
)
from .exceptions import (
    DegreeError,
    DimensionError,
    MaxIterExceeded,
    NegativeCoefficientError,
    NonMonotoneMap,
    NotPrimitive,
    ProblemFileError,
    TensorPFError,
    VanishingSliceError,
)
from .problem import ProblemFile, load_problem, parse_problem, serialize_problem
from .rate import RateReport, convergence_rate, jacobian, second_modulus, spectral_radius
from .solver import (
    EigenSolution,
    SearchResult,
    SolverConfig,
    block_normalize,
    collatz_wielandt_bounds,
    multi_start_solve,
    power_solve,
    verify_complex_eigenpair,
    verify_solution,
)
from .structure import (
    cyclicity,
    is_irreducible_map,
    is_irreducible_tensor,
    is_strongly_connected,
    is_weakly_irreducible,
    is_weakly_primitive,
    map_digraph,
    partite_graph,
    structure_report,
)

__version__ = "0.1.0"

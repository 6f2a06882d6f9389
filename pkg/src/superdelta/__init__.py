"""superdelta: an exact symbolic engine for graded differential operators,
odd Laplacians, density pencils, and higher derived brackets."""

__version__ = "0.1.0"

from .gralg import (
    Chart,
    ChartMismatch,
    DensityElement,
    GradedPoly,
    ParityError,
    berezin_integral,
    multiply,
    parity_of,
    partial,
    residue_pair,
    substitute,
)
from .diffop import (
    DiffOp,
    commutator,
    compose,
    conjugate_by_exp,
    formal_adjoint,
    op_from_action,
    pencil_adjoint,
    specialize,
)
from .geom import (
    BracketDataError,
    CoordMap,
    CoordMapError,
    LogVolume,
    VBracketData,
    act_on_w_densities,
    canonical_pencil,
    classify_square,
    extract_vbracket,
    hamiltonian_vf,
    jacobi_report,
    lb_data,
    lie_derivative,
    master_discrepancy,
    odd_laplacian,
    pencil_bracket,
    poisson_bracket,
    recover_action,
    transform_op,
)
from .brackets import (
    LInftyReport,
    higher_bracket,
    jacobiator,
    koszul_sign,
    leibniz_obstruction,
    linfty_check,
    square_bracket,
)
from .dsl import DslError, load_module, parse_element, render

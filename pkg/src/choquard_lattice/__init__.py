"""Ground states of the discrete fractional p-Laplacian Choquard equation on lattice boxes."""
from . import _backend
from .errors import (
    CapacityError,
    ChoquardError,
    GeometryError,
    KernelBoundError,
    NumericalConsistencyError,
    ProjectionError,
    ToleranceError,
    ValidationError,
)
from .functional import (
    EnergyBreakdown,
    Nonlinearity,
    Problem,
    build_problem,
    choquard_energy,
    choquard_pairing,
    energy,
    energy_gradient,
    make_custom_nonlinearity,
    make_power_nonlinearity,
    nehari_project,
    nehari_residual,
)
from .lattice import LatticeBox, build_box, l1_distance
from .operators import (
    KernelTable,
    PotentialField,
    build_kernel_table,
    convolve_green,
    gradient_form,
    gradient_length,
    hls_ratio,
    make_potential,
    negative_part,
    p_laplacian_apply,
    positive_part,
    sobolev_norm_p,
)
from .solver import SolverConfig, Solution, certify_solution, solve_ground_state, solve_mountain_pass
from .spectral import GreenTable, compute_green_table, compute_K_alpha, fit_decay_exponent, mu

BACKEND = _backend.NAME
__version__ = "0.1.0"

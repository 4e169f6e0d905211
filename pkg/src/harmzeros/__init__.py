"""All zeros and preimages of harmonic mappings by transport of images."""

from .critical import (
    CausticCurve,
    CriticalCurve,
    CrossingKind,
    RayCrossing,
    caustics,
    isolated_critical_points,
    max_caustic_modulus,
    ray_intersections,
    trace_critical_curves,
    winding_number,
)
from .errors import *  # noqa: F401,F403
from .harmonic import (
    HarmonicMapping,
    LocalJet,
    PoleInfo,
    chang_refsdal,
    load_mapping,
    log_example,
    mpw,
    rho_critical,
    rhie,
    save_mapping,
    wilmshurst,
)
from .newton import NewtonOutcome, NewtonStatus, distinct_filter, newton_solve, newton_step
from .polycore import LaurentHead, Polynomial, RationalFunction, laurent_head, poly_roots
from .transport import (
    PredictionSet,
    SolveOptions,
    SolveReport,
    TransportPath,
    TransportSolver,
    solve_all_zeros,
    solve_preimages,
    trace_homotopy,
)

__version__ = "0.1.0"

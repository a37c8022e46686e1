"""Sound ranging (TDOA source localization) in Euclidean sequence space and on the unit sphere."""

from .estimators import SoundRanging, SphereSoundRanging
from .euclid import (
    EuclideanResult,
    EmissionSolution,
    UniquenessReport,
    diagnose_uniqueness,
    extend_antipodal,
    solve_instance,
    verify_solution,
)
from .exceptions import (
    EmptyDelta,
    EmptyIntersection,
    InvalidInstance,
    MissingArrivalTime,
    Mixed,
    NegativeDiscriminant,
    NoRootInDelta,
    NoSolution,
    NotConverging,
    NotOnSphere,
    PivotTooSmall,
    SeriesUndetermined,
    SoundRangingError,
    UnknownScenario,
)
from .galerkin import galerkin_sequence, solve_srp_n
from .geometry import SrpInstance, build_frame, forward_substitute, gram_schmidt, normalize
from .scenarios import forward_simulate, generate, infinite_subselect
from .series import classify_series
from .sphere import (
    check_exclusion_3b,
    geodesic_distance,
    solve_sphere_instance,
    sphere_triangle_check,
)

__version__ = "0.1.0"

"""qgspectra: spectra and trace-formula decompositions of quantum graphs
with piecewise-constant edge potentials."""

from .errors import (
    AtThreshold,
    DisconnectedGraph,
    GridTooCoarse,
    InconsistentCalibration,
    MalformedMatching,
    NonPositiveLength,
    NotAStar,
    OrbitBudgetExceeded,
    QGraphError,
    SeriesNotConverged,
    SingularVertexMatrix,
    TrappedStateSuspected,
    UnsupportedDegree,
)
from .graph_model import (
    MatchingConditions,
    MetricGraph,
    MultiModeGraph,
    build_graph,
    build_multimode,
    expand_multimode,
    load_graph,
    standard_conditions,
    validate_matching,
)
from .quantum_map import (
    assemble,
    det_identities_residuals,
    inverse_ee_schur,
    quantum_map_symmetry_residuals,
    reduce,
    star_reduce,
    trapped_state_check,
    unitarity_residual,
)
from .scattering import (
    barrier_form,
    vertex_flux,
    vertex_scattering,
    vertex_symmetry_residuals,
    wavenumbers,
)
from .spectra import (
    SpectralResult,
    counting_exact,
    find_eigenvalues,
    secular,
    secular_red,
    secular_sweep,
)
from .trace_formula import (
    CountingReport,
    PeriodicOrbit,
    calibrate_constant,
    enumerate_primitive_orbits,
    evanescent_correction_series,
    mean_counting,
    orbit_sum,
    oscillatory_counting,
    trace_sweep,
)

__version__ = "0.1.0"

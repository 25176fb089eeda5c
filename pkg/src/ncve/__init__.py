"""Null controllability with vanishing energy: modal systems, minimal-energy
null controls, biorthogonal exponential families, LOI checks and verdicts for
coupled parabolic and retarded delay systems."""

from .errors import (
    BoundaryRoot,
    ConfigError,
    IllConditioned,
    InconclusiveWindow,
    Infeasible,
    NcveError,
    NonConvergent,
    NonFiniteEntry,
    NotDiagonalizable,
    PreconditionViolated,
    SeriesDiverged,
    UncontrollableMode,
)
from .kernels import BACKEND, available_backends
from .modal_core import JordanChain, ModalSystem, Mode, StateVector, spectral_bound
from .moment_gramian import (
    ControlSignal,
    EnergyReport,
    GramMatrix,
    MinEnergySolver,
    MomentProblem,
    energy_sweep,
    gram_matrix,
    min_energy,
    null_control,
    solve_moment_min_norm,
)
from .biorthogonal import (
    BiorthogonalFamily,
    ExponentialFamily,
    min_norm_biorthogonal,
    moment_series_solution,
    parabolic_family,
    periodic_extension,
)
from .parabolic import NcveVerdict, ParabolicSystem, ncve_verdict, spectrum, to_modal
from .delay import DelaySystem, find_roots, ncve_verdict_delay, stability_raster
from .loi import QuadraticForm, build_P, loi_check, loi_monte_carlo

__version__ = "0.1.0"

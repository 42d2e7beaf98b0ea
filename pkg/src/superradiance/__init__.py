"""Cooperative emission of 2D quantum emitter arrays.

G2(0,0) of fully inverted arrays, its independent and Dicke limits,
emission-rate dynamics and disorder Monte Carlo, for emitters coupled through
free space, a single delocalised (BIC) mode, ideal limits or an externally
tabulated decay matrix.
"""

from .correlations import (
    G2Result,
    SpectralDecomposition,
    check_bounds,
    g2_bic_analytic,
    g2_dicke_limit,
    g2_direct,
    g2_independent_limit,
    g2_spectral,
    spectral_decomposition,
)
from .coupling import (
    CouplingMatrix,
    DecayMatrix,
    FreeSpace,
    IdealDicke,
    Independent,
    PhysicalConstants,
    SingleModeBIC,
    Tabulated,
    build_matrices,
    free_space_pair_rate,
    import_decay_matrix,
    purcell_to_rate,
    validate_physical,
)
from .dynamics import (
    RateTrace,
    closed_form_rate,
    ladder_rate_trace,
    lindblad_rate_trace,
    meanfield_rate_trace,
)
from .emitters import (
    EmitterArray,
    LatticeSpec,
    apply_filling_fraction,
    apply_orientation_jitter,
    apply_position_jitter,
    build_square_lattice,
)
from .montecarlo import (
    DisorderConfig,
    DisorderDistribution,
    FillingMode,
    OrientationMode,
    PositionMode,
    histogram,
    run_disorder,
    skew_adjusted_errorbars,
    summary_stats,
)

__version__ = "0.1.0"

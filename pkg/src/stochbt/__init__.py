"""Balanced truncation and H-infinity analysis for linear systems with
multiplicative white noise."""

__version__ = "0.1.0"

from .balancing import (  # noqa: F401
    BalancedForm,
    ReductionResult,
    balance,
    reduce_from_pair,
    reduce_pipeline,
    truncate,
)
from .gramians import (  # noqa: F401
    TYPE_I,
    TYPE_II,
    GramianPair,
    IpParams,
    check_pair,
    type1_gramians,
    type2_p_baseline,
    type2_p_optimize,
    type2_pair,
    type2_q,
)
from .hinf import (  # noqa: F401
    HinfResult,
    build_error_system,
    hinf_norm,
    riccati_feasible,
    truncation_error_norm,
)
from .lyapunov import (  # noqa: F401
    GenLyapOperator,
    is_ms_stable,
    ms_stability_certificate,
    spectral_abscissa,
)
from .simulate import (  # noqa: F401
    SimConfig,
    SimResult,
    empirical_ms_stable,
    moment_propagate,
    simulate_pair,
)
from .system import (  # noqa: F401
    StochasticSystem,
    example1_system,
    example2_gramian,
    example2_system,
    heat_system,
    ladder_system,
    load_system,
    save_system,
    sec4a_system,
    sec4a_type2_reference,
    validate,
)

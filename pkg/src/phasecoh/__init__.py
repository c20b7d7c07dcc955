"""Phase coherence of stochastically emitted single-shot fields.

Simulates drive, emission and heterodyne readout of a two-level emitter,
then quantifies how much of the prepared phase survives in the measured
records (mean resultant length R, Holevo variance) and fits the laws that
relate R to averaging, detection SNR and the integration window.
"""

from .circstats import (
    PhaseEnsemble,
    PhasePdf,
    WindowSpec,
    batch_average,
    circular_mean,
    holevo_variance,
    integrate_window,
    mean_resultant_length,
    phase_of,
    phase_pdf,
    r_surface,
    time_domain_summary,
)
from .emitter import (
    DecoherenceParams,
    DrivePulse,
    PreparationState,
    effective_pulse_area,
    emission_expectation,
    emission_phase,
    super_gaussian_envelope,
)
from .errors import (
    ConfigError,
    DomainError,
    PhasecohError,
    PrecisionError,
    ResourceError,
    TraceFormatError,
    UnresolvedPhaseError,
)
from .fitting import FitResult, fit_r_vs_m, fit_surface, least_squares_fit, svd_separability
from .laws import (
    StochasticEmissionParams,
    SurfaceParams,
    binomial_pmf,
    effective_snr,
    r_det,
    r_phenomenological,
    r_predicted,
)
from .simulate import (
    PhaseNoiseConfig,
    PhaseNoiseModel,
    SimConfig,
    Trace,
    TraceSet,
    simulate_ensemble,
    simulate_shot,
)

__version__ = "0.1.0"

"""Simulation and analysis of cavity-enhanced two-photon comb entanglement links."""

__version__ = "0.1.0"

from .errors import (AnalysisError, ConfigError, NonPhysicalStateError, ReconstructionError,
                     SaturationError, TpcError)
from .qstate import (BellKind, DensityMatrix, EntanglementReport, PureState, bell_state, chsh_max,
                     concurrence, entanglement_report, fidelity, max_pure_fidelity, werner)
from .source import (CombModelParams, CombSpec, degenerate_linewidth, g2_analytic, mode_count,
                     round_trip_time, span_from_wavelength)
from .channel import (ConverterSpec, FiberSpec, MemorySpec, converter_passband_modes,
                      dispersion_broadening, eta_star, fiber_transmittance, memory_coupling,
                      optimize_pump, wc_efficiency, wc_noise)
from .mc_sim import (CoincidenceHistogram, DetectorSpec, SourceRateModel, TcspcSpec,
                     histogram_coincidences, simulate_histogram, simulate_stream,
                     simulate_tomography_counts)
from .tomography import (BASIS_LABELS, TomographyCounts, linear_inversion, mle_reconstruct,
                         predicted_counts, projector_for)
from .analysis import (CombFitResult, G2Result, bandwidth_from_dispersion, fit_comb, g2_zero,
                       linewidth_from_envelope, pump_sweep_slope)
from .config import ScenarioConfig, load_preset

__all__ = [name for name in dir() if not name.startswith("_")]

"""Open-system simulation of a quantum dot coupled to a photonic-crystal cavity."""

from .config import PRESETS, load_config
from .drive import PulseShape, pi_pulse_amplitude
from .dynamics import (
    MasterSolution,
    TimeTrace,
    evolve_master,
    g2_cw,
    steady_state,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    FitError,
    TruncationError,
    UnitError,
    UnsupportedFeatureError,
)
from .experiments import EXPERIMENTS, ExperimentConfig, ExperimentResult
from .hilbert import SystemParams
from .mcwf import ensemble_average, evolve_trajectory, pulsed_g2_histogram
from .spectra import analytic_spectrum, linear_coeffs, numerical_spectrum

__version__ = "0.1.0"

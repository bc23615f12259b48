"""Spectral laws of Hadamard products of correlated sample covariance matrices."""

__version__ = "0.1.0"

from .measure import AtomicMeasure, atomic, cdf, dirac, from_covariance_spectrum, moment, mult_convolve
from .stieltjes import (
    GridDensity,
    law_quantile,
    mp_boxtimes_density,
    mp_boxtimes_stieltjes,
    mp_closed_form_density,
    mp_zero_atom,
    stieltjes_transform,
    theoretical_cdf,
)
from .covmodel import CovarianceMatrix, CovarianceSpec, build_sigma, spectrum, sqrt_factor
from .simulate import ExperimentConfig, SpectrumResult, esd, hadamard_gram, run_experiment, sample_matrix
from .metrics import Histogram, histogram, ks_distance, wasserstein1
from .tensoralg import braid, quadratic_form_concentration, tensor_columns_check, tensor_spectrum_oracle

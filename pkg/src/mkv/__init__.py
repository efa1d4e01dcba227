"""Particle simulation and adaptive density estimation for McKean-Vlasov SDEs."""

__version__ = "0.1.0"

from .gl import (
    DEFAULT_OMEGA,
    BandwidthGrid,
    BandwidthSelection,
    a_term,
    adaptive_estimate,
    bandwidth_grid,
    fixed_bandwidth,
    select_bandwidth,
    select_bandwidths,
    variance_term,
)
from .harness import ExperimentResult, bandwidth_histogram, fit_slope, mc_strong_error, run_experiment
from .kde import DensityEstimate, estimate_density
from .kernels import KernelSpec, check_moments, eval_kernel, kernel_norms, make_kernel
from .models import (
    InitialLaw,
    ModelSpec,
    burgers_model,
    burgers_reference,
    double_layer_model,
    get_model,
    linear_interaction_model,
    pairwise_model,
)
from .particles import NonFiniteError, ParticleEnsemble, SimConfig, euler_step, sample_initial, simulate, simulate_path
from .rng import CounterRNG

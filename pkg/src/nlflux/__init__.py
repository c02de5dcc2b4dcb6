"""Nonlocal diffusion with prescribed boundary flux.

Finite-volume style discretization of convolution-type diffusion on a
bounded domain, where mass enters and leaves through a collar of exterior
cells instead of a classical boundary condition.  Modules:

  kernels     radial unit-mass interaction kernels
  geometry    lattice grids, interior/collar masks, strips, boundary chart
  operators   exchange matrix, collar flux map, averaging pair
  evolution   time stepping, blow-up detection, fixed-point solver
  stationary  steady states, spectral gap, convergence verification
  analysis    energy decay, focusing profiles, rate fits, set estimates
  config      declarative experiment configs
  presets     shipped experiment catalog
  fileio      deterministic text/JSON writers
  cli         command line entry point
"""

from .errors import ConfigurationError, NumericalError, UsageError
from .kernels import FAMILIES, Kernel, kernel_eval, kernel_mass_residual, make_kernel
from .geometry import (BoundaryChart, Collar, Disk, DomainMask, Geometry,
                       Grid, Interval, Rectangle, StripDecomposition,
                       build_boundary_chart, build_grid, distance_to_set,
                       interior_components, shape_from_spec,
                       strip_decomposition)
from .operators import (FluxOperator, FredholmPair, NonlocalOperator,
                        apply_K, apply_L, apply_flux, assemble_collar_coupling,
                        assemble_diffusion, assemble_flux, compat_residual,
                        compat_scale, fredholm_pair, kernel_matrix,
                        load_operator, save_operator, two_cell_operator)
from .evolution import (SCHEMES, BlowupEvent, NonlinearTraceFlux,
                        PicardReport, PowerLawFlux, SolverConfig, StaticFlux,
                        TabulatedFlux, Trajectory, comparison_check,
                        estimate_blowup_time, extend_trace,
                        mass_balance_check, picard_solve, run, step,
                        sup_bound_check)
from .stationary import (ConvergenceReport, SimplicityReport,
                         StationarySolution, convergence_verify,
                         kernel_simplicity_check, solve_stationary,
                         spectral_gap)
from .analysis import (FIT_WINDOW, EnvelopeReport, LyapunovReport,
                       NonlinearRateReport, NonlinearSetReport,
                       NonuniquenessReport, Profiles, RateFit, SetComparison,
                       SpectralReport, blowup_set_compare,
                       blowup_set_estimate, compute_profiles, lyapunov_check,
                       lyapunov_series, nonlinear_blowup_set,
                       nonlinear_bound_check, nonlinear_rate_check,
                       nonuniqueness_probe, poincare_constant, rate_fit)
from .config import (Experiment, assemble_experiment, build_collar_field,
                     build_datum, build_initial_field, geometry_from_config,
                     kernel_from_config, load_config, prepared_profile_field,
                     solver_config, validate_config)
from .presets import get_preset, preset_names

__version__ = "0.1.0"

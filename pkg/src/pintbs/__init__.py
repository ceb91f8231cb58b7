"""Parallel-in-time pricing of two-asset digital options.

Public surface: grid/field/parameter types and norms (core), the closed-form
oracle (analytic), implicit-Euler stencil + matrix-free CG (discretization),
slice propagators (propagators), FNO inference and weight IO (fno), the
Parareal engine (parareal), speedup models (speedup), and the CLI (cli).
"""

from .analytic import (BvnQuadrature, analytic_field, bivariate_normal_cdf,
                       closed_form_price, std_normal_cdf, terminal_payoff)
from .core import (Field, Grid2D, ModelParams, cast_precision, l2_norm,
                   read_field_binary, relative_error, write_field_binary,
                   write_field_csv)
from .discretization import (CgConfig, CgResult, StencilOperator, apply_operator,
                             build_operator, cg_solve, implicit_euler_step)
from .errors import (ConfigError, MissingArtifactError, NumericalError,
                     PintbsError, SolverBreakdownError, ValidationError,
                     WeightFormatError)
from .fno import (FnoLayer, FnoModel, encode_input, fno_coarse_advance,
                  fno_forward, load_fixtures, load_weights, save_fixtures,
                  save_weights, spectral_conv)
from .parareal import (PararealResult, PararealState, TimePartition,
                       convergence_study, exactness_defect, parameter_sweep,
                       parareal_run, serial_fine_reference)
from .propagators import CostMeasurement, PropagatorSpec, advance, measure_cost
from .speedup import CostInputs, SpeedupBound, compare_measured, parareal_bound, spacetime_bound

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"

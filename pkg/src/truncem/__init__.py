"""Truncated Euler-Maruyama for Hoelder-in-time, super-linear SDEs and their time changes."""

from .errorlab import (ErrorReport, ErrorRow, moment_sweep, regress_rate, step_gap_estimate,
                       strong_error_sweep)
from .errors import (ConfigError, EstimatorDegenerate, GridMismatch, HorizonNotReached,
                     InvalidData, InvalidIndex, InvalidStepSize, NumericOverflow, OutOfRange,
                     TruncEMError, UnknownProblem)
from .kernels import BACKEND
from .model import (AssumptionProbeReport, SdeProblem, builtin_problem, evaluate_diffusion,
                    evaluate_drift, probe_monotonicity)
from .noise import BrownianPath, coarsen_brownian, generate_brownian
from .scheme import (TrajectoryGrid, TruncationPolicy, default_policy, power_policy,
                     solve_truncated_em, step_truncated_em, truncate_state, truncation_radius)
from .subordination import (InverseSubordinatorPath, SubordinatorPath, SubordinatorSpec,
                            coarsen_subordinator, invert_subordinator, sample_stable_increment,
                            simulate_subordinator, solve_time_changed)

__version__ = "0.1.0"

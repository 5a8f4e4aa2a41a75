"""Information control barrier functions for safe beacon localization."""

__version__ = "0.1.0"

from .barrier import BarrierConfig, h_cross, h_raw, h_smooth, lambda_field, lift_rd2
from .control import FilterConfig, lqr_gain, qp_filter, softplus_filter
from .eigen import eig_accel, eig_rates, eig_sym, pinv_shift, smooth_min
from .errors import (BeaconSingularity, ConfigError, IcbfError, InvalidInput, InvalidMatrix,
                     InvalidWeight, NonSimpleEigenvalue, SafetyViolation)
from .measurements import BeaconSet, bearing_model, range_model
from .nls import NlsOptions, cost_eval, information_field, solve_nls
from .scenarios import BUILTIN, load_config
from .sim import ScenarioConfig, State, simulate, simulate_baseline, step_dynamics

"""Solvers for linear balance laws on graph-structured age/size domains.

Systems of renewal equations are coupled through their inflow
boundaries: each edge's inflow combines interior traces and weighted
population integrals of the other edges.  Two independent solvers are
provided: an exact characteristics solver wrapped in a contractive
fixed-point sweep, and a Lax-Friedrichs finite-volume time-stepper.
On top sit diagnostic functionals (norms, variation bounds, fertility
and cost/gain objectives) and a deterministic scalar-parameter
optimizer.
"""

from .expr import parse_expr, eval_expr, check_bounds
from .model import (
    ModelConfig,
    ModelError,
    build_model,
    builtin_juvenile_adult,
    builtin_mating,
    builtin_resource,
)
from .fv import Mesh, Trajectory, cfl_dt, simulate
from .picard import PicardOptions, picard_solve, picard_trajectory, sub_horizon
from .characteristics import exact_profile, exact_value, flow_X, gamma, hit_time_T
from .functionals import (
    apriori_check,
    cost_gain,
    discrete_tv,
    fertility_R,
    l1_norm,
    linf_norm,
    stability_check,
    utility_mating,
)
from .optimize import maximize, sweep

__version__ = "0.1.0"

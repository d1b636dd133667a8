"""Boundary-layer asymptotics for the mean exit time of a diffusion from a planar well."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree without installation
    __version__ = "0.0.0"

from .errors import (AssumptionError, CollarError, ConfigError, DomainRangeError, ExitwellError,
                     NumericalError)
from .geometry import DomainCurve, build_curve, collar_point, locate_in_collar, locate_points
from .potential import Potential, boundary_traces, build_potential, check_assumptions
from .layer import LayerPolynomial, phi_sequence, solve_layer_ode, u_sequence
from .quad import ScaledArray, integral_table, volume_integral
from .asym import (ExpansionSet, build_expansion, eigenfunction, eigenvalue, exit_expectation,
                   exit_law_density, integrate_over_domain, k_constants, max_exit_time,
                   mean_exit_time, qsd_density, torsional_rigidity)
from .validate import (exact_radial_exit_time, mc_exit, mc_exit_extrapolated, radial_bvp,
                       radial_eigen, radial_profile)
from .config import RunConfig, load_config, parse_config

__all__ = [name for name in dir() if not name.startswith("_")]

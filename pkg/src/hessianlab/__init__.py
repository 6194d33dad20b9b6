"""Finite-difference toolkit for degenerate k-Hessian equations.

``symfun``   elementary symmetric functions, Garding cones, the operator
             ``sigma_k^{1/k}`` and its linearization.
``fields``   analytic right-hand sides, the Wang cusp family and regularity probes.
``disc``     lattice domains, second-difference stencils, grid fields.
``solver``   damped Newton with eps-continuation and comparison audits.
``harness``  config-driven experiment suites and the command-line runner.
"""

from . import disc, fields, solver, symfun
from .errors import HessianLabError

__version__ = "0.1.0"

__all__ = ["symfun", "fields", "disc", "solver", "HessianLabError", "__version__"]

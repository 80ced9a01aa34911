"""Herglotz variational principle: contact Lagrangian dynamics, vakonomic
constraints and Herglotz optimal control."""

from .contact import (ContactLagrangian, DiscretePath, Variation, action_z, contact_action,
                      first_variation, herglotz_action, random_variation)
from .control import ControlProblem, ControlState, control_rhs, hocp_as_vakonomic, solve_hocp, stationarity_solve
from .dynamics import (ContactState, MultiplierCurve, herglotz_rhs, integrate_herglotz,
                       multiplier_evolution)
from .expr import evaluate, parse
from .numkit import FdConfig, NewtonConfig, OdeConfig, newton_solve, rk4_integrate
from .vakonomic import (ExtendedState, VakonomicProblem, extended_lagrangian, integrate_vakonomic,
                        solve_vakonomic_bvp, solve_vakonomic_bvp_all, vakonomic_rhs)

__version__ = "0.1.0"

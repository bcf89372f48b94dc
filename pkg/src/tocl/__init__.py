"""Time-optimal control of linearizable affine systems via power moment problems."""

from .expr import VecExpr, parse
from .fixedpoint import FixedPointTrace, iterate, iterate_auto
from .linearize import DriftlessForm, F0_at, check_system
from .model import ControlSystem
from .moment import BangBangControl, MomentProblem, solve as solve_moments
from .sim import Trajectory, integrate, integrate_driftless

__version__ = "0.1.0"

__all__ = [
    "BangBangControl", "ControlSystem", "DriftlessForm", "F0_at", "FixedPointTrace",
    "MomentProblem", "Trajectory", "VecExpr", "check_system", "integrate",
    "integrate_driftless", "iterate", "iterate_auto", "parse", "solve_moments",
]

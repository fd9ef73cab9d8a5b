"""Degrees-of-freedom estimation and causal verdicts for linear stochastic systems."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401

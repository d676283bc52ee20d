"""Sensor-aware navigation demonstrations: simulation, observation-model estimation,
diffusion behavior cloning and trajectory metrics."""

from ._rview import *  # noqa: F401,F403
from ._rview import __doc__  # noqa: F401

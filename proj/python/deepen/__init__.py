"""Energy-based MRI reconstruction: forward model, learned prior, MAP and Langevin sampling."""

from ._core import *  # noqa: F401,F403
from ._core import Error, __doc__  # noqa: F401

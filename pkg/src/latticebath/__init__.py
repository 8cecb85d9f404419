"""Wave propagation and emitter dynamics in periodic tight-binding baths."""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .lattice import (LatticeSpec, Coupling, build_square, build_honeycomb,  # noqa: E402
                      bloch, derivatives, bands, critical_values, band_range)
from . import lattice, resonant, phasefunc, greens, semiclassics, bath  # noqa: E402,F401

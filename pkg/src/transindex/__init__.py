"""Numerical laboratory for the transversal index of circle actions."""
__version__ = "0.1.0"

from .clifford import build_spin_rep, dstar, spin_exp, supertrace
from .geometry import catalog, magnetic_twist, monopole_twist, trivial_twist
from .heatkernel import Parametrix, kernel_for, successive_approximation
from .index import (geometric_index, index_density_m, kernel_symmetry_check,
                    mckean_singer_index, supertrace_density)
from .stochastic import RandomSource, sample_bridge, sample_path

"""Graph-constrained ensemble information filtering at desk scale.

Sparse-precision estimation through affine triangular maps, canonical-form
ensemble updates, moment-form baselines with localisation, analytical
simulators with exact Gaussian oracles, and divergence evaluation, plus a
config-driven experiment runner.
"""

__version__ = "0.1.0"

from .graph import CIGraph  # noqa: F401
from .simulators import Ensemble, GaussianOracle  # noqa: F401
from .sparse_core import CholeskyFactor, Permutation, SparseSpd  # noqa: F401

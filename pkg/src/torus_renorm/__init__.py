"""Renormalization of near-linear analytic flows on the d-torus.

Subpackages follow the pipeline: :mod:`lattice` (multidimensional
continued fractions from a lattice flow), :mod:`field` (truncated Fourier
vector fields and torus maps), :mod:`rotation`, :mod:`elimination`,
:mod:`renorm` and :mod:`conjugacy`.
"""
from ._accel import HAVE_NUMBA, USE_NUMBA, backend_name, set_threads
from .conjugacy import (
    ConjugacyChain,
    c1_distance,
    chain_from_trace,
    compose_chain,
    verify_conjugacy,
    w_map,
    wn_norm_check,
)
from .elimination import EliminationResult, eliminate, epsilon_radius, homotopy_eliminate
from .errors import *  # noqa: F401,F403
from .field import (
    FourierField,
    TorusMap,
    compose,
    cutoff,
    norm_rho,
    norm_rho_prime,
    pull_back,
    rescale,
)
from .lattice import (
    CFExpansion,
    CFStep,
    FrequencyVector,
    LatticeState,
    GapRule,
    expand,
    reduce,
    shortest_vector,
)
from .renorm import RenormTrace, Schedule, build_schedule, pre_renormalize, renorm_step, run
from .rotation import rotation_vector

__version__ = "0.1.0"

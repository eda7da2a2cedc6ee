"""Numerical tolerances shared across the package.

Every absolute/relative threshold used by the QP kernel, the polyhedral
routines and the extended-value tests lives here so that changing one
number does not require hunting through modules.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    #: activity threshold for inequality rows, absolute (data is O(1))
    active: float = 1e-8
    #: slack below which a row seeds the initial working set; looser rows
    #: enter through the ratio test so the iterate lands exactly on them
    working: float = 1e-13
    #: primal feasibility accepted after phase 1, relative to 1 + |rhs|
    feasibility: float = 1e-9
    #: a step shorter than this (relative to 1 + |x|) counts as zero
    step: float = 1e-12
    #: multiplier sign test, relative to 1 + |gradient|
    multiplier: float = 1e-10
    #: eigenvalues of the reduced Hessian below this (relative) are zero
    curvature: float = 1e-12
    #: rank threshold for null-space computations
    rank: float = 1e-10
    #: symmetric-matrix check |H - H^T|_inf
    symmetry: float = 1e-12
    #: PSD eigenvalue floor
    psd_floor: float = 1e-10
    #: a recession slope above this certifies +inf (relative to 1 + |z|)
    recession: float = 1e-9
    #: LP optimum above this falsifies a cone-is-trivial certificate
    qualification: float = 1e-7
    #: iterations of the active-set loop per variable/constraint
    max_iter_factor: int = 50


DEFAULT = Tolerances()

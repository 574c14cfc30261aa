"""Cable systems over Vicsek and Sierpinski-gasket graphs.

Graph construction, finite-element meshes, exact harmonic extension,
elliptic and heat-kernel inequality scans, and quasi-Riesz transforms.
"""

from .fractal import CableGraph, CapacityError, build, build_sierpinski, build_vicsek, enumerate_skeletons
from .mesh import Ball, Mesh, refine
from .scaling import ScalingLaws, gap_bound, upsilon
from .exact import rh_counterexample, sg_extend, solve_exact, vicsek_extend
from .elliptic import DirichletProblem, DirichletSolver, solve_dirichlet, solve_poisson
from .heat import Semigroup, evolve, heat_kernel_column
from .riesz import local_riesz_apply, lp_norm_scan, quasi_riesz_apply
from .reports import InequalityFit

__version__ = "0.1.0"

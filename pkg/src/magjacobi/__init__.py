"""Curvature maps, Jacobi equations and conjugate points for corank-1
sub-Riemannian structures with a transversal symmetry, computed on the
quotient Riemannian base with its magnetic field."""
from .geometry import CATALOG, ChartedBase, make_model, local_geometry, riemann, christoffel, sec
from .splitting import CotangentPoint, NotRegularError, split_at, A_form, V1_vector
from .curvature import CurvatureMaps, curvature_maps, big_matrix, Rca_Raa, Q_forms
from .flow import (ConjugateReport, ExtremalTrajectory, integrate_extremal,
                   oracle_conjugate_times)
from .jacobi import jacobi_conjugate_times, structural_integrate
from .comparison import (ComparisonBounds, Z_T, Z_T_direct, check_comparison, model_constants,
                         phi, psi)

__all__ = [
    "CATALOG", "ChartedBase", "make_model", "local_geometry", "riemann", "christoffel", "sec",
    "CotangentPoint", "NotRegularError", "split_at", "A_form", "V1_vector",
    "CurvatureMaps", "curvature_maps", "big_matrix", "Rca_Raa", "Q_forms",
    "ConjugateReport", "ExtremalTrajectory", "integrate_extremal", "oracle_conjugate_times",
    "jacobi_conjugate_times", "structural_integrate",
    "ComparisonBounds", "Z_T", "Z_T_direct", "check_comparison", "model_constants", "phi", "psi",
]

"""Stable norms of Finsler metrics on the 2-torus.

Variational tables of shortest closed geodesics per homotopy class, an
exact oracle for rotational metrics, geodesic-flow Floquet analysis and
convexity-defect diagnostics.
"""

from .metrics import (Conformal, FlatNorm, FourierSeries, MetricError, Rotational, euclidean,
                      rotational, spec_from_dict, spec_hash, validate_spec)
from .rational_approx import LatticeVector, convergents, farey_bracket, pick_count, primitive_vectors
from .rotational_oracle import oracle_sigma, oracle_unit_circle
from .loop_minimizer import MinimizeOptions, find_periodic_minimizers, minimize_loop, sigma_of_class
from .geodesic_flow import GeodesicState, integrate_geodesic, monodromy_of_closed
from .stable_norm import (SCHEMA, StableNorm, StableNormTable, TableOptions, build_table, defect_beta,
                          defect_sigma, forward_derivative_at_lattice)
from .diagnostics import (broken_curve, classify_direction, find_heteroclinic, fit_models,
                          profile_defect, radial_decompose)

__version__ = "0.1.0"

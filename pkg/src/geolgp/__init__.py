"""Weighted least gradient problems in the plane via boundary optimal transport.

The pipeline: a conformal weight k and a boundary datum g on a convex
domain give source and target measures (the positive and negative parts
of dg/ds).  They are coupled by an optimal plan for the geodesic distance
of k, the plan's geodesic rays carry a transport density, and u is
recovered from the rotated flow or, independently, by sweeping the rays.
"""
from .boundary import (AtomSet, BoundaryDatum, BoundaryMeasure, convexity_certificate, discretize,
                       indicator_arc, split, tangential_derivative)
from .density import assemble_density, assemble_flow, divergence_residual, lp_norm
from .domain import Circle, Ellipse, SmoothPolar, domain_from_config
from .errors import (ConvexityViolation, CrossingRays, DomainError, DualityGapError, GeoLGPError,
                     InvalidInput, NoConvergence)
from .grids import GridSpec, ScalarGrid, VectorGrid
from .metric import boundary_geodesics, boundary_pair_lengths, connect, distance, distance_field, jacobian_fan, shoot
from .reconstruct import flow_to_u, ray_sweep_u, w1p_norm
from .transport import (PairCost, build_rays, cost_matrix, interior_crossings, monge_map, potential_from_plan,
                        solve_lp, solve_noncrossing)
from .weights import ConstantWeight, GridWeight, RadialBumpWeight

__version__ = "0.1.0"

__all__ = ["AtomSet", "BoundaryDatum", "BoundaryMeasure", "convexity_certificate", "discretize",
           "indicator_arc", "split", "tangential_derivative", "assemble_density", "assemble_flow",
           "divergence_residual", "lp_norm", "Circle", "Ellipse", "SmoothPolar", "domain_from_config",
           "ConvexityViolation", "CrossingRays", "DomainError", "DualityGapError", "GeoLGPError",
           "InvalidInput", "NoConvergence", "GridSpec", "ScalarGrid", "VectorGrid", "boundary_geodesics",
           "boundary_pair_lengths", "connect", "distance", "distance_field", "jacobian_fan", "shoot",
           "flow_to_u", "ray_sweep_u", "w1p_norm", "PairCost", "build_rays", "cost_matrix",
           "interior_crossings", "monge_map", "potential_from_plan", "solve_lp", "solve_noncrossing",
           "ConstantWeight", "GridWeight", "RadialBumpWeight"]

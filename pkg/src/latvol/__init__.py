"""Exact lattice bond volumes and a consistent 3D atomistic/continuum
coupling for two-body lattice potentials."""

from .exact_sums import BezoutTriple, extended_gcd, s_ab, sum_ai_mod_b, sum_powers
from .lattice_geometry import (
    chi_point,
    edge_angle_in_pulled_back_frame,
    orientation,
    segment_chi_average,
    split_simplex_into_prisms,
    unimodular_to_e3,
)
from .bond_volume import (
    PlaneCoeffs,
    RightTriangleSpec,
    len_bruteforce,
    len_prism,
    len_tetra,
    rectangle_sum,
    reduce_direction,
    right_triangle_sum,
    triangle_sum,
)

__version__ = "0.1.0"

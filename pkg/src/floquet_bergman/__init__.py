"""Numerical Floquet-Bergman toolkit on doubly periodic planar domains."""

from .bergman import CellKernel, QuasiBasis, build_basis, kernel_eval, project, projection_distance
from .floquet import FloquetField, QuasimomentumGrid, TruncatedDomainFunction, forward, inverse
from .geometry import Obstacle, PeriodicCell, build_quadrature
from .lattice import (EllipticPair, Lattice, Truncation, phi, psi_rho, psi_tilde_eta, varphi,
                      wp, wp_prime)
from .multiplier import MultiplierFamily, find_R
from .toeplitz import Symbol, band_sweep, truncated_oracle, weyl_residual

__all__ = [
    "CellKernel", "EllipticPair", "FloquetField", "Lattice", "MultiplierFamily", "Obstacle",
    "PeriodicCell", "QuasiBasis", "QuasimomentumGrid", "Symbol", "Truncation",
    "TruncatedDomainFunction", "band_sweep", "build_basis", "build_quadrature", "find_R",
    "forward", "inverse", "kernel_eval", "phi", "project", "projection_distance", "psi_rho",
    "psi_tilde_eta", "truncated_oracle", "varphi", "weyl_residual", "wp", "wp_prime",
]
__version__ = "0.1.0"

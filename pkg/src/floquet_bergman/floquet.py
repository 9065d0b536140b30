"""Discrete Floquet transform on a truncated union of cells.

A function on the cells |m|_inf <= M is stored as an array of shape
(2M+1, 2M+1, nodes): entry [m1 + M, m2 + M, k] is f(z_k + m) for the k-th
quadrature node z_k of the reference cell.

Normalisation: forward carries 1/(2 pi) and the sum over cells, inverse
carries 1/(2 pi) and the trapezoid rule over [-pi, pi]^2.  The two factors
combine with the (2 pi)^2 total weight of the grid, so inverse(forward(f))
is the identity as soon as the grid resolves every index difference.  With
these conventions inverse is the exact adjoint of forward for the pairing
sum_k w_k (.|.)_cell, and forward is an isometry.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .bergman import build_basis
from .errors import AliasRisk, BadParameter, ResidualTooLarge

TWO_PI = 2 * np.pi
UNFOLD_TOLERANCE = 1e-3


@dataclass(frozen=True)
class QuasimomentumGrid:
    """Uniform grid on [-pi, pi]^2 with trapezoid weights.

    ``closed`` grids are endpoint-inclusive (resolution points per axis,
    half weights at +-pi).  ``periodic`` grids use resolution points
    2 pi (k - (n - 1)/2) / n with equal weights; for odd n they contain 0 and
    the transform restricted to |m|_inf <= (n - 1)/2 is unitary.
    """

    resolution: int
    periodic: bool = False

    def __post_init__(self):
        if self.resolution < 1 or (not self.periodic and self.resolution < 2):
            raise BadParameter("grid resolution too small")

    @property
    def axis(self) -> np.ndarray:
        n = self.resolution
        if self.periodic:
            return TWO_PI * (np.arange(n) - (n - 1) / 2) / n
        return np.linspace(-np.pi, np.pi, n)

    @property
    def axis_weights(self) -> np.ndarray:
        n = self.resolution
        if self.periodic:
            return np.full(n, TWO_PI / n)
        w = np.full(n, TWO_PI / (n - 1))
        w[[0, -1]] *= 0.5
        return w

    @property
    def nodes(self) -> np.ndarray:
        """All grid etas, shape (n^2, 2), first axis outer."""
        a = self.axis
        return np.stack(np.meshgrid(a, a, indexing="ij"), axis=-1).reshape(-1, 2)

    @property
    def weights(self) -> np.ndarray:
        w = self.axis_weights
        return np.outer(w, w).ravel()

    @property
    def size(self) -> int:
        return self.resolution**2

    def resolves(self, M: int) -> bool:
        """True if every index difference |m - m'| <= 2M is integrated exactly."""
        distinct = self.resolution if self.periodic else self.resolution - 1
        return distinct > 2 * M

    def to_dict(self) -> dict:
        return {"resolution": self.resolution, "periodic": self.periodic}


@dataclass(frozen=True)
class TruncatedDomainFunction:
    M: int
    values: np.ndarray = field(repr=False)    # (2M+1, 2M+1, nodes)

    def __post_init__(self):
        n = 2 * self.M + 1
        if self.values.ndim != 3 or self.values.shape[:2] != (n, n):
            raise BadParameter(f"expected values of shape ({n}, {n}, nodes)")

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    def cell(self, m) -> np.ndarray:
        return self.values[int(m[0]) + self.M, int(m[1]) + self.M]

    def norm(self, weights) -> float:
        return float(np.sqrt(np.sum(weights * np.abs(self.values) ** 2)))

    def inner(self, other: "TruncatedDomainFunction", weights) -> complex:
        return complex(np.sum(weights * self.values * np.conj(other.values)))

    def __add__(self, other):
        return TruncatedDomainFunction(self.M, self.values + other.values)

    def __sub__(self, other):
        return TruncatedDomainFunction(self.M, self.values - other.values)

    def scaled(self, c):
        return TruncatedDomainFunction(self.M, c * self.values)

    @classmethod
    def random(cls, M: int, nodes: int, seed=0):
        rng = np.random.default_rng(seed)
        n = 2 * M + 1
        v = rng.standard_normal((n, n, nodes)) + 1j * rng.standard_normal((n, n, nodes))
        return cls(M, v)

    @classmethod
    def from_callable(cls, f, M: int, cell):
        """Sample f(z + m) at every node of every cell |m|_inf <= M."""
        off = np.arange(-M, M + 1)
        m = off[:, None, None] + 1j * off[None, :, None]
        return cls(M, np.asarray(f(cell.nodes[None, None, :] + m), dtype=complex))


@dataclass(frozen=True)
class FloquetField:
    grid: QuasimomentumGrid
    values: np.ndarray = field(repr=False)    # (n, n, nodes)

    def at(self, k: int) -> np.ndarray:
        """Cell values at the k-th flattened grid node."""
        n = self.grid.resolution
        return self.values[k // n, k % n]

    def profile(self, weights) -> np.ndarray:
        """Rows (eta1, eta2, ||f^(., eta)||_cell) in grid order."""
        norms = np.sqrt(np.sum(weights * np.abs(self.values) ** 2, axis=-1)).ravel()
        return np.column_stack([self.grid.nodes, norms])

    def __add__(self, other):
        return FloquetField(self.grid, self.values + other.values)


def _phases(axis, offsets, sign):
    return np.exp(sign * 1j * axis[:, None] * offsets[None, :])


def forward(f: TruncatedDomainFunction, grid: QuasimomentumGrid) -> FloquetField:
    """f^(z, eta) = (1/2pi) sum_{|m| <= M} exp(-i eta.m) f(z + m)."""
    E = _phases(grid.axis, f.offsets, -1.0)               # (n, 2M+1)
    tmp = np.tensordot(E, f.values, axes=([1], [0]))      # (n, 2M+1, nodes)
    out = np.tensordot(E, tmp, axes=([1], [1]))           # (n, n, nodes)
    return FloquetField(grid, out.transpose(1, 0, 2) / TWO_PI)


def inverse(g: FloquetField, M: int) -> TruncatedDomainFunction:
    """f(z + m) = (1/2pi) * trapezoid over the grid of exp(i eta.m) f^(z, eta)."""
    grid = g.grid
    if not grid.resolves(M):
        warnings.warn(f"AliasRisk: resolution {grid.resolution} does not resolve "
                      f"index differences up to {2 * M}", AliasRisk, stacklevel=2)
    offsets = np.arange(-M, M + 1)
    E = _phases(grid.axis, offsets, 1.0) * grid.axis_weights[:, None]   # (n, 2M+1)
    tmp = np.tensordot(E, g.values, axes=([0], [0]))      # (2M+1, n, nodes)
    out = np.tensordot(E, tmp, axes=([0], [1]))           # (2M+1, 2M+1, nodes)
    return TruncatedDomainFunction(M, out.transpose(1, 0, 2) / TWO_PI)


def quasi_residual(g, eta, cell, n: int = 20) -> float:
    """Max residual of the quasiperiodic boundary conditions for a callable g."""
    left, right, bottom, top = cell.boundary_pairs(n)
    v = np.asarray(g(np.concatenate([left, right, bottom, top]))).reshape(4, n, -1)
    r1 = np.abs(v[1] - np.exp(1j * eta[0]) * v[0]).max()
    r2 = np.abs(v[3] - np.exp(1j * eta[1]) * v[2]).max()
    return float(max(r1, r2))


def unfold(g, eta, M: int, cell, check: bool = True) -> TruncatedDomainFunction:
    """Quasiperiodic extension G(z + m) = exp(i eta.m) g(z) to |m|_inf <= M.

    ``g`` is a callable on the closed cell.  Raises ResidualTooLarge when g
    violates the boundary phases by more than 1e-3, since the extension would
    then jump across cell edges.
    """
    if check:
        res = quasi_residual(g, eta, cell)
        if res > UNFOLD_TOLERANCE:
            raise ResidualTooLarge(f"ResidualTooLarge: boundary residual {res:.3g}")
    vals = np.asarray(g(cell.nodes), dtype=complex).reshape(cell.nodes.size)
    off = np.arange(-M, M + 1)
    ph = np.exp(1j * (eta[0] * off[:, None] + eta[1] * off[None, :]))
    return TruncatedDomainFunction(M, ph[:, :, None] * vals[None, None, :])


def fiber_bases(grid: QuasimomentumGrid, family, N: int, cache=None):
    """Bases at every grid node, in grid order (shared cache keyed by eta)."""
    cache = {} if cache is None else cache
    out = []
    for eta in grid.nodes:
        key = (float(eta[0]), float(eta[1]), N)
        if key not in cache:
            cache[key] = build_basis(eta, family, N)
        out.append(cache[key])
    return out


def project_fibers(g: FloquetField, bases) -> FloquetField:
    w = bases[0].cell.weights
    n = g.grid.resolution
    out = np.empty_like(g.values)
    for k, b in enumerate(bases):
        v = g.values[k // n, k % n]
        E = b.values
        out[k // n, k % n] = E @ (E.conj().T @ (w * v))
    return FloquetField(g.grid, out)


def project_omega(f: TruncatedDomainFunction, grid: QuasimomentumGrid, family, N: int = 4,
                  bases=None) -> TruncatedDomainFunction:
    """Periodic Bergman projection F^-1 (P_eta) F on the truncated domain."""
    bases = fiber_bases(grid, family, N) if bases is None else bases
    return inverse(project_fibers(forward(f, grid), bases), f.M)

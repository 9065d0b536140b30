"""Approximate quasiperiodic Bergman spaces on the cell.

Candidates are the elliptic functions 1, wp, wp', wp^2, wp wp', ... of
increasing pole order at alpha (all periodic, all analytic off the
obstacle).  Multiplying them by psi_eta gives functions with the
quasiperiodic boundary phases; a Gram eigendecomposition under the cell
quadrature turns them into an orthonormal set.  Kernel, projection and
parameter switch are then finite sums over that set.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, IllConditioned, LengthMismatch, OutsideCell, RankCollapse
from .lattice import wp, wp_prime
from .multiplier import MultiplierFamily

RANK_CUTOFF = 1e-10
COND_WARN = 1e8


def candidate_labels(N: int) -> list:
    if N < 1:
        raise ValueError("N must be >= 1")
    labels = ["1"]
    for k in range(2, N + 2):
        if k % 2 == 0:
            labels.append("wp^%d" % (k // 2) if k > 2 else "wp")
        else:
            j = (k - 3) // 2
            labels.append("wp'" if j == 0 else ("wp wp'" if j == 1 else "wp^%d wp'" % j))
    return labels


@lru_cache(maxsize=16)
def _node_wp(pair, trunc, cell):
    u = cell.nodes - pair.alpha
    return wp(u, trunc), wp_prime(u, trunc)


def candidate_values(z, N: int, family: MultiplierFamily, at_nodes: bool = False) -> np.ndarray:
    """Candidate elliptic functions at z, shape (len(z), N + 1).

    Column k (k = 0, then pole orders 2 .. N + 1) is wp^(k/2) for even pole
    order and wp^((k-3)/2) wp' for odd, all evaluated at z - alpha.
    ``at_nodes`` reuses cached values at the cell quadrature nodes.
    """
    if at_nodes:
        p, dp = _node_wp(family.pair, family.trunc, family.cell)
        z = family.cell.nodes
    else:
        z = np.asarray(z, dtype=complex).ravel()
        u = z - family.pair.alpha
        p = wp(u, family.trunc)
        dp = wp_prime(u, family.trunc)
    cols = [np.ones_like(z)]
    for k in range(2, N + 2):
        cols.append(p ** (k // 2) if k % 2 == 0 else p ** ((k - 3) // 2) * dp)
    return np.stack(cols, axis=1)


def candidate_set(family: MultiplierFamily, N: int) -> list:
    """Candidate evaluators ordered by pole order, as (label, callable) pairs."""
    labels = candidate_labels(N)

    def make(j):
        return lambda z: candidate_values(z, N, family)[:, j]
    return [(lab, make(j)) for j, lab in enumerate(labels)]


def _inv_sqrt(G, cutoff):
    lam, V = np.linalg.eigh(G)
    keep = lam > cutoff * lam.max()
    return V[:, keep] / np.sqrt(lam[keep]), lam, keep


@dataclass(frozen=True)
class QuasiBasis:
    """Orthonormal basis of span{psi_eta E_j} under the cell quadrature."""

    eta: tuple
    N: int
    family: MultiplierFamily = field(repr=False)
    coeff: np.ndarray = field(repr=False)       # candidates -> orthonormal set
    kept: tuple = ()
    values: np.ndarray = field(default=None, repr=False)   # (nodes, dim)
    condition: float = 1.0

    @property
    def dim(self) -> int:
        return self.coeff.shape[1]

    @property
    def cell(self):
        return self.family.cell

    def evaluate(self, z) -> np.ndarray:
        """Basis functions at arbitrary points of the closed cell, (len(z), dim)."""
        z = np.asarray(z, dtype=complex).ravel()
        cand = candidate_values(z, self.N, self.family)
        psi = self.family.psi_eta_batch(z, [self.eta])[:, 0]
        return (psi[:, None] * cand) @ self.coeff

    def gram(self) -> np.ndarray:
        w = self.cell.weights
        return (self.values.conj() * w[:, None]).T @ self.values

    def boundary_residual(self, n: int = 50) -> np.ndarray:
        """Per-function max residual of the quasiperiodic boundary conditions."""
        left, right, bottom, top = self.cell.boundary_pairs(n)
        e1, e2 = self.eta
        vals = self.evaluate(np.concatenate([left, right, bottom, top])).reshape(4, n, -1)
        r1 = np.abs(vals[1] - np.exp(1j * e1) * vals[0]).max(axis=0)
        r2 = np.abs(vals[3] - np.exp(1j * e2) * vals[2]).max(axis=0)
        return np.maximum(r1, r2)


def build_basis(eta, family: MultiplierFamily, N: int = 4, cell=None) -> QuasiBasis:
    """Orthonormalise psi_eta times the candidates by Gram eigendecomposition."""
    cell = family.cell if cell is None else cell
    if cell != family.cell:
        raise DimensionMismatch("basis cell differs from the certified family cell")
    eta = (float(eta[0]), float(eta[1]))
    nodes, w = cell.nodes, cell.weights
    cand = candidate_values(nodes, N, family, at_nodes=True)
    psi = family.psi_eta_batch(nodes, [eta])[:, 0]
    C = psi[:, None] * cand
    scale = 1.0 / np.sqrt(np.sum(w[:, None] * np.abs(C) ** 2, axis=0))
    Cn = C * scale
    G = (Cn.conj() * w[:, None]).T @ Cn
    T, lam, keep = _inv_sqrt(G, RANK_CUTOFF)
    if T.shape[1] == 0:
        raise RankCollapse("RankCollapse: no candidate survives the rank filter")
    cond = float(lam.max() / lam[keep].min())
    if cond > COND_WARN:
        warnings.warn(f"IllConditioned: Gram condition number {cond:.3g} at eta={eta}",
                      IllConditioned, stacklevel=2)
    E = Cn @ T
    # second pass removes the rounding left by the first
    G2 = (E.conj() * w[:, None]).T @ E
    T2, _, _ = _inv_sqrt(G2, 0.0)
    coeff = scale[:, None] * (T @ T2)
    values = C @ coeff
    kept = tuple(int(i) for i in np.flatnonzero(keep))
    return QuasiBasis(eta=eta, N=N, family=family, coeff=coeff, kept=kept,
                      values=values, condition=cond)


@dataclass(frozen=True)
class CellKernel:
    basis: QuasiBasis

    def _check(self, z):
        z = np.asarray(z, dtype=complex).ravel()
        if not np.all(self.basis.cell.in_cell(z)):
            raise OutsideCell("point outside the closed reference cell")
        return z

    def __call__(self, z, w):
        """Kernel matrix K(z_a, w_b) = sum_j e_j(z_a) conj(e_j(w_b))."""
        ez = self.basis.evaluate(self._check(z))
        ew = self.basis.evaluate(self._check(w))
        # real arithmetic, one rounding per product and no fused multiply-add,
        # so that swapping z and w gives the conjugate bit for bit
        zr, zi = ez.real[:, None, :], ez.imag[:, None, :]
        wr, wi = ew.real[None, :, :], ew.imag[None, :, :]
        re = np.sum(zr * wr + zi * wi, axis=-1)
        im = np.sum(zi * wr - zr * wi, axis=-1)
        return re + 1j * im

    def node_matrix(self) -> np.ndarray:
        E = self.basis.values
        return E @ E.conj().T


def kernel_eval(kernel: CellKernel, z, w) -> complex:
    return complex(kernel(np.atleast_1d(z), np.atleast_1d(w))[0, 0])


@dataclass(frozen=True)
class Projection:
    coefficients: np.ndarray
    basis: QuasiBasis

    @property
    def values(self) -> np.ndarray:
        return self.basis.values @ self.coefficients

    def __call__(self, z) -> np.ndarray:
        return self.basis.evaluate(z) @ self.coefficients


def project(kernel_or_basis, f) -> Projection:
    """Orthogonal projection of node samples f onto the basis span."""
    basis = kernel_or_basis.basis if isinstance(kernel_or_basis, CellKernel) else kernel_or_basis
    f = np.asarray(f, dtype=complex)
    if f.shape[0] != basis.values.shape[0]:
        raise LengthMismatch(f"expected {basis.values.shape[0]} node values, got {f.shape[0]}")
    c = basis.values.conj().T @ (basis.cell.weights * f if f.ndim == 1
                                 else basis.cell.weights[:, None] * f)
    return Projection(coefficients=c, basis=basis)


def projection_matrix(basis: QuasiBasis, symmetric: bool = True) -> np.ndarray:
    """Node-space projection matrix.

    With ``symmetric`` the matrix acts on sqrt(w) f, where the quadrature
    inner product is the Euclidean one, so it is an orthogonal projector.
    """
    E = basis.values
    if symmetric:
        Q = np.sqrt(basis.cell.weights)[:, None] * E
        return Q @ Q.conj().T
    return E @ (E.conj() * basis.cell.weights[:, None]).T


def param_switch(f, eta, mu, family: MultiplierFamily, points=None) -> np.ndarray:
    """J_{eta,mu} f = psi_{mu - eta} f at the cell nodes (or given points)."""
    pts = family.cell.nodes if points is None else np.asarray(points, dtype=complex).ravel()
    d = (mu[0] - eta[0], mu[1] - eta[1])
    return np.asarray(f) * family.psi_eta_batch(pts, [d])[:, 0]


def _projector_distance(Qa, Qb) -> float:
    """Spectral norm of Qa Qa^H - Qb Qb^H for orthonormal column blocks."""
    B, _ = np.linalg.qr(np.hstack([Qa, Qb]))
    Ma = B.conj().T @ Qa
    Mb = B.conj().T @ Qb
    D = Ma @ Ma.conj().T - Mb @ Mb.conj().T
    return float(np.max(np.abs(np.linalg.eigvalsh(D))))


def projection_distance(eta, mu, family: MultiplierFamily, cell=None, N: int = 4,
                        bases=None) -> float:
    """Operator norm of P_eta - P_mu on the quadrature node space."""
    if bases is None:
        ba, bb = build_basis(eta, family, N, cell), build_basis(mu, family, N, cell)
    else:
        ba, bb = bases
    if ba.values.shape[0] != bb.values.shape[0] or ba.cell != bb.cell:
        raise DimensionMismatch("bases built on different quadratures")
    if ba.eta == bb.eta and ba.N == bb.N:
        return 0.0
    sw = np.sqrt(ba.cell.weights)[:, None]
    return _projector_distance(sw * ba.values, sw * bb.values)

"""Toeplitz compressions on the cell, band sweeps and spectral checks.

The fiber operator at quasimomentum eta is the compression of multiplication
by a periodic symbol to the approximate space spanned by the cell basis;
its matrix in the orthonormal basis is E^H diag(w a) E.  The band union is
collected over a quasimomentum grid.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.optimize import linear_sum_assignment

from .bergman import build_basis
from .errors import (BadParameter, FloquetBergmanError, MemoryGuard, SweepAborted,
                     WindowUnresolved)
from .floquet import (QuasimomentumGrid, TruncatedDomainFunction, fiber_bases, forward,
                      inverse, project_fibers)
from .lattice import psi_rho_cells

log = logging.getLogger(__name__)

FAILURE_LIMIT = 0.05
ORACLE_MAX_DIM = 4000
HERMITIAN_SLACK = 1e-10


@dataclass(frozen=True)
class Symbol:
    """Trigonometric polynomial a(z) = sum c_jk exp(2 pi i (j x + k y))."""

    coefficients: tuple            # ((j, k, c), ...)
    real: bool = False

    def __post_init__(self):
        table = {}
        for j, k, c in self.coefficients:
            key = (int(j), int(k))
            table[key] = table.get(key, 0) + complex(c)
        if self.real:
            for (j, k), c in list(table.items()):
                partner = table.get((-j, -k))
                if partner is None:
                    raise BadParameter(f"real symbol lacks the conjugate of c[{j},{k}]")
                if abs(partner - np.conj(c)) > 1e-14 * max(1.0, abs(c)):
                    raise BadParameter(f"c[{-j},{-k}] is not the conjugate of c[{j},{k}]")
        object.__setattr__(self, "coefficients",
                           tuple((j, k, c) for (j, k), c in sorted(table.items())))

    @classmethod
    def constant(cls, c) -> "Symbol":
        return cls(((0, 0, c),), real=np.isreal(c))

    @classmethod
    def from_table(cls, rows, real: bool = False) -> "Symbol":
        """Rows [j, k, re, im]."""
        return cls(tuple((r[0], r[1], complex(r[2], r[3] if len(r) > 3 else 0.0))
                         for r in rows), real=real)

    @property
    def degree(self) -> int:
        return max(max(abs(j), abs(k)) for j, k, _ in self.coefficients)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        x, y = z.real, z.imag
        out = np.zeros(z.shape, dtype=complex)
        for j, k, c in self.coefficients:
            out = out + c * np.exp(2j * np.pi * (j * x + k * y))
        return out.real if self.real else out

    def to_dict(self) -> dict:
        return {"coefficients": [[j, k, c.real, c.imag] for j, k, c in self.coefficients],
                "real": self.real}

    def describe(self) -> str:
        return " + ".join(f"({c.real:g}{c.imag:+g}i)e[{j},{k}]" for j, k, c in self.coefficients)


def toeplitz_cell_matrix(a: Symbol, eta, basis) -> np.ndarray:
    """M_jk = (a e_k | e_j) under the cell quadrature."""
    E = basis.values
    w = basis.cell.weights * a(basis.cell.nodes)
    return (E.conj() * w[:, None]).T @ E


def _node_spectrum(M: np.ndarray, real: bool) -> np.ndarray:
    if real:
        if np.max(np.abs(M - M.conj().T)) > HERMITIAN_SLACK:
            raise FloquetBergmanError("compression of a real symbol is not Hermitian")
        return np.linalg.eigvalsh(0.5 * (M + M.conj().T)).astype(complex)
    lam = np.linalg.eigvals(M)
    return lam[np.lexsort((lam.imag, lam.real))]


def _merge(intervals, tol=0.0):
    out = []
    for lo, hi in sorted(intervals):
        if out and lo <= out[-1][1] + tol:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return out


@dataclass
class BandSpectrum:
    grid: QuasimomentumGrid
    etas: np.ndarray
    sheets: list                   # per node: sorted eigenvalues, or None if failed
    real: bool
    failures: list = field(default_factory=list)

    @property
    def failure_count(self) -> int:
        return len(self.failures)

    def points(self) -> np.ndarray:
        return np.concatenate([s for s in self.sheets if s is not None])

    def union(self):
        """Merged real intervals (real symbols) or the eigenvalue point cloud."""
        if not self.real:
            return self.points()
        d = max(len(s) for s in self.sheets if s is not None)
        iv = []
        for j in range(d):
            vals = [s[j].real for s in self.sheets if s is not None and len(s) > j]
            iv.append((min(vals), max(vals)))
        return _merge(iv)

    def rows(self):
        for eta, s in zip(self.etas, self.sheets):
            if s is None:
                continue
            for j, lam in enumerate(s):
                yield eta[0], eta[1], j, lam.real, lam.imag

    def summary(self, symbol: Symbol, N: int) -> dict:
        u = self.union()
        if self.real:
            union = [[float(lo), float(hi)] for lo, hi in u]
        else:
            union = [[float(p.real), float(p.imag)] for p in u]
        return {"symbol": symbol.to_dict(), "grid": self.grid.resolution, "N": N,
                "union": union, "failures": self.failure_count}

    def neighbour_jumps(self):
        """Matched eigenvalue jumps between grid neighbours along each axis.

        Returns rows (|eta - eta'|, max matched |lambda - lambda'|); matching
        is the minimal-cost assignment on |lambda_i - lambda'_j|.
        """
        n = self.grid.resolution
        out = []
        for a in range(n):
            for b in range(n):
                k = a * n + b
                for k2 in ((a + 1) * n + b if a + 1 < n else None,
                           a * n + b + 1 if b + 1 < n else None):
                    if k2 is None:
                        continue
                    s1, s2 = self.sheets[k], self.sheets[k2]
                    if s1 is None or s2 is None or len(s1) != len(s2):
                        continue
                    cost = np.abs(s1[:, None] - s2[None, :])
                    r, c = linear_sum_assignment(cost)
                    out.append((float(np.hypot(*(self.etas[k] - self.etas[k2]))),
                                float(cost[r, c].max())))
        return np.array(out)


def _threads(threads):
    if threads is None:
        threads = int(os.environ.get("FLOQUET_BERGMAN_THREADS", "1"))
    return max(1, int(threads))


def band_sweep(a: Symbol, grid: QuasimomentumGrid, family, N: int = 4,
               threads=None, failure_limit: float = FAILURE_LIMIT) -> BandSpectrum:
    """Eigenvalues of the fiber compressions at every grid node.

    Nodes are independent; results are gathered in grid order, so the output
    does not depend on the worker schedule.  A node whose basis or
    eigen-solve fails is skipped and counted; more than ``failure_limit`` of
    failed nodes aborts the sweep.
    """
    etas = grid.nodes
    # warm the eta-independent caches before fanning out
    build_basis((0.0, 0.0), family, N)

    def work(eta):
        try:
            b = build_basis(eta, family, N)
            return _node_spectrum(toeplitz_cell_matrix(a, eta, b), a.real), None
        except (FloquetBergmanError, np.linalg.LinAlgError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    nthreads = _threads(threads)
    if nthreads == 1:
        results = [work(e) for e in etas]
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            results = list(pool.map(work, etas))
    sheets = [r[0] for r in results]
    failures = [(float(e[0]), float(e[1]), r[1]) for e, r in zip(etas, results) if r[0] is None]
    if len(failures) > failure_limit * len(etas):
        raise SweepAborted(f"SweepAborted: {len(failures)} of {len(etas)} nodes failed")
    return BandSpectrum(grid=grid, etas=etas, sheets=sheets, real=a.real, failures=failures)


def hausdorff(A, B) -> float:
    A = np.asarray(A, dtype=complex).ravel()
    B = np.asarray(B, dtype=complex).ravel()
    D = np.abs(A[:, None] - B[None, :])
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def truncated_oracle(a: Symbol, M: int, family, N: int = 4, max_dim: int = ORACLE_MAX_DIM):
    """Galerkin spectrum of multiplication by a on the truncated domain.

    The trial space is spanned by the unfolded basis functions
    exp(i eta_k.m) e_j(z) for eta_k on the periodic grid of resolution
    2M + 1 and cells |m|_inf <= M.  Gram and stiffness matrices are assembled
    over all cells and node pairs; the eigenvalues of the pencil are returned.
    """
    if M < 1:
        raise BadParameter("oracle needs M >= 1")
    grid = QuasimomentumGrid(2 * M + 1, periodic=True)
    bases = [build_basis(eta, family, N) for eta in grid.nodes]
    dims = [b.dim for b in bases]
    D = sum(dims)
    if D > max_dim:
        raise MemoryGuard(f"MemoryGuard: oracle dimension {D} exceeds {max_dim}")
    off = np.arange(-M, M + 1)
    cells = (off[:, None] + 1j * off[None, :]).ravel()
    etas = grid.nodes
    # S[k, k'] = sum_m exp(i (eta_k' - eta_k).m)
    ph = np.exp(1j * (np.outer(etas[:, 0], cells.real) + np.outer(etas[:, 1], cells.imag)))
    S = ph.conj() @ ph.T
    w = family.cell.weights
    av = a(family.cell.nodes)
    E = np.hstack([b.values for b in bases])
    Gz = (E.conj() * w[:, None]).T @ E
    Az = (E.conj() * (w * av)[:, None]).T @ E
    block = np.repeat(np.arange(len(bases)), dims)
    Sx = S[np.ix_(block, block)]
    G = Sx * Gz
    A = Sx * Az
    if a.real:
        return linalg.eigh(0.5 * (A + A.conj().T), 0.5 * (G + G.conj().T),
                           eigvals_only=True).astype(complex)
    lam = linalg.eigvals(A, G)
    return lam[np.lexsort((lam.imag, lam.real))]


# --------------------------------------------------------------------------
# Weyl packets


@dataclass
class WeylPacket:
    mu: tuple
    lam: complex
    n: int
    rho: float
    mass: float
    G: TruncatedDomainFunction = field(repr=False)
    f: TruncatedDomainFunction = field(repr=False)
    damping_defect: float = 0.0
    residual: float = float("nan")


def _torus_dist(etas, mu):
    d = np.mod(etas - np.asarray(mu) + np.pi, 2 * np.pi) - np.pi
    return np.hypot(d[:, 0], d[:, 1])


def _choose_rho(G, n, family, w, coarse=tuple(range(0, -21, -1)), refine=8):
    """Largest rho = 2^s with ||G - psi^rho G|| <= 1/(n + 2).

    The defect grows with rho.  A coarse ladder of integer s brackets the
    threshold and one refinement pass subdivides the bracket.
    """
    target = 1.0 / (n + 2)
    M = G.M

    def defects(ss):
        psi = psi_rho_cells(family.cell.nodes, 2.0 ** np.asarray(ss, dtype=float), M,
                            family.pair, family.trunc)
        d = np.sqrt(np.sum(w * np.abs(G.values[None] * (1 - psi)) ** 2, axis=(1, 2, 3)))
        return d, psi

    ss = np.asarray(coarse, dtype=float)
    d, psi = defects(ss)
    ok = np.flatnonzero(d <= target)
    if ok.size == 0:
        raise FloquetBergmanError("no damping parameter meets the packet bound")
    i = int(ok[0])
    if i > 0:
        fine = ss[i] + (ss[i - 1] - ss[i]) * np.arange(1, refine) / refine
        d2, psi2 = defects(fine)
        ok2 = np.flatnonzero(d2 <= target)
        if ok2.size:
            k = int(ok2[-1])
            return 2.0 ** fine[k], float(d2[k]), psi2[k]
    return 2.0 ** ss[i], float(d[i]), psi[i]


def weyl_packet(a: Symbol, mu, n: int, family, N: int = 4, window_resolution: int = 129,
                M: int = 6, lam=None, project_damped: bool = True) -> WeylPacket:
    """Near-eigenfunction concentrated at quasimomentum mu, as in the Weyl criterion.

    The eta-window is n on the ball |eta - mu| < 1/n (torus distance),
    integrated with the trapezoid weights of a closed grid of
    ``window_resolution`` points per axis.  Fiber values are the cell
    eigenvector g carried to eta by the parameter switch psi_{eta - mu}.
    """
    if n < 2:
        raise BadParameter("concentration index n must be >= 2")
    mu = (float(mu[0]), float(mu[1]))
    cell = family.cell
    w = cell.weights
    b = build_basis(mu, family, N)
    T = toeplitz_cell_matrix(a, mu, b)
    vals, vecs = (np.linalg.eigh(0.5 * (T + T.conj().T)) if a.real else np.linalg.eig(T))
    i = int(np.argmax(vals.real)) if lam is None else int(np.argmin(np.abs(vals - lam)))
    lam = complex(vals[i])
    g = b.values @ vecs[:, i]

    wgrid = QuasimomentumGrid(window_resolution)
    etas, wts = wgrid.nodes, wgrid.weights
    inside = _torus_dist(etas, mu) < 1.0 / n
    if not np.any(inside):
        raise WindowUnresolved(f"WindowUnresolved: no grid node within 1/{n} of {mu}")
    etas, wts = etas[inside], wts[inside]
    chi = float(n)
    psi = family.psi_eta_batch(cell.nodes, etas - np.asarray(mu))     # (nodes, k)
    fib = psi * g[:, None]
    mass = float(np.sum(wts * chi**2 * np.sum(w[:, None] * np.abs(fib) ** 2, axis=0)))
    off = np.arange(-M, M + 1)
    ph = np.exp(1j * (off[:, None, None] * etas[None, None, :, 0]
                      + off[None, :, None] * etas[None, None, :, 1]))  # (2M+1, 2M+1, k)
    Gv = np.tensordot(ph * (wts * chi), fib, axes=([2], [1])) / (2 * np.pi)
    G = TruncatedDomainFunction(M, Gv)

    rho, defect, psi_r = _choose_rho(G, n, family, w)
    f = TruncatedDomainFunction(M, psi_r * G.values)
    if project_damped:
        f = _apply_fibers(f, family, N, None)
    return WeylPacket(mu=mu, lam=lam, n=n, rho=rho, mass=mass, G=G, f=f,
                      damping_defect=defect)


def _apply_fibers(f: TruncatedDomainFunction, family, N, a, cache=None):
    """F^-1 P_eta (a .) F on the periodic grid matching the truncation."""
    grid = QuasimomentumGrid(2 * f.M + 1, periodic=True)
    bases = fiber_bases(grid, family, N, cache)
    if a is not None:
        f = TruncatedDomainFunction(f.M, f.values * a(family.cell.nodes)[None, None, :])
    return inverse(project_fibers(forward(f, grid), bases), f.M)


def weyl_residual(a: Symbol, mu, lam, n: int, family, N: int = 4,
                  window_resolution: int = 129, M: int = 6,
                  project_damped: bool = True) -> WeylPacket:
    """||T_a f_n - lambda f_n|| / ||f_n|| on the truncated domain.

    T_a is the truncated compression (the oracle discretisation, applied
    fiberwise on the periodic grid of resolution 2M + 1).
    """
    p = weyl_packet(a, mu, n, family, N, window_resolution, M, lam, project_damped)
    w = family.cell.weights
    Tf = _apply_fibers(p.f, family, N, a)
    r = (Tf - p.f.scaled(p.lam)).norm(w) / p.f.norm(w)
    p.residual = float(r)
    return p

"""Quasimomentum multipliers psi_eta with a grid-certified radius R.

For |eta| <= R the multiplier is the twisted quotient psi~_eta itself; beyond
R it is the principal power psi~_{R eta/|eta|}^{|eta|/R}, which keeps the
quasiperiodic phase and stays bounded away from zero on the cell.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import BadParameter, BranchViolation, NoPositiveR
from .geometry import PeriodicCell
from .lattice import (DEFAULT_PAIR, DEFAULT_TRUNCATION, EllipticPair, Truncation,
                      psi_rho, psi_tilde_eta_batch, varphi)

log = logging.getLogger(__name__)

CERTIFY_MARGIN = 0.7
_LEVEL_DIGITS = 12


def eta_axis(resolution: int) -> np.ndarray:
    """Uniform endpoint-inclusive samples of [-pi, pi]."""
    return np.linspace(-np.pi, np.pi, int(resolution))


def _levels(resolution: int):
    """Grid etas grouped by |eta|, ascending; the level 0 is always present."""
    ax = eta_axis(resolution)
    etas = np.array([(a, b) for a in ax for b in ax])
    etas = np.vstack([[0.0, 0.0], etas])
    r = np.round(np.hypot(etas[:, 0], etas[:, 1]), _LEVEL_DIGITS)
    out = []
    for lev in np.unique(r):
        pts = np.unique(etas[r == lev], axis=0)
        out.append((float(lev), pts))
    return out


def find_R(pair: EllipticPair = DEFAULT_PAIR, trunc: Truncation = DEFAULT_TRUNCATION,
           cell: PeriodicCell | None = None, resolution: int = 33,
           margin: float = CERTIFY_MARGIN, points=None):
    """Largest grid |eta| below which sup |psi~_eta - 1| <= margin at every level.

    Levels are scanned in increasing |eta| and the scan stops at the first
    failing level.  Returns ``(R, table)`` where ``table`` holds rows
    ``(|eta|, sup |psi~ - 1|, inf |psi~|)`` for every scanned level.
    """
    if resolution < 32:
        raise BadParameter("eta grid resolution must be >= 32")
    cell = cell or PeriodicCell()
    pts = cell.sample_points() if points is None else np.asarray(points, dtype=complex)
    R = None
    table = []
    for lev, etas in _levels(resolution):
        vals = psi_tilde_eta_batch(pts, etas, pair, trunc)
        sup = float(np.max(np.abs(vals - 1)))
        inf = float(np.min(np.abs(vals)))
        table.append((lev, sup, inf))
        if sup > margin:
            break
        R = lev
    if R is None or R <= 0:
        raise NoPositiveR("NoPositiveR: the smallest nonzero |eta| already fails "
                          f"(sup |psi~ - 1| = {table[-1][1]:.3g} > {margin})")
    return R, np.array(table)


def fit_beta(pair: EllipticPair = DEFAULT_PAIR, trunc: Truncation = DEFAULT_TRUNCATION,
             cell: PeriodicCell | None = None, lo=1e-3, hi=1e-1, n=9, directions=4):
    """Fit sup |psi~_eta - 1| ~ C |eta|^beta over lo <= |eta| <= hi.

    Returns ``(beta, C, r2)``; C is the smallest constant that bounds every
    sample with the fitted exponent.
    """
    cell = cell or PeriodicCell()
    pts = cell.nodes
    r = np.geomspace(lo, hi, n)
    ang = np.pi * np.arange(directions) / directions + 0.1
    sups = np.zeros(n)
    for a in ang:
        etas = np.c_[r * np.cos(a), r * np.sin(a)]
        vals = psi_tilde_eta_batch(pts, etas, pair, trunc)
        sups = np.maximum(sups, np.abs(vals - 1).max(axis=0))
    x, y = np.log(r), np.log(sups)
    beta, c0 = np.polyfit(x, y, 1)
    resid = y - (beta * x + c0)
    r2 = 1 - np.sum(resid**2) / np.sum((y - y.mean()) ** 2)
    C = float(np.max(sups / r**beta))
    return float(beta), C, float(r2)


@dataclass(frozen=True)
class MultiplierFamily:
    """Certified family psi^(rho), psi_eta for one pair, truncation and cell."""

    pair: EllipticPair = DEFAULT_PAIR
    trunc: Truncation = DEFAULT_TRUNCATION
    cell: PeriodicCell = field(default_factory=PeriodicCell)
    R: float = 0.0
    beta: float = float("nan")
    beta_constant: float = float("nan")
    varphi_floor: float = 0.0
    resolution: int = 33
    table: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.R > 0:
            raise BadParameter("R must be positive; use MultiplierFamily.certify")

    @classmethod
    def certify(cls, pair: EllipticPair = DEFAULT_PAIR,
                trunc: Truncation = DEFAULT_TRUNCATION,
                cell: PeriodicCell | None = None, resolution: int = 33,
                fit: bool = True) -> "MultiplierFamily":
        cell = cell or PeriodicCell()
        R, table = find_R(pair, trunc, cell, resolution)
        floor = float(np.min(np.abs(varphi(cell.sample_points(), pair, trunc))))
        beta, C = float("nan"), float("nan")
        if fit:
            beta, C, _ = fit_beta(pair, trunc, cell)
        log.info("certified R=%.6g beta=%.4g varphi_floor=%.4g", R, beta, floor)
        return cls(pair=pair, trunc=trunc, cell=cell, R=R, beta=beta,
                   beta_constant=C, varphi_floor=floor, resolution=resolution,
                   table=table)

    def psi_tilde(self, z, etas):
        return psi_tilde_eta_batch(z, etas, self.pair, self.trunc)

    def psi_eta_batch(self, z, etas):
        """psi_eta at points z for each row of etas; shape (len(z), len(etas))."""
        z = np.asarray(z, dtype=complex).ravel()
        etas = np.atleast_2d(np.asarray(etas, dtype=float))
        r = np.hypot(etas[:, 0], etas[:, 1])
        far = r > self.R
        scaled = etas.copy()
        scaled[far] *= (self.R / r[far])[:, None]
        out = self.psi_tilde(z, scaled)
        if np.any(far):
            w = out[:, far]
            if np.any(w.real <= 0):
                raise BranchViolation(
                    "BranchViolation: psi~ has nonpositive real part on the R-sphere")
            out[:, far] = np.exp((r[far] / self.R) * np.log(w))
        out[:, r == 0] = 1.0        # psi_0 is identically 1
        return out

    def psi_eta(self, z, eta):
        z = np.asarray(z, dtype=complex)
        val = self.psi_eta_batch(z.ravel(), [eta])[:, 0].reshape(z.shape)
        return val[()] if z.ndim == 0 else val

    def psi_rho(self, z, rho):
        return psi_rho(z, rho, self.pair, self.trunc, domain=self.cell)

    def to_dict(self) -> dict:
        return {"R": self.R, "beta": self.beta, "beta_constant": self.beta_constant,
                "varphi_floor": self.varphi_floor, "resolution": self.resolution}

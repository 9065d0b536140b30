"""Periodic cell geometry: unit square minus a disk obstacle, and quadrature.

The quadrature is built in polar coordinates about the obstacle centre.  The
annular region between the circle and the square boundary is split into four
sectors (one per side of the square); in each sector the outer radius is a
smooth function of the angle, so composite Gauss-Legendre panels in
(angle, normalised radius) integrate smooth integrands spectrally.  Panels are
graded toward the sector ends and toward the circle, where the elliptic
candidates have their nearest singularities.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadParameter, DegenerateCell

# normalised panel breakpoints
_ANGLE_PANELS = np.array([0.0, 0.08, 0.25, 0.5, 0.75, 0.92, 1.0])
_RADIAL_PANELS = np.array([0.0, 0.08, 0.25, 0.55, 1.0])


@dataclass(frozen=True)
class Obstacle:
    center: complex = 0.5 + 0.5j
    radius: float = 0.4

    def __post_init__(self):
        c = complex(self.center)
        if self.radius <= 0:
            raise BadParameter("obstacle radius must be positive")
        clearance = min(c.real, 1 - c.real, c.imag, 1 - c.imag)
        if clearance <= self.radius:
            raise BadParameter("obstacle must lie strictly inside the unit square")

    def covers(self, points) -> bool:
        return bool(np.all(np.abs(np.asarray(points) - self.center) < self.radius))

    @property
    def area(self) -> float:
        return float(np.pi * self.radius**2)


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape:
            raise BadParameter("node and weight counts differ")
        if np.any(self.weights <= 0):
            raise BadParameter("quadrature weights must be positive")

    def integrate(self, values):
        return np.sum(self.weights * values)

    def inner(self, f, g):
        """(f | g) = sum w f conj(g)."""
        return np.sum(self.weights * f * np.conj(g))

    def norm(self, f) -> float:
        return float(np.sqrt(np.sum(self.weights * np.abs(f) ** 2)))

    def __len__(self):
        return self.nodes.size


def _gauss_panels(breaks, n, lo, hi):
    x, w = np.polynomial.legendre.leggauss(n)
    pts, wts = [], []
    b = lo + (hi - lo) * breaks
    for a0, a1 in zip(b[:-1], b[1:]):
        pts.append(0.5 * (a1 - a0) * x + 0.5 * (a1 + a0))
        wts.append(0.5 * (a1 - a0) * w)
    return np.concatenate(pts), np.concatenate(wts)


def _sectors(obstacle: Obstacle):
    """(theta_start, theta_end, outer_radius(theta)) for the four sides."""
    c = complex(obstacle.center)
    corners = np.array([1 + 0j, 1 + 1j, 1j, 0j]) - c
    ang = np.angle(corners)
    ang = np.unwrap(np.concatenate([ang, ang[:1]]))
    if ang[-1] < ang[0]:
        ang[-1] += 2 * np.pi
    sides = [
        lambda th: (1 - c.real) / np.cos(th),    # right, between corners (1,0),(1,1)
        lambda th: (1 - c.imag) / np.sin(th),    # top
        lambda th: -c.real / np.cos(th),         # left
        lambda th: -c.imag / np.sin(th),         # bottom
    ]
    # corners listed (1,0),(1,1),(0,1),(0,0): side i spans corner i -> i+1
    return [(ang[i], ang[i + 1], sides[i]) for i in range(4)]


def build_quadrature(obstacle: Obstacle = Obstacle(), order: int = 8) -> QuadratureRule:
    """Composite polar Gauss-Legendre rule on the unit square minus the disk."""
    if order < 4:
        raise BadParameter("quadrature order must be >= 4")
    a = obstacle.radius
    c = complex(obstacle.center)
    s, ws = _gauss_panels(_RADIAL_PANELS, order, 0.0, 1.0)
    nodes, weights = [], []
    for th0, th1, outer in _sectors(obstacle):
        th, wth = _gauss_panels(_ANGLE_PANELS, order, th0, th1)
        rmax = outer(th)
        span = rmax - a
        r = a + span[:, None] * s[None, :]
        w = wth[:, None] * ws[None, :] * span[:, None] * r
        nodes.append((c + r * np.exp(1j * th[:, None])).ravel())
        weights.append(w.ravel())
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    if nodes.size < 16:
        raise DegenerateCell("fewer than 16 quadrature nodes survive")
    exact_area = 1.0 - obstacle.area
    weights = weights * (exact_area / weights.sum())
    return QuadratureRule(nodes=nodes, weights=weights, order=order)


def disk_complement_moments(obstacle: Obstacle):
    """Exact integrals of 1, x, y, x^2, xy, y^2 over Q minus the disk."""
    cx, cy = complex(obstacle.center).real, complex(obstacle.center).imag
    r = obstacle.radius
    A = np.pi * r**2
    disk = {
        "1": A,
        "x": A * cx,
        "y": A * cy,
        "xx": A * cx**2 + A * r**2 / 4,
        "xy": A * cx * cy,
        "yy": A * cy**2 + A * r**2 / 4,
    }
    square = {"1": 1.0, "x": 0.5, "y": 0.5, "xx": 1 / 3, "xy": 0.25, "yy": 1 / 3}
    return {k: square[k] - disk[k] for k in square}


@dataclass(frozen=True)
class PeriodicCell:
    """Unit square minus a closed disk, with a quadrature rule."""

    obstacle: Obstacle = Obstacle()
    order: int = 8
    quadrature: QuadratureRule = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.quadrature is None:
            object.__setattr__(self, "quadrature", build_quadrature(self.obstacle, self.order))

    @property
    def nodes(self) -> np.ndarray:
        return self.quadrature.nodes

    @property
    def weights(self) -> np.ndarray:
        return self.quadrature.weights

    def contains(self, z):
        """Membership in the periodic domain and the translate index.

        Returns ``(inside, m)`` where ``m = floor(Re z) + i floor(Im z)`` is the
        index of the closed cell containing ``z`` (lower-left convention on
        shared edges).
        """
        z = np.asarray(z, dtype=complex)
        m = np.floor(z.real) + 1j * np.floor(z.imag)
        ztr = z - m
        inside = np.abs(ztr - self.obstacle.center) > self.obstacle.radius
        if z.ndim == 0:
            return bool(inside), complex(m)
        return inside, m

    def in_cell(self, z) -> np.ndarray:
        """Membership in the closure of the reference cell itself."""
        z = np.asarray(z, dtype=complex)
        return ((z.real >= 0) & (z.real <= 1) & (z.imag >= 0) & (z.imag <= 1)
                & (np.abs(z - self.obstacle.center) > self.obstacle.radius))

    def boundary_pairs(self, n: int = 20):
        """Sample pairs on opposite edges of the square.

        Returns ``(left, right, bottom, top)`` with right = left + 1 and
        top = bottom + i, sampled at interior points of the edges.
        """
        s = (np.arange(n) + 0.5) / n
        left = 1j * s
        bottom = s.astype(complex)
        return left, left + 1, bottom, bottom + 1j

    def sample_points(self, n_edge: int = 64, n_circle: int = 256) -> np.ndarray:
        """Quadrature nodes plus points on the square edges and obstacle circle."""
        s = np.arange(n_edge) / n_edge
        edges = np.concatenate([s, 1 + 1j * s, 1 - s + 1j, 1j * (1 - s)])
        th = 2 * np.pi * np.arange(n_circle) / n_circle
        circle = self.obstacle.center + self.obstacle.radius * (1 + 1e-9) * np.exp(1j * th)
        return np.concatenate([self.nodes, edges, circle])

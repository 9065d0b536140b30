"""Lattice sums on the Gaussian lattice Z + iZ.

All lattice sums here are truncated to a square window of half-width
``radius`` centred on the *cell centre* of the argument: for ``u`` in the
unit cell ``n0 + [0, 1)^2`` the summation runs over the lattice points ``m``
with ``u - m = t + v``, ``t = u - n0 - (1+i)/2`` and ``v`` in the fixed,
four-fold symmetric set ``V = {(1+i)/2 + Z^2 : |v|_inf < radius}``.

Because the window moves rigidly with the cell, every truncated sum is
exactly periodic (or exactly quasiperiodic, for twisted weights) and is
analytic inside each cell.  The orbit symmetry of ``V`` kills all Laurent
moments ``sum v^-k`` with ``k`` not divisible by 4; the surviving moments of
the tail are known in closed form from the lemniscatic invariant ``G4``, so
``wp`` and ``wp_prime`` carry an analytic tail correction and are accurate to
rounding level at the default radius.  The ``*_with_bound`` variants also
return a rigorous bound on what the correction leaves out plus a rounding
estimate.

Twisted sums with weights exp(i eta.m) of the cube seed are not window
truncated: rows of the lattice near u are summed in closed form (a
derivative of pi exp(a w)/sin(pi w)) and the remaining rows collapse to a
few Fourier modes, each a geometric series in the row index.  This makes
the twisted quotient continuous in eta and exact to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, gamma, pi

import numpy as np
from scipy import fft as sp_fft
from scipy import integrate

from .errors import BadParameter, OutsideDomain, PoleProximity

HALF = 0.5 + 0.5j

# Sum over nonzero lattice points of m^-4 for the square lattice.
G4 = gamma(0.25) ** 8 / (960.0 * pi**2)

# Moments sum_{v in HALF + Lambda} v^-k (orbit-wise summation); these are
# the Taylor coefficients of wp at the half period (1+i)/2, where wp = 0,
# obtained from wp'' = 6 wp^2 - g2/2 with g2 = 60 G4.
_S4 = -5.0 * G4
_S8 = 54.0 * _S4**2 / 210.0
_S12 = 252.0 * _S4 * _S8 / 990.0
_SHIFTED_MOMENTS = {4: _S4, 8: _S8, 12: _S12}

_CHUNK_ELEMENTS = 2_000_000


class Lattice:
    """The lattice {m : Re m, Im m in Z}, enumerated by square shells."""

    @staticmethod
    def shell(k: int) -> np.ndarray:
        """Lattice points with max(|Re m|, |Im m|) == k, counter-clockwise."""
        if k < 0:
            raise BadParameter("shell index must be nonnegative")
        if k == 0:
            return np.array([0j])
        side = np.arange(-k, k)
        pts = np.concatenate([
            k + 1j * side,          # right edge, going up
            -side + 1j * k,         # top edge, going left
            -k - 1j * side,         # left edge, going down
            side - 1j * k,          # bottom edge, going right
        ])
        return pts

    @classmethod
    def points(cls, radius: float) -> np.ndarray:
        """All lattice points with |m|_inf <= radius, shell-major order."""
        kmax = int(np.floor(radius))
        return np.concatenate([cls.shell(k) for k in range(kmax + 1)])


@dataclass(frozen=True)
class Truncation:
    """Truncation policy shared by all lattice sums.

    ``radius`` is the half-width of the square summation window;
    ``epsilon_pole`` is the exclusion distance for the Weierstrass functions
    and ``guard`` the (larger) exclusion annulus used for multiplier quotients.
    """

    radius: int = 40
    tail_tolerance: float = 1e-10
    epsilon_pole: float = 1e-8
    guard: float = 1e-3

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 2:
            raise BadParameter("truncation radius must be an integer >= 2")
        if self.epsilon_pole <= 0 or self.guard <= 0 or self.tail_tolerance <= 0:
            raise BadParameter("tolerances must be positive")

    def to_dict(self) -> dict:
        return {
            "truncation_radius": int(self.radius),
            "tail_tolerance": self.tail_tolerance,
            "epsilon_pole": self.epsilon_pole,
            "guard": self.guard,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Truncation":
        return cls(
            radius=int(d.get("truncation_radius", 40)),
            tail_tolerance=float(d.get("tail_tolerance", 1e-10)),
            epsilon_pole=float(d.get("epsilon_pole", 1e-8)),
            guard=float(d.get("guard", 1e-3)),
        )


DEFAULT_TRUNCATION = Truncation()


@lru_cache(maxsize=8)
def _window(radius: int):
    """Offsets v (shape (2R, 2R)) and integer shifts k = HALF - v per axis."""
    a = np.arange(-radius, radius)
    v = (a[:, None] + 0.5) + 1j * (a[None, :] + 0.5)
    ka = -a.astype(float)
    v.setflags(write=False)
    return v, ka, ka.copy()


@lru_cache(maxsize=8)
def _tail_moments(radius: int) -> dict:
    v, _, _ = _window(radius)
    return {k: s - np.sum(v ** (-k)) for k, s in _SHIFTED_MOMENTS.items()}


def _reduce(u):
    n0 = np.floor(u.real) + 1j * np.floor(u.imag)
    return n0, u - n0 - HALF


def _tail_correction(t, order: int, radius: int):
    """Tail of sum_v (t + v)^-order outside the window, from the moments."""
    moments = _tail_moments(radius)
    out = np.zeros_like(t)
    for n in range(0, 13):
        k = order + n
        if k % 4 or k not in moments:
            continue
        out = out + (-1) ** n * comb(order + n - 1, n) * moments[k] * t**n
    return out


def _as_array(z):
    z = np.asarray(z, dtype=complex)
    return z, z.ndim == 0


def _check_poles(u, eps, what):
    d = np.abs(u - (np.round(u.real) + 1j * np.round(u.imag)))
    if np.any(d < eps):
        raise PoleProximity(f"PoleProximity: {what} evaluated within {eps:g} of a pole")


def _power_sum(u, order: int, radius: int, with_abs: bool = False):
    """sum_{v in V} (t + v)^-order, t the cell-relative part of u.

    With ``with_abs`` also returns sum |t + v|^-order, the scale of the
    floating-point rounding in the sum, and sum |t + v|^-(order+1), which
    measures the sensitivity to rounding of the argument itself.
    """
    v, _, _ = _window(radius)
    flat_v = v.ravel()
    _, t = _reduce(u.ravel())
    out = np.empty(t.shape, dtype=complex)
    mag = np.empty(t.shape) if with_abs else None
    dmag = np.empty(t.shape) if with_abs else None
    step = max(1, _CHUNK_ELEMENTS // flat_v.size)
    for s in range(0, t.size, step):
        terms = (t[s:s + step, None] + flat_v[None, :]) ** (-order)
        out[s:s + step] = np.sum(terms, axis=1)
        if with_abs:
            a = np.abs(terms)
            mag[s:s + step] = np.sum(a, axis=1)
            dmag[s:s + step] = np.sum(a ** ((order + 1) / order), axis=1)
    if with_abs:
        return (out.reshape(u.shape), t.reshape(u.shape), mag.reshape(u.shape),
                dmag.reshape(u.shape))
    return out.reshape(u.shape), t.reshape(u.shape)


@lru_cache(maxsize=32)
def corrected_tail_bound(order: int, radius: int) -> float:
    """Rigorous bound on the error left after the moment correction.

    The correction reproduces every Taylor term of the omitted tail whose
    moment order order + n is below 16.  The rest is bounded termwise with
    |t| <= sqrt(2)/2 and sum_{v omitted} |v|^-k <= 2 pi int_R^inf s (s - sqrt(2)/2)^-k ds,
    since every omitted offset has |v|_inf >= R + 1/2 and owns a unit square
    inside |x|_inf >= R.
    """
    c = np.sqrt(2.0) / 2
    total = 0.0
    for n in range(max(0, 16 - order), 16 - order + 80):
        k = order + n
        mom = 2 * pi * ((radius - c) ** (2 - k) / (k - 2) + c * (radius - c) ** (1 - k) / (k - 1))
        total += comb(k - 1, n) * c**n * mom
    return float(total)


def _rounding(mag, n_terms):
    return np.finfo(float).eps * (np.log2(n_terms) + 4) * mag


def _with_bound(z, order, trunc, coeff):
    s, t, mag, dmag = _power_sum(z, order, trunc.radius, with_abs=True)
    corr = _tail_correction(t, order, trunc.radius)
    n_terms = _window(trunc.radius)[0].size
    eps = np.finfo(float).eps
    # argument rounding: reducing u to its cell perturbs t by ~eps (|u| + 1)
    arg = eps * (np.abs(z) + 1) * order * dmag
    bound = abs(coeff) * (corrected_tail_bound(order, trunc.radius)
                          + _rounding(mag + np.abs(corr), n_terms) + arg)
    return coeff * (s + corr), bound


def wp(z, trunc: Truncation = DEFAULT_TRUNCATION):
    """Weierstrass wp for the lattice Z + iZ.

    Window-truncated lattice sum plus the analytic tail correction; see
    ``wp_with_bound`` for the accompanying error bound.
    """
    z, scalar = _as_array(z)
    _check_poles(z, trunc.epsilon_pole, "wp")
    s, t = _power_sum(z, 2, trunc.radius)
    val = s + _tail_correction(t, 2, trunc.radius)
    return val[()] if scalar else val


def wp_with_bound(z, trunc: Truncation = DEFAULT_TRUNCATION):
    """(wp(z), error bound): corrected tail remainder plus rounding."""
    z, scalar = _as_array(z)
    _check_poles(z, trunc.epsilon_pole, "wp")
    val, bound = _with_bound(z, 2, trunc, 1.0)
    return (val[()], bound[()]) if scalar else (val, bound)


def wp_prime(z, trunc: Truncation = DEFAULT_TRUNCATION):
    """Derivative of wp, the termwise sum of -2 (z - m)^-3."""
    z, scalar = _as_array(z)
    _check_poles(z, trunc.epsilon_pole, "wp_prime")
    s, t = _power_sum(z, 3, trunc.radius)
    val = -2.0 * (s + _tail_correction(t, 3, trunc.radius))
    return val[()] if scalar else val


def wp_prime_with_bound(z, trunc: Truncation = DEFAULT_TRUNCATION):
    z, scalar = _as_array(z)
    _check_poles(z, trunc.epsilon_pole, "wp_prime")
    val, bound = _with_bound(z, 3, trunc, -2.0)
    return (val[()], bound[()]) if scalar else (val, bound)


@dataclass(frozen=True)
class EllipticPair:
    """Seed ``phi(z) = coefficient * (z - alpha)^-b`` and its lattice sum.

    With the defaults ``b = 3``, ``coefficient = -2`` the periodised sum is
    ``wp'(z - alpha)``.
    """

    alpha: complex = 0.25 + 0.25j
    b: int = 3
    coefficient: complex = -2.0

    def __post_init__(self):
        a = complex(self.alpha)
        if not (0 < a.real < 0.5 and 0 < a.imag < 0.5):
            raise BadParameter("alpha must lie in the open square (0, 1/2)^2")
        if int(self.b) != self.b or self.b < 3:
            raise BadParameter("decay exponent b must be an integer > 2")

    @property
    def poles(self) -> tuple:
        return (complex(self.alpha),)

    @property
    def special_points(self) -> np.ndarray:
        """alpha and its three half-period translates (zeros of varphi for b=3)."""
        a = complex(self.alpha)
        return np.array([a, a + 0.5, a + 0.5j, a + 0.5 + 0.5j])

    def to_dict(self) -> dict:
        a = complex(self.alpha)
        return {"alpha": [a.real, a.imag], "b": int(self.b)}


DEFAULT_PAIR = EllipticPair()


def phi(z, pair: EllipticPair = DEFAULT_PAIR, trunc: Truncation = DEFAULT_TRUNCATION):
    """Closed-form seed function."""
    z, scalar = _as_array(z)
    w = z - pair.alpha
    if np.any(np.abs(w) < trunc.epsilon_pole):
        raise PoleProximity("PoleProximity: phi evaluated at its pole")
    val = pair.coefficient * w ** (-pair.b)
    return val[()] if scalar else val


def estimate_d_phi(pair: EllipticPair = DEFAULT_PAIR, r_min=2.0, r_max=50.0, n=4000, seed=0):
    """Sampled sup of (1 + |z|)^b |phi(z)| over the annulus r_min <= |z| <= r_max."""
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.uniform(r_min**2, r_max**2, n))
    r = np.concatenate([r, [r_min, r_max]])
    th = rng.uniform(0, 2 * np.pi, r.size)
    z = r * np.exp(1j * th)
    # the sup over the inner circle dominates; add a dense ring there
    ring = r_min * np.exp(2j * np.pi * np.arange(720) / 720)
    z = np.concatenate([z, ring])
    return float(np.max((1 + np.abs(z)) ** pair.b * np.abs(phi(z, pair))))


def _raw_varphi(z, pair, trunc):
    u = z - pair.alpha
    s, t = _power_sum(u, pair.b, trunc.radius)
    return pair.coefficient * s, t


def varphi(z, pair: EllipticPair = DEFAULT_PAIR, trunc: Truncation = DEFAULT_TRUNCATION):
    """Periodised seed sum_m phi(z - m) (wp'(z - alpha) for the default pair)."""
    z, scalar = _as_array(z)
    _check_poles(z - pair.alpha, trunc.epsilon_pole, "varphi")
    s, t = _raw_varphi(z, pair, trunc)
    val = s + pair.coefficient * _tail_correction(t, pair.b, trunc.radius)
    return val[()] if scalar else val


def varphi_with_bound(z, pair: EllipticPair = DEFAULT_PAIR,
                      trunc: Truncation = DEFAULT_TRUNCATION):
    """(varphi(z), error bound) for the periodised seed."""
    z, scalar = _as_array(z)
    _check_poles(z - pair.alpha, trunc.epsilon_pole, "varphi")
    val, bound = _with_bound(z - pair.alpha, pair.b, trunc, pair.coefficient)
    return (val[()], bound[()]) if scalar else (val, bound)


def truncation_tail_bound(pair: EllipticPair = DEFAULT_PAIR, radius: float = 40.0,
                          delta: float = 0.0) -> float:
    """Upper bound for sum_{m outside window} |m|^w sup_{z in K} |phi(z - m)|.

    ``w = b - 2 - delta`` for a weighted bound (0 < delta < b - 2), ``w = 0``
    for the plain tail (delta = 0).  K is any set whose cell-relative offsets
    lie in the unit square, which covers cl(cell).  Integral comparison: each
    omitted point owns a unit square, so |v| >= |x| - sqrt(2)/2 there, and the
    offsets satisfy |t| <= sqrt(2)/2.
    """
    b = pair.b
    if not (0.0 <= delta < b - 2):
        raise BadParameter(f"delta must lie in [0, {b - 2})")
    if radius < 2:
        raise BadParameter("radius must be >= 2")
    c = np.sqrt(2.0)
    if radius <= c:
        raise BadParameter("radius too small for the comparison integral")
    weight_exp = 0.0 if delta == 0 else b - 2 - delta
    amp = abs(pair.coefficient)

    def integrand(s):
        # |m| <= |v| + 1 for lattice points attached to cells near the origin
        return 2 * np.pi * s * amp * (s + 1.0) ** weight_exp / (s - c) ** b

    val, _ = integrate.quad(integrand, radius, np.inf, limit=200)
    return float(val)


# --------------------------------------------------------------------------
# weighted lattice sums and multipliers


_NEAR_ROWS = 3
_FAR_MODES = 8


def _row_cubes(w, theta):
    """sum_k exp(i theta k) (w - k)^-3 for theta in [0, 2 pi), closed form.

    Half the second derivative of pi exp(-i (pi - theta) w) / sin(pi w), the
    partial-fraction expansion of the twisted first-order row sum.
    """
    a = -1j * (np.pi - theta)
    S = 1.0 / np.sin(np.pi * w)
    C = np.cos(np.pi * w) * S
    return 0.5 * np.pi * np.exp(a * w) * S * (
        a * a - 2 * a * np.pi * C + np.pi**2 * (S * S + C * C))


def _twisted_cubes(u, etas):
    """sum_m exp(i eta.m) (u - m)^-3, exact to rounding; shape (nu, ne).

    Rows with |Im m| < 3 use the closed-form row sum.  The remaining rows are
    expanded in their Fourier modes, where each mode is a geometric series in
    the row index and is summed in closed form.
    """
    n0 = np.floor(u.real) + 1j * np.floor(u.imag)
    up = (u - n0)[:, None]
    theta = np.mod(etas[:, 0], 2 * np.pi)[None, :]
    e2 = etas[:, 1][None, :]
    K = _NEAR_ROWS
    out = np.zeros((u.size, etas.shape[0]), dtype=complex)
    for k2 in range(-K + 1, K):
        out += np.exp(1j * e2 * k2) * _row_cubes(up - 1j * k2, theta)
    for p in range(_FAR_MODES):
        # rows below (Im m <= -K) carry the modes s > 0, rows above s < 0
        for s, sign in ((theta + 2 * np.pi * p, 1.0), (theta - 2 * np.pi * (p + 1), -1.0)):
            x = -sign * s - 1j * sign * e2            # geometric ratio exp(x)
            with np.errstate(invalid="ignore", divide="ignore"):
                g = np.exp(K * x) / (-np.expm1(x))
                term = sign * np.pi * 1j * s * s * np.exp(1j * s * up) * g
            out += np.where(s == 0, 0.0, term)
    phase = np.exp(1j * (n0.real[:, None] * etas[:, 0] + n0.imag[:, None] * etas[:, 1]))
    return out * phase


def _window_twisted(z, etas, pair, trunc):
    e1, e2 = etas[:, 0], etas[:, 1]
    v, ka, kb = _window(trunc.radius)
    na, nb = v.shape
    E1 = np.exp(1j * ka[:, None] * e1[None, :])          # (A, ne)
    E2 = np.exp(1j * kb[:, None] * e2[None, :])          # (B, ne)
    n0, t = _reduce(z - pair.alpha)
    out = np.empty((z.size, etas.shape[0]), dtype=complex)
    step = max(1, _CHUNK_ELEMENTS // (nb * max(etas.shape[0], na)))
    for s in range(0, z.size, step):
        tt = t[s:s + step, None, None]
        F = pair.coefficient * (tt + v[None]) ** (-pair.b)   # (c, A, B)
        tmp = np.matmul(F.transpose(0, 2, 1), E1)            # (c, B, ne)
        out[s:s + step] = np.einsum("cbe,be->ce", tmp, E2)
    phase = np.exp(1j * (n0.real[:, None] * e1[None, :] + n0.imag[:, None] * e2[None, :]))
    return out * phase


def twisted_sums(z, etas, pair: EllipticPair = DEFAULT_PAIR,
                 trunc: Truncation = DEFAULT_TRUNCATION):
    """varphi_eta(z) = sum_m exp(i eta.m) phi(z - m) for a batch of etas.

    Returns an array of shape (len(z), len(etas)).  The phase convention
    exp(+i eta.m) gives varphi_eta(z + 1) = exp(i eta_1) varphi_eta(z).
    For b = 3 the sum is evaluated exactly by row summation; other exponents
    fall back to the truncation window (no tail correction).
    """
    z = np.asarray(z, dtype=complex).ravel()
    etas = np.atleast_2d(np.asarray(etas, dtype=float))
    if pair.b == 3:
        return pair.coefficient * _twisted_cubes(z - pair.alpha, etas)
    return _window_twisted(z, etas, pair, trunc)


def _guard(z, pair, trunc, domain=None):
    if domain is not None:
        inside, _ = domain.contains(z)
        if not np.all(inside):
            raise OutsideDomain("point outside the periodic domain")
    _check_poles(z - pair.alpha, trunc.guard, "multiplier quotient")


def _cell_window(radius: int):
    j = np.arange(-radius, radius + 1)
    return j[:, None] + 1j * j[None, :]


def _damped_parts(z, rhos, pair, trunc):
    """Numerators (one column per rho) and denominator of psi^(rho).

    The window is k = n0 + j, |j|_inf <= radius, with n0 the cell index of z,
    so both sums are analytic inside each closed cell.
    """
    z = z.ravel()
    rhos = np.atleast_1d(np.asarray(rhos, dtype=float))
    n0 = np.floor(z.real) + 1j * np.floor(z.imag)
    t = z - n0 - pair.alpha
    j = _cell_window(trunc.radius).ravel()
    num = np.empty((z.size, rhos.size), dtype=complex)
    den = np.empty(z.shape, dtype=complex)
    step = max(1, _CHUNK_ELEMENTS // j.size)
    for s in range(0, z.size, step):
        terms = pair.coefficient * (t[s:s + step, None] - j[None, :]) ** (-pair.b)
        absk = np.abs(n0[s:s + step, None] + j[None, :])
        den[s:s + step] = np.sum(terms, axis=1)
        for i, rho in enumerate(rhos):
            num[s:s + step, i] = np.sum(2.0 ** (-rho * absk) * terms, axis=1)
    return num, den


def psi_rho_batch(z, rhos, pair: EllipticPair = DEFAULT_PAIR,
                  trunc: Truncation = DEFAULT_TRUNCATION, domain=None):
    """psi^(rho) for several rho at once; shape (len(z), len(rhos))."""
    rhos = np.atleast_1d(np.asarray(rhos, dtype=float))
    if np.any((rhos <= 0) | (rhos > 1)):
        raise BadParameter("rho must lie in (0, 1]")
    z = np.asarray(z, dtype=complex).ravel()
    _guard(z, pair, trunc, domain)
    num, den = _damped_parts(z, rhos, pair, trunc)
    return num / den[:, None]


def psi_rho(z, rho: float, pair: EllipticPair = DEFAULT_PAIR,
            trunc: Truncation = DEFAULT_TRUNCATION, domain=None):
    """Damped multiplier phi^(rho)/varphi with weights 2^(-rho |m|).

    Numerator and denominator share one truncation window (the cell of z and
    its neighbours out to the truncation radius), so the quotient tends to 1
    exactly as rho -> 0.
    """
    if not (0 < rho <= 1):
        raise BadParameter("rho must lie in (0, 1]")
    z, scalar = _as_array(z)
    _guard(z, pair, trunc, domain)
    num, den = _damped_parts(z, [rho], pair, trunc)
    val = (num[:, 0] / den).reshape(z.shape)
    return val[()] if scalar else val


def psi_rho_cells(nodes, rho, M: int, pair: EllipticPair = DEFAULT_PAIR,
                  trunc: Truncation = DEFAULT_TRUNCATION):
    """psi^(rho)(z + m) for all |m|_inf <= M.

    Shape (2M+1, 2M+1, len(nodes)) for scalar rho, with a leading axis when
    rho is a sequence.  Same window convention as ``psi_rho``: with nodes in
    the reference cell, phi^(rho)(z + m) = sum_j 2^(-rho |m + j|) phi(z - j),
    a correlation in j evaluated by FFT.
    """
    scalar = np.ndim(rho) == 0
    rhos = np.atleast_1d(np.asarray(rho, dtype=float))
    if np.any((rhos <= 0) | (rhos > 1)):
        raise BadParameter("rho must lie in (0, 1]")
    nodes = np.asarray(nodes, dtype=complex).ravel()
    n0 = np.floor(nodes.real) + 1j * np.floor(nodes.imag)
    if np.any(n0 != 0):
        raise OutsideDomain("nodes must lie in the reference cell [0, 1)^2")
    R = trunc.radius
    L = R + M
    P = sp_fft.next_fast_len(2 * L + 1)     # circular length; no index m + j wraps
    k = np.arange(-L, L + 1)
    W = 2.0 ** (-rhos[:, None, None] * np.abs(k[:, None] + 1j * k[None, :])[None])
    Wp = np.zeros((rhos.size, P, P))
    kk = k % P
    Wp[:, kk[:, None], kk[None, :]] = W
    fW = sp_fft.fft2(Wp, workers=-1)
    j = _cell_window(R)
    idx = (-np.arange(-R, R + 1)) % P
    m = np.arange(-M, M + 1) % P
    out = np.empty((rhos.size, 2 * M + 1, 2 * M + 1, nodes.size), dtype=complex)
    step = max(1, _CHUNK_ELEMENTS // (P * P))
    for s in range(0, nodes.size, step):
        t = nodes[s:s + step] - pair.alpha
        A = pair.coefficient * (t[:, None, None] - j[None]) ** (-pair.b)   # (c, 2R+1, 2R+1)
        den = A.sum(axis=(1, 2))
        # A(j) stored at index -j mod P, so the circular convolution with W
        # at m is sum_j W(m + j) A(j)
        Arev = np.zeros((A.shape[0], P, P), dtype=complex)
        Arev[:, idx[:, None], idx[None, :]] = A
        fA = sp_fft.fft2(Arev, workers=-1)
        for i in range(rhos.size):
            conv = sp_fft.ifft2(fW[i][None] * fA, workers=-1)
            sub = conv[:, m[:, None], m[None, :]]
            out[i, :, :, s:s + step] = (sub / den[:, None, None]).transpose(1, 2, 0)
    return out[0] if scalar else out


def psi_tilde_eta_batch(z, etas, pair: EllipticPair = DEFAULT_PAIR,
                        trunc: Truncation = DEFAULT_TRUNCATION):
    """Twisted quotient varphi_eta / varphi, shape (len(z), len(etas))."""
    z = np.asarray(z, dtype=complex).ravel()
    _guard(z, pair, trunc)
    if pair.b == 3:
        den = pair.coefficient * _twisted_cubes(z - pair.alpha, np.zeros((1, 2)))[:, 0]
    else:
        den, _ = _raw_varphi(z, pair, trunc)
    return twisted_sums(z, etas, pair, trunc) / den[:, None]


def psi_tilde_eta(z, eta, pair: EllipticPair = DEFAULT_PAIR,
                  trunc: Truncation = DEFAULT_TRUNCATION, domain=None):
    z, scalar = _as_array(z)
    if domain is not None:
        _guard(z, pair, trunc, domain)
    val = psi_tilde_eta_batch(z.ravel(), [eta], pair, trunc)[:, 0].reshape(z.shape)
    return val[()] if scalar else val

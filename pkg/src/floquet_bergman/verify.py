"""Invariant suites run by ``floquet-bergman verify``.

Each check records the measured quantity, its threshold and the verdict;
the report is plain JSON so runs can be archived and diffed.
"""
from __future__ import annotations

import time
import warnings

import numpy as np

from .bergman import CellKernel, build_basis
from .errors import AliasRisk
from .floquet import QuasimomentumGrid, TruncatedDomainFunction, forward, inverse
from .lattice import psi_rho_batch, varphi_with_bound, wp_prime, wp_prime_with_bound, wp_with_bound
from .multiplier import MultiplierFamily
from .toeplitz import Symbol, band_sweep, hausdorff, truncated_oracle, weyl_residual

SUITES = ("elliptic", "floquet", "kernel", "bands", "weyl")


class Report:
    def __init__(self):
        self.checks = []

    def add(self, suite, name, measured, threshold, passed=None, **extra):
        measured = float(measured)
        if passed is None:
            passed = measured <= threshold
        self.checks.append({"suite": suite, "invariant": name, "measured": measured,
                            "threshold": float(threshold), "margin": float(threshold) - measured,
                            "passed": bool(passed), **extra})

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks,
                "failed": [c["invariant"] for c in self.checks if not c["passed"]]}


def family_for(cfg, order=None) -> MultiplierFamily:
    return MultiplierFamily.certify(cfg.pair, cfg.truncation, cfg.cell(order),
                                    cfg["multiplier"]["resolution"], fit=False)


def _random_cell_points(cell, n, rng):
    out = []
    while len(out) < n:
        z = rng.uniform(0, 1) + 1j * rng.uniform(0, 1)
        if cell.in_cell(z):
            out.append(z)
    return np.array(out)


def suite_elliptic(cfg, rep, rng, family):
    trunc, pair, cell = cfg.truncation, cfg.pair, family.cell
    zeros = np.array([0.5, 0.5j, 0.5 + 0.5j])
    rep.add("elliptic", "wp_prime_half_period_zeros", np.abs(wp_prime(zeros, trunc)).max(), 1e-8)
    z = _random_cell_points(cell, 100, rng)
    v0, b0 = varphi_with_bound(z, pair, trunc)
    worst = 0.0
    for s in (1.0, 1j):
        v1, b1 = varphi_with_bound(z + s, pair, trunc)
        worst = max(worst, float(np.max(np.abs(v1 - v0) / (2 * np.maximum(b0, b1)))))
    rep.add("elliptic", "double_periodicity_over_2x_tail_bound", worst, 1.0)
    p, bp = wp_with_bound(z - pair.alpha, trunc)
    pm, bm = wp_with_bound(pair.alpha - z, trunc)
    d, bd = wp_prime_with_bound(z - pair.alpha, trunc)
    dm, bdm = wp_prime_with_bound(pair.alpha - z, trunc)
    parity = max(np.max(np.abs(p - pm) / (2 * np.maximum(bp, bm))),
                 np.max(np.abs(d + dm) / (2 * np.maximum(bd, bdm))))
    rep.add("elliptic", "parity_over_2x_tail_bound", parity, 1.0)
    rep.add("elliptic", "psi_tilde_zero_is_one",
            np.abs(family.psi_tilde(cell.nodes, [(0.0, 0.0)]) - 1).max(), 1e-12)
    tab = family.table
    certified = tab[tab[:, 0] <= family.R]
    rep.add("elliptic", "R_positive", -family.R, 0.0, passed=family.R > 0)
    rep.add("elliptic", "inf_psi_tilde_within_R", 0.25 - certified[:, 2].min(), 0.0)
    left, right, bottom, top = cell.boundary_pairs(20)
    res = 0.0
    for eta in [(np.pi, np.pi), (np.pi, 0.0), (0.1, -0.3)]:
        v = family.psi_eta_batch(np.concatenate([left, right, bottom, top]), [eta])[:, 0]
        v = v.reshape(4, 20)
        res = max(res, np.abs(v[1] - np.exp(1j * eta[0]) * v[0]).max(),
                  np.abs(v[3] - np.exp(1j * eta[1]) * v[2]).max())
    rep.add("elliptic", "psi_eta_quasiperiodicity", res, 1e-6)
    rhos = 2.0 ** -np.arange(1, 9)
    sups = np.abs(psi_rho_batch(cell.sample_points(), rhos, pair, trunc) - 1).max(axis=0)
    rep.add("elliptic", "psi_rho_sup_monotone", float(np.max(np.diff(sups))), 0.0,
            passed=bool(np.all(np.diff(sups) < 0)))
    rep.add("elliptic", "psi_rho_sup_at_2^-8", sups[-1], 0.01)


def suite_floquet(cfg, rep, rng, family):
    M = 3
    grid = QuasimomentumGrid(cfg["grid"]["resolution"], cfg["grid"]["periodic"])
    w = family.cell.weights
    f = TruncatedDomainFunction.random(M, w.size, seed=int(rng.integers(2**31)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasRisk)
        g = forward(f, grid)
        back = inverse(g, M)
    rep.add("floquet", "round_trip_max_error", np.abs(back.values - f.values).max(), 1e-8)
    lhs = f.norm(w) ** 2
    rhs = float(np.sum(grid.weights * np.sum(w * np.abs(g.values) ** 2, axis=-1).ravel()))
    rep.add("floquet", "parseval_relative", abs(lhs - rhs) / lhs, 1e-6)


def suite_kernel(cfg, rep, rng, family):
    N = cfg.N
    w = family.cell.weights
    sw = np.sqrt(w)
    etas = [(0.0, 0.0), (np.pi, np.pi), (0.3, -1.2), (-2.0, 0.7), (1.5, 2.5)]
    gram = bres = idem = herm = contr = kern = 0.0
    for eta in etas:
        b = build_basis(eta, family, N)
        gram = max(gram, np.abs(b.gram() - np.eye(b.dim)).max())
        bres = max(bres, b.boundary_residual(50).max())
        Q = sw[:, None] * b.values
        f = rng.standard_normal((w.size, 4)) + 1j * rng.standard_normal((w.size, 4))
        Pf = Q @ (Q.conj().T @ f)
        PPf = Q @ (Q.conj().T @ Pf)
        idem = max(idem, np.abs(PPf - Pf).max() / np.abs(f).max())
        g = rng.standard_normal(w.size) + 1j * rng.standard_normal(w.size)
        herm = max(herm, abs(np.vdot(g, Pf[:, 0]) - np.vdot(Q @ (Q.conj().T @ g), f[:, 0])))
        contr = max(contr, float(np.max(np.linalg.norm(Pf, axis=0) / np.linalg.norm(f, axis=0)
                                        - 1.0)))
        K = CellKernel(b)
        pts = family.cell.nodes[:: max(1, w.size // 40)]
        Kz = K(pts, pts)
        kern = max(kern, np.abs(Kz - Kz.conj().T).max())
    rep.add("kernel", "gram_identity", gram, 1e-8)
    rep.add("kernel", "basis_boundary_residual", bres, 1e-5)
    rep.add("kernel", "projection_idempotent", idem, 1e-8)
    rep.add("kernel", "projection_self_adjoint", herm, 1e-8)
    rep.add("kernel", "projection_contractive", contr, 1e-8)
    rep.add("kernel", "kernel_hermitian", kern, 0.0)
    b0 = build_basis((0.0, 0.0), family, N)
    one = np.ones(w.size)
    p1 = b0.values @ (b0.values.conj().T @ (w * one))
    rep.add("kernel", "P0_reproduces_constant", np.abs(p1 - 1).max(), 1e-8)


def suite_bands(cfg, rep, rng, family):
    N = cfg.N
    grid = QuasimomentumGrid(cfg["grid"]["resolution"], cfg["grid"]["periodic"])
    threads = cfg["threads"]
    const = band_sweep(Symbol.constant(3.0), grid, family, N, threads)
    rep.add("bands", "constant_symbol_exact", np.abs(const.points() - 3.0).max(), 1e-8)
    a = cfg.symbol
    sp = band_sweep(a, grid, family, N, threads)
    pts = sp.points()
    if a.real:
        av = a(family.cell.sample_points())
        rep.add("bands", "real_symbol_eigenvalues_real", np.abs(pts.imag).max(), 1e-8)
        excess = max(av.min() - pts.real.min(), pts.real.max() - av.max())
        rep.add("bands", "real_symbol_range_containment", excess, 1e-8)
    coarse = band_sweep(a, QuasimomentumGrid(5, periodic=True), family, N, threads).points()
    d1 = hausdorff(truncated_oracle(a, 1, family, N), coarse)
    d2 = hausdorff(truncated_oracle(a, 2, family, N), coarse)
    av = a(family.cell.sample_points())
    osc = float(np.abs(av).max() * 2) if not a.real else float(av.max() - av.min())
    rep.add("bands", "oracle_M2_not_worse_than_M1", d2 - d1, 0.0, d_M1=d1, d_M2=d2)
    rep.add("bands", "oracle_M2_within_tenth_oscillation", d2, 0.1 * osc)


def suite_weyl(cfg, rep, rng, family):
    wcfg = cfg["weyl"]
    a = cfg.symbol
    kw = dict(N=cfg.N, window_resolution=wcfg["window_resolution"], M=wcfg["M"])
    lam = wcfg["lambda"]
    p2 = weyl_residual(a, wcfg["mu"], lam, 2, family, **kw)
    pn = weyl_residual(a, wcfg["mu"], lam, wcfg["n"], family, **kw)
    rep.add("weyl", "residual_decreases_with_n", pn.residual - p2.residual, 0.0,
            residual_n2=p2.residual, residual_n=pn.residual)
    rep.add("weyl", "residual_relative_to_lambda", pn.residual, 0.1 * abs(pn.lam))
    for p in (p2, pn):
        rep.add("weyl", f"packet_mass_bounds_n{p.n}", abs(p.mass - 2.25), 1.75, mass=p.mass)
        rep.add("weyl", f"damping_defect_n{p.n}", p.damping_defect, 1.0 / (p.n + 2))


_RUNNERS = {"elliptic": suite_elliptic, "floquet": suite_floquet, "kernel": suite_kernel,
            "bands": suite_bands, "weyl": suite_weyl}


def run(cfg, suite: str = "all", family=None) -> dict:
    names = SUITES if suite == "all" else (suite,)
    rep = Report()
    family = family or family_for(cfg)
    timings = {}
    for name in names:
        rng = np.random.default_rng(cfg["seed"])
        t0 = time.perf_counter()
        _RUNNERS[name](cfg, rep, rng, family)
        timings[name] = time.perf_counter() - t0
    out = rep.to_dict()
    out["timings"] = timings
    out["family"] = family.to_dict()
    return out

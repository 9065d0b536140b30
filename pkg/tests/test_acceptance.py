"""Acceptance criteria 1-12, each printing one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are written
past pytest's capture so they show up in the normal log.
"""
import argparse
import time

import numpy as np
import pytest

from floquet_bergman.bergman import CellKernel, build_basis, project, projection_distance
from floquet_bergman.cli import cmd_bands
from floquet_bergman.config import RunConfig
from floquet_bergman.floquet import QuasimomentumGrid, TruncatedDomainFunction, forward, inverse
from floquet_bergman.lattice import Truncation, psi_rho_batch, varphi_with_bound, wp_prime
from floquet_bergman.multiplier import MultiplierFamily
from floquet_bergman.toeplitz import (Symbol, band_sweep, hausdorff, truncated_oracle,
                                      weyl_residual)

COS_X = Symbol.from_table([[0, 0, 2, 0], [1, 0, 0.5, 0], [-1, 0, 0.5, 0]], real=True)
TIMES = {}


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed < limit
        line = (f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  "
                f"[{elapsed:.2f} s, limit {limit:g} s]")
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return emit


def test_criterion_01_wp_prime_zeros(verdict):
    t = time.perf_counter()
    v = wp_prime(np.array([0.5, 0.5j, 0.5 + 0.5j]), Truncation(radius=40))
    worst = float(np.abs(v).max())
    verdict(1, worst <= 1e-8, f"max |wp'(half period)| = {worst:.2e} <= 1e-8",
            time.perf_counter() - t, 1)


def test_criterion_02_double_periodicity(verdict, cell):
    t = time.perf_counter()
    rng = np.random.default_rng(2)
    z = rng.uniform(0, 1, 400) + 1j * rng.uniform(0, 1, 400)
    z = z[cell.in_cell(z)][:100]
    assert z.size == 100
    v, b = varphi_with_bound(z)
    ratios = []
    for shift in (1, 1j):
        v2, b2 = varphi_with_bound(z + shift)
        ratios.append(np.abs(v2 - v) / (2 * np.maximum(b, b2)))
    worst = float(np.max(ratios))
    verdict(2, worst <= 1, f"max |varphi(z+w)-varphi(z)| / (2 bound) = {worst:.3f} <= 1",
            time.perf_counter() - t, 5)


def test_criterion_03_multiplier(verdict):
    t = time.perf_counter()
    fam = MultiplierFamily.certify(fit=False)
    tab = fam.table
    inf_inside = float(tab[tab[:, 0] <= fam.R, 2].min())
    left, right, bottom, top = fam.cell.boundary_pairs(20)
    pts = np.concatenate([left, right, bottom, top])
    res = 0.0
    for eta in [(np.pi, np.pi), (np.pi, 0.0), (0.1, -0.3)]:
        v = fam.psi_eta_batch(pts, [eta])[:, 0].reshape(4, 20)
        res = max(res, np.abs(v[1] - np.exp(1j * eta[0]) * v[0]).max(),
                  np.abs(v[3] - np.exp(1j * eta[1]) * v[2]).max())
    ok = fam.R > 0 and inf_inside >= 0.25 and res <= 1e-6
    verdict(3, ok, f"R = {fam.R:.4f} > 0, inf |psi~| within R = {inf_inside:.3f} >= 0.25, "
            f"quasiperiodicity residual = {res:.1e} <= 1e-6", time.perf_counter() - t, 60)


def test_criterion_04_damped_limit(verdict, cell):
    t = time.perf_counter()
    rhos = 2.0 ** -np.arange(1, 9)
    sups = np.abs(psi_rho_batch(cell.sample_points(), rhos) - 1).max(axis=0)
    mono = bool(np.all(np.diff(sups) < 0))
    verdict(4, mono and sups[-1] <= 0.01,
            f"sup |psi^rho - 1| decreasing = {mono}, at rho = 2^-8: {sups[-1]:.2e} <= 0.01",
            time.perf_counter() - t, 30)


def test_criterion_05_round_trip(verdict, cell):
    t = time.perf_counter()
    f = TruncatedDomainFunction.random(3, cell.nodes.size, seed=5)
    grid = QuasimomentumGrid(16)
    g = forward(f, grid)
    err = float(np.abs(inverse(g, 3).values - f.values).max())
    w = cell.weights
    lhs = f.norm(w) ** 2
    rhs = float(np.sum(grid.weights * np.sum(w * np.abs(g.values) ** 2, axis=-1).ravel()))
    pars = abs(lhs - rhs) / lhs
    verdict(5, err <= 1e-8 and pars <= 1e-6,
            f"round trip max error = {err:.1e} <= 1e-8, Parseval relative = {pars:.1e} <= 1e-6",
            time.perf_counter() - t, 10)


def test_criterion_06_projection_laws(verdict, family):
    t = time.perf_counter()
    grid = QuasimomentumGrid(16)
    q = family.cell.quadrature
    rng = np.random.default_rng(6)
    n = family.cell.nodes.size
    worst, herm = 0.0, True
    for k in (0, 37, 120, 200, 255):
        b = build_basis(tuple(grid.nodes[k]), family, 4)
        f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        pf, pg = project(b, f).values, project(b, g).values
        scale = q.norm(f) * q.norm(g)
        idem = q.norm(project(b, pf).values - pf) / q.norm(f)
        adj = abs(q.inner(pf, g) - q.inner(f, pg)) / scale
        contr = max(0.0, q.norm(pf) - q.norm(f)) / q.norm(f)
        worst = max(worst, idem, adj, contr)
        K = CellKernel(b)
        z, w = b.cell.nodes[::97], b.cell.nodes[3::89]
        herm = herm and np.array_equal(K(z, w), K(w, z).conj().T)
    verdict(6, worst <= 1e-8 and herm,
            f"max law defect = {worst:.1e} <= 1e-8, kernel exactly Hermitian = {herm}",
            time.perf_counter() - t, 60)


def test_criterion_07_holder_trend(verdict, family):
    t = time.perf_counter()
    eta = (0.3, 0.2)
    ts = 2.0 ** -np.arange(3, 11)
    d = np.array([projection_distance(eta, (eta[0] + s, eta[1]), family) for s in ts])
    x, y = np.log(ts), np.log(d)
    slope, icpt = np.polyfit(x, y, 1)
    r2 = 1 - np.sum((y - (slope * x + icpt)) ** 2) / np.sum((y - y.mean()) ** 2)
    verdict(7, slope >= 0.2 and r2 >= 0.9, f"log-log slope = {slope:.3f} >= 0.2, "
            f"R^2 = {r2:.4f} >= 0.9", time.perf_counter() - t, 120)


def test_criterion_08_constant_symbol(verdict, family):
    t = time.perf_counter()
    bs = band_sweep(Symbol.constant(3.0), QuasimomentumGrid(16), family)
    TIMES[8] = time.perf_counter() - t
    dev = float(np.abs(bs.points() - 3).max())
    ok = bs.failure_count == 0 and len(bs.sheets) == 256 and dev <= 1e-8
    verdict(8, ok, f"max |lambda - 3| over 256 nodes = {dev:.1e} <= 1e-8", TIMES[8], 120)


def test_criterion_09_real_containment(verdict, family):
    t = time.perf_counter()
    bs = band_sweep(COS_X, QuasimomentumGrid(16), family)
    p = bs.points()
    im = float(np.abs(p.imag).max())
    # 2 + cos(2 pi x) reaches 1 and 3 on the cell (the line x = 1/2 meets it)
    lo, hi = float(p.real.min()), float(p.real.max())
    ok = bs.failure_count == 0 and im <= 1e-8 and lo >= 1 - 1e-8 and hi <= 3 + 1e-8
    verdict(9, ok, f"max |Im lambda| = {im:.1e}, eigenvalues in [{lo:.4f}, {hi:.4f}] "
            "within [1, 3]", time.perf_counter() - t, 120)


def test_criterion_10_band_oracle(verdict, family):
    t = time.perf_counter()
    bands = band_sweep(COS_X, QuasimomentumGrid(5, periodic=True), family).points()
    d1 = hausdorff(truncated_oracle(COS_X, 1, family), bands)
    d2 = hausdorff(truncated_oracle(COS_X, 2, family), bands)
    osc = 2.0
    verdict(10, d2 <= d1 and d2 <= 0.1 * osc,
            f"Hausdorff M=2: {d2:.2e} <= M=1: {d1:.2e}, and <= 0.1 osc = {0.1 * osc:g}",
            time.perf_counter() - t, 600)


def test_criterion_11_weyl(verdict, family6):
    t = time.perf_counter()
    p = {n: weyl_residual(COS_X, (0.0, 0.0), None, n, family6, window_resolution=129, M=6)
         for n in (2, 8)}
    r2, r8, lam = p[2].residual, p[8].residual, abs(p[8].lam)
    verdict(11, r8 <= r2 and r8 <= 0.1 * lam,
            f"residual n=8: {r8:.2e} <= n=2: {r2:.2e}, and <= 0.1 |lambda| = {0.1 * lam:.3f}",
            time.perf_counter() - t, 300)


def test_criterion_12_determinism(verdict, family, tmp_path):
    if 8 not in TIMES:
        t = time.perf_counter()
        band_sweep(Symbol.constant(3.0), QuasimomentumGrid(16), family)
        TIMES[8] = time.perf_counter() - t
    cfg = RunConfig()
    blobs, runs = [], []
    for k in range(2):
        out = tmp_path / f"run{k}"
        out.mkdir()
        t = time.perf_counter()
        assert cmd_bands(cfg, argparse.Namespace(), out) == 0
        runs.append(time.perf_counter() - t)
        blobs.append((out / "bands.csv").read_bytes())
    same = blobs[0] == blobs[1]
    limit = 2 * TIMES[8]
    verdict(12, same, f"bands.csv byte-identical = {same} ({len(blobs[0])} bytes), "
            f"slowest run {max(runs):.2f} s vs 2 x criterion 8", max(runs), limit)

import types
import warnings

import numpy as np
import pytest

from floquet_bergman.bergman import build_basis
from floquet_bergman.errors import AliasRisk, BadParameter, ResidualTooLarge
from floquet_bergman.floquet import (FloquetField, QuasimomentumGrid, TruncatedDomainFunction,
                                     fiber_bases, forward, inverse, project_omega,
                                     quasi_residual, unfold)
from floquet_bergman.lattice import psi_rho, wp


def rand_tdf(M, nodes, seed):
    return TruncatedDomainFunction.random(M, nodes, seed=seed)


def test_grid_weights_and_symmetry():
    for g in (QuasimomentumGrid(16), QuasimomentumGrid(5, periodic=True)):
        assert g.weights.sum() == pytest.approx((2 * np.pi) ** 2)
        assert np.allclose(np.sort(g.axis), np.sort(-g.axis))
        assert g.nodes.shape == (g.size, 2)
    with pytest.raises(BadParameter):
        QuasimomentumGrid(1)


def test_resolves():
    assert QuasimomentumGrid(16).resolves(7)
    assert not QuasimomentumGrid(16).resolves(8)
    assert QuasimomentumGrid(5, periodic=True).resolves(2)


def test_tdf_shape_check():
    with pytest.raises(BadParameter):
        TruncatedDomainFunction(2, np.zeros((4, 5, 3)))


def test_forward_single_cell():
    M, n = 2, 7
    v = np.zeros((5, 5, n), complex)
    rng = np.random.default_rng(0)
    v[M, M] = rng.standard_normal(n)
    g = forward(TruncatedDomainFunction(M, v), QuasimomentumGrid(8))
    assert np.abs(g.values - v[M, M] / (2 * np.pi)).max() <= 1e-15


def test_forward_matches_direct_sum():
    M, n = 2, 4
    f = rand_tdf(M, n, 1)
    grid = QuasimomentumGrid(6)
    g = forward(f, grid)
    off = np.arange(-M, M + 1)
    for k in (0, 7, 20, 35):
        eta = grid.nodes[k]
        ref = sum(np.exp(-1j * (eta[0] * a + eta[1] * b)) * f.cell((a, b))
                  for a in off for b in off) / (2 * np.pi)
        assert np.abs(g.at(k) - ref).max() <= 1e-13


def test_shift_covariance():
    M, n = 3, 5
    rng = np.random.default_rng(2)
    v = np.zeros((7, 7, n), complex)
    v[1:6, 1:6] = rng.standard_normal((5, 5, n))
    f = TruncatedDomainFunction(M, v)
    m0 = (1, -1)
    shifted = np.zeros_like(v)
    # g(z + m) = f(z + m + m0)
    shifted[:6, 1:7] = v[1:7, :6]
    g = TruncatedDomainFunction(M, shifted)
    grid = QuasimomentumGrid(9)
    F, G = forward(f, grid), forward(g, grid)
    ph = np.exp(1j * (grid.nodes[:, 0] * m0[0] + grid.nodes[:, 1] * m0[1]))
    ph = ph.reshape(9, 9, 1)
    assert np.abs(G.values - ph * F.values).max() <= 1e-14


def test_round_trip_closed_grid():
    f = rand_tdf(3, 40, 3)
    back = inverse(forward(f, QuasimomentumGrid(16)), 3)
    assert np.abs(back.values - f.values).max() <= 1e-8


def test_parseval_grid_64():
    f = rand_tdf(3, 30, 4)
    w = np.random.default_rng(5).uniform(0.5, 1.5, 30)
    grid = QuasimomentumGrid(64)
    g = forward(f, grid)
    lhs = f.norm(w) ** 2
    rhs = np.sum(grid.weights * np.sum(w * np.abs(g.values) ** 2, axis=-1).ravel())
    assert abs(lhs - rhs) <= 1e-6 * lhs


def test_forward_norm_ratio():
    f = rand_tdf(2, 20, 6)
    w = np.ones(20)
    grid = QuasimomentumGrid(11)
    g = forward(f, grid)
    gn = np.sqrt(np.sum(grid.weights * np.sum(np.abs(g.values) ** 2, axis=-1).ravel()))
    assert gn <= f.norm(w) * (1 + 1e-8)


def test_inverse_of_constant_field():
    grid = QuasimomentumGrid(9)
    vals = np.broadcast_to(np.arange(4.0), (9, 9, 4)).astype(complex)
    f = inverse(FloquetField(grid, vals), 3)
    mask = np.ones((7, 7), bool)
    mask[3, 3] = False
    assert np.abs(f.values[mask]).max() <= 1e-12
    assert np.abs(f.cell((0, 0)) - 2 * np.pi * np.arange(4.0)).max() <= 1e-12


def test_inverse_linear():
    grid = QuasimomentumGrid(7)
    rng = np.random.default_rng(7)
    a = FloquetField(grid, rng.standard_normal((7, 7, 3)) + 0j)
    b = FloquetField(grid, rng.standard_normal((7, 7, 3)) + 0j)
    lhs = inverse(a + b, 2).values
    rhs = (inverse(a, 2) + inverse(b, 2)).values
    assert np.abs(lhs - rhs).max() <= 1e-14


def test_alias_warning():
    f = rand_tdf(3, 4, 8)
    with pytest.warns(AliasRisk):
        inverse(forward(f, QuasimomentumGrid(6)), 3)


def test_unfold_constant():
    cell = types.SimpleNamespace(nodes=np.array([0.1 + 0.1j, 0.9 + 0.05j]),
                                 boundary_pairs=lambda n=20: (np.zeros(n), np.ones(n),
                                                              np.zeros(n), np.ones(n)))
    G = unfold(lambda z: np.ones(np.shape(z)), (0.0, 0.0), 2, cell)
    assert np.array_equal(G.values, np.ones((5, 5, 2), complex))


def test_unfold_edge_mismatch_equals_residual(family):
    eta = (0.7, -0.4)
    b = build_basis(eta, family, 4)
    g = lambda z: b.evaluate(z)[:, 2]          # noqa: E731
    left, right, _, _ = family.cell.boundary_pairs(20)
    edge = types.SimpleNamespace(nodes=np.concatenate([left, right]),
                                 boundary_pairs=family.cell.boundary_pairs)
    G = unfold(g, eta, 1, edge)
    # right edge of cell 0 against left edge of cell 1
    mismatch = np.abs(G.cell((0, 0))[20:] - G.cell((1, 0))[:20]).max()
    res = np.abs(g(right) - np.exp(1j * eta[0]) * g(left)).max()
    assert mismatch == pytest.approx(res, rel=1e-6, abs=1e-15)
    assert mismatch <= 1e-5


def test_unfold_rejects_non_quasiperiodic(family):
    with pytest.raises(ResidualTooLarge):
        unfold(lambda z: np.asarray(z).real.astype(complex), (0.5, 0.0), 1, family.cell)


def test_unfold_profile_peaks_at_eta(family):
    grid = QuasimomentumGrid(9, periodic=True)
    eta = tuple(grid.nodes[30])
    b = build_basis(eta, family, 4)
    G = unfold(lambda z: b.evaluate(z)[:, 0], eta, 4, family.cell)
    prof = forward(G, grid).profile(family.cell.weights)
    k = int(np.argmax(prof[:, 2]))
    assert np.allclose(prof[k, :2], eta)
    # discrete Dirichlet kernel of a 9-point grid with 9 cells: all other nodes vanish
    others = np.delete(prof[:, 2], k)
    assert others.max() <= 1e-12 * prof[k, 2]


def test_quasi_residual_of_basis(family):
    b = build_basis((1.0, 0.5), family, 4)
    assert quasi_residual(lambda z: b.evaluate(z)[:, 1], (1.0, 0.5), family.cell) <= 1e-5


def test_cauchy_riemann_of_damped_transform(family):
    # forward(psi^(rho) f) at interior stencil points, f = wp(z - alpha)
    z0 = np.array([0.12 + 0.3j, 0.85 + 0.7j, 0.3 + 0.92j])
    h = 1e-4
    pts = np.concatenate([z0 + h, z0 - h, z0 + 1j * h, z0 - 1j * h])
    stencil = types.SimpleNamespace(nodes=pts)
    F = TruncatedDomainFunction.from_callable(
        lambda z: psi_rho(z, 0.5) * wp(z - family.pair.alpha), 2, stencil)
    g = forward(F, QuasimomentumGrid(7)).values.reshape(-1, 4, 3)
    fx = (g[:, 0] - g[:, 1]) / (2 * h)
    fy = (g[:, 2] - g[:, 3]) / (2 * h)
    dbar = 0.5 * (fx + 1j * fy)
    assert np.abs(dbar).max() <= 1e-5 * np.abs(fx).max()


@pytest.fixture(scope="module")
def closed_grid_bases(family):
    grid = QuasimomentumGrid(16)
    return grid, fiber_bases(grid, family, 4)


def test_project_omega_keeps_unfolded_basis(family):
    grid = QuasimomentumGrid(5, periodic=True)
    eta = tuple(grid.nodes[7])
    b = build_basis(eta, family, 4)
    G = unfold(lambda z: b.evaluate(z)[:, 3], eta, 2, family.cell)
    P = project_omega(G, grid, family)
    assert np.abs(P.values - G.values).max() <= 1e-6 * np.abs(G.values).max()


def test_project_omega_self_adjoint(family, closed_grid_bases):
    grid, bases = closed_grid_bases
    w = family.cell.weights
    n = w.size
    f, g = rand_tdf(2, n, 10), rand_tdf(2, n, 11)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasRisk)
        a = project_omega(f, grid, family, bases=bases).inner(g, w)
        b = f.inner(project_omega(g, grid, family, bases=bases), w)
    assert abs(a - b) <= 1e-5 * f.norm(w) * g.norm(w)


def test_project_omega_idempotent_periodic_grid(family):
    grid = QuasimomentumGrid(5, periodic=True)
    w = family.cell.weights
    f = rand_tdf(2, w.size, 12)
    p1 = project_omega(f, grid, family)
    p2 = project_omega(p1, grid, family)
    assert (p2 - p1).norm(w) <= 1e-5 * f.norm(w)


@pytest.mark.xfail(strict=True, reason="on the endpoint-inclusive 16-point grid the "
                   "trapezoid pair is not unitary on the 5x5 cell block (the two copies "
                   "of eta = +-pi carry half weight), so P_Omega fails to be idempotent "
                   "by about 3e-3 relative")
def test_project_omega_idempotent_closed_grid(family, closed_grid_bases):
    grid, bases = closed_grid_bases
    w = family.cell.weights
    f = rand_tdf(2, w.size, 13)
    p1 = project_omega(f, grid, family, bases=bases)
    p2 = project_omega(p1, grid, family, bases=bases)
    assert (p2 - p1).norm(w) <= 1e-5 * f.norm(w)


def test_field_container_round_trip(tmp_path):
    from floquet_bergman.io import load_field, save_field
    f = rand_tdf(1, 6, 14)
    g = forward(f, QuasimomentumGrid(5, periodic=True))
    save_field(tmp_path / "field", g)
    back = load_field(tmp_path / "field")
    assert back.grid == g.grid
    assert np.array_equal(back.values, g.values)

import warnings

import numpy as np
import pytest

from floquet_bergman.bergman import (CellKernel, build_basis, candidate_labels, candidate_set,
                                     candidate_values, kernel_eval, param_switch, project,
                                     projection_distance, projection_matrix)
from floquet_bergman.errors import DimensionMismatch, IllConditioned, LengthMismatch, OutsideCell
from floquet_bergman.geometry import PeriodicCell
from floquet_bergman.lattice import wp, wp_prime

ETAS = [(0.0, 0.0), (np.pi, np.pi), (0.3, -1.2), (-2.0, 0.7), (1.5, 2.5)]


@pytest.fixture(scope="module")
def bases(family):
    return {eta: build_basis(eta, family, 4) for eta in ETAS}


def rand_nodes(rng, n, k=None):
    shape = (n,) if k is None else (n, k)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_candidate_order():
    assert candidate_labels(1) == ["1", "wp"]
    assert candidate_labels(4) == ["1", "wp", "wp'", "wp^2", "wp wp'"]
    with pytest.raises(ValueError):
        candidate_labels(0)


def test_candidate_values_from_elliptic_functions(family):
    z = np.array([0.1 + 0.2j, 0.93 + 0.7j])
    u = z - family.pair.alpha
    v = candidate_values(z, 5, family)
    p, dp = wp(u), wp_prime(u)
    ref = np.stack([np.ones(2), p, dp, p**2, p * dp, p**3], axis=1)
    assert np.abs(v - ref).max() <= 1e-12 * np.abs(ref).max()


def test_candidates_periodic_and_finite(family):
    rng = np.random.default_rng(2)
    z = rng.uniform(0.02, 0.98, 20) + 1j * rng.uniform(0.02, 0.98, 20)
    for label, f in candidate_set(family, 4):
        a, b = f(z), f(z + 1)
        assert np.abs(a - b).max() <= 1e-9 * max(1.0, np.abs(a).max()), label
        assert np.isfinite(f(family.cell.nodes[::7])).all()


@pytest.mark.parametrize("eta", ETAS)
def test_basis_orthonormal_and_quasiperiodic(bases, eta):
    b = bases[eta]
    assert np.abs(b.gram() - np.eye(b.dim)).max() <= 1e-8
    assert b.boundary_residual(50).max() <= 1e-5
    assert b.dim <= 5


def test_basis_values_match_evaluate(bases):
    b = bases[(0.3, -1.2)]
    z = b.cell.nodes[::211]
    assert np.abs(b.evaluate(z) - b.values[::211]).max() <= 1e-10


def test_constant_reproduced_at_zero(family, bases):
    b = bases[(0.0, 0.0)]
    one = np.ones(b.cell.nodes.size)
    assert np.abs(project(b, one).values - 1).max() <= 1e-8
    z = b.cell.nodes[::300]
    integ = CellKernel(b)(z, b.cell.nodes) @ b.cell.weights
    assert np.abs(integ - 1).max() <= 1e-6


def test_dim_nondecreasing_in_N(family):
    dims = [build_basis((0.7, -0.4), family, N).dim for N in (2, 4, 6)]
    assert dims == sorted(dims)


def test_ill_conditioned_warning(family):
    with pytest.warns(IllConditioned):
        build_basis((0.3, 0.2), family, 12)


def test_kernel_hermitian_exactly(bases):
    K = CellKernel(bases[(0.3, -1.2)])
    z = K.basis.cell.nodes[::97]
    w = K.basis.cell.nodes[5::131]
    assert np.array_equal(K(z, w), K(w, z).conj().T)
    assert kernel_eval(K, z[0], w[0]) == np.conj(kernel_eval(K, w[0], z[0]))


def test_kernel_reproduces_basis(bases):
    b = bases[(-2.0, 0.7)]
    K = CellKernel(b)
    z = b.cell.nodes[::400]
    rep = K(z, b.cell.nodes) @ (b.cell.weights[:, None] * b.values)
    assert np.abs(rep - b.values[::400]).max() <= 1e-6 * np.abs(b.values).max()


def test_kernel_gram_psd(bases):
    K = CellKernel(bases[(np.pi, np.pi)])
    z = K.basis.cell.nodes[::150]
    assert np.linalg.eigvalsh(K(z, z)).min() >= -1e-8


def test_kernel_square_integrable(bases):
    b = bases[(1.5, 2.5)]
    K = CellKernel(b)
    row = K(b.cell.nodes[:1], b.cell.nodes)[0]
    assert np.isfinite(np.sum(b.cell.weights * np.abs(row) ** 2))


def test_kernel_outside_cell(bases):
    K = CellKernel(bases[(0.0, 0.0)])
    with pytest.raises(OutsideCell):
        K(np.array([0.5 + 0.5j]), np.array([0.1 + 0.1j]))
    with pytest.raises(OutsideCell):
        K(np.array([1.5 + 0.1j]), np.array([0.1 + 0.1j]))


def test_project_basis_vectors(bases):
    b = bases[(0.3, -1.2)]
    for j in range(b.dim):
        c = project(b, b.values[:, j]).coefficients
        assert np.abs(c - np.eye(b.dim)[j]).max() <= 1e-8


def test_project_idempotent_and_contractive(bases):
    rng = np.random.default_rng(7)
    b = bases[(1.5, 2.5)]
    q = b.cell.quadrature
    for _ in range(10):
        f = rand_nodes(rng, b.cell.nodes.size)
        pf = project(b, f).values
        ppf = project(b, pf).values
        assert q.norm(ppf - pf) <= 1e-8 * q.norm(f)
        assert q.norm(pf) <= q.norm(f) * (1 + 1e-12)


def test_project_length_mismatch(bases):
    with pytest.raises(LengthMismatch):
        project(bases[(0.0, 0.0)], np.ones(5))


def test_projection_matrix_small_cell(family):
    small = PeriodicCell(order=4)
    from floquet_bergman.multiplier import MultiplierFamily
    fam = MultiplierFamily(pair=family.pair, trunc=family.trunc, cell=small, R=family.R)
    b = build_basis((0.4, 0.1), fam, 4)
    P = projection_matrix(b)
    assert np.abs(P - P.conj().T).max() <= 1e-8
    assert np.abs(P @ P - P).max() <= 1e-8
    Pn = projection_matrix(b, symmetric=False)
    assert np.abs(Pn @ Pn - Pn).max() <= 1e-8


def test_param_switch_identity(family):
    rng = np.random.default_rng(0)
    f = rand_nodes(rng, family.cell.nodes.size)
    assert np.array_equal(param_switch(f, (0.4, 0.2), (0.4, 0.2), family), f)


def test_param_switch_preserves_quasiperiodicity(family, bases):
    eta, mu = (0.3, -1.2), (0.5, -1.0)
    b = bases[eta]
    left, right, bottom, top = family.cell.boundary_pairs(20)
    pts = np.concatenate([left, right, bottom, top])
    ev = b.evaluate(pts)
    for j in range(b.dim):
        g = param_switch(ev[:, j], eta, mu, family, points=pts).reshape(4, 20)
        assert np.abs(g[1] - np.exp(1j * mu[0]) * g[0]).max() <= 1e-4
        assert np.abs(g[3] - np.exp(1j * mu[1]) * g[2]).max() <= 1e-4


def test_param_switch_holder_distance(family):
    rng = np.random.default_rng(4)
    f = rand_nodes(rng, family.cell.nodes.size)
    q = family.cell.quadrature
    for t in (1e-3, 1e-2, 1e-1):
        d = q.norm(param_switch(f, (0.0, 0.0), (t, 0.0), family) - f) / q.norm(f)
        assert d <= 1.05 * family.beta_constant * t**family.beta


def test_projection_distance_zero_and_monotone(family):
    eta = (0.3, 0.2)
    assert projection_distance(eta, eta, family) == 0.0
    ts = 2.0 ** -np.arange(3, 9)
    d = [projection_distance(eta, (eta[0] + t, eta[1]), family) for t in ts]
    assert all(d[i + 1] <= 1.1 * d[i] for i in range(len(d) - 1))
    slope = np.polyfit(np.log(ts), np.log(d), 1)[0]
    assert slope >= 0.2


def test_projection_distance_dimension_mismatch(family, family6):
    a = build_basis((0.0, 0.0), family, 4)
    b = build_basis((0.1, 0.0), family6, 4)
    with pytest.raises(DimensionMismatch):
        projection_distance(None, None, family, bases=(a, b))


def test_kernel_self_convergence(family):
    eta = (0.3, 0.2)
    z = family.cell.nodes[::61]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditioned)
        K = {N: CellKernel(build_basis(eta, family, N))(z, z) for N in (2, 4, 6, 8, 10)}
    gaps = [np.abs(K[N] - K[N + 2]).max() for N in (2, 4, 6, 8)]
    assert all(gaps[i + 1] < gaps[i] for i in range(3))

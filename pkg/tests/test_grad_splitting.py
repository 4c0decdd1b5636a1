import math

import numpy as np
import pytest
from scipy.integrate import quad

from boltzgap.collision.direct import assemble_direct
from boltzgap.collision.grad_splitting import (PlanarQuadrature, PlaneTable, assemble_grad, k1_values, k2_values,
                                               kernel_block_table, kernel_k1, kernel_k2, near_rule, planar_integral,
                                               plane_basis, plane_value, zeta)
from boltzgap.constraints import constraint_matrix
from boltzgap.config import OperatorParams, QuadratureSettings
from boltzgap.errors import MemoryBudgetError, SingularEvaluationError, UnsupportedCrossSectionError
from boltzgap.kernels import cross_section, nu_profile, nu_range, sphere_integral_b
from boltzgap.mesh_basis import BasisSpec, Representation, build_mesh, l2_project, mass_matrix, maxwellian_weight
from boltzgap.spectra import spectral_gap

HARD_SPHERE = OperatorParams(d=3, gamma=1.0, alpha=-2.0)
VHP3 = OperatorParams(d=3, gamma=0.5, alpha=-2.0)
MAXWELL2 = OperatorParams(d=2, gamma=0.0, alpha=-1.0)


def _pairs(n, d, seed=1, scale=3.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, (n, d)), rng.uniform(-scale, scale, (n, d))


@pytest.mark.parametrize("params", [HARD_SPHERE, MAXWELL2])
def test_k2_closed_form_matches_plane_quadrature(params):
    # centered nodes are accurate while |zeta| stays well inside the Hermite nodes
    quad_rule = PlanarQuadrature(d=params.d, order=32)
    for v, xi in zip(*_pairs(100, params.d, scale=2.0)):
        exact = kernel_k2(v, xi, params, analytic=True)
        assert kernel_k2(v, xi, params, quad=quad_rule, analytic=False) == pytest.approx(exact, rel=1e-8)


def test_centered_rule_is_a_node_sum():
    exact = math.sqrt(2 * math.pi)
    fine = planar_integral(1.0, 1.5, 0.0, PlanarQuadrature(d=2, order=32), centered=True)
    assert float(fine) == pytest.approx(exact, rel=1e-12)
    # too few nodes for a far shift: the sum no longer collapses to the weight total
    coarse = planar_integral(1.0, 4.0, 0.0, PlanarQuadrature(d=2, order=8), centered=True)
    assert abs(float(coarse) / exact - 1.0) > 1e-3


@pytest.mark.parametrize("params", [VHP3, MAXWELL2, OperatorParams(d=2, gamma=-0.5, alpha=-0.5)])
def test_kernels_symmetric(params):
    for v, xi in zip(*_pairs(20, params.d, seed=2)):
        assert kernel_k1(v, xi, params) == pytest.approx(kernel_k1(xi, v, params), rel=1e-10)
        assert kernel_k2(v, xi, params) == pytest.approx(kernel_k2(xi, v, params), rel=1e-10)


def test_k2_singular_on_diagonal():
    with pytest.raises(SingularEvaluationError):
        kernel_k2([0.5, 0.5, 0.5], [0.5, 0.5, 0.5], VHP3)
    with pytest.raises(SingularEvaluationError):
        kernel_k1([0.1, 0.2], [0.1, 0.2], OperatorParams(d=2, gamma=-1.0, alpha=-1.0))


def test_grad_needs_cutoff():
    with pytest.raises(UnsupportedCrossSectionError):
        kernel_k1([0.0, 0.0], [1.0, 0.0], OperatorParams(d=2, gamma=0.0, alpha=0.0))


def test_plane_geometry():
    v, xi = np.array([0.3, -1.0, 2.0]), np.array([1.1, 0.4, -0.7])
    B = plane_basis(v, xi)
    np.testing.assert_allclose(B @ B.T, np.eye(2), atol=1e-14)
    np.testing.assert_allclose(B @ (xi - v), 0.0, atol=1e-14)
    z, zp = zeta(v, xi)
    np.testing.assert_allclose(z + zp, 0.5 * (v + xi), atol=1e-14)
    assert abs(z @ (xi - v)) < 1e-12


def test_planar_integral_two_dimensional_against_scipy():
    rule = PlanarQuadrature(d=2, order=64)
    beta, c, z = 0.25, 1.0, 0.7
    ref, _ = quad(lambda t: math.exp(-0.5 * t * t) * (c * c + (t - z) ** 2) ** beta, -np.inf, np.inf,
                  epsabs=0, epsrel=1e-12)
    assert planar_integral(c, z, beta, rule) == pytest.approx(ref, rel=1e-6)
    assert planar_integral(c, z, 0.0, rule) == pytest.approx(math.sqrt(2 * math.pi))


@pytest.mark.parametrize("delta", [(0, 0), (1, 0), (-1, 1), (0, 0, 0), (1, -1, 0)])
def test_near_rule_weights_cover_pair(delta):
    x, rho, w = near_rule(delta, 6, 3)
    assert w.sum() == pytest.approx(1.0, rel=1e-12)
    d = len(delta)
    # xi = x + rho lands in the neighbour cell
    y = x + rho - np.asarray(delta, dtype=float)
    assert np.all(np.abs(x) <= 0.5 + 1e-12) and np.all(np.abs(y) <= 0.5 + 1e-12)
    assert not np.any(np.all(rho == 0.0, axis=1))
    assert x.shape[1] == d


def test_assemble_grad_small_matrix():
    mesh = build_mesh(3.0, 4, 2)
    basis = BasisSpec(p=1, d=2)
    settings = QuadratureSettings(nu_table_size=128)
    G = assemble_grad(mesh, basis, MAXWELL2, settings=settings)
    assert G.representation is Representation.F and G.backend == "grad"
    assert G.entries.shape == (48, 48)
    np.testing.assert_array_equal(G.entries, G.entries.T)
    assert "max_symmetrization_correction" in G.diagnostics
    assert np.all(np.diag(G.entries) > 0)


def test_assembly_independent_of_worker_count():
    mesh = build_mesh(3.0, 4, 2)
    basis = BasisSpec(p=0, d=2)
    settings = QuadratureSettings(nu_table_size=128)
    nu = nu_profile(MAXWELL2, 3.0, mesh.dv, 128)
    one = assemble_grad(mesh, basis, MAXWELL2, nu=nu, settings=settings, threads=1)
    many = assemble_grad(mesh, basis, MAXWELL2, nu=nu, settings=settings, threads=3)
    np.testing.assert_array_equal(one.entries, many.entries)


def test_kernel_table_is_grad_matrix_without_nu():
    mesh = build_mesh(3.0, 4, 2)
    basis = BasisSpec(p=0, d=2)
    settings = QuadratureSettings(nu_table_size=128)
    K = kernel_block_table(mesh, basis, MAXWELL2, settings)
    G = assemble_grad(mesh, basis, MAXWELL2, settings=settings)
    off = ~np.eye(16, dtype=bool)
    np.testing.assert_allclose(0.5 * (K + K.T)[off], G.entries[off], rtol=1e-12, atol=1e-15)


def test_memory_budget_enforced():
    with pytest.raises(MemoryBudgetError):
        assemble_grad(build_mesh(5.0, 40, 3), BasisSpec(p=1, d=3), VHP3, memory_budget_gb=1.0)


# ------------------------------------------------------------------------------
# Plane integral: rules, adaptive reference, table
# ------------------------------------------------------------------------------
def test_centered_and_shifted_rules_agree_off_maxwell():
    c, z, beta = 1.0, 1.5, -0.5
    ref, _ = quad(lambda t: math.exp(-0.5 * t * t) * (c * c + (t - z) ** 2) ** beta, -np.inf, np.inf,
                  epsabs=0, epsrel=1e-12)
    rule = PlanarQuadrature(d=2, order=64)
    assert float(planar_integral(c, z, beta, rule)) == pytest.approx(ref, rel=1e-6)
    assert float(planar_integral(c, z, beta, rule, centered=True)) == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("c,z,beta", [(1.0, 0.7, 0.25), (0.05, 1.2, -0.5), (2.5, 3.0, 0.5)])
def test_plane_value_two_dimensional(c, z, beta):
    def f(t):
        return math.exp(-0.5 * t * t) * (c * c + (t - z) ** 2) ** beta

    left, _ = quad(f, -np.inf, z, epsabs=0, epsrel=1e-12, limit=200)
    right, _ = quad(f, z, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    assert plane_value(c, z, beta, 2) == pytest.approx(left + right, rel=1e-8)


@pytest.mark.parametrize("z,beta", [(0.0, -0.5), (1.3, -0.25), (2.0, 0.5)])
def test_plane_value_three_dimensional(z, beta):
    rule = PlanarQuadrature(d=3, order=64)
    assert plane_value(1.0, z, beta, 3) == pytest.approx(float(planar_integral(1.0, z, beta, rule)), rel=1e-6)


def test_plane_table_interpolates_and_falls_back():
    table = PlaneTable(d=2, beta=-0.5, c_max=4.0, z_max=3.0, size=96)
    rng = np.random.default_rng(5)
    c = np.exp(rng.uniform(math.log(1e-3), math.log(4.0), 40))
    z = rng.uniform(0.0, 3.0, 40)
    ref = np.array([plane_value(a, b, -0.5, 2) for a, b in zip(c, z)])
    rule = PlanarQuadrature(d=2, order=32)
    np.testing.assert_allclose(table.evaluate(c, z, rule), ref, rtol=1e-4)
    outside = np.array([6.0]), np.array([1.0])
    np.testing.assert_array_equal(table.evaluate(*outside, rule), planar_integral(*outside, -0.5, rule))


def test_plane_table_assembly_converges():
    soft = OperatorParams(d=2, gamma=-1.0, alpha=-1.0)
    mesh = build_mesh(3.0, 4, 2)
    basis = BasisSpec(p=0, d=2)
    nu = nu_profile(soft, 3.0, mesh.dv, 128)

    def build(**kw):
        return assemble_grad(mesh, basis, soft, nu=nu, settings=QuadratureSettings(nu_table_size=128, **kw))

    small, large = build(plane_table_size=96), build(plane_table_size=128)
    sums = build(plane_table=False)
    assert small.diagnostics["plane_table"] == 96 and small.diagnostics["plane_nodes"] == 0
    assert sums.diagnostics["plane_table"] == 0 and sums.diagnostics["plane_nodes"] == 32
    assert np.max(np.abs(small.entries - large.entries)) < 1e-5 * large.norm()
    # node sums resolve the near-diagonal peak of the plane integrand only roughly
    assert np.max(np.abs(sums.entries - large.entries)) < 5e-2 * large.norm()


# ------------------------------------------------------------------------------
# Kernel identities
# ------------------------------------------------------------------------------
def _sphere_rule(d, n):
    """Unit sphere nodes and weights: trapezoid on the circle, Gauss x trapezoid on S^2."""
    phi = (np.arange(2 * n) + 0.5) * (math.pi / n)
    if d == 2:
        return np.stack([np.cos(phi), np.sin(phi)], axis=1), np.full(phi.size, math.pi / n)
    x, wx = np.polynomial.legendre.leggauss(n)
    ct, ph = np.meshgrid(x, phi, indexing="ij")
    st = np.sqrt(1.0 - ct ** 2)
    nodes = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
    return nodes, (wx[:, None] * np.full(phi.size, math.pi / n)[None, :]).ravel()


@pytest.mark.parametrize("d", [2, 3])
def test_carleman_sphere_and_plane_sides_agree(d):
    """
    int_S phi((|u| sigma - u)/2) dsigma = 2^{d-1} |u|^{2-d} int phi(z) delta(|z|^2 + z.u) dz.
    The plane side integrates over t = z.u/|u| in [-|u|, 0], with t = -|u|(1 - cos s)/2,
    and over the circle of radius |u| sin(s)/2 in the plane orthogonal to u.
    """
    def phi(z):
        return np.exp(-np.sum(z * z, axis=-1))

    sigma, w_sigma = _sphere_rule(d, 48)
    s, ws = np.polynomial.legendre.leggauss(48)
    s, ws = 0.5 * math.pi * (s + 1.0), 0.5 * math.pi * ws
    rng = np.random.default_rng(11)
    for _ in range(20):
        v = rng.uniform(-2.0, 2.0, d)
        u = rng.uniform(-2.0, 2.0, d)
        un = float(np.linalg.norm(u))
        sphere_side = float(w_sigma @ phi(0.5 * (un * sigma - u)))
        B = plane_basis(v, v + u)
        t = -0.5 * un * (1.0 - np.cos(s))
        radius = 0.5 * un * np.sin(s)
        axial = t[:, None] * (u / un)[None, :]
        if d == 2:
            ring = 0.5 * (phi(axial + radius[:, None] * B[0]) + phi(axial - radius[:, None] * B[0]))
            plane_side = 2.0 * float(ws @ ring)
        else:
            psi = (np.arange(96) + 0.5) * (2 * math.pi / 96)
            circle = np.cos(psi)[:, None] * B[0] + np.sin(psi)[:, None] * B[1]
            pts = axial[:, None, :] + radius[:, None, None] * circle[None, :, :]
            ring = 0.5 * phi(pts).sum(axis=1) * (2 * math.pi / 96)
            plane_side = 4.0 / un * float(ws @ (0.5 * un * np.sin(s) * ring))
        assert plane_side == pytest.approx(sphere_side, rel=1e-6)


@pytest.mark.parametrize("params", [MAXWELL2, HARD_SPHERE])
def test_kernel_annihilates_collision_invariants(params):
    """nu psi mu^{1/2} + int (k1 - k2)(v, xi) psi(xi) mu^{1/2}(xi) dxi = 0 for psi in {1, xi_1, |xi|^2}."""
    d = params.d
    cs = cross_section(params)
    sb = sphere_integral_b(cs)
    rule = PlanarQuadrature(d=d)
    nu = nu_profile(params, 5.0, table_size=64)
    r, wr = np.polynomial.legendre.leggauss(160)
    r, wr = 7.0 * (r + 1.0), 7.0 * wr
    omega, wo = _sphere_rule(d, 48)
    for v in ([0.3, -0.7, 0.5][:d], [1.0, 0.4, -0.2][:d]):
        v = np.asarray(v)
        xi = v[None, None, :] + r[:, None, None] * omega[None, :, :]
        vb = np.broadcast_to(v, xi.shape)
        k = k1_values(vb, xi, params, sb) - k2_values(vb, xi, params, cs, rule)
        W = (wr * r ** (d - 1))[:, None] * wo[None, :]
        root_mu = np.sqrt(maxwellian_weight(xi))
        nu_v = nu.direct(float(np.linalg.norm(v)))
        scale = nu_v * math.sqrt(float(maxwellian_weight(v))) * (1.0 + float(v @ v))
        for psi in (lambda x: np.ones(x.shape[:-1]), lambda x: x[..., 0], lambda x: np.sum(x * x, axis=-1)):
            gain = float(np.sum(W * k * psi(xi) * root_mu))
            loss = nu_v * float(psi(v)) * math.sqrt(float(maxwellian_weight(v)))
            assert abs(gain + loss) < 1e-6 * scale


def test_kernel_table_is_hilbert_schmidt():
    mesh = build_mesh(3.0, 6, 2)
    basis = BasisSpec(p=0, d=2)
    coarse = kernel_block_table(mesh, basis, MAXWELL2, QuadratureSettings(kernel_order=3, near_order=6))
    fine = kernel_block_table(mesh, basis, MAXWELL2, QuadratureSettings(kernel_order=6, near_order=12))
    assert np.all(np.isfinite(fine))
    assert np.linalg.norm(coarse) == pytest.approx(np.linalg.norm(fine), rel=1e-2)


# ------------------------------------------------------------------------------
# Assembled matrix properties
# ------------------------------------------------------------------------------
@pytest.mark.parametrize("rep", [Representation.F, Representation.G])
def test_grad_matrix_positive_semidefinite(rep):
    mesh = build_mesh(3.0, 6, 2)
    G = assemble_grad(mesh, BasisSpec(p=0, d=2), MAXWELL2, settings=QuadratureSettings(nu_table_size=128),
                      representation=rep)
    assert G.representation is rep
    assert np.linalg.eigvalsh(G.entries)[0] >= -1e-8 * G.norm()


def _invariant_quotients(G, mesh, basis, rep):
    D = mass_matrix(mesh, basis, rep)
    weight = (lambda v: np.sqrt(maxwellian_weight(v))) if rep is Representation.F else (lambda v: 1.0)
    out = []
    for psi in (lambda v: np.ones(v.shape[:-1]), lambda v: v[..., 0], lambda v: np.sum(v * v, axis=-1)):
        x = l2_project(lambda v: psi(v) * weight(v), mesh, basis, rep).values
        out.append(float(x @ G.entries @ x) / float(x @ D.matvec(x)))
    return np.array(out)


def test_projected_invariants_nearly_annihilated():
    basis = BasisSpec(p=0, d=2)
    settings = QuadratureSettings(nu_table_size=128)
    quotients = []
    for N in (6, 12):
        mesh = build_mesh(5.0, N, 2)
        G = assemble_grad(mesh, basis, MAXWELL2, settings=settings)
        quotients.append(_invariant_quotients(G, mesh, basis, Representation.F))
    coarse, fine = quotients
    assert np.all(fine >= -1e-10) and np.all(fine < 0.1)
    assert np.all(fine < coarse)


def test_g_representation_matches_direct_backend():
    mesh = build_mesh(3.0, 4, 2)
    basis = BasisSpec(p=0, d=2)
    grad = assemble_grad(mesh, basis, MAXWELL2, representation="g",
                         settings=QuadratureSettings(nu_table_size=128, kernel_order=6, near_order=8, nu_order=8))
    direct = assemble_direct(mesh, basis, MAXWELL2, settings=QuadratureSettings(tri_order=7))
    assert grad.representation is direct.representation is Representation.G
    cs = constraint_matrix(mesh, basis, Representation.G)
    assert spectral_gap(grad, cs).gap == pytest.approx(spectral_gap(direct, cs).gap, rel=0.1)


def test_soft_gap_below_minimum_collision_frequency():
    soft = OperatorParams(d=2, gamma=-1.0, alpha=-1.0)
    mesh = build_mesh(6.0, 12, 2)
    basis = BasisSpec(p=0, d=2)
    settings = QuadratureSettings(nu_table_size=128, plane_table_size=64)
    nu = nu_profile(soft, 6.0, mesh.dv, 128)
    G = assemble_grad(mesh, basis, soft, nu=nu, settings=settings)
    gap = spectral_gap(G, constraint_matrix(mesh, basis, Representation.F)).gap
    lo, _ = nu_range(mesh, nu, settings.nu_order)
    assert 0 < gap <= lo * 1.05

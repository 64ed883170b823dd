import numpy as np
import pytest
import scipy.sparse.linalg as spla
from scipy.optimize import minimize

from gpefem.assembly import (
    ComplexField,
    DofMap,
    assemble_energy_product,
    assemble_kappa,
    assemble_load,
    assemble_mass,
    assemble_operator,
    cubic_jacobian,
    cubic_residual,
    evaluate_field,
    interpolate,
    l2_project,
    quartic_integral,
    ritz_project,
    zero_field,
)
from gpefem.mesh import build_rect_mesh, from_arrays, triangle_areas
from gpefem.model import (
    Coefficients,
    constant_diffusion,
    gpe_rotating,
    harmonic_potential,
    validate_assumptions,
    zero_kappa,
)
from gpefem.verification import l2_error

RNG = np.random.default_rng(1234)


def reference_triangle_dofmap():
    mesh = from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], (0, 1, 0, 1))
    return mesh, DofMap.build(mesh, dirichlet=False)


def laplace_coeffs(scale=1.0, c=0.0):
    return Coefficients(
        diffusion=constant_diffusion(scale * np.eye(2)),
        drift=lambda p: np.zeros_like(p),
        potential=lambda p: np.full(len(p), c),
        kappa=zero_kappa,
        beta=0.0,
    )


def random_fields(dofmap, n, rng=RNG):
    for _ in range(n):
        vals = rng.standard_normal(dofmap.n_dofs) + 1j * rng.standard_normal(
            dofmap.n_dofs
        )
        yield ComplexField(vals, dofmap)


class TestDofMap:
    def test_roundtrip(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 4, 3)
        dm = DofMap.build(mesh)
        assert np.array_equal(
            dm.node_to_dof[dm.interior_nodes], np.arange(dm.n_dofs)
        )
        assert np.all(dm.node_to_dof[mesh.boundary_nodes] == -1)
        assert dm.n_dofs == mesh.n_nodes - len(mesh.boundary_nodes)

    def test_unconstrained(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 2, 2)
        dm = DofMap.build(mesh, dirichlet=False)
        assert dm.n_dofs == mesh.n_nodes


class TestMassMatrix:
    def test_reference_triangle_local_mass(self):
        mesh, dm = reference_triangle_dofmap()
        M = assemble_mass(mesh, dm).toarray()
        expected = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24.0
        assert np.abs(M - expected).max() <= 1e-15

    def test_constant_vector_gives_area(self):
        mesh = build_rect_mesh((0, 2, 0, 1), 3, 2)
        dm = DofMap.build(mesh, dirichlet=False)
        M = assemble_mass(mesh, dm)
        one = np.ones(dm.n_dofs)
        assert np.vdot(one, M @ one).real == pytest.approx(2.0, rel=1e-13)

    def test_exactly_real_symmetric(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 5, 4)
        dm = DofMap.build(mesh)
        M = assemble_mass(mesh, dm)
        assert np.abs(M.imag).max() == 0.0
        assert np.abs((M - M.T).toarray()).max() == 0.0

    def test_row_sums_are_lumped_areas(self):
        mesh = build_rect_mesh((0, 2, -1, 1), 3, 3)
        dm = DofMap.build(mesh, dirichlet=False)
        row_sums = np.asarray(assemble_mass(mesh, dm).sum(axis=1)).ravel().real
        lumped = np.zeros(mesh.n_nodes)
        areas = triangle_areas(mesh)
        for t, tri in enumerate(mesh.triangles):
            lumped[tri] += areas[t] / 3.0
        assert np.abs(row_sums - lumped).max() <= 1e-14


class TestOperatorMatrix:
    def test_reference_triangle_local_stiffness(self):
        mesh, dm = reference_triangle_dofmap()
        L = assemble_operator(mesh, dm, laplace_coeffs()).toarray()
        expected = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
        assert np.abs(L - expected).max() <= 1e-14

    def test_linear_in_diffusion(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 4, 4)
        dm = DofMap.build(mesh)
        L_full = assemble_operator(mesh, dm, laplace_coeffs(1.0))
        L_half = assemble_operator(mesh, dm, laplace_coeffs(0.5))
        assert np.abs((L_full - 2 * L_half).toarray()).max() <= 1e-14

    def test_hermitian_for_divergence_free_drift(self):
        mesh = build_rect_mesh((-6, 6, -6, 6), 8, 8)
        dm = DofMap.build(mesh)
        co = gpe_rotating(0.8, harmonic_potential(0.9, 1.1), 100.0)
        L = assemble_operator(mesh, dm, co)
        scale = np.abs(L.toarray()).max()
        assert np.abs((L - L.getH()).toarray()).max() <= 1e-13 * scale

    def test_traversal_order_independence(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 6, 6)
        perm = np.random.default_rng(7).permutation(mesh.n_triangles)
        shuffled = from_arrays(
            mesh.nodes, mesh.triangles[perm], mesh.domain_bounds,
            covers_rectangle=True,
        )
        dm = DofMap.build(mesh)
        dms = DofMap.build(shuffled)
        co = gpe_rotating(0.8, harmonic_potential(0.9, 1.1), 1.0)
        diff = (
            assemble_operator(mesh, dm, co) - assemble_operator(shuffled, dms, co)
        ).toarray()
        assert np.abs(diff).max() <= 1e-14


class TestEnergyProduct:
    def test_equals_operator_without_drift(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 4, 4)
        dm = DofMap.build(mesh)
        co = laplace_coeffs(1.0, c=2.0)
        E = assemble_energy_product(mesh, dm, co)
        L = assemble_operator(mesh, dm, co)
        assert np.abs((E - L).toarray()).max() <= 1e-14

    def test_operator_identity_for_rotating_form(self):
        # completed square and operator form agree once the drift is
        # divergence free and the quadrature covers the integrands
        mesh = build_rect_mesh((-6, 6, -6, 6), 16, 16)
        dm = DofMap.build(mesh)
        co = gpe_rotating(0.8, harmonic_potential(0.9, 1.1), 100.0)
        E = assemble_energy_product(mesh, dm, co)
        L = assemble_operator(mesh, dm, co)
        rel = np.abs((E - L).toarray()).max() / np.abs(L.toarray()).max()
        assert rel <= 1e-10

    def test_lowest_eigenvalue_bounded_by_zeta0(self):
        mesh = build_rect_mesh((-1, 1, -1, 1), 4, 4)
        dm = DofMap.build(mesh)

        def potential(p):
            return 1.0 + 0.5 * (p[:, 0] ** 2 + p[:, 1] ** 2)

        co = gpe_rotating(0.3, potential, 1.0)
        zeta0 = validate_assumptions(co, mesh, zeta1=1.01).certificate.zeta0
        E = assemble_energy_product(mesh, dm, co).toarray()
        M = assemble_mass(mesh, dm).toarray()
        eig_E = np.linalg.eigvalsh(E).min()
        eig_M = np.linalg.eigvalsh(M).min()
        assert eig_E >= zeta0 * eig_M > 0

    def test_coercivity_on_random_fields(self):
        mesh = build_rect_mesh((-1, 1, -1, 1), 8, 8)
        dm = DofMap.build(mesh)

        def potential(p):
            return 1.0 + 0.5 * (p[:, 0] ** 2 + p[:, 1] ** 2)

        co = gpe_rotating(0.3, potential, 1.0)
        cert = validate_assumptions(co, mesh, zeta1=1.01).certificate
        E = assemble_energy_product(mesh, dm, co)
        S_A = assemble_operator(
            mesh, dm,
            Coefficients(
                diffusion=co.diffusion,
                drift=lambda p: np.zeros_like(p),
                potential=lambda p: np.zeros(len(p)),
                kappa=zero_kappa,
                beta=0.0,
            ),
        )
        M = assemble_mass(mesh, dm)
        for u in random_fields(dm, 100):
            v = u.values
            lhs = np.vdot(v, E @ v).real
            rhs = (1 - 1 / cert.zeta1) * np.vdot(v, S_A @ v).real
            rhs += cert.zeta0 * np.vdot(v, M @ v).real
            assert lhs >= rhs - 1e-12 * (abs(lhs) + abs(rhs))

    def test_warns_on_negative_weight(self):
        mesh = build_rect_mesh((-6, 6, -6, 6), 4, 4)
        dm = DofMap.build(mesh)
        # strong rotation with a weak trap turns the zero-order weight negative
        co = gpe_rotating(2.0, lambda p: np.full(len(p), 0.1), 0.0)
        with pytest.warns(UserWarning, match="definiteness"):
            assemble_energy_product(mesh, dm, co)


class TestKappaMatrix:
    @pytest.mark.parametrize(
        "kval,factor", [(0.0, 0.0), (1.0, 1.0), (1j, 1j)]
    )
    def test_constant_kappa_is_scaled_mass(self, kval, factor):
        mesh = build_rect_mesh((0, 1, 0, 1), 3, 3)
        dm = DofMap.build(mesh)
        co = Coefficients(
            diffusion=constant_diffusion(np.eye(2)),
            drift=lambda p: np.zeros_like(p),
            potential=lambda p: np.zeros(len(p)),
            kappa=lambda p: np.full(len(p), kval, dtype=complex),
            beta=0.0,
        )
        K = assemble_kappa(mesh, dm, co)
        M = assemble_mass(mesh, dm)
        assert np.abs((K - factor * M).toarray()).max() <= 1e-15
        if kval == 1j:
            assert np.abs((K + K.getH()).toarray()).max() <= 1e-15  # anti-Hermitian


class TestCubicTerm:
    def test_zero_field_and_zero_beta(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 4, 4)
        dm = DofMap.build(mesh)
        assert np.all(cubic_residual(zero_field(dm), mesh, dm, 5.0) == 0)
        u = next(iter(random_fields(dm, 1)))
        assert np.all(cubic_residual(u, mesh, dm, 0.0) == 0)

    def test_constant_field_reduces_to_mass_row_sums(self):
        mesh = build_rect_mesh((0, 2, 0, 1), 3, 2)
        dm = DofMap.build(mesh, dirichlet=False)
        c0 = 0.7 - 0.4j
        beta = 2.5
        u = ComplexField(np.full(dm.n_dofs, c0), dm)
        r = cubic_residual(u, mesh, dm, beta)
        row_sums = np.asarray(assemble_mass(mesh, dm).sum(axis=1)).ravel()
        expected = beta * abs(c0) ** 2 * c0 * row_sums
        assert np.abs(r - expected).max() <= 1e-13

    def test_residual_is_gradient_of_quartic(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 6, 6)
        dm = DofMap.build(mesh)
        beta = 3.0
        u = next(iter(random_fields(dm, 1)))
        d = next(iter(random_fields(dm, 1)))
        r = cubic_residual(u, mesh, dm, beta)
        eps = 1e-6
        up = ComplexField(u.values + eps * d.values, dm)
        um = ComplexField(u.values - eps * d.values, dm)
        dPhi = beta / 4 * (
            quartic_integral(up, mesh) - quartic_integral(um, mesh)
        ) / (2 * eps)
        pairing = np.vdot(d.values, r).real  # Re <r, d>
        assert dPhi == pytest.approx(pairing, rel=1e-6)

    def test_jacobian_zero_field(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 4, 4)
        dm = DofMap.build(mesh)
        J = cubic_jacobian(zero_field(dm), mesh, dm, 7.0)
        assert abs(J).max() == 0.0

    def test_jacobian_symmetric(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 8, 8)
        dm = DofMap.build(mesh)
        u = next(iter(random_fields(dm, 1)))
        J = cubic_jacobian(u, mesh, dm, 1.0)
        assert np.abs((J - J.T).toarray()).max() <= 1e-12

    def test_jacobian_matches_finite_differences(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 8, 8)
        dm = DofMap.build(mesh)
        beta = 1.5
        eps = 1e-5
        for u in random_fields(dm, 5):
            J = cubic_jacobian(u, mesh, dm, beta)
            d = next(iter(random_fields(dm, 1)))
            dx = np.concatenate([d.values.real, d.values.imag])
            up = ComplexField(u.values + eps * d.values, dm)
            um = ComplexField(u.values - eps * d.values, dm)
            rp = cubic_residual(up, mesh, dm, beta)
            rm = cubic_residual(um, mesh, dm, beta)
            fd = np.concatenate(
                [(rp - rm).real, (rp - rm).imag]
            ) / (2 * eps)
            Jd = J @ dx
            rel = np.linalg.norm(Jd - fd) / np.linalg.norm(fd)
            assert rel <= 1e-6

    def test_quartic_of_constant(self):
        mesh = build_rect_mesh((0, 2, 0, 1), 2, 2)
        dm = DofMap.build(mesh, dirichlet=False)
        c0 = 1.0 + 2.0j
        u = ComplexField(np.full(dm.n_dofs, c0), dm)
        assert quartic_integral(u, mesh) == pytest.approx(
            abs(c0) ** 4 * 2.0, rel=1e-13
        )


class TestInterpolation:
    def test_zero(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 3, 3)
        dm = DofMap.build(mesh)
        u = interpolate(lambda p: np.zeros(len(p), dtype=complex), mesh, dm)
        assert np.all(u.values == 0)

    def test_single_interior_node(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 2, 2)
        dm = DofMap.build(mesh)
        assert dm.n_dofs == 1
        u = interpolate(
            lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]), mesh, dm
        )
        assert u.values[0] == pytest.approx(1.0)

    def test_linear_reproduced_pointwise(self):
        # P1 interpolation reproduces linear functions exactly
        mesh = build_rect_mesh((0, 1, 0, 1), 4, 4)
        dm = DofMap.build(mesh, dirichlet=False)

        def f(p):
            return (2.0 + 1.0j) * p[:, 0] - 0.5 * p[:, 1] + 0.25

        u = interpolate(f, mesh, dm)
        pts = np.random.default_rng(3).random((50, 2))
        assert np.abs(evaluate_field(u, pts) - f(pts)).max() <= 1e-14


class TestProjections:
    def test_l2_projection_identity_on_p1(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 4, 4)
        dm = DofMap.build(mesh)
        target = next(iter(random_fields(dm, 1)))
        proj = l2_project(lambda p: evaluate_field(target, p), mesh, dm)
        assert np.abs(proj.values - target.values).max() <= 1e-12

    def test_l2_projection_contracts(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 8, 8)
        dm = DofMap.build(mesh)

        def f(p):
            return np.sin(np.pi * p[:, 0]) * np.sin(2 * np.pi * p[:, 1]) + 0j

        proj = l2_project(f, mesh, dm)
        M = assemble_mass(mesh, dm)
        norm_p = np.sqrt(np.vdot(proj.values, M @ proj.values).real)
        norm_f = 0.5  # ||sin(pi x) sin(2 pi y)|| on the unit square
        assert norm_p <= norm_f + 1e-12

    def test_l2_projection_galerkin_orthogonality(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 6, 6)
        dm = DofMap.build(mesh)

        def f(p):
            return np.exp(1j * p[:, 0]) * p[:, 1] * (1 - p[:, 1]) * p[:, 0] * (1 - p[:, 0])

        proj = l2_project(f, mesh, dm)
        M = assemble_mass(mesh, dm)
        load = assemble_load(mesh, dm, f)
        assert np.abs(M @ proj.values - load).max() <= 1e-12

    def test_l2_projection_second_order(self):
        def f(p):
            return np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]) + 0j

        errs = []
        for nx in (8, 16, 32):
            mesh = build_rect_mesh((0, 1, 0, 1), nx, nx)
            dm = DofMap.build(mesh)
            proj = l2_project(f, mesh, dm)
            errs.append(l2_error(proj, lambda p, t: f(p), 0.0))
        eoc = np.log2(errs[-2] / errs[-1])
        assert eoc == pytest.approx(2.0, abs=0.2)

    def test_ritz_projection_identity_on_p1(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 4, 4)
        dm = DofMap.build(mesh)
        co = gpe_rotating(0.8, harmonic_potential(0.9, 1.1), 0.0)
        target = next(iter(random_fields(dm, 1)))
        from gpefem.assembly import field_gradients

        grads = field_gradients(target)

        def grad_fn(p):
            from gpefem.assembly import _locate

            return grads[_locate(mesh, p)]

        proj = ritz_project(
            lambda p: evaluate_field(target, p), grad_fn, mesh, dm, co
        )
        assert np.abs(proj.values - target.values).max() <= 1e-10

    def test_ritz_projection_matches_direct_minimization(self):
        # for the pure gradient form the projection minimizes the gradient
        # misfit; BFGS on the quadrature objective is an independent oracle
        mesh = build_rect_mesh((0, 1, 0, 1), 2, 2)
        dm = DofMap.build(mesh)
        co = laplace_coeffs(1.0)
        pi = np.pi

        def f(p):
            return np.sin(pi * p[:, 0]) * np.sin(pi * p[:, 1]) + 0j

        def grad_f(p):
            out = np.empty((len(p), 2), complex)
            out[:, 0] = pi * np.cos(pi * p[:, 0]) * np.sin(pi * p[:, 1])
            out[:, 1] = pi * np.sin(pi * p[:, 0]) * np.cos(pi * p[:, 1])
            return out

        proj = ritz_project(f, grad_f, mesh, dm, co)

        from gpefem.assembly import element_tables
        from gpefem.quadrature import triangle_rule

        # same quadrature as the projection: both paths then minimize the
        # same discrete functional and only the solver differs
        tab = element_tables(mesh, triangle_rule(4))

        def objective(x):
            u = ComplexField(x[: dm.n_dofs] + 1j * x[dm.n_dofs:], dm)
            nodal = u.node_values()[mesh.triangles]
            grad_u = np.einsum("ei,eid->ed", nodal, tab.gradients.astype(complex))
            gf = grad_f(tab.quad_points.reshape(-1, 2)).reshape(
                mesh.n_triangles, -1, 2
            )
            diff = grad_u[:, None, :] - gf
            dens = (np.abs(diff) ** 2).sum(axis=2)
            return float(
                np.einsum("q,eq,e->", tab.rule.weights, dens, tab.areas)
            )

        x0 = np.zeros(2 * dm.n_dofs)
        res = minimize(objective, x0, method="BFGS", tol=1e-14)
        oracle = res.x[: dm.n_dofs] + 1j * res.x[dm.n_dofs:]
        assert np.abs(proj.values - oracle).max() <= 1e-6

    def test_ritz_projection_galerkin_orthogonality(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 6, 6)
        dm = DofMap.build(mesh)
        co = gpe_rotating(0.8, harmonic_potential(0.9, 1.1), 0.0)
        pi = np.pi

        def f(p):
            return np.sin(pi * p[:, 0]) * np.sin(pi * p[:, 1]) + 0j

        def grad_f(p):
            out = np.empty((len(p), 2), complex)
            out[:, 0] = pi * np.cos(pi * p[:, 0]) * np.sin(pi * p[:, 1])
            out[:, 1] = pi * np.sin(pi * p[:, 0]) * np.cos(pi * p[:, 1])
            return out

        from gpefem.assembly import assemble_operator_load

        proj = ritz_project(f, grad_f, mesh, dm, co)
        L = assemble_operator(mesh, dm, co)
        load = assemble_operator_load(mesh, dm, f, grad_f, co)
        assert np.abs(L @ proj.values - load).max() <= 1e-11

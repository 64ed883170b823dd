import numpy as np
import pytest

from gpefem.assembly import DofMap, assemble_operator
from gpefem.mesh import build_rect_mesh
from gpefem.model import (
    CoefficientError,
    Coefficients,
    ParameterError,
    check_divergence_free,
    constant_diffusion,
    gpe_rotating,
    harmonic_potential,
    validate_assumptions,
    zero_kappa,
)
from gpefem.quadrature import triangle_rule


def paper_setup():
    """Rotating configuration used throughout: beta=100, omega=0.8,
    anisotropic trap with frequencies 0.9 and 1.1."""
    return gpe_rotating(0.8, harmonic_potential(0.9, 1.1), 100.0)


def confined_setup(omega=0.3, shift=1.0):
    """Rotating configuration whose trap dominates the centrifugal term."""
    def potential(points):
        return shift + 0.5 * (points[:, 0] ** 2 + points[:, 1] ** 2)

    return gpe_rotating(omega, potential, 1.0)


class TestGpeRotating:
    def test_drift_formula(self):
        co = gpe_rotating(0.8, harmonic_potential(1, 1), 0.0)
        b = co.drift(np.array([[1.0, 2.0]]))
        assert b[0] == pytest.approx([-1.6, 0.8])

    def test_zero_rotation(self):
        co = gpe_rotating(0.0, harmonic_potential(1, 1), 1.0)
        pts = np.random.default_rng(0).normal(size=(20, 2))
        assert np.all(co.drift(pts) == 0)

    def test_diffusion_is_half_identity(self):
        co = paper_setup()
        A = co.diffusion(np.zeros((3, 2)))
        assert np.allclose(A, 0.5 * np.eye(2))

    def test_negative_beta_rejected(self):
        with pytest.raises(CoefficientError):
            gpe_rotating(0.5, harmonic_potential(1, 1), -1.0)

    def test_drift_antisymmetric_in_omega(self):
        # the first-order term of the assembled operator flips sign with omega
        mesh = build_rect_mesh((0, 1, 0, 1), 4, 4)
        dofmap = DofMap.build(mesh)
        pot = harmonic_potential(0.9, 1.1)
        L_plus = assemble_operator(mesh, dofmap, gpe_rotating(0.8, pot, 0.0))
        L_minus = assemble_operator(mesh, dofmap, gpe_rotating(-0.8, pot, 0.0))
        L_zero = assemble_operator(mesh, dofmap, gpe_rotating(0.0, pot, 0.0))
        drift_plus = (L_plus - L_zero).toarray()
        drift_minus = (L_minus - L_zero).toarray()
        assert np.abs(drift_plus + drift_minus).max() <= 1e-14


class TestValidateAssumptions:
    def test_artifact_configuration_violates_confinement(self):
        # centrifugal forces beat the trap away from the origin; the check
        # must report it rather than certify
        mesh = build_rect_mesh((-6, 6, -6, 6), 16, 16)
        co = paper_setup()
        report = validate_assumptions(co, mesh, zeta1=1.01)
        assert not report.ok
        assert report.certificate is None
        conditions = {v.condition for v in report.violations}
        assert "4c - (2+zeta1)|A^(-1/2)b|^2" in conditions

    def test_violation_minimum_matches_brute_force(self):
        mesh = build_rect_mesh((-6, 6, -6, 6), 8, 8)
        co = paper_setup()
        zeta1 = 1.01
        report = validate_assumptions(co, mesh, zeta1=zeta1)
        # independent scan over the same quadrature points
        rule = triangle_rule(4)
        coords = mesh.nodes[mesh.triangles]
        pts = np.einsum("qk,ekd->eqd", rule.barycentric, coords).reshape(-1, 2)
        c = co.potential(pts)
        b = co.drift(pts)
        expr = 4 * c - (2 + zeta1) * 2.0 * (b**2).sum(axis=1)  # A = I/2
        assert expr.min() < 0
        worst = min(v.value for v in report.violations)
        assert worst == pytest.approx(expr.min(), rel=1e-12)

    def test_simple_certificate(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 4, 4)
        co = Coefficients(
            diffusion=constant_diffusion(np.eye(2)),
            drift=lambda p: np.zeros_like(p),
            potential=lambda p: np.ones(len(p)),
            kappa=zero_kappa,
            beta=0.0,
        )
        report = validate_assumptions(co, mesh, zeta1=2.0)
        assert report.ok
        assert report.certificate.zeta0 == pytest.approx(1.0, rel=1e-13)
        assert report.certificate.gamma_min == pytest.approx(1.0)
        assert report.certificate.gamma_max == pytest.approx(1.0)

    def test_zeta0_scales_linearly_with_potential(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 4, 4)

        def coeffs(scale):
            return Coefficients(
                diffusion=constant_diffusion(np.eye(2)),
                drift=lambda p: np.zeros_like(p),
                potential=lambda p: scale * (1.0 + p[:, 0]),
                kappa=zero_kappa,
                beta=0.0,
            )

        z1 = validate_assumptions(coeffs(1.0), mesh).certificate.zeta0
        z3 = validate_assumptions(coeffs(3.0), mesh).certificate.zeta0
        assert z3 == pytest.approx(3.0 * z1, rel=1e-12)

    def test_negative_re_kappa_reported(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 4, 4)
        co = Coefficients(
            diffusion=constant_diffusion(np.eye(2)),
            drift=lambda p: np.zeros_like(p),
            potential=lambda p: np.ones(len(p)),
            kappa=lambda p: np.full(len(p), -0.1 + 0j),
            beta=0.0,
        )
        report = validate_assumptions(co, mesh, zeta1=2.0)
        assert not report.ok
        bad = [v for v in report.violations if v.condition == "Re(kappa)"]
        assert bad and bad[0].value == pytest.approx(-0.1)

    def test_zeta1_must_exceed_one(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 2, 2)
        with pytest.raises(ParameterError):
            validate_assumptions(paper_setup(), mesh, zeta1=1.0)

    def test_confined_configuration_certifies(self):
        mesh = build_rect_mesh((-1, 1, -1, 1), 8, 8)
        report = validate_assumptions(confined_setup(), mesh, zeta1=1.01)
        assert report.ok
        assert report.certificate.zeta0 > 0


class TestDivergenceFree:
    def test_rotation_field(self):
        mesh = build_rect_mesh((-6, 6, -6, 6), 8, 8)
        assert check_divergence_free(paper_setup(), mesh, tol=1e-10)

    def test_compressible_field(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 4, 4)
        co = Coefficients(
            diffusion=constant_diffusion(np.eye(2)),
            drift=lambda p: np.column_stack([p[:, 0], np.zeros(len(p))]),
            potential=lambda p: np.ones(len(p)),
            kappa=zero_kappa,
            beta=0.0,
            drift_is_divergence_free=False,
        )
        assert not check_divergence_free(co, mesh, tol=1e-3)

    def test_nonlinear_divergence_free_field(self):
        mesh = build_rect_mesh((0, 1, 0, 1), 4, 4)
        co = Coefficients(
            diffusion=constant_diffusion(np.eye(2)),
            drift=lambda p: np.column_stack([p[:, 1] ** 2, p[:, 0] ** 2]),
            potential=lambda p: np.ones(len(p)),
            kappa=zero_kappa,
            beta=0.0,
        )
        assert check_divergence_free(co, mesh, tol=1e-10)

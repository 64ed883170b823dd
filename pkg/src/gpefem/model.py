"""Coefficient data for the generalized rotating Gross-Pitaevskii model.

The linear part of the equation is the operator

    v  |->  -div(A grad v) + i b . grad v + c v

with a real symmetric diffusion matrix A, a real drift field b (the
angular-momentum rotation), a real trapping potential c, plus a possibly
complex zero-order coefficient kappa and the cubic interaction strength
beta >= 0.  All coefficient callables are vectorized over point arrays of
shape (n, 2) and must be side-effect-free; Coefficients instances are
immutable and safe for concurrent evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import Mesh
from .quadrature import QuadratureRule, triangle_rule


class CoefficientError(ValueError):
    pass


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class Coefficients:
    diffusion: Callable[[np.ndarray], np.ndarray]   # (n,2) -> (n,2,2), symmetric
    drift: Callable[[np.ndarray], np.ndarray]       # (n,2) -> (n,2)
    potential: Callable[[np.ndarray], np.ndarray]   # (n,2) -> (n,)
    kappa: Callable[[np.ndarray], np.ndarray]       # (n,2) -> (n,) complex
    beta: float
    drift_is_divergence_free: bool = True
    rotation: float | None = None  # angular speed for the rotating preset

    def __post_init__(self):
        if self.beta < 0:
            raise CoefficientError(f"interaction strength beta = {self.beta} < 0")


@dataclass(frozen=True)
class EllipticityCertificate:
    """Numerical witnesses for the coercivity of the linear operator."""

    gamma_min: float   # spectral lower bound of A over the sample points
    gamma_max: float
    zeta0: float       # confinement margin, positive when the trap dominates
    zeta1: float       # Young-inequality split parameter, > 1
    n_sample_points: int

    def __post_init__(self):
        if not (self.gamma_min <= self.gamma_max):
            raise ParameterError("gamma_min > gamma_max")
        if self.zeta0 <= 0 or self.zeta1 <= 1:
            raise ParameterError("certificate requires zeta0 > 0 and zeta1 > 1")


@dataclass(frozen=True)
class AssumptionViolation:
    point: tuple[float, float]
    condition: str
    value: float


@dataclass(frozen=True)
class AssumptionReport:
    ok: bool
    certificate: EllipticityCertificate | None
    violations: tuple[AssumptionViolation, ...]
    n_violations: int

    def summary(self) -> str:
        if self.ok:
            c = self.certificate
            return (
                f"assumptions hold at {c.n_sample_points} quadrature points: "
                f"gamma_min={c.gamma_min:.6g}, gamma_max={c.gamma_max:.6g}, "
                f"zeta0={c.zeta0:.6g} (zeta1={c.zeta1:.6g})"
            )
        lines = [f"assumptions violated at {self.n_violations} quadrature points;"
                 f" worst offenders:"]
        for v in self.violations:
            lines.append(
                f"  {v.condition} = {v.value:.6g} at ({v.point[0]:.4g}, {v.point[1]:.4g})"
            )
        return "\n".join(lines)


def constant_diffusion(matrix) -> Callable[[np.ndarray], np.ndarray]:
    matrix = np.asarray(matrix, dtype=float)

    def diffusion(points):
        return np.broadcast_to(matrix, (len(points), 2, 2))

    return diffusion


def harmonic_potential(gamma_x: float, gamma_y: float) -> Callable:
    """Anisotropic harmonic trap (gx^2 x^2 + gy^2 y^2) / 2."""

    def potential(points):
        return 0.5 * (
            gamma_x**2 * points[:, 0] ** 2 + gamma_y**2 * points[:, 1] ** 2
        )

    return potential


def zero_kappa(points):
    return np.zeros(len(points), dtype=complex)


def gpe_rotating(omega: float, potential: Callable, beta: float) -> Coefficients:
    """Rotating Gross-Pitaevskii preset.

    A = I/2, drift b = omega * (-y, x) and c = potential.  The sign of b is
    fixed so that the assembled first-order term reproduces the angular
    momentum rotation -omega * (L_z u, v) with L_z = -i (x d_y - y d_x).
    """
    if beta < 0:
        raise CoefficientError(f"interaction strength beta = {beta} < 0")

    def drift(points):
        out = np.empty_like(points, dtype=float)
        out[:, 0] = -omega * points[:, 1]
        out[:, 1] = omega * points[:, 0]
        return out

    return Coefficients(
        diffusion=constant_diffusion(0.5 * np.eye(2)),
        drift=drift,
        potential=potential,
        kappa=zero_kappa,
        beta=beta,
        drift_is_divergence_free=True,
        rotation=omega,
    )


def _quadrature_points(mesh: Mesh, rule: QuadratureRule) -> np.ndarray:
    coords = mesh.nodes[mesh.triangles]              # (m, 3, 2)
    pts = np.einsum("qk,ekd->eqd", rule.barycentric, coords)
    return pts.reshape(-1, 2)


def _sym_eigenvalues_2x2(A: np.ndarray):
    a, b, c = A[:, 0, 0], A[:, 0, 1], A[:, 1, 1]
    mean = 0.5 * (a + c)
    rad = np.sqrt((0.5 * (a - c)) ** 2 + b**2)
    return mean - rad, mean + rad


def validate_assumptions(
    coeffs: Coefficients,
    mesh: Mesh,
    zeta1: float = 1.01,
    quad_degree: int = 4,
    max_reported: int = 10,
) -> AssumptionReport:
    """Check the structural assumptions pointwise at all quadrature points.

    Verifies symmetry and spectral bounds of A, Re(kappa) >= 0, and the
    confinement condition 4c - (2 + zeta1) |A^{-1/2} b|^2 > 0, whose
    pointwise minimum over the sample set yields zeta0 (divided by 4).
    Validation is advisory: the solver runs regardless, but only a
    certificate enables the theory-backed interpretation of a run.
    """
    if zeta1 <= 1:
        raise ParameterError(f"zeta1 = {zeta1} must exceed 1")
    rule = triangle_rule(quad_degree)
    pts = _quadrature_points(mesh, rule)

    A = np.asarray(coeffs.diffusion(pts), dtype=float)
    b = np.asarray(coeffs.drift(pts), dtype=float)
    c = np.asarray(coeffs.potential(pts), dtype=float)
    kap = np.asarray(coeffs.kappa(pts), dtype=complex)

    violations: list[AssumptionViolation] = []

    asym = np.abs(A[:, 0, 1] - A[:, 1, 0])
    scale = np.abs(A).max() + 1.0
    for i in np.nonzero(asym > 1e-12 * scale)[0][:max_reported]:
        violations.append(
            AssumptionViolation(tuple(pts[i]), "asymmetry of A", float(asym[i]))
        )
    n_bad = int(np.count_nonzero(asym > 1e-12 * scale))

    lam_min, lam_max = _sym_eigenvalues_2x2(A)
    for i in np.nonzero(lam_min <= 0)[0][:max_reported]:
        violations.append(
            AssumptionViolation(tuple(pts[i]), "min eigenvalue of A", float(lam_min[i]))
        )
    n_bad += int(np.count_nonzero(lam_min <= 0))

    re_k = kap.real
    bad_k = np.nonzero(re_k < 0)[0]
    order = np.argsort(re_k[bad_k])
    for i in bad_k[order][:max_reported]:
        violations.append(
            AssumptionViolation(tuple(pts[i]), "Re(kappa)", float(re_k[i]))
        )
    n_bad += len(bad_k)

    # |A^{-1/2} b|^2 = b . A^{-1} b
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    inv_b0 = (A[:, 1, 1] * b[:, 0] - A[:, 0, 1] * b[:, 1]) / det
    inv_b1 = (-A[:, 1, 0] * b[:, 0] + A[:, 0, 0] * b[:, 1]) / det
    drift_energy = b[:, 0] * inv_b0 + b[:, 1] * inv_b1
    confinement = 4.0 * c - (2.0 + zeta1) * drift_energy
    bad_c = np.nonzero(confinement <= 0)[0]
    order = np.argsort(confinement[bad_c])
    for i in bad_c[order][:max_reported]:
        violations.append(
            AssumptionViolation(
                tuple(pts[i]), "4c - (2+zeta1)|A^(-1/2)b|^2", float(confinement[i])
            )
        )
    n_bad += len(bad_c)

    if n_bad:
        return AssumptionReport(
            ok=False,
            certificate=None,
            violations=tuple(violations),
            n_violations=n_bad,
        )
    cert = EllipticityCertificate(
        gamma_min=float(lam_min.min()),
        gamma_max=float(lam_max.max()),
        zeta0=float(confinement.min() / 4.0),
        zeta1=float(zeta1),
        n_sample_points=len(pts),
    )
    return AssumptionReport(ok=True, certificate=cert, violations=(), n_violations=0)


def check_divergence_free(coeffs: Coefficients, mesh: Mesh, tol: float = 1e-10) -> bool:
    """Central-difference estimate of div(b) at all element barycenters."""
    coords = mesh.nodes[mesh.triangles]
    bary = coords.mean(axis=1)
    x0, x1, y0, y1 = mesh.domain_bounds
    delta = 1e-6 * max(x1 - x0, y1 - y0)

    def shift(d, axis):
        p = bary.copy()
        p[:, axis] += d
        return p

    dbx = (coeffs.drift(shift(delta, 0))[:, 0] - coeffs.drift(shift(-delta, 0))[:, 0])
    dby = (coeffs.drift(shift(delta, 1))[:, 1] - coeffs.drift(shift(-delta, 1))[:, 1])
    div = (dbx + dby) / (2.0 * delta)
    return bool(np.abs(div).max() <= tol)

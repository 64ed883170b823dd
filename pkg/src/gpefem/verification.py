"""Convergence-order harness: benchmark cases, error norms and EOC tables.

The shipped benchmarks are (a) a linear eigenmode with a closed-form
solution, usable both against the continuous solution (spatial orders) and
against the exact discrete evolution of the matching generalized eigenpair
(temporal orders, no spatial pollution), and (b) a forced cubic case whose
manufactured solution exercises the nonlinear terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from . import diagnostics
from .assembly import (
    AssembledSystem,
    ComplexField,
    DofMap,
    assemble_system,
    element_tables,
    interpolate,
    ritz_project,
)
from .mesh import Mesh, build_rect_mesh
from .model import Coefficients, constant_diffusion, zero_kappa
from .quadrature import triangle_rule
from .steppers import StepperConfig, run


class VerificationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# benchmark cases
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkCase:
    """A problem with a known solution (exact or manufactured).

    ``forcing`` is the source term that makes ``exact_solution`` solve the
    equation; it is None for genuinely unforced cases.  The exact solution
    must vanish on the domain boundary for all times.
    """

    name: str
    coeffs: Coefficients
    bounds: tuple[float, float, float, float]
    exact_solution: Callable  # (points, t) -> complex values
    exact_gradient: Callable  # (points, t) -> (n, 2) complex
    forcing: Callable | None = None
    time_horizon: float = 1.0

    def initial(self, points):
        return self.exact_solution(points, 0.0)


def _zero_potential(points):
    return np.zeros(len(points))


def eigenmode_case(
    bounds=(0.0, math.pi, 0.0, math.pi), mode=(1, 1), beta: float = 0.0
) -> BenchmarkCase:
    """Fundamental sine mode of the free operator -div(grad/2) on a rectangle.

    On the default pi x pi domain the (1,1) mode has unit frequency, which
    keeps step-size ladders like {0.2, ..., 0.025} inside the asymptotic
    regime of both schemes.  ``beta`` > 0 turns this into an initial datum
    for nonlinear runs (the closed-form solution then no longer applies).
    """
    x0, x1, y0, y1 = bounds
    a, b = x1 - x0, y1 - y0
    kx = mode[0] * math.pi / a
    ky = mode[1] * math.pi / b
    lam = 0.5 * (kx**2 + ky**2)
    amp = 2.0 / math.sqrt(a * b)  # unit L2 norm

    def exact(points, t):
        sx = np.sin(kx * (points[:, 0] - x0))
        sy = np.sin(ky * (points[:, 1] - y0))
        return amp * np.exp(-1j * lam * t) * sx * sy

    def exact_grad(points, t):
        sx = np.sin(kx * (points[:, 0] - x0))
        sy = np.sin(ky * (points[:, 1] - y0))
        cx = np.cos(kx * (points[:, 0] - x0))
        cy = np.cos(ky * (points[:, 1] - y0))
        phase = amp * np.exp(-1j * lam * t)
        out = np.empty((len(points), 2), dtype=complex)
        out[:, 0] = phase * kx * cx * sy
        out[:, 1] = phase * ky * sx * cy
        return out

    coeffs = Coefficients(
        diffusion=constant_diffusion(0.5 * np.eye(2)),
        drift=lambda pts: np.zeros_like(pts),
        potential=_zero_potential,
        kappa=zero_kappa,
        beta=beta,
    )
    return BenchmarkCase(
        name="eigenmode",
        coeffs=coeffs,
        bounds=bounds,
        exact_solution=exact,
        exact_gradient=exact_grad,
    )


def manufactured_cubic_case(beta: float = 1.0) -> BenchmarkCase:
    """Forced cubic problem with solution e^{-it} sin(pi x) sin(pi y) on the
    unit square."""
    pi = math.pi

    def shape(points):
        return np.sin(pi * points[:, 0]) * np.sin(pi * points[:, 1])

    def exact(points, t):
        return np.exp(-1j * t) * shape(points)

    def exact_grad(points, t):
        phase = np.exp(-1j * t)
        out = np.empty((len(points), 2), dtype=complex)
        out[:, 0] = phase * pi * np.cos(pi * points[:, 0]) * np.sin(pi * points[:, 1])
        out[:, 1] = phase * pi * np.sin(pi * points[:, 0]) * np.cos(pi * points[:, 1])
        return out

    def forcing(points, t):
        # i d_t u - L u - beta |u|^2 u for the exact solution above
        phi = shape(points)
        return (1.0 - pi**2 - beta * phi**2) * np.exp(-1j * t) * phi

    coeffs = Coefficients(
        diffusion=constant_diffusion(0.5 * np.eye(2)),
        drift=lambda pts: np.zeros_like(pts),
        potential=_zero_potential,
        kappa=zero_kappa,
        beta=beta,
    )
    return BenchmarkCase(
        name="manufactured-cubic",
        coeffs=coeffs,
        bounds=(0.0, 1.0, 0.0, 1.0),
        exact_solution=exact,
        exact_gradient=exact_grad,
        forcing=forcing,
    )


# ---------------------------------------------------------------------------
# error norms by quadrature
# ---------------------------------------------------------------------------

def l2_error(u: ComplexField, exact: Callable, t: float, quad_degree: int = 4) -> float:
    mesh = u.dofmap.mesh
    tab = element_tables(mesh, triangle_rule(quad_degree))
    nodal = u.node_values()[mesh.triangles]
    uq = np.einsum("qi,ei->eq", tab.lam, nodal)
    m, nq = uq.shape
    ex = np.asarray(exact(tab.quad_points.reshape(-1, 2), t), complex).reshape(m, nq)
    diff = uq - ex
    val = np.einsum("q,eq,e->", tab.rule.weights, diff.real**2 + diff.imag**2,
                    tab.areas)
    return float(np.sqrt(val))


def energy_norm_error(
    u: ComplexField,
    exact: Callable,
    exact_grad: Callable,
    t: float,
    coeffs: Coefficients,
    quad_degree: int = 4,
) -> float:
    """Error in the energy norm induced by the completed-square product."""
    from .assembly import _solve_2x2, _sym_sqrt_2x2

    mesh = u.dofmap.mesh
    tab = element_tables(mesh, triangle_rule(quad_degree))
    m, nq = tab.quad_points.shape[:2]
    pts = tab.quad_points.reshape(-1, 2)

    nodal = u.node_values()[mesh.triangles]
    uq = np.einsum("qi,ei->eq", tab.lam, nodal)
    grad_u = np.einsum("ei,eid->ed", nodal, tab.gradients.astype(complex))
    ev = uq - np.asarray(exact(pts, t), complex).reshape(m, nq)
    eg = grad_u[:, None, :] - np.asarray(exact_grad(pts, t), complex).reshape(m, nq, 2)

    Aq = np.asarray(coeffs.diffusion(pts), float).reshape(m, nq, 2, 2)
    bq = np.asarray(coeffs.drift(pts), float).reshape(m, nq, 2)
    cq = np.asarray(coeffs.potential(pts), float).reshape(m, nq)
    sqrtA, det_sqrtA = _sym_sqrt_2x2(Aq)
    isqrt_b = _solve_2x2(sqrtA, det_sqrtA, bq)
    vec = np.einsum("eqdc,eqc->eqd", sqrtA, eg) - 0.5j * isqrt_b * ev[..., None]
    weight = cq - 0.25 * np.einsum("eqd,eqd->eq", isqrt_b, isqrt_b)
    dens = np.einsum("eqd,eqd->eq", vec, vec.conj()).real
    dens += weight * (ev.real**2 + ev.imag**2)
    val = np.einsum("q,eq,e->", tab.rule.weights, dens, tab.areas)
    return float(np.sqrt(max(val, 0.0)))


def mass_norm(values: np.ndarray, mass_matrix) -> float:
    return float(np.sqrt(max(np.vdot(values, mass_matrix @ values).real, 0.0)))


# ---------------------------------------------------------------------------
# EOC tables
# ---------------------------------------------------------------------------

@dataclass
class EOCTable:
    parameter: str                      # "h" or "tau"
    levels: list
    errors: dict                        # norm name -> list of errors
    orders: dict = field(default_factory=dict)

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if len(lv) < 2:
            raise VerificationError("need at least two levels for an EOC table")
        ratios = lv[:-1] / lv[1:]
        if np.any(np.abs(ratios - 2.0) > 1e-9):
            raise VerificationError(
                f"levels must halve between entries, got ratios {ratios}"
            )
        for name, errs in self.errors.items():
            errs = np.asarray(errs, dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                self.orders[name] = list(np.log2(errs[:-1] / errs[1:]))

    def final_order(self, norm: str) -> float:
        return self.orders[norm][-1]

    def to_text(self) -> str:
        names = list(self.errors)
        head = f"{self.parameter:>12s}"
        for n in names:
            head += f"{n:>14s}{'order':>8s}"
        lines = [head]
        for i, lv in enumerate(self.levels):
            row = f"{lv:>12.5g}"
            for n in names:
                row += f"{self.errors[n][i]:>14.5e}"
                row += f"{self.orders[n][i - 1]:>8.3f}" if i else f"{'-':>8s}"
            lines.append(row)
        return "\n".join(lines)

    def to_csv(self) -> str:
        names = list(self.errors)
        lines = [",".join([self.parameter] + [f"{n},order_{n}" for n in names])]
        for i, lv in enumerate(self.levels):
            cells = [repr(lv)]
            for n in names:
                cells.append(repr(self.errors[n][i]))
                cells.append(repr(self.orders[n][i - 1]) if i else "")
            lines.append(",".join(cells))
        return "\n".join(lines)


def _case_system(case: BenchmarkCase, nx: int, quad_degree: int = 4):
    mesh = build_rect_mesh(case.bounds, nx, nx)
    dofmap = DofMap.build(mesh, dirichlet=True)
    return assemble_system(mesh, dofmap, case.coeffs, quad_degree)


def run_space_eoc(
    case: BenchmarkCase,
    levels: Sequence[int] = (16, 32, 64),
    tau: float | None = None,
    scheme: str = "irk",
    t_target: float = 0.5,
    newton_tol: float = 1e-10,
    quad_degree: int = 4,
) -> EOCTable:
    """Spatial orders at fixed small tau (default: squared finest mesh size).

    The step size is chosen so the temporal error is subdominant; errors are
    measured at the final time against the exact solution.
    """
    levels = list(levels)
    finest = build_rect_mesh(case.bounds, levels[-1], levels[-1])
    if tau is None:
        tau = finest.h_max**2
    n_steps = max(1, round(t_target / tau))
    t_final = n_steps * tau

    hs, l2_errs, e_errs = [], [], []
    for nx in levels:
        systems = _case_system(case, nx, quad_degree)
        u0 = interpolate(lambda p: case.initial(p), systems.mesh, systems.dofmap)
        config = StepperConfig(
            scheme=scheme, tau=tau, t_final=t_final, newton_tol=newton_tol,
            record_every=max(1, n_steps),
        )
        out = run(u0, config, systems, forcing=case.forcing)
        if out.failed:
            raise VerificationError(f"run failed on level {nx}: {out.failure}")
        u_final = out.results[-1].field
        hs.append(systems.mesh.h_max)
        l2_errs.append(l2_error(u_final, case.exact_solution, t_final, quad_degree))
        e_errs.append(
            energy_norm_error(
                u_final, case.exact_solution, case.exact_gradient, t_final,
                case.coeffs, quad_degree,
            )
        )
    return EOCTable("h", hs, {"l2": l2_errs, "energy": e_errs})


def discrete_eigenmode(systems: AssembledSystem):
    """Smallest generalized eigenpair of (operator, mass).

    Only for coefficient sets making the operator real symmetric; the pair
    is the oracle for exact discrete-in-space time evolution.
    """
    S = systems.operator
    if abs(S.imag).max() > 1e-12 * abs(S.real).max():
        raise VerificationError("operator is not real; no symmetric eigenpair oracle")
    Sr = S.real.tocsc()
    Mr = systems.mass.real.tocsc()
    v0 = np.ones(Sr.shape[0])
    vals, vecs = spla.eigsh(Sr, k=1, M=Mr, sigma=0.0, which="LM", v0=v0)
    lam = float(vals[0])
    vec = vecs[:, 0].astype(complex)
    vec /= mass_norm(vec, systems.mass)
    # fix the sign for reproducibility
    if vec[np.argmax(np.abs(vec))].real < 0:
        vec = -vec
    return lam, ComplexField(vec, systems.dofmap)


def scalar_amplification(scheme: str, z: float) -> complex:
    """Per-step amplification factor of the scalar model i y' = z/tau * y."""
    if scheme == "irk":
        return (1.0 - 0.5j * z) / (1.0 + 0.5j * z)
    if scheme == "be":
        return 1.0 / (1.0 + 1j * z)
    raise VerificationError(f"no scalar recurrence for scheme {scheme!r}")


def run_time_eoc(
    case: BenchmarkCase,
    nx: int = 64,
    tau_levels: Sequence[float] = (0.2, 0.1, 0.05, 0.025),
    scheme: str = "irk",
    t_final: float = 1.0,
    mode: str = "auto",
    newton_tol: float = 1e-10,
    reference_refinement: int = 8,
    quad_degree: int = 4,
    initial_field: ComplexField | None = None,
) -> EOCTable:
    """Temporal orders on a fixed mesh.

    For linear cases the reference is the exact evolution of the discrete
    fundamental eigenpair, so no spatial error pollutes the ladder.  For
    nonlinear cases a same-mesh reference run at tau_finest / refinement
    provides self-convergence errors; pass a spectrally smooth
    ``initial_field`` (eigenvector, ground state) there, since nodal
    interpolants carry rough components whose phase errors do not scale
    with the step size.
    """
    systems = _case_system(case, nx, quad_degree)
    taus = list(tau_levels)
    if mode == "auto":
        mode = "discrete_eigen" if case.coeffs.beta == 0.0 and case.forcing is None \
            else "self"

    if mode == "discrete_eigen":
        lam, u0 = discrete_eigenmode(systems)
        reference = np.exp(-1j * lam * t_final) * u0.values
    else:
        if initial_field is not None:
            u0 = ComplexField(initial_field.values.copy(), systems.dofmap)
        else:
            u0 = interpolate(lambda p: case.initial(p), systems.mesh, systems.dofmap)
        tau_ref = min(taus) / reference_refinement
        config = StepperConfig(
            scheme=scheme, tau=tau_ref, t_final=t_final, newton_tol=newton_tol,
            record_every=10**9,
        )
        out = run(u0, config, systems, forcing=case.forcing)
        if out.failed:
            raise VerificationError(f"reference run failed: {out.failure}")
        reference = out.results[-1].field.values

    errs = []
    for tau in taus:
        config = StepperConfig(
            scheme=scheme, tau=tau, t_final=t_final, newton_tol=newton_tol,
            record_every=10**9,
        )
        out = run(u0, config, systems, forcing=case.forcing)
        if out.failed:
            raise VerificationError(f"run at tau = {tau} failed: {out.failure}")
        errs.append(mass_norm(out.results[-1].field.values - reference, systems.mass))
    return EOCTable("tau", taus, {"l2": errs})


def run_projection_eoc(
    f: Callable,
    grad_f: Callable,
    levels: Sequence[int],
    coeffs: Coefficients,
    bounds=(0.0, 1.0, 0.0, 1.0),
    quad_degree: int = 4,
) -> EOCTable:
    """Orders of the operator-form Galerkin projection: 2 in L2, 1 in energy."""
    hs, l2_errs, e_errs = [], [], []
    for nx in levels:
        mesh = build_rect_mesh(bounds, nx, nx)
        dofmap = DofMap.build(mesh, dirichlet=True)
        proj = ritz_project(f, grad_f, mesh, dofmap, coeffs, quad_degree)
        hs.append(mesh.h_max)
        l2_errs.append(l2_error(proj, lambda p, t: f(p), 0.0, quad_degree))
        e_errs.append(
            energy_norm_error(
                proj, lambda p, t: f(p), lambda p, t: grad_f(p), 0.0, coeffs,
                quad_degree,
            )
        )
    return EOCTable("h", hs, {"l2": l2_errs, "energy": e_errs})


# ---------------------------------------------------------------------------
# dissipation comparison (100-step mass/energy loss table)
# ---------------------------------------------------------------------------

@dataclass
class DissipationRow:
    tau: float
    t_final: float
    mass_be: float
    mass_irk: float
    energy_be: float
    energy_irk: float


@dataclass
class DissipationTable:
    rows: list

    def to_csv(self) -> str:
        lines = ["tau,T,mass_be,mass_irk,energy_be,energy_irk"]
        for r in self.rows:
            lines.append(
                f"{r.tau!r},{r.t_final!r},{r.mass_be!r},{r.mass_irk!r},"
                f"{r.energy_be!r},{r.energy_irk!r}"
            )
        return "\n".join(lines)

    def to_text(self) -> str:
        lines = [
            f"{'tau':>10s}{'T':>8s}{'mass(BE)':>14s}{'mass(IRK)':>14s}"
            f"{'energy(BE)':>14s}{'energy(IRK)':>14s}"
        ]
        for r in self.rows:
            lines.append(
                f"{r.tau:>10.4g}{r.t_final:>8.4g}{r.mass_be:>14.6e}"
                f"{r.mass_irk:>14.6e}{r.energy_be:>14.6e}{r.energy_irk:>14.6e}"
            )
        return "\n".join(lines)


def dissipation_experiment(
    systems: AssembledSystem,
    u0: ComplexField,
    tau_list: Sequence[float] = (1.0, 0.1, 0.01, 0.001),
    n_steps: int = 100,
    newton_tol: float = 1e-11,
    newton_max_iter: int = 100,
) -> DissipationTable:
    """Mass and energy after n_steps of backward Euler vs implicit midpoint.

    The dissipative scheme collapses the mass for large steps and recovers
    it monotonically as tau decreases; the midpoint scheme keeps the mass
    constant at every step size.
    """
    rows = []
    for tau in tau_list:
        finals = {}
        for scheme in ("be", "irk"):
            config = StepperConfig(
                scheme=scheme,
                tau=tau,
                t_final=n_steps * tau,
                newton_tol=newton_tol,
                newton_max_iter=newton_max_iter,
                record_every=n_steps,
            )
            out = run(u0, config, systems)
            if out.failed:
                raise VerificationError(
                    f"{scheme} at tau = {tau} failed: {out.failure}"
                )
            step = out.results[-1]
            finals[scheme] = (step.mass, step.energy)
        rows.append(
            DissipationRow(
                tau=tau,
                t_final=n_steps * tau,
                mass_be=finals["be"][0],
                mass_irk=finals["irk"][0],
                energy_be=finals["be"][1],
                energy_irk=finals["irk"][1],
            )
        )
    return DissipationTable(rows)


# ---------------------------------------------------------------------------
# truncation-error probe
# ---------------------------------------------------------------------------

def discrete_residual_of_exact(
    case: BenchmarkCase, systems: AssembledSystem, tau: float, t_prev: float = 0.0
) -> float:
    """Insert the exact solution into one implicit-midpoint step.

    Returns the M^{-1}-weighted residual norm divided by tau, which decays
    like O(h^2 + tau^2) and checks scheme consistency without solving.
    """
    mesh, dofmap = systems.mesh, systems.dofmap
    u_prev = interpolate(lambda p: case.exact_solution(p, t_prev), mesh, dofmap)
    u_next = interpolate(lambda p: case.exact_solution(p, t_prev + tau), mesh, dofmap)
    C = systems.mass + (0.5j * tau) * (systems.operator + systems.kappa)
    rhs = 2.0 * systems.mass @ u_prev.values - C @ u_prev.values
    if case.forcing is not None:
        rhs = rhs - 1j * tau * systems.forcing_load(case.forcing, t_prev + 0.5 * tau)
    mid = ComplexField(0.5 * (u_next.values + u_prev.values), dofmap)
    F = C @ u_next.values - rhs
    if systems.beta != 0.0:
        F = F + 1j * tau * systems.cubic_residual(mid)
    Minv_F = spla.spsolve(systems.mass.tocsc(), F)
    return float(np.sqrt(np.vdot(F, Minv_F).real)) / tau

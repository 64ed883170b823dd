"""Conserved-quantity evaluation and field export."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import AssembledSystem, ComplexField, DofMap, element_tables, quartic_integral
from .mesh import Mesh
from .model import Coefficients
from .quadrature import triangle_rule

CSV_HEADER = "step,t,mass,energy,newton_iters,residual"


@dataclass(frozen=True)
class DiagnosticsRecord:
    step: int
    t: float
    mass: float
    energy: float
    newton_iters: int
    residual: float

    def csv_row(self) -> str:
        return (
            f"{self.step},{self.t!r},{self.mass!r},{self.energy!r},"
            f"{self.newton_iters},{self.residual!r}"
        )


def mass(u: ComplexField, mass_matrix: sp.spmatrix) -> float:
    """L2 norm sqrt(u^H M u) as an exact quadratic form."""
    return float(np.sqrt(max(np.vdot(u.values, mass_matrix @ u.values).real, 0.0)))


def energy(
    u: ComplexField,
    energy_matrix: sp.spmatrix,
    kappa_matrix: sp.spmatrix,
    mesh: Mesh,
    dofmap: DofMap,
    beta: float,
    quad_degree: int = 4,
    tables=None,
) -> float:
    """Total energy: the energy-product quadratic form plus the kappa and
    quartic interaction terms.

    For complex kappa only the real part is meaningful; a warning flags
    that the dynamics are then not conservative.
    """
    quad_form = np.vdot(u.values, energy_matrix @ u.values)
    kappa_form = np.vdot(u.values, kappa_matrix @ u.values)
    if abs(kappa_form.imag) > 1e-12 * (abs(kappa_form) + 1.0):
        warnings.warn(
            "kappa has an imaginary part; reporting Re(energy) of a "
            "non-conservative flow",
            stacklevel=2,
        )
    quartic = quartic_integral(u, mesh, quad_degree, tables=tables)
    return float(quad_form.real + kappa_form.real + 0.5 * beta * quartic)


def system_energy(u: ComplexField, systems: AssembledSystem) -> float:
    return energy(
        u,
        systems.energy_product,
        systems.kappa,
        systems.mesh,
        systems.dofmap,
        systems.beta,
        systems.quad_degree,
        tables=systems.tables,
    )


def energy_direct(
    u: ComplexField,
    coeffs: Coefficients,
    mesh: Mesh,
    dofmap: DofMap,
    quad_degree: int = 4,
) -> float:
    """Energy by direct quadrature of the defining integrand.

    Independent of the assembled energy-product matrix; used to
    cross-validate it.
    """
    from .assembly import _solve_2x2, _sym_sqrt_2x2

    rule = triangle_rule(quad_degree)
    tab = element_tables(mesh, rule)
    m, nq = tab.quad_points.shape[:2]
    pts = tab.quad_points.reshape(-1, 2)
    Aq = np.asarray(coeffs.diffusion(pts), float).reshape(m, nq, 2, 2)
    bq = np.asarray(coeffs.drift(pts), float).reshape(m, nq, 2)
    cq = np.asarray(coeffs.potential(pts), float).reshape(m, nq)
    kq = np.asarray(coeffs.kappa(pts), complex).reshape(m, nq)

    nodal = u.node_values()[mesh.triangles]
    uq = np.einsum("qi,ei->eq", tab.lam, nodal)
    grad_u = np.einsum("ei,eid->ed", nodal, tab.gradients.astype(complex))

    sqrtA, det_sqrtA = _sym_sqrt_2x2(Aq)
    isqrt_b = _solve_2x2(sqrtA, det_sqrtA, bq)
    vec = np.einsum("eqdc,ec->eqd", sqrtA, grad_u) - 0.5j * isqrt_b * uq[..., None]
    weight = cq - 0.25 * np.einsum("eqd,eqd->eq", isqrt_b, isqrt_b)

    dens = np.einsum("eqd,eqd->eq", vec, vec.conj()).real
    s = uq.real**2 + uq.imag**2
    dens += weight * s + (kq * s).real + 0.5 * coeffs.beta * s**2
    return float(np.einsum("q,eq,e->", rule.weights, dens, tab.areas))


def export_vtk(u: ComplexField, mesh: Mesh, path) -> None:
    """Legacy-VTK ASCII snapshot with point data density, re_u, im_u.

    Boundary nodes are written with value zero; values carry 17 significant
    digits so a re-parse reproduces them exactly.
    """
    nodal = u.node_values()
    scalars = {
        "density": np.abs(nodal) ** 2,
        "re_u": nodal.real,
        "im_u": nodal.imag,
    }
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("gpefem field snapshot\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for px, py in mesh.nodes:
            fh.write(f"{px:.17g} {py:.17g} 0\n")
        m = mesh.n_triangles
        fh.write(f"CELLS {m} {4 * m}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {m}\n")
        fh.write("\n".join(["5"] * m) + "\n")
        fh.write(f"POINT_DATA {mesh.n_nodes}\n")
        for name, vals in scalars.items():
            fh.write(f"SCALARS {name} double 1\n")
            fh.write("LOOKUP_TABLE default\n")
            for v in vals:
                fh.write(f"{v:.17g}\n")


def write_csv(records, path) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in records:
            fh.write(rec.csv_row() + "\n")


class CsvSink:
    """Streams diagnostics records to a CSV file as they are produced."""

    def __init__(self, path):
        self._fh = open(path, "w")
        self._fh.write(CSV_HEADER + "\n")

    def __call__(self, record: DiagnosticsRecord) -> None:
        self._fh.write(record.csv_row() + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

"""Complex-valued P1 finite element assembly.

All sesquilinear forms are assembled over the full node set first and then
restricted to the degrees of freedom of a DofMap, so the same code path
serves homogeneous Dirichlet spaces and unconstrained ones.  Matrices are
scipy CSR; element contributions are accumulated in element-index order,
which keeps assembly deterministic and independent of traversal order up
to roundoff.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh, triangle_areas
from .model import Coefficients
from .quadrature import QuadratureRule, triangle_rule


class AssemblyError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# degrees of freedom and fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DofMap:
    """Map between mesh nodes and complex unknowns.

    With ``dirichlet=True`` only interior nodes carry a degree of freedom
    (homogeneous Dirichlet values are eliminated); otherwise every node does.
    """

    mesh: Mesh
    interior_nodes: np.ndarray   # ordered dof -> node
    node_to_dof: np.ndarray      # node -> dof, -1 for constrained nodes
    n_dofs: int

    @classmethod
    def build(cls, mesh: Mesh, dirichlet: bool = True) -> "DofMap":
        if dirichlet:
            mask = ~mesh.boundary_mask()
            interior = np.nonzero(mask)[0]
        else:
            interior = np.arange(mesh.n_nodes)
        node_to_dof = np.full(mesh.n_nodes, -1, dtype=np.int64)
        node_to_dof[interior] = np.arange(len(interior))
        return cls(
            mesh=mesh,
            interior_nodes=interior,
            node_to_dof=node_to_dof,
            n_dofs=len(interior),
        )


@dataclass
class ComplexField:
    """Coefficient vector of a P1 function, one complex value per dof.

    Constrained (boundary) nodes are implicitly zero.
    """

    values: np.ndarray
    dofmap: DofMap
    time_tag: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.dofmap.n_dofs,):
            raise AssemblyError(
                f"field has {self.values.shape} values, expected ({self.dofmap.n_dofs},)"
            )

    def node_values(self) -> np.ndarray:
        """Values on all mesh nodes, zeros on constrained nodes."""
        out = np.zeros(self.dofmap.mesh.n_nodes, dtype=complex)
        out[self.dofmap.interior_nodes] = self.values
        return out

    def copy(self, time_tag=None) -> "ComplexField":
        return ComplexField(self.values.copy(), self.dofmap, time_tag)


def zero_field(dofmap: DofMap) -> ComplexField:
    return ComplexField(np.zeros(dofmap.n_dofs, dtype=complex), dofmap)


# ---------------------------------------------------------------------------
# element tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ElementTables:
    """Per-element geometry and basis data shared by all assembly loops."""

    rule: QuadratureRule
    areas: np.ndarray        # (m,)
    gradients: np.ndarray    # (m, 3, 2)  constant P1 basis gradients
    quad_points: np.ndarray  # (m, nq, 2) physical quadrature points
    lam: np.ndarray          # (nq, 3)    basis values at quadrature points


def element_tables(mesh: Mesh, rule: QuadratureRule) -> ElementTables:
    coords = mesh.nodes[mesh.triangles]          # (m, 3, 2)
    areas = triangle_areas(mesh)
    x = coords[..., 0]
    y = coords[..., 1]
    grads = np.empty((mesh.n_triangles, 3, 2))
    grads[:, 0, 0] = y[:, 1] - y[:, 2]
    grads[:, 0, 1] = x[:, 2] - x[:, 1]
    grads[:, 1, 0] = y[:, 2] - y[:, 0]
    grads[:, 1, 1] = x[:, 0] - x[:, 2]
    grads[:, 2, 0] = y[:, 0] - y[:, 1]
    grads[:, 2, 1] = x[:, 1] - x[:, 0]
    grads /= (2.0 * areas)[:, None, None]
    quad_points = np.einsum("qk,ekd->eqd", rule.barycentric, coords)
    return ElementTables(
        rule=rule,
        areas=areas,
        gradients=grads,
        quad_points=quad_points,
        lam=rule.barycentric.copy(),
    )


def _scatter_matrix(mesh: Mesh, blocks: np.ndarray) -> sp.csr_matrix:
    """Accumulate (m, 3, 3) element blocks into an n_nodes x n_nodes CSR."""
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()           # test index i
    cols = np.tile(tri, (1, 3)).ravel()                # trial index j
    mat = sp.coo_matrix(
        (blocks.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)
    )
    return mat.tocsr()


def _scatter_vector(mesh: Mesh, locals_: np.ndarray) -> np.ndarray:
    flat = mesh.triangles.ravel()
    re = np.bincount(flat, weights=locals_.real.ravel(), minlength=mesh.n_nodes)
    if np.iscomplexobj(locals_):
        im = np.bincount(flat, weights=locals_.imag.ravel(), minlength=mesh.n_nodes)
        return re + 1j * im
    return re.astype(complex)


def _restrict(matrix: sp.csr_matrix, dofmap: DofMap) -> sp.csr_matrix:
    ids = dofmap.interior_nodes
    return matrix[np.ix_(ids, ids)].tocsr()


def _sym_sqrt_2x2(A: np.ndarray):
    """Pointwise square root of symmetric positive definite 2x2 matrices."""
    det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    tr = A[..., 0, 0] + A[..., 1, 1]
    if np.any(det <= 0) or np.any(tr <= 0):
        raise AssemblyError("diffusion matrix is not positive definite")
    s = np.sqrt(det)
    t = np.sqrt(tr + 2.0 * s)
    sqrtA = A.copy()
    sqrtA[..., 0, 0] += s
    sqrtA[..., 1, 1] += s
    sqrtA /= t[..., None, None]
    return sqrtA, s  # det(sqrtA) = s


def _solve_2x2(A: np.ndarray, detA: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    out[..., 0] = (A[..., 1, 1] * v[..., 0] - A[..., 0, 1] * v[..., 1]) / detA
    out[..., 1] = (-A[..., 1, 0] * v[..., 0] + A[..., 0, 0] * v[..., 1]) / detA
    return out


# ---------------------------------------------------------------------------
# bilinear forms
# ---------------------------------------------------------------------------

def assemble_mass(mesh: Mesh, dofmap: DofMap, quad_degree: int = 4) -> sp.csr_matrix:
    """Mass matrix of the complex L2 scalar product (v, w) = int v conj(w)."""
    rule = triangle_rule(quad_degree)
    tab = element_tables(mesh, rule)
    local = np.einsum("q,qi,qj->ij", rule.weights, tab.lam, tab.lam)
    blocks = tab.areas[:, None, None] * local[None].astype(complex)
    return _restrict(_scatter_matrix(mesh, blocks), dofmap)


def assemble_operator(
    mesh: Mesh, dofmap: DofMap, coeffs: Coefficients, quad_degree: int = 4
) -> sp.csr_matrix:
    """Matrix of int A grad v . grad conj(w) + i (b . grad v) conj(w) + c v conj(w).

    Hermitian whenever the drift is divergence free and the coefficients are
    real (up to quadrature error, which vanishes for polynomial data covered
    by the rule).
    """
    rule = triangle_rule(quad_degree)
    tab = element_tables(mesh, rule)
    m, nq = tab.quad_points.shape[:2]
    pts = tab.quad_points.reshape(-1, 2)
    Aq = np.asarray(coeffs.diffusion(pts), float).reshape(m, nq, 2, 2)
    bq = np.asarray(coeffs.drift(pts), float).reshape(m, nq, 2)
    cq = np.asarray(coeffs.potential(pts), float).reshape(m, nq)

    w = rule.weights
    stiff = np.einsum("q,eqdc,ejc,eid->eij", w, Aq, tab.gradients, tab.gradients)
    b_dot_grad = np.einsum("eqd,ejd->eqj", bq, tab.gradients)
    drift = np.einsum("q,eqj,qi->eij", w, b_dot_grad, tab.lam)
    pot = np.einsum("q,eq,qj,qi->eij", w, cq, tab.lam, tab.lam)
    blocks = (stiff + 1j * drift + pot) * tab.areas[:, None, None]
    return _restrict(_scatter_matrix(mesh, blocks), dofmap)


def assemble_energy_product(
    mesh: Mesh, dofmap: DofMap, coeffs: Coefficients, quad_degree: int = 4
) -> sp.csr_matrix:
    """Matrix of the energy scalar product

        (v, w)_E = int (A^(1/2) grad v - i/2 A^(-1/2) b v)
                       . conj(A^(1/2) grad w - i/2 A^(-1/2) b w)
                   + (c - |A^(-1/2) b|^2 / 4) v conj(w),

    the completed-square rewriting of the operator form.  Hermitian by
    construction; positive definite when the zero-order weight stays
    nonnegative (a warning is emitted otherwise).
    """
    rule = triangle_rule(quad_degree)
    tab = element_tables(mesh, rule)
    m, nq = tab.quad_points.shape[:2]
    pts = tab.quad_points.reshape(-1, 2)
    Aq = np.asarray(coeffs.diffusion(pts), float).reshape(m, nq, 2, 2)
    bq = np.asarray(coeffs.drift(pts), float).reshape(m, nq, 2)
    cq = np.asarray(coeffs.potential(pts), float).reshape(m, nq)

    sqrtA, det_sqrtA = _sym_sqrt_2x2(Aq)
    isqrt_b = _solve_2x2(sqrtA, det_sqrtA, bq)          # A^(-1/2) b
    weight = cq - 0.25 * np.einsum("eqd,eqd->eq", isqrt_b, isqrt_b)
    scale = np.abs(cq).max() + np.abs(weight).max() + 1.0
    if weight.min() < -1e-12 * scale:
        warnings.warn(
            "zero-order weight c - |A^(-1/2) b|^2/4 is negative at a quadrature "
            "point; the energy product may lose definiteness",
            stacklevel=2,
        )

    # V[e, q, j, :] = A^(1/2) grad lambda_j - i/2 A^(-1/2) b lambda_j(q)
    V = np.einsum("eqdc,ejc->eqjd", sqrtA, tab.gradients).astype(complex)
    V -= 0.5j * np.einsum("eqd,qj->eqjd", isqrt_b, tab.lam)
    w = rule.weights
    blocks = np.einsum("q,eqjd,eqid->eij", w, V, V.conj())
    blocks += np.einsum("q,eq,qj,qi->eij", w, weight, tab.lam, tab.lam)
    blocks *= tab.areas[:, None, None]
    return _restrict(_scatter_matrix(mesh, blocks), dofmap)


def assemble_kappa(
    mesh: Mesh, dofmap: DofMap, coeffs: Coefficients, quad_degree: int = 4
) -> sp.csr_matrix:
    """Matrix of int kappa v conj(w); Hermitian iff kappa is real."""
    rule = triangle_rule(quad_degree)
    tab = element_tables(mesh, rule)
    m, nq = tab.quad_points.shape[:2]
    kq = np.asarray(coeffs.kappa(tab.quad_points.reshape(-1, 2)), complex)
    kq = kq.reshape(m, nq)
    blocks = np.einsum("q,eq,qj,qi->eij", rule.weights, kq, tab.lam, tab.lam)
    blocks *= tab.areas[:, None, None]
    return _restrict(_scatter_matrix(mesh, blocks), dofmap)


# ---------------------------------------------------------------------------
# loads, interpolation and projections
# ---------------------------------------------------------------------------

def assemble_load(
    mesh: Mesh, dofmap: DofMap, f: Callable, quad_degree: int = 4
) -> np.ndarray:
    """Load vector int f conj(lambda_i), restricted to the dofs."""
    rule = triangle_rule(quad_degree)
    tab = element_tables(mesh, rule)
    m, nq = tab.quad_points.shape[:2]
    fq = np.asarray(f(tab.quad_points.reshape(-1, 2)), complex).reshape(m, nq)
    locals_ = np.einsum("q,eq,qi->ei", rule.weights, fq, tab.lam)
    locals_ *= tab.areas[:, None]
    return _scatter_vector(mesh, locals_)[dofmap.interior_nodes]


def assemble_operator_load(
    mesh: Mesh,
    dofmap: DofMap,
    f: Callable,
    grad_f: Callable,
    coeffs: Coefficients,
    quad_degree: int = 4,
) -> np.ndarray:
    """Load vector of the operator form applied to a known function f."""
    rule = triangle_rule(quad_degree)
    tab = element_tables(mesh, rule)
    m, nq = tab.quad_points.shape[:2]
    pts = tab.quad_points.reshape(-1, 2)
    Aq = np.asarray(coeffs.diffusion(pts), float).reshape(m, nq, 2, 2)
    bq = np.asarray(coeffs.drift(pts), float).reshape(m, nq, 2)
    cq = np.asarray(coeffs.potential(pts), float).reshape(m, nq)
    fq = np.asarray(f(pts), complex).reshape(m, nq)
    gq = np.asarray(grad_f(pts), complex).reshape(m, nq, 2)

    w = rule.weights
    Agrad = np.einsum("eqdc,eqc->eqd", Aq, gq)
    stiff = np.einsum("q,eqd,eid->ei", w, Agrad, tab.gradients)
    drift = np.einsum("q,eqd,eqd,qi->ei", w, bq.astype(complex), gq, tab.lam)
    pot = np.einsum("q,eq,eq,qi->ei", w, cq.astype(complex), fq, tab.lam)
    locals_ = (stiff + 1j * drift + pot) * tab.areas[:, None]
    return _scatter_vector(mesh, locals_)[dofmap.interior_nodes]


def interpolate(f: Callable, mesh: Mesh, dofmap: DofMap) -> ComplexField:
    """Nodal (Lagrange) interpolation on the interior nodes."""
    pts = mesh.nodes[dofmap.interior_nodes]
    return ComplexField(np.asarray(f(pts), dtype=complex), dofmap)


def l2_project(
    f: Callable, mesh: Mesh, dofmap: DofMap, quad_degree: int = 4
) -> ComplexField:
    """L2-orthogonal projection onto the P1 space."""
    M = assemble_mass(mesh, dofmap, quad_degree)
    load = assemble_load(mesh, dofmap, f, quad_degree)
    return ComplexField(spla.spsolve(M.tocsc(), load), dofmap)


def ritz_project(
    f: Callable,
    grad_f: Callable,
    mesh: Mesh,
    dofmap: DofMap,
    coeffs: Coefficients,
    quad_degree: int = 4,
) -> ComplexField:
    """Galerkin projection in the operator form (Ritz projection).

    Solves <L v_h, w_h> = <L f, w_h> for all w_h; the zero-order kappa
    coefficient is deliberately not part of this form.
    """
    L = assemble_operator(mesh, dofmap, coeffs, quad_degree)
    load = assemble_operator_load(mesh, dofmap, f, grad_f, coeffs, quad_degree)
    return ComplexField(spla.spsolve(L.tocsc(), load), dofmap)


# ---------------------------------------------------------------------------
# cubic term: residual, Jacobian, quartic functional
# ---------------------------------------------------------------------------

def _field_at_quadrature(field: ComplexField, tab: ElementTables, mesh: Mesh):
    nodal = field.node_values()[mesh.triangles]      # (m, 3)
    return np.einsum("qi,ei->eq", tab.lam, nodal)    # (m, nq)


def _identity_profile(s: np.ndarray):
    return s, np.ones_like(s)


def nonlinear_residual(
    u: ComplexField,
    mesh: Mesh,
    dofmap: DofMap,
    beta: float,
    profile: Callable = None,
    quad_degree: int = 4,
    tables: ElementTables | None = None,
) -> np.ndarray:
    """Residual vector beta * int gamma(|u_h|^2) u_h conj(lambda_i).

    ``profile`` maps |u|^2 to (gamma, gamma'); the default is the plain
    cubic gamma(s) = s.
    """
    tab = tables if tables is not None else element_tables(
        mesh, triangle_rule(quad_degree)
    )
    uq = _field_at_quadrature(u, tab, mesh)
    s = uq.real**2 + uq.imag**2
    gamma = s if profile is None else profile(s)[0]
    fq = gamma * uq
    locals_ = np.einsum("q,eq,qi->ei", tab.rule.weights, fq, tab.lam)
    locals_ *= beta * tab.areas[:, None]
    return _scatter_vector(mesh, locals_)[dofmap.interior_nodes]


def cubic_residual(
    u: ComplexField, mesh: Mesh, dofmap: DofMap, beta: float, quad_degree: int = 4
) -> np.ndarray:
    """beta * int |u_h|^2 u_h conj(lambda_i); the gradient of (beta/4) int |u_h|^4."""
    return nonlinear_residual(u, mesh, dofmap, beta, None, quad_degree)


def nonlinear_jacobian(
    u: ComplexField,
    mesh: Mesh,
    dofmap: DofMap,
    beta: float,
    profile: Callable = None,
    quad_degree: int = 4,
    tables: ElementTables | None = None,
) -> sp.csr_matrix:
    """Exact Jacobian of the real-split residual, as a 2N x 2N block matrix.

    Writing u = p + i q, the pointwise derivative of gamma(|u|^2) u is

        [[gamma + 2 p^2 gamma',  2 p q gamma'  ],
         [2 p q gamma',          gamma + 2 q^2 gamma']]

    contracted with basis products.  The block layout is
    [[d(Re r)/dp, d(Re r)/dq], [d(Im r)/dp, d(Im r)/dq]]; the matrix is
    symmetric because the residual is a gradient.
    """
    tab = tables if tables is not None else element_tables(
        mesh, triangle_rule(quad_degree)
    )
    uq = _field_at_quadrature(u, tab, mesh)
    p, q = uq.real, uq.imag
    s = p**2 + q**2
    if profile is None:
        gamma, dgamma = _identity_profile(s)
    else:
        gamma, dgamma = profile(s)
    d_pp = gamma + 2.0 * p**2 * dgamma
    d_pq = 2.0 * p * q * dgamma
    d_qq = gamma + 2.0 * q**2 * dgamma

    w = tab.rule.weights

    def block(density):
        blk = np.einsum("q,eq,qj,qi->eij", w, density, tab.lam, tab.lam)
        blk *= beta * tab.areas[:, None, None]
        return _restrict(_scatter_matrix(mesh, blk), dofmap).real

    J_pp, J_pq, J_qq = block(d_pp), block(d_pq), block(d_qq)
    return sp.bmat([[J_pp, J_pq], [J_pq, J_qq]], format="csr")


def cubic_jacobian(
    u: ComplexField, mesh: Mesh, dofmap: DofMap, beta: float, quad_degree: int = 4
) -> sp.csr_matrix:
    return nonlinear_jacobian(u, mesh, dofmap, beta, None, quad_degree)


def quartic_integral(
    u: ComplexField,
    mesh: Mesh,
    quad_degree: int = 4,
    tables: ElementTables | None = None,
) -> float:
    """int |u_h|^4, exact for P1 fields with the degree-4 rule."""
    tab = tables if tables is not None else element_tables(
        mesh, triangle_rule(quad_degree)
    )
    uq = _field_at_quadrature(u, tab, mesh)
    s = uq.real**2 + uq.imag**2
    return float(np.einsum("q,eq,e->", tab.rule.weights, s**2, tab.areas))


# ---------------------------------------------------------------------------
# assembled system bundle
# ---------------------------------------------------------------------------

@dataclass
class AssembledSystem:
    """All matrices and evaluators a time stepper needs for one problem."""

    mesh: Mesh
    dofmap: DofMap
    coeffs: Coefficients
    quad_degree: int
    mass: sp.csr_matrix
    operator: sp.csr_matrix         # the generalized Hamiltonian form
    energy_product: sp.csr_matrix
    kappa: sp.csr_matrix
    kappa_im_sup: float             # sup |Im kappa| over quadrature points
    tables: ElementTables
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def beta(self) -> float:
        return self.coeffs.beta

    def cubic_residual(self, u: ComplexField, profile=None) -> np.ndarray:
        return nonlinear_residual(
            u, self.mesh, self.dofmap, self.beta, profile, tables=self.tables
        )

    def cubic_jacobian(self, u: ComplexField, profile=None) -> sp.csr_matrix:
        return nonlinear_jacobian(
            u, self.mesh, self.dofmap, self.beta, profile, tables=self.tables
        )

    def forcing_load(self, forcing: Callable, t: float) -> np.ndarray:
        return assemble_load(
            self.mesh, self.dofmap, lambda pts: forcing(pts, t), self.quad_degree
        )


def assemble_system(
    mesh: Mesh, dofmap: DofMap, coeffs: Coefficients, quad_degree: int = 4
) -> AssembledSystem:
    rule = triangle_rule(quad_degree)
    tab = element_tables(mesh, rule)
    kq = np.asarray(coeffs.kappa(tab.quad_points.reshape(-1, 2)), complex)
    return AssembledSystem(
        mesh=mesh,
        dofmap=dofmap,
        coeffs=coeffs,
        quad_degree=quad_degree,
        mass=assemble_mass(mesh, dofmap, quad_degree),
        operator=assemble_operator(mesh, dofmap, coeffs, quad_degree),
        energy_product=assemble_energy_product(mesh, dofmap, coeffs, quad_degree),
        kappa=assemble_kappa(mesh, dofmap, coeffs, quad_degree),
        kappa_im_sup=float(np.abs(kq.imag).max()) if len(kq) else 0.0,
        tables=tab,
    )


# ---------------------------------------------------------------------------
# point evaluation (structured meshes use O(1) cell lookup)
# ---------------------------------------------------------------------------

def evaluate_field(field: ComplexField, points: np.ndarray) -> np.ndarray:
    """Evaluate a P1 field at arbitrary points inside the domain."""
    mesh = field.dofmap.mesh
    points = np.atleast_2d(np.asarray(points, dtype=float))
    nodal = field.node_values()
    elems = _locate(mesh, points)
    tri = mesh.triangles[elems]
    coords = mesh.nodes[tri]
    # barycentric coordinates from the affine map
    v0 = coords[:, 1] - coords[:, 0]
    v1 = coords[:, 2] - coords[:, 0]
    rhs = points - coords[:, 0]
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (rhs[:, 0] * v1[:, 1] - rhs[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * rhs[:, 1] - v0[:, 1] * rhs[:, 0]) / det
    l0 = 1.0 - l1 - l2
    vals = nodal[tri]
    return l0 * vals[:, 0] + l1 * vals[:, 1] + l2 * vals[:, 2]


def prolong_field(field: ComplexField, fine_dofmap: DofMap) -> ComplexField:
    """Re-interpolate a field onto another mesh of the same domain.

    Used to warm-start iterations on a fine mesh from a coarse solution.
    """
    pts = fine_dofmap.mesh.nodes[fine_dofmap.interior_nodes]
    return ComplexField(evaluate_field(field, pts), fine_dofmap)


def field_gradients(field: ComplexField) -> np.ndarray:
    """Per-element constant gradient of a P1 field, shape (m, 2)."""
    mesh = field.dofmap.mesh
    tab = element_tables(mesh, triangle_rule(1))
    nodal = field.node_values()[mesh.triangles]
    return np.einsum("ei,eid->ed", nodal, tab.gradients.astype(complex))


def _locate(mesh: Mesh, points: np.ndarray) -> np.ndarray:
    if mesh.structured_shape is not None:
        nx, ny = mesh.structured_shape
        x0, x1, y0, y1 = mesh.domain_bounds
        dx = (x1 - x0) / nx
        dy = (y1 - y0) / ny
        i = np.clip(((points[:, 0] - x0) / dx).astype(int), 0, nx - 1)
        j = np.clip(((points[:, 1] - y0) / dy).astype(int), 0, ny - 1)
        # lower triangle of cell (i, j) unless the point lies above the diagonal
        fx = (points[:, 0] - x0) / dx - i
        fy = (points[:, 1] - y0) / dy - j
        lower = fy <= fx
        cell = j * nx + i
        return np.where(lower, cell, cell + nx * ny)
    # brute force for unstructured meshes; fine at test scale
    coords = mesh.nodes[mesh.triangles]
    v0 = coords[:, 1] - coords[:, 0]
    v1 = coords[:, 2] - coords[:, 0]
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    out = np.empty(len(points), dtype=np.int64)
    for k, pt in enumerate(points):
        rhs = pt - coords[:, 0]
        l1 = (rhs[:, 0] * v1[:, 1] - rhs[:, 1] * v1[:, 0]) / det
        l2 = (v0[:, 0] * rhs[:, 1] - v0[:, 1] * rhs[:, 0]) / det
        inside = (l1 >= -1e-12) & (l2 >= -1e-12) & (l1 + l2 <= 1 + 1e-12)
        idx = np.nonzero(inside)[0]
        if len(idx) == 0:
            raise AssemblyError(f"point {pt} lies outside the mesh")
        out[k] = idx[0]
    return out

"""Conforming triangulations of rectangles.

Structured generation, uniform (red) refinement, and the mesh-quality
quantities the time-stepping theory depends on: element diameters,
shape regularity and the two-dimensional inverse-inequality log factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Bounds = tuple[float, float, float, float]


class MeshError(ValueError):
    """Invalid mesh input or geometry."""


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh of a rectangle [x0, x1] x [y0, y1].

    Triangles are stored with counterclockwise node ordering.  The diameter
    ``h_K`` of a triangle is its longest edge; ``h_per_element`` collects
    these and ``h_min``/``h_max`` their extremes.  ``boundary_nodes`` holds
    the sorted indices of all nodes on the domain boundary.

    Instances are immutable after construction; concurrent reads are safe.
    """

    nodes: np.ndarray               # (n_nodes, 2) float
    triangles: np.ndarray           # (n_triangles, 3) int, counterclockwise
    boundary_nodes: np.ndarray      # sorted int indices
    h_per_element: np.ndarray       # (n_triangles,)
    h_min: float
    h_max: float
    domain_bounds: Bounds
    dim: int = 2
    structured_shape: tuple[int, int] | None = None  # (nx, ny) for generated grids

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = True
        return mask


def triangle_areas(mesh_or_nodes, triangles=None) -> np.ndarray:
    """Signed areas; positive for counterclockwise triangles."""
    if triangles is None:
        nodes, triangles = mesh_or_nodes.nodes, mesh_or_nodes.triangles
    else:
        nodes = mesh_or_nodes
    p = nodes[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _element_diameters(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = nodes[triangles]
    lengths = np.stack(
        [
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
        ],
        axis=1,
    )
    return lengths.max(axis=1)


def _edge_keys(triangles: np.ndarray) -> np.ndarray:
    """One int64 key per (undirected) triangle edge, 3 per triangle."""
    raw = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    lo = raw.min(axis=1).astype(np.int64)
    hi = raw.max(axis=1).astype(np.int64)
    return lo * (triangles.max() + 1) + hi


def _edges_with_counts(triangles: np.ndarray):
    keys, counts = np.unique(_edge_keys(triangles), return_counts=True)
    n = triangles.max() + 1
    edges = np.column_stack([keys // n, keys % n])
    return edges, counts


def _boundary_nodes_from_topology(triangles: np.ndarray) -> np.ndarray:
    edges, counts = _edges_with_counts(triangles)
    return np.unique(edges[counts == 1])


def _finalize(nodes, triangles, bounds, structured_shape=None, covers_rectangle=True) -> Mesh:
    h = _element_diameters(nodes, triangles)
    mesh = Mesh(
        nodes=nodes,
        triangles=triangles,
        boundary_nodes=_boundary_nodes_from_topology(triangles),
        h_per_element=h,
        h_min=float(h.min()),
        h_max=float(h.max()),
        domain_bounds=tuple(float(b) for b in bounds),
        structured_shape=structured_shape,
    )
    validate_mesh(mesh, covers_rectangle=covers_rectangle)
    return mesh


def from_arrays(nodes, triangles, bounds, covers_rectangle=False) -> Mesh:
    """Wrap externally supplied arrays (e.g. a mesh loaded from file).

    ``bounds`` is then only a bounding box unless ``covers_rectangle`` says
    the triangulation fills it.
    """
    nodes = np.asarray(nodes, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    return _finalize(nodes, triangles, bounds, covers_rectangle=covers_rectangle)


def build_rect_mesh(bounds: Bounds, nx: int, ny: int) -> Mesh:
    """Structured triangulation of a rectangle.

    Each of the nx*ny grid cells is split along its lower-left to
    upper-right diagonal, which makes results reproducible bit for bit.

    Parameters
    ----------
    bounds : (x0, x1, y0, y1)
    nx, ny : number of cells per direction, at least 1.
    """
    x0, x1, y0, y1 = (float(b) for b in bounds)
    if not (x0 < x1 and y0 < y1):
        raise MeshError(f"degenerate domain bounds {bounds}")
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be positive")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    bl = nid(I, J).ravel()
    br = nid(I + 1, J).ravel()
    tl = nid(I, J + 1).ravel()
    tr = nid(I + 1, J + 1).ravel()
    lower = np.column_stack([bl, br, tr])
    upper = np.column_stack([bl, tr, tl])
    triangles = np.concatenate([lower, upper]).astype(np.int64)

    return _finalize(nodes, triangles, (x0, x1, y0, y1), structured_shape=(nx, ny))


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: split every triangle into 4 congruent children.

    New nodes are the edge midpoints; element diameters exactly halve and
    the shape regularity of every child equals that of its parent.
    """
    tris = mesh.triangles
    m = len(tris)
    n = tris.max() + 1
    keys, inverse = np.unique(_edge_keys(tris), return_inverse=True)
    edges = np.column_stack([keys // n, keys % n])
    midpoints = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    nodes = np.vstack([mesh.nodes, midpoints])

    mid = mesh.n_nodes + inverse
    mab, mbc, mca = mid[:m], mid[m : 2 * m], mid[2 * m :]
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    children = np.empty((4 * m, 3), dtype=np.int64)
    children[0::4] = np.column_stack([a, mab, mca])
    children[1::4] = np.column_stack([b, mbc, mab])
    children[2::4] = np.column_stack([c, mca, mbc])
    children[3::4] = np.column_stack([mab, mbc, mca])

    # midpoints are appended after the parent nodes, so the refined mesh is
    # no longer in structured grid layout; drop the shape tag
    return _finalize(nodes, children, mesh.domain_bounds, structured_shape=None)


def shape_regularity(mesh: Mesh) -> float:
    """min over elements of diam(B_K) / diam(K).

    ``B_K`` is the largest inscribed ball, so diam(B_K) is twice the
    inradius 2*area/perimeter.
    """
    p = mesh.nodes[mesh.triangles]
    a = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
    areas = triangle_areas(mesh)
    inradius = 2.0 * areas / (a + b + c)
    return float((2.0 * inradius / mesh.h_per_element).min())


def log_factor(mesh: Mesh, d: int = 2) -> float:
    """Inverse-inequality factor |ln h_min|^(1/2) for d = 2.

    Controls the weak coupling condition between mesh size and time step;
    only meaningful for h_min < 1 where the logarithm is negative.
    """
    if d == 3:
        raise NotImplementedError("three-dimensional meshes are not generated")
    if d != 2:
        raise MeshError(f"unsupported dimension {d}")
    if mesh.h_min >= 1.0:
        raise MeshError(
            f"log factor undefined for h_min = {mesh.h_min} >= 1"
        )
    return math.sqrt(abs(math.log(mesh.h_min)))


def validate_mesh(mesh: Mesh, covers_rectangle: bool = True) -> None:
    """Raise MeshError if a mesh invariant is violated.

    The rectangle-coverage checks (area sum, boundary geometry) only apply
    when the triangulation is supposed to fill its domain_bounds.
    """
    areas = triangle_areas(mesh)
    if np.any(areas <= 0):
        bad = int(np.argmin(areas))
        raise MeshError(f"triangle {bad} is degenerate or clockwise")
    _, counts = _edges_with_counts(mesh.triangles)
    if np.any(counts > 2):
        raise MeshError("non-conforming mesh: edge shared by more than 2 triangles")
    if not (
        math.isclose(mesh.h_min, mesh.h_per_element.min())
        and math.isclose(mesh.h_max, mesh.h_per_element.max())
    ):
        raise MeshError("h_min/h_max inconsistent with h_per_element")
    if not covers_rectangle:
        return
    x0, x1, y0, y1 = mesh.domain_bounds
    if abs(areas.sum() - (x1 - x0) * (y1 - y0)) > 1e-10 * (x1 - x0) * (y1 - y0):
        raise MeshError("element areas do not sum to the rectangle area")
    # boundary nodes must coincide with the geometric rectangle boundary
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    tol = 1e-12 * max(x1 - x0, y1 - y0)
    on_rect = (
        (np.abs(x - x0) <= tol)
        | (np.abs(x - x1) <= tol)
        | (np.abs(y - y0) <= tol)
        | (np.abs(y - y1) <= tol)
    )
    mask = mesh.boundary_mask()
    if not np.array_equal(mask, on_rect):
        raise MeshError("boundary_nodes do not match the rectangle boundary")


def export_mesh_vtk(mesh: Mesh, path) -> None:
    """Write the mesh geometry as legacy-VTK ASCII for inspection."""
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("gpefem mesh\n")
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

"""Lagrange finite element spaces on tagged meshes, fields, assembly and norms."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument
from .mesh import FLUID, INTERFACE, OUTER, SOLID, Mesh

RESTRICTIONS = {"Fluid": FLUID, "Solid": SOLID, "Whole": None}


# --- quadrature --------------------------------------------------------------

@lru_cache(maxsize=None)
def interval_rule(n: int = 4):
    """Gauss-Legendre rule on [0, 1] (exact to degree 2n-1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(n: int = 4):
    """Collapsed Gauss rule on the reference triangle, exact to degree 2n-1."""
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    # Gauss-Jacobi(1,0) in the collapsed direction
    xj, wj = _gauss_jacobi_10(n)
    pts, wts = [], []
    for a, wa in zip(xj, wj):
        for b, wb in zip(s, ws):
            pts.append(((1 - a) * b, a))
            wts.append(wa * wb)
    return np.array(pts), np.array(wts)


def _gauss_jacobi_10(n):
    # nodes/weights on [0,1] for weight (1 - t), via Golub-Welsch
    from scipy.special import roots_jacobi

    x, w = roots_jacobi(n, 1.0, 0.0)
    return 0.5 * (x + 1.0), w / 4.0


def _ref_basis(dim: int, degree: int, pts: np.ndarray):
    """Values (nq, nloc) and reference gradients (nq, nloc, dim)."""
    if dim == 1:
        x = pts[:, 0] if pts.ndim == 2 else pts
        l0, l1 = 1 - x, x
        if degree == 1:
            val = np.column_stack([l0, l1])
            grad = np.stack([-np.ones_like(x), np.ones_like(x)], axis=1)[:, :, None]
        else:
            val = np.column_stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), 4 * l0 * l1])
            grad = np.stack([-(4 * l0 - 1), 4 * l1 - 1, 4 * (l0 - l1)], axis=1)[:, :, None]
        return val, grad
    x, y = pts[:, 0], pts[:, 1]
    lam = [1 - x - y, x, y]
    dlam = [np.array([-1.0, -1.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    nq = len(x)
    if degree == 1:
        val = np.column_stack(lam)
        grad = np.broadcast_to(np.array(dlam)[None], (nq, 3, 2)).copy()
        return val, grad
    val = np.empty((nq, 6))
    grad = np.empty((nq, 6, 2))
    for i in range(3):
        val[:, i] = lam[i] * (2 * lam[i] - 1)
        grad[:, i] = (4 * lam[i] - 1)[:, None] * dlam[i]
    for k, (i, j) in enumerate([(0, 1), (1, 2), (0, 2)]):
        val[:, 3 + k] = 4 * lam[i] * lam[j]
        grad[:, 3 + k] = 4 * (lam[i][:, None] * dlam[j] + lam[j][:, None] * dlam[i])
    return val, grad


# --- spaces ------------------------------------------------------------------

@dataclass
class CellGeometry:
    detJ: np.ndarray       # (nc,) absolute Jacobian determinant
    weights: np.ndarray    # (nq,) reference weights
    points: np.ndarray     # (nc, nq, d) physical quadrature points
    phi: np.ndarray        # (nq, nloc)
    dphi: np.ndarray       # (nc, nq, nloc, d)

    @property
    def wdet(self) -> np.ndarray:
        """Physical quadrature weights (nc, nq)."""
        return self.detJ[:, None] * self.weights[None, :]


class FeSpace:
    """Continuous Lagrange space of degree 1 or 2 on a mesh restriction.

    Degrees of freedom are blocked by component: ``dof = comp * n_nodes + node``.
    Nodes are numbered globally on the mesh (vertices first, then one node per
    edge for degree 2), and each space keeps the sorted subset it uses, so
    fields on different restrictions can be transferred through shared nodes.
    """

    def __init__(self, mesh: Mesh, degree: int = 2, vector: bool = False,
                 restriction: str = "Whole"):
        if degree not in (1, 2):
            raise InvalidArgument("degree must be 1 or 2")
        if restriction not in RESTRICTIONS:
            raise InvalidArgument(f"restriction must be one of {list(RESTRICTIONS)}")
        self.mesh = mesh
        self.degree = degree
        self.ncomp = mesh.dim if vector else 1
        self.vector = vector
        self.restriction = restriction
        tag = RESTRICTIONS[restriction]
        self.cells = np.arange(mesh.n_cells) if tag is None else np.flatnonzero(mesh.cell_tag == tag)
        gn = global_cell_nodes(mesh, degree)[self.cells]
        self.global_cell_nodes = gn
        self.nodes = np.unique(gn)
        lookup = np.full(n_global_nodes(mesh, degree), -1, dtype=np.int64)
        lookup[self.nodes] = np.arange(len(self.nodes))
        self._lookup = lookup
        self.cell_nodes = lookup[gn]

    def __repr__(self):
        return f"FeSpace({self.family}, {self.restriction}, ndof={self.ndof})"

    @property
    def family(self) -> str:
        return f"{'vector' if self.vector else 'scalar'}-P{self.degree}"

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def ndof(self) -> int:
        return self.ncomp * self.n_nodes

    @cached_property
    def coords(self) -> np.ndarray:
        return global_node_coords(self.mesh, self.degree)[self.nodes]

    def local_nodes(self, global_ids) -> np.ndarray:
        """Map global mesh-node ids to local node indices (-1 where absent)."""
        return self._lookup[np.asarray(global_ids)]

    def dofs(self, local_nodes, comps=None) -> np.ndarray:
        """Blocked dof indices for the given local nodes (all components by default)."""
        local_nodes = np.asarray(local_nodes)
        comps = range(self.ncomp) if comps is None else comps
        return np.concatenate([c * self.n_nodes + local_nodes for c in comps])

    @cached_property
    def cell_dofs(self) -> np.ndarray:
        """(nc, ncomp * nloc) dof indices, component-major within a cell."""
        return np.hstack([c * self.n_nodes + self.cell_nodes for c in range(self.ncomp)])

    def boundary_nodes(self, tag: int) -> np.ndarray:
        """Local node indices lying on facets with the given tag."""
        fn = facet_global_nodes(self.mesh, self.degree, tag)
        loc = self.local_nodes(np.unique(fn))
        return loc[loc >= 0]

    @lru_cache(maxsize=None)
    def geometry(self, n: int = 4) -> CellGeometry:
        mesh = self.mesh
        d = mesh.dim
        pts, w = interval_rule(n) if d == 1 else triangle_rule(n)
        pts = pts.reshape(len(w), d)
        phi, dref = _ref_basis(d, self.degree, pts)
        v = mesh.vertices[mesh.cells[self.cells]]
        J = np.stack([v[:, k + 1] - v[:, 0] for k in range(d)], axis=2)  # (nc, d, d)
        det = np.linalg.det(J)
        Jinv = np.linalg.inv(J)
        # grad phi = J^{-T} grad_ref phi
        dphi = np.einsum("cji,qlj->cqli", Jinv, dref)
        phys = v[:, 0][:, None, :] + np.einsum("cij,qj->cqi", J, pts)
        return CellGeometry(np.abs(det), w, phys, phi, dphi)

    def interpolate(self, func) -> "Field":
        """Nodal interpolant of ``func(points) -> (n,) or (n, ncomp)``."""
        vals = np.asarray(func(self.coords), dtype=float)
        if self.ncomp == 1:
            vals = vals.reshape(-1)
        else:
            vals = vals.reshape(self.n_nodes, self.ncomp).T.reshape(-1)
        return Field(self, vals)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.ndof))


@lru_cache(maxsize=64)
def _cell_nodes_cached(mesh_id, mesh, degree):
    if degree == 1:
        return mesh.cells.copy()
    _, cell_edges = mesh.edges
    return np.hstack([mesh.cells, mesh.n_vertices + cell_edges])


def global_cell_nodes(mesh: Mesh, degree: int) -> np.ndarray:
    return _cell_nodes_cached(id(mesh), mesh, degree)


def n_global_nodes(mesh: Mesh, degree: int) -> int:
    if degree == 1:
        return mesh.n_vertices
    return mesh.n_vertices + len(mesh.edges[0])


def global_node_coords(mesh: Mesh, degree: int) -> np.ndarray:
    if degree == 1:
        return mesh.vertices
    edges, _ = mesh.edges
    return np.vstack([mesh.vertices, mesh.vertices[edges].mean(axis=1)])


def facet_global_nodes(mesh: Mesh, degree: int, tag: int) -> np.ndarray:
    """Global node ids of tagged facets: (nf, 2) for P1, (nf, 3) for P2 in 2D.

    For P2 the third column is the edge-midpoint node.  In 1D facets are points.
    """
    facets = mesh.facets[mesh.facet_tag == tag]
    if mesh.dim == 1 or degree == 1:
        return facets
    edges, _ = mesh.edges
    lookup = {tuple(e): i for i, e in enumerate(edges)}
    mids = np.array([lookup[tuple(sorted(f))] for f in facets], dtype=np.int64)
    return np.column_stack([facets, mesh.n_vertices + mids])


# --- fields ------------------------------------------------------------------

class Field:
    """Coefficient vector on a :class:`FeSpace`."""

    __array_priority__ = 100

    def __init__(self, space: FeSpace, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.ndof,):
            raise InvalidArgument(f"expected {space.ndof} coefficients, got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise InvalidArgument("field coefficients must be finite")
        self.space = space
        self.coeffs = coeffs

    def __repr__(self):
        return f"Field({self.space!r})"

    @property
    def nodal(self) -> np.ndarray:
        """Values per node, shape (n_nodes, ncomp)."""
        return self.coeffs.reshape(self.space.ncomp, -1).T

    def _compatible(self, other):
        if other.space is not self.space:
            raise InvalidArgument("fields live on different spaces")

    def __add__(self, other):
        self._compatible(other)
        return Field(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._compatible(other)
        return Field(self.space, self.coeffs - other.coeffs)

    def __mul__(self, alpha):
        return Field(self.space, float(alpha) * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.space, -self.coeffs)

    def at_quadrature(self, n: int = 4):
        """Values (nc, nq, ncomp) and gradients (nc, nq, ncomp, d)."""
        g = self.space.geometry(n)
        loc = self.coeffs[self.space.cell_dofs].reshape(len(self.space.cells), self.space.ncomp, -1)
        val = np.einsum("ql,ckl->cqk", g.phi, loc)
        grad = np.einsum("cqld,ckl->cqkd", g.dphi, loc)
        return val, grad


def transfer(f: Field, target: FeSpace) -> Field:
    """Copy nodal values of ``f`` onto ``target`` through shared global nodes.

    Nodes of ``target`` absent from ``f.space`` are set to zero.
    """
    src = f.space
    if src.degree != target.degree or src.ncomp != target.ncomp:
        raise InvalidArgument("transfer needs matching degree and component count")
    loc = src.local_nodes(target.nodes)
    out = np.zeros((target.ncomp, target.n_nodes))
    vals = f.coeffs.reshape(src.ncomp, -1)
    ok = loc >= 0
    out[:, ok] = vals[:, loc[ok]]
    return Field(target, out.reshape(-1))


def transfer_matrix(src: FeSpace, target: FeSpace) -> sp.csr_matrix:
    """Sparse 0/1 matrix ``T`` with ``transfer(f, target).coeffs == T @ f.coeffs``."""
    loc = src.local_nodes(target.nodes)
    ok = np.flatnonzero(loc >= 0)
    rows, cols = [], []
    for c in range(target.ncomp):
        rows.append(c * target.n_nodes + ok)
        cols.append(c * src.n_nodes + loc[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(target.ndof, src.ndof))


# --- assembly ----------------------------------------------------------------

def _assemble(space_row: FeSpace, space_col: FeSpace, local: np.ndarray) -> sp.csr_matrix:
    rd = space_row.cell_dofs
    cd = space_col.cell_dofs
    rows = np.broadcast_to(rd[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(cd[:, None, :], local.shape).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(space_row.ndof, space_col.ndof))


def _blockwise(local_scalar_blocks, ncomp, nloc_r, nloc_c):
    """Stack per-component blocks [i][j] of shape (nc, nloc_r, nloc_c)."""
    nc = local_scalar_blocks[0][0].shape[0]
    out = np.zeros((nc, ncomp * nloc_r, ncomp * nloc_c))
    for i in range(ncomp):
        for j in range(ncomp):
            blk = local_scalar_blocks[i][j]
            if blk is not None:
                out[:, i * nloc_r:(i + 1) * nloc_r, j * nloc_c:(j + 1) * nloc_c] = blk
    return out


def mass_matrix(space: FeSpace, n: int = 4) -> sp.csr_matrix:
    g = space.geometry(n)
    m = np.einsum("cq,qa,qb->cab", g.wdet, g.phi, g.phi)
    k = space.ncomp
    blocks = [[m if i == j else None for j in range(k)] for i in range(k)]
    return _assemble(space, space, _blockwise(blocks, k, m.shape[1], m.shape[1]))


def laplace_matrix(space: FeSpace, n: int = 4) -> sp.csr_matrix:
    """Component-wise gradient Gram matrix, the H1-seminorm form."""
    g = space.geometry(n)
    a = np.einsum("cq,cqad,cqbd->cab", g.wdet, g.dphi, g.dphi)
    k = space.ncomp
    blocks = [[a if i == j else None for j in range(k)] for i in range(k)]
    return _assemble(space, space, _blockwise(blocks, k, a.shape[1], a.shape[1]))


def strain_matrix(space: FeSpace, shear: float, bulk: float, n: int = 4) -> sp.csr_matrix:
    """Matrix of ``(u, v) -> int 2*shear*eps(u):eps(v) + bulk*div(u)*div(v)``.

    With ``shear = lambda1, bulk = lambda2`` this is the elastic stiffness; with
    ``shear = nu, bulk = 0`` the viscous form.
    """
    if not space.vector:
        raise InvalidArgument("strain_matrix needs a vector space")
    g = space.geometry(n)
    d = space.ncomp
    w = g.wdet
    dd = np.einsum("cq,cqad,cqbd->cab", w, g.dphi, g.dphi)
    blocks = [[None] * d for _ in range(d)]
    for i in range(d):
        for j in range(d):
            # test (i, a), trial (j, b)
            cross = np.einsum("cq,cqa,cqb->cab", w, g.dphi[..., j], g.dphi[..., i])
            div = np.einsum("cq,cqa,cqb->cab", w, g.dphi[..., i], g.dphi[..., j])
            blk = shear * cross + bulk * div
            if i == j:
                blk = blk + shear * dd
            blocks[i][j] = blk
    nl = g.phi.shape[1]
    return _assemble(space, space, _blockwise(blocks, d, nl, nl))


def divergence_matrix(vspace: FeSpace, pspace: FeSpace, n: int = 4) -> sp.csr_matrix:
    """``B[q, u] = int q div(u)``, shape (pspace.ndof, vspace.ndof)."""
    if not np.array_equal(vspace.cells, pspace.cells):
        raise InvalidArgument("velocity and pressure spaces must share cells")
    gv = vspace.geometry(n)
    gp = pspace.geometry(n)
    d = vspace.ncomp
    parts = [np.einsum("cq,qa,cqb->cab", gv.wdet, gp.phi, gv.dphi[..., j]) for j in range(d)]
    local = np.concatenate(parts, axis=2)
    return _assemble(pspace, vspace, local)


def load_vector(space: FeSpace, values: np.ndarray, n: int = 4) -> np.ndarray:
    """``int f . v`` for quadrature-point values ``values`` (nc, nq, ncomp)."""
    g = space.geometry(n)
    loc = np.einsum("cq,qa,cqk->cka", g.wdet, g.phi, values).reshape(len(space.cells), -1)
    out = np.zeros(space.ndof)
    np.add.at(out, space.cell_dofs.ravel(), loc.ravel())
    return out


# --- interface / boundary quadrature -----------------------------------------

class FacetSet:
    """Quadrature on the tagged boundary facets for a given space.

    In 2D each facet is a straight edge; traces of P2 functions are the 1D P2
    interpolants of the edge's three nodes.  In 1D facets are points with unit
    weight.
    """

    def __init__(self, space: FeSpace, tag: int = INTERFACE, n: int = 4):
        mesh = space.mesh
        self.space = space
        self.tag = tag
        gn = facet_global_nodes(mesh, space.degree, tag)
        self.nodes = space.local_nodes(gn)
        if np.any(self.nodes < 0):
            raise InvalidArgument("space does not contain all facet nodes")
        if mesh.dim == 1:
            self.length = np.ones(len(gn))
            self.weights = np.ones((len(gn), 1))
            self.phi = np.ones((1, 1))
        else:
            verts = mesh.vertices[gn[:, :2]]
            self.length = np.linalg.norm(verts[:, 1] - verts[:, 0], axis=1)
            s, w = interval_rule(n)
            self.s = s
            self.phi, _ = _ref_basis(1, space.degree, s)
            self.weights = self.length[:, None] * w[None, :]
            self.points = verts[:, 0][:, None, :] + s[None, :, None] * (verts[:, 1] - verts[:, 0])[:, None, :]
        if tag == INTERFACE:
            self.normal = mesh.interface_normal
        else:
            self.normal = _outer_normals(mesh)

    @property
    def n_facets(self) -> int:
        return len(self.nodes)

    def values(self, coeffs: np.ndarray) -> np.ndarray:
        """Trace values at facet quadrature points, (nf, nq, ncomp)."""
        vals = coeffs.reshape(self.space.ncomp, -1)
        loc = vals[:, self.nodes]  # (ncomp, nf, nloc)
        return np.einsum("ql,kfl->fqk", self.phi, loc)

    def integrate(self, vals: np.ndarray) -> np.ndarray:
        """Integrate (nf, nq, ...) over all facets."""
        return np.tensordot(self.weights, vals, axes=([0, 1], [0, 1]))

    def mass_matrix(self) -> sp.csr_matrix:
        """Boundary mass matrix on the space's dofs (rows/cols outside facets are empty)."""
        m = np.einsum("fq,qa,qb->fab", self.weights, self.phi, self.phi)
        k = self.space.ncomp
        nn = self.space.n_nodes
        rows, cols, data = [], [], []
        for c in range(k):
            dofs = c * nn + self.nodes
            rows.append(np.broadcast_to(dofs[:, :, None], m.shape).ravel())
            cols.append(np.broadcast_to(dofs[:, None, :], m.shape).ravel())
            data.append(m.ravel())
        return sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.space.ndof, self.space.ndof))

    def normal_load(self) -> np.ndarray:
        """Vector ``v -> int v . n`` over the facets, on the space's dofs."""
        loc = np.einsum("fq,qa->fa", self.weights, self.phi)
        out = np.zeros(self.space.ndof)
        nn = self.space.n_nodes
        for c in range(self.space.ncomp):
            np.add.at(out, c * nn + self.nodes, loc * self.normal[:, c][:, None])
        return out

    def dof_indices(self) -> np.ndarray:
        nodes = np.unique(self.nodes)
        return self.space.dofs(nodes)

    def gradients(self, coeffs: np.ndarray) -> np.ndarray:
        """One-sided gradients at facet quadrature points, (nf, nq, ncomp, d).

        Evaluated in the unique cell of the space that owns each facet.
        """
        space = self.space
        mesh = space.mesh
        d = mesh.dim
        if d == 1:
            return self._gradients_1d(coeffs)
        owner = {}
        for ci, c in enumerate(mesh.cells[space.cells]):
            for a, b in ((0, 1), (1, 2), (0, 2)):
                owner[(min(c[a], c[b]), max(c[a], c[b]))] = (ci, a, b)
        gfac = facet_global_nodes(mesh, 1, self.tag)
        vals = coeffs.reshape(space.ncomp, -1)
        s = self.s
        out = np.empty((len(gfac), len(s), space.ncomp, d))
        for f, (i, j) in enumerate(gfac):
            ci, a, b = owner[(min(i, j), max(i, j))]
            cell = mesh.cells[space.cells[ci]]
            if cell[a] != i:
                a, b = b, a
            lam = np.zeros((len(s), 3))
            lam[:, a] = 1 - s
            lam[:, b] = s
            _, dref = _ref_basis(2, space.degree, lam[:, 1:])
            v = mesh.vertices[cell]
            J = np.column_stack([v[1] - v[0], v[2] - v[0]])
            dphi = dref @ np.linalg.inv(J)  # (nq, nloc, d)
            loc = vals[:, space.cell_nodes[ci]]  # (ncomp, nloc)
            out[f] = np.einsum("qld,kl->qkd", dphi, loc)
        return out

    def _gradients_1d(self, coeffs):
        space = self.space
        cells = space.mesh.cells[space.cells]
        verts = space.mesh.vertices[:, 0]
        vals = coeffs.reshape(space.ncomp, -1)
        gfac = space.mesh.facets[space.mesh.facet_tag == self.tag][:, 0]
        out = np.empty((len(gfac), 1, space.ncomp, 1))
        for f, v in enumerate(gfac):
            ci, side = np.argwhere(cells == v)[0]
            x0, x1 = verts[cells[ci]]
            _, dref = _ref_basis(1, space.degree, np.array([float(side)]))
            loc = vals[:, space.cell_nodes[ci]]
            out[f, 0, :, 0] = loc @ dref[0, :, 0] / (x1 - x0)
        return out


def _outer_normals(mesh: Mesh) -> np.ndarray:
    facets = mesh.outer_facets
    if len(facets) == 0:
        return np.zeros((0, mesh.dim))
    t = mesh.vertices[facets[:, 1]] - mesh.vertices[facets[:, 0]]
    nrm = np.column_stack([t[:, 1], -t[:, 0]])
    return nrm / np.linalg.norm(nrm, axis=1, keepdims=True)


def interface_normal_flux(v: Field) -> float:
    """``int_{interface} v . n dS`` with ``n`` the outward solid normal."""
    if not v.space.vector:
        raise InvalidArgument("interface_normal_flux needs a vector field")
    fs = FacetSet(v.space, INTERFACE)
    vals = fs.values(v.coeffs)
    return float(np.sum(fs.weights * np.einsum("fqk,fk->fq", vals, fs.normal)))


# --- norms -------------------------------------------------------------------

def norm(f: Field, which: str = "L2") -> float:
    """L2, H1 or H1-seminorm of a field by exact quadrature."""
    val, grad = f.at_quadrature()
    w = f.space.geometry().wdet
    l2 = float(np.einsum("cq,cqk,cqk->", w, val, val))
    if which == "L2":
        return float(np.sqrt(max(l2, 0.0)))
    semi = float(np.einsum("cq,cqkd,cqkd->", w, grad, grad))
    if which == "H1-seminorm":
        return float(np.sqrt(max(semi, 0.0)))
    if which == "H1":
        return float(np.sqrt(max(l2 + semi, 0.0)))
    raise InvalidArgument(f"unknown norm {which!r}")


def h1_gram(space: FeSpace) -> sp.csr_matrix:
    return (mass_matrix(space) + laplace_matrix(space)).tocsr()


# --- CSV export --------------------------------------------------------------

def write_field_csv(f: Field, path) -> None:
    """Write ``dof_index, x, y, component, value`` rows (y = 0 in 1D)."""
    sp_ = f.space
    xy = sp_.coords
    if xy.shape[1] == 1:
        xy = np.column_stack([xy[:, 0], np.zeros(len(xy))])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["dof_index", "x", "y", "component", "value"])
        for c in range(sp_.ncomp):
            for i in range(sp_.n_nodes):
                dof = c * sp_.n_nodes + i
                w.writerow([dof, f"{xy[i, 0]:.17g}", f"{xy[i, 1]:.17g}", c,
                            f"{f.coeffs[dof]:.17g}"])


def read_field_csv(space: FeSpace, path) -> Field:
    coeffs = np.zeros(space.ndof)
    seen = np.zeros(space.ndof, dtype=bool)
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            i = int(row["dof_index"])
            coeffs[i] = float(row["value"])
            seen[i] = True
    if not seen.all():
        raise InvalidArgument(f"{path}: field file does not cover all {space.ndof} dofs")
    return Field(space, coeffs)

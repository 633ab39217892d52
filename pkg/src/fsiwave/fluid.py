"""Fluid operators and the monolithic coupled assembly.

The velocity of the whole domain is one continuous P2 field ``V``: it is the
fluid velocity ``u`` on fluid cells and the structure velocity ``xi_dot`` on
solid cells.  Sharing the interface nodes enforces ``u = xi_dot`` exactly, and
the stress balance across the interface is then the natural condition of the
summed weak form.  Pressure is P1 on the fluid (Taylor-Hood).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyFailure, InvalidArgument
from .fem import (FacetSet, FeSpace, Field, divergence_matrix, load_vector,
                  mass_matrix, strain_matrix, transfer_matrix)
from .mesh import INTERFACE, OUTER, Mesh

CONVECTION_QUADRATURE = 5


@dataclass(frozen=True)
class FluidParams:
    nu: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.nu, (int, float)) and math.isfinite(self.nu) and self.nu > 0):
            raise InvalidArgument(f"nu must be a positive number, got {self.nu!r}")


def stress_fluid(u: Field, p: Field, params: FluidParams, n: int = 4) -> np.ndarray:
    """``sigma = 2 nu eps(u) - p Id`` at quadrature points, (nc, nq, d, d)."""
    if not np.array_equal(u.space.cells, p.space.cells):
        raise InvalidArgument("u and p must live on the same cells")
    _, grad = u.at_quadrature(n)
    pval, _ = p.at_quadrature(n)
    d = grad.shape[-1]
    eps = 0.5 * (grad + np.swapaxes(grad, -1, -2))
    return 2 * params.nu * eps - pval[..., 0][..., None, None] * np.eye(d)


def convection(u: Field, w: Field) -> np.ndarray:
    """Load vector of ``v -> int (u . grad) w . v`` on ``w``'s space.

    Integrated with a rule one degree above the stiffness rule, exact for the
    quintic P2 integrand.
    """
    if u.space is not w.space:
        raise InvalidArgument("convection needs u and w on the same space")
    n = CONVECTION_QUADRATURE
    uval, _ = u.at_quadrature(n)
    _, wgrad = w.at_quadrature(n)
    conv = np.einsum("cqj,cqij->cqi", uval, wgrad)
    return load_vector(w.space, conv, n)


def trilinear(u: Field, w: Field, v: Field) -> float:
    """``int (u . grad) w . v``."""
    return float(convection(u, w) @ v.coeffs)


def mean_pressure(p: Field) -> float:
    """``|Omega_F|^-1 int p``."""
    g = p.space.geometry()
    val, _ = p.at_quadrature()
    return float(np.einsum("cq,cq->", g.wdet, val[..., 0]) / g.wdet.sum())


def centered_pressure(p: Field) -> Field:
    """``p - mean(p)``; exact because constants are in the pressure space."""
    return Field(p.space, p.coeffs - mean_pressure(p))


@dataclass(eq=False)
class CoupledMatrices:
    """Operators of the monolithic system on the composite velocity ``V``.

    Attributes
    ----------
    velocity, fluid_velocity, pressure, structure : FeSpace
        Whole-domain P2 velocity, its fluid restriction, fluid P1 pressure and
        solid P2 displacement.
    M : mass of ``V`` (fluid plus solid part).
    M_u, M_xi : fluid and structure masses on their own spaces.
    A : viscous form ``2 nu int eps(u):eps(v)`` on ``V`` (fluid cells only).
    A_u : the same on the fluid space.
    B : ``int q div(u)`` with shape (n_pressure, n_velocity).
    K : elastic stiffness ``int Sigma(xi):eps(eta)`` on the structure space.
    to_fluid, to_structure : restriction maps from ``V``.
    free : velocity dofs not on the outer wall.
    interface_map : pairs (velocity dof, structure dof) of interface nodes.
    """

    mesh: Mesh
    fluid: FluidParams
    velocity: FeSpace
    fluid_velocity: FeSpace
    pressure: FeSpace
    structure: FeSpace
    M: sp.csr_matrix
    M_u: sp.csr_matrix
    M_xi: sp.csr_matrix
    A: sp.csr_matrix
    A_u: sp.csr_matrix
    B: sp.csr_matrix
    B_u: sp.csr_matrix
    K: sp.csr_matrix
    to_fluid: sp.csr_matrix
    to_structure: sp.csr_matrix
    free: np.ndarray
    interface_map: np.ndarray

    @cached_property
    def interface_facets(self) -> FacetSet:
        return FacetSet(self.velocity, INTERFACE)

    def convection_load(self, V: np.ndarray, W: np.ndarray | None = None) -> np.ndarray:
        """``v -> int_F (u . grad) w . v`` pulled back to ``V``'s dofs."""
        u = Field(self.fluid_velocity, self.to_fluid @ V)
        w = u if W is None else Field(self.fluid_velocity, self.to_fluid @ W)
        return self.to_fluid.T @ convection(u, w)

    def fluid_part(self, V) -> Field:
        return Field(self.fluid_velocity, self.to_fluid @ np.asarray(V))

    def structure_part(self, V) -> Field:
        return Field(self.structure, self.to_structure @ np.asarray(V))

    def export_coo(self, directory) -> list[str]:
        """Write each block as ``row col value`` text; returns the file names."""
        names = []
        for name in ("M", "M_u", "M_xi", "A", "B", "K"):
            mat = getattr(self, name).tocoo()
            path = os.path.join(directory, f"matrix_{name}.txt")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(f"# {mat.shape[0]} {mat.shape[1]} {mat.nnz}\n")
                for r, c, v in zip(mat.row, mat.col, mat.data):
                    fh.write(f"{r} {c} {v:.17g}\n")
            names.append(path)
        return names


def assemble_coupled(mesh: Mesh, fluid: FluidParams, elastic) -> CoupledMatrices:
    if mesh.dim != 2:
        raise InvalidArgument("the coupled assembly needs a 2D mesh with both subdomains")
    V = FeSpace(mesh, 2, vector=True, restriction="Whole")
    U = FeSpace(mesh, 2, vector=True, restriction="Fluid")
    P = FeSpace(mesh, 1, vector=False, restriction="Fluid")
    S = FeSpace(mesh, 2, vector=True, restriction="Solid")
    if len(U.cells) == 0 or len(S.cells) == 0:
        raise InvalidArgument("mesh must contain both fluid and solid cells")
    Tu = transfer_matrix(V, U)
    Ts = transfer_matrix(V, S)
    # every interface node must be shared by a fluid and a solid cell
    iface = np.unique(FacetSet(V, INTERFACE).nodes)
    gids = V.nodes[iface]
    lu, ls = U.local_nodes(gids), S.local_nodes(gids)
    if np.any(lu < 0) or np.any(ls < 0):
        raise AssemblyFailure("interface nodes are not shared by both subdomains")
    M_u = mass_matrix(U)
    M_xi = mass_matrix(S)
    A_u = strain_matrix(U, fluid.nu, 0.0)
    K = strain_matrix(S, elastic.lambda1, elastic.lambda2)
    B_u = divergence_matrix(U, P)
    M = (Tu.T @ M_u @ Tu + Ts.T @ M_xi @ Ts).tocsr()
    A = (Tu.T @ A_u @ Tu).tocsr()
    B = (B_u @ Tu).tocsr()
    outer = V.dofs(V.boundary_nodes(OUTER))
    free = np.setdiff1d(np.arange(V.ndof), outer)
    imap = np.column_stack([V.dofs(iface), S.dofs(ls)])
    return CoupledMatrices(mesh, fluid, V, U, P, S, M, M_u, M_xi, A, A_u, B, B_u, K,
                           Tu.tocsr(), Ts.tocsr(), free, imap)

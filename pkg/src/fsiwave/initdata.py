"""Construction and checking of compatible initial data.

Compatible data ``(u0, u1, p0, xi0, xi1, xi2)`` satisfy, in the discrete weak
sense used by the time stepper,

    u1 + (u0 . grad) u0 - Div sigma(u0, p0) = 0    in the fluid,
    div u0 = div u1 = 0                           in the fluid,
    sigma(u0, p0) n = Sigma(xi0) n,  u0 = xi1     on the interface,
    u0 = u1 = 0                                   on the outer wall,
    xi2 - Div Sigma(xi0) = 0                      in the solid.

They are built in the natural order: pick ``u1`` and ``xi2``, solve for
``xi0``, solve a stationary Navier-Stokes problem for ``(u0, p0)`` with the
elastic traction as Neumann data, and extend the interface trace of ``u0``
into the solid to get ``xi1``.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elasticity import ElasticParams, dirichlet_eigs
from .errors import InvalidArgument, PicardDivergence, SolveFailure
from .fem import FacetSet, Field, h1_gram, mass_matrix, read_field_csv, write_field_csv
from .fluid import CoupledMatrices, FluidParams, assemble_coupled, convection
from .mesh import INTERFACE, OUTER, Mesh

PICARD_TOL = 1e-12
PICARD_GROWTH = 10.0
PICARD_MAX = 50

FIELD_NAMES = ("u0", "u1", "p0", "xi0", "xi1", "xi2")


@dataclass(eq=False)
class InitialData:
    u0: Field
    u1: Field
    p0: Field
    xi0: Field
    xi1: Field
    xi2: Field

    def scaled(self, alpha: float) -> "InitialData":
        """Multiply every field by ``alpha`` (compatible only while convection is negligible)."""
        return InitialData(*(alpha * getattr(self, n) for n in FIELD_NAMES))


@dataclass(frozen=True)
class Seed:
    """Inputs of :func:`construct_compatible`.

    Parameters
    ----------
    u1 : "zero" | "curl_bump"
        Fluid acceleration: a divergence-free bump supported inside the fluid.
    xi2 : "zero" | "bump" | "pressure_wave"
        Solid acceleration.  ``"pressure_wave"`` uses ``-mu psi`` of the
        Dirichlet mode closest to a pressure wave (or ``mode`` if given).
    g : callable or None
        Dirichlet trace of ``xi0`` on the interface, ``g(points) -> (n, d)``.
    amplitude : float
        Common scale of ``u1`` and ``xi2``.
    """

    u1: str = "zero"
    xi2: str = "zero"
    g: object = None
    amplitude: float = 0.0
    mode: int | None = None
    n_modes: int = 12

    def __post_init__(self):
        if self.u1 not in ("zero", "curl_bump"):
            raise InvalidArgument(f"unknown u1 seed {self.u1!r}")
        if self.xi2 not in ("zero", "bump", "pressure_wave"):
            raise InvalidArgument(f"unknown xi2 seed {self.xi2!r}")
        if not math.isfinite(self.amplitude):
            raise InvalidArgument("amplitude must be finite")


# --- geometry helpers ----------------------------------------------------------

def _segment_distance(pts, a, b):
    ab = b - a
    t = np.clip(np.einsum("nd,fd->nf", pts, ab) - np.einsum("fd,fd->f", a, ab)[None], 0, None)
    t = np.minimum(t / np.einsum("fd,fd->f", ab, ab)[None], 1.0)
    proj = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(pts[:, None, :] - proj, axis=-1).min(axis=1)


def _inscribed_ball(mesh: Mesh, tag: int):
    """Largest disc centred at a vertex of the region, clear of every facet."""
    cells = mesh.cells[mesh.cell_tag == tag]
    cand = mesh.vertices[np.unique(cells)]
    a = mesh.vertices[mesh.facets[:, 0]]
    b = mesh.vertices[mesh.facets[:, 1]]
    dist = _segment_distance(cand, a, b)
    k = int(np.argmax(dist))
    return cand[k], float(dist[k])


def _bump(y, center, radius):
    """``(1 - |y-c|^2/r^2)^4`` and its gradient, zero outside the disc."""
    z = (y - center) / radius
    s = 1.0 - np.sum(z * z, axis=1)
    inside = s > 0
    b = np.where(inside, s, 0.0) ** 4
    db = np.where(inside, s, 0.0)[:, None] ** 3 * (-8.0 * z / radius)
    return b, db


# --- linear algebra helpers ------------------------------------------------------

def _leray_project(mats: CoupledMatrices, u: np.ndarray, interior: np.ndarray) -> np.ndarray:
    """M-orthogonal projection onto discretely solenoidal fields with zero trace."""
    M = mats.M_u[interior][:, interior]
    B = mats.B_u[:, interior]
    mp = mass_matrix(mats.pressure) @ np.ones(mats.pressure.ndof)
    # constants are in the kernel of B^T on zero-trace fields; gauge the multiplier
    A = sp.bmat([[M, B.T, None], [B, None, sp.csr_matrix(mp[:, None])],
                 [None, sp.csr_matrix(mp[None, :]), None]], format="csc")
    rhs = np.concatenate([M @ u[interior], np.zeros(mats.pressure.ndof + 1)])
    sol = spla.splu(A).solve(rhs)
    out = np.zeros_like(u)
    out[interior] = sol[:len(interior)]
    return out


def _fluid_interior_dofs(mats: CoupledMatrices) -> np.ndarray:
    U = mats.fluid_velocity
    bnd = np.union1d(U.boundary_nodes(OUTER), U.boundary_nodes(INTERFACE))
    return np.setdiff1d(np.arange(U.ndof), U.dofs(bnd))


def _solid_split(mats: CoupledMatrices):
    S = mats.structure
    bd = S.dofs(S.boundary_nodes(INTERFACE))
    return bd, np.setdiff1d(np.arange(S.ndof), bd)


def _elastic_dirichlet(mats, rhs_interior, trace):
    """Solve ``K x = rhs`` on interior solid dofs with ``x = trace`` on the interface."""
    bd, inner = _solid_split(mats)
    K = mats.K
    x = np.zeros(mats.structure.ndof)
    x[bd] = trace[bd]
    b = rhs_interior - K[inner][:, bd] @ x[bd]
    x[inner] = spla.spsolve(K[inner][:, inner].tocsc(), b)
    return x


# --- construction ------------------------------------------------------------

def construct_compatible(mesh: Mesh, fluid: FluidParams, elastic: ElasticParams, seed: Seed,
                         mats: CoupledMatrices | None = None) -> InitialData:
    """Build compatible initial data from ``seed``.

    Raises
    ------
    PicardDivergence
        If the stationary convection iteration does not reach ``1e-12``.
    """
    mats = assemble_coupled(mesh, fluid, elastic) if mats is None else mats
    U, S, P = mats.fluid_velocity, mats.structure, mats.pressure
    amp = seed.amplitude

    # 1) divergence-free u1 with zero trace on the whole fluid boundary
    u1 = np.zeros(U.ndof)
    if seed.u1 == "curl_bump" and amp != 0:
        c, r = _inscribed_ball(mesh, 0)
        _, db = _bump(U.coords, c, 0.9 * r)
        raw = amp * np.concatenate([db[:, 1], -db[:, 0]])
        u1 = _leray_project(mats, raw, _fluid_interior_dofs(mats))

    # 2) solid acceleration
    xi2 = np.zeros(S.ndof)
    if amp != 0 and seed.xi2 == "bump":
        c, r = _inscribed_ball(mesh, 1)
        b, _ = _bump(S.coords, c, 0.9 * r)
        y = S.coords - c
        # a bump times a non-rigid linear field, so that xi0 carries strain
        xi2 = amp * np.concatenate([b * (1.0 + y[:, 0]), b * (0.5 - y[:, 1])])
    elif amp != 0 and seed.xi2 == "pressure_wave":
        pairs = dirichlet_eigs(mesh, elastic, max(seed.n_modes, seed.mode or 1))
        pair = pairs[seed.mode - 1] if seed.mode else min(pairs, key=lambda p: p.badness)
        xi2 = -amp * pair.mu * pair.psi.coeffs

    # 3) xi0 from Div Sigma(xi0) = xi2 with Dirichlet data g
    trace = np.zeros(S.ndof)
    if seed.g is not None:
        trace = S.interpolate(seed.g).coeffs
    _, inner = _solid_split(mats)
    xi0 = _elastic_dirichlet(mats, -(mats.M_xi @ xi2)[inner], trace)

    # 4) stationary Navier-Stokes for (u0, p0) with the elastic traction as Neumann data
    V = mats.velocity
    fluid_dofs = np.flatnonzero(mats.to_fluid.T @ np.ones(U.ndof) > 0)
    F = np.intersect1d(fluid_dofs, mats.free)
    load = -(mats.to_fluid.T @ (mats.M_u @ u1)) - mats.to_structure.T @ (mats.K @ xi0 + mats.M_xi @ xi2)
    BF = mats.B[:, F]
    A = sp.bmat([[mats.A[F][:, F], -BF.T], [-BF, None]], format="csc")
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SolveFailure(f"stationary Stokes system is singular: {exc}") from exc
    Vs = np.zeros(V.ndof)
    for it in range(PICARD_MAX):
        conv = mats.convection_load(Vs)
        sol = lu.solve(np.concatenate([(load - conv)[F], np.zeros(P.ndof)]))
        if not np.all(np.isfinite(sol)):
            raise PicardDivergence("stationary convection iteration blew up; reduce the seed")
        diff = np.linalg.norm(sol[:len(F)] - Vs[F])
        Vs[F] = sol[:len(F)]
        if it == 0:
            stokes_norm = np.linalg.norm(Vs)
        elif np.linalg.norm(Vs) > PICARD_GROWTH * stokes_norm:
            # the small-data branch stays near the Stokes solution
            raise PicardDivergence("stationary convection iteration left the small-data branch; reduce the seed")
        p0 = sol[len(F):]
        if diff <= PICARD_TOL * np.linalg.norm(Vs) or diff == 0.0:
            break
        if it == PICARD_MAX - 1:
            raise PicardDivergence("stationary convection iteration did not converge; reduce the seed")
    u0 = mats.to_fluid @ Vs

    # 5) xi1: elastic-energy-minimal extension of the interface trace of u0
    xi1 = _elastic_dirichlet(mats, np.zeros(len(inner)), mats.to_structure @ Vs)
    return InitialData(Field(U, u0), Field(U, u1), Field(P, p0), Field(S, xi0),
                       Field(S, xi1), Field(S, xi2))


# --- residual checker --------------------------------------------------------

RESIDUAL_NAMES = ("momentum", "div_u0", "div_u1", "interface_stress", "interface_velocity",
                  "outer_u0", "outer_u1", "elastic_acceleration")


def _dual_norm(r, gram):
    return math.sqrt(max(float(r @ spla.spsolve(gram.tocsc(), r)), 0.0))


def check_compatibility(data: InitialData, mesh: Mesh, fluid: FluidParams, elastic: ElasticParams,
                        mats: CoupledMatrices | None = None) -> dict:
    """Residual of each compatibility line in its natural discrete norm.

    Momentum and elastic-acceleration lines are measured in the dual norm of
    the ``H1_0`` test space, divergences as L2 norms of their projection onto
    the pressure space, the interface stress as the L2 norm of the traction
    mismatch and traces by boundary quadrature.  The extra entry
    ``interface_acceleration`` reports ``u1 - xi2`` on the interface.
    """
    mats = assemble_coupled(mesh, fluid, elastic) if mats is None else mats
    U, S = mats.fluid_velocity, mats.structure
    u0, u1, p0 = data.u0.coeffs, data.u1.coeffs, data.p0.coeffs
    xi0, xi1, xi2 = data.xi0.coeffs, data.xi1.coeffs, data.xi2.coeffs
    out = {}

    rf = mats.M_u @ u1 + mats.A_u @ u0 - mats.B_u.T @ p0 + convection(data.u0, data.u0)
    fin = _fluid_interior_dofs(mats)
    out["momentum"] = _dual_norm(rf[fin], h1_gram(U)[fin][:, fin])

    Mp = mass_matrix(mats.pressure)
    out["div_u0"] = _dual_norm(mats.B_u @ u0, Mp)
    out["div_u1"] = _dual_norm(mats.B_u @ u1, Mp)

    rs = mats.M_xi @ xi2 + mats.K @ xi0
    bd, inner = _solid_split(mats)
    out["elastic_acceleration"] = _dual_norm(rs[inner], h1_gram(S)[inner][:, inner])

    # the full residual functional tested with interface basis functions
    total = mats.to_fluid.T @ rf + mats.to_structure.T @ rs
    fs = FacetSet(mats.velocity, INTERFACE)
    gd = fs.dof_indices()
    Mg = fs.mass_matrix()[gd][:, gd]
    out["interface_stress"] = _dual_norm(total[gd], Mg)

    fsu = FacetSet(U, INTERFACE)
    fss = FacetSet(S, INTERFACE)
    diff = fsu.values(u0) - fss.values(xi1)
    out["interface_velocity"] = math.sqrt(float(np.sum(fsu.weights * np.sum(diff**2, -1))))
    fo = FacetSet(U, OUTER)
    for name, vec in (("outer_u0", u0), ("outer_u1", u1)):
        v = fo.values(vec)
        out[name] = math.sqrt(float(np.sum(fo.weights * np.sum(v**2, -1))))
    acc = fsu.values(u1) - fss.values(xi2)
    out["interface_acceleration"] = math.sqrt(float(np.sum(fsu.weights * np.sum(acc**2, -1))))
    return out


# --- persistence ---------------------------------------------------------------

def save_initial_data(data: InitialData, directory, scenario: dict | None = None,
                      residuals: dict | None = None) -> None:
    os.makedirs(directory, exist_ok=True)
    for name in FIELD_NAMES:
        write_field_csv(getattr(data, name), os.path.join(directory, f"{name}.csv"))
    manifest = {"fields": {n: f"{n}.csv" for n in FIELD_NAMES},
                "scenario": scenario or {},
                "residuals": {k: float(f"{v:.17g}") for k, v in (residuals or {}).items()}}
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_initial_data(directory, mats: CoupledMatrices) -> InitialData:
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    spaces = {"u0": mats.fluid_velocity, "u1": mats.fluid_velocity, "p0": mats.pressure,
              "xi0": mats.structure, "xi1": mats.structure, "xi2": mats.structure}
    return InitialData(**{n: read_field_csv(spaces[n], os.path.join(directory, manifest["fields"][n]))
                          for n in FIELD_NAMES})

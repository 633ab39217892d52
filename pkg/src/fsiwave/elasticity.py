"""Linear elasticity on the solid region.

Strain and stress evaluation, the rigid-motion projection, the stationary
Neumann solve for ``phi_N`` and the Dirichlet-Lame eigenproblem together with a
score of how close each eigenmode comes to having a purely normal traction.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegenerateInput, InvalidArgument, SolveFailure
from .fem import (FacetSet, FeSpace, Field, mass_matrix, norm, strain_matrix)
from .mesh import INTERFACE, Mesh
from .pressure_waves import AnalyticBallMode, ball_badness

DENSE_LIMIT = 3000
DEFAULT_THRESHOLD = 0.1


@dataclass(frozen=True)
class ElasticParams:
    """Lame constants of the solid, ``Sigma = 2 lambda1 eps + lambda2 div Id``."""

    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidArgument(f"{name} must be a positive number, got {v!r}")

    @property
    def p_modulus(self) -> float:
        """``2 lambda1 + lambda2``, the longitudinal wave modulus."""
        return 2 * self.lambda1 + self.lambda2


@dataclass(frozen=True)
class RigidMotion:
    """``r(y) = skew (y - centroid) + shift`` with ``skew`` antisymmetric."""

    skew: np.ndarray
    shift: np.ndarray
    centroid: np.ndarray

    def __post_init__(self):
        if not np.allclose(self.skew, -self.skew.T, atol=1e-12):
            raise InvalidArgument("skew part must be antisymmetric")

    def __call__(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return (y - self.centroid) @ self.skew.T + self.shift

    def to_field(self, space: FeSpace) -> Field:
        """Nodal interpolant, exact for P1/P2 since ``r`` is affine."""
        return space.interpolate(self)


# --- pointwise operators -----------------------------------------------------

def strain(xi: Field, n: int = 4) -> np.ndarray:
    """``eps(xi)`` at quadrature points, shape (nc, nq, d, d)."""
    if not xi.space.vector:
        raise InvalidArgument("strain needs a vector field")
    _, grad = xi.at_quadrature(n)
    return 0.5 * (grad + np.swapaxes(grad, -1, -2))


def stress_elastic(xi: Field, params: ElasticParams, n: int = 4) -> np.ndarray:
    """``Sigma(xi)`` at quadrature points, shape (nc, nq, d, d)."""
    eps = strain(xi, n)
    d = eps.shape[-1]
    tr = np.trace(eps, axis1=-2, axis2=-1)
    return 2 * params.lambda1 * eps + params.lambda2 * tr[..., None, None] * np.eye(d)


def elastic_energy_density(xi: Field, params: ElasticParams) -> float:
    """``int Sigma(xi) : eps(xi)``."""
    eps = strain(xi)
    sig = stress_elastic(xi, params)
    w = xi.space.geometry().wdet
    return float(np.einsum("cq,cqij,cqij->", w, sig, eps))


# --- rigid motions -----------------------------------------------------------

def _volume_moments(space: FeSpace):
    g = space.geometry()
    w = g.wdet
    vol = float(w.sum())
    centroid = np.einsum("cq,cqd->d", w, g.points) / vol
    return vol, centroid


def project_rigid(f: Field) -> RigidMotion:
    """Rigid part of ``f``: skew part of the mean gradient and the mean value."""
    if not f.space.vector:
        raise InvalidArgument("project_rigid needs a vector field")
    vol, centroid = _volume_moments(f.space)
    val, grad = f.at_quadrature()
    w = f.space.geometry().wdet
    mean_grad = np.einsum("cq,cqij->ij", w, grad) / vol
    mean_val = np.einsum("cq,cqi->i", w, val) / vol
    return RigidMotion(0.5 * (mean_grad - mean_grad.T), mean_val, centroid)


def rigid_constraints(space: FeSpace) -> np.ndarray:
    """Rows of the linear map ``f -> (mean f, skew mean grad f)``, (d(d+1)/2, ndof).

    Its kernel is exactly ``{f : P_R f = 0}``.
    """
    g = space.geometry()
    d = space.ncomp
    nn = space.n_nodes
    vol = float(g.wdet.sum())
    loc_val = np.einsum("cq,ql->cl", g.wdet, g.phi) / vol
    loc_grad = np.einsum("cq,cqld->cld", g.wdet, g.dphi) / vol
    rows = []
    for c in range(d):
        r = np.zeros(space.ndof)
        np.add.at(r, c * nn + space.cell_nodes, loc_val)
        rows.append(r)
    for i in range(d):
        for j in range(i + 1, d):
            # (d_j f_i - d_i f_j) / 2
            r = np.zeros(space.ndof)
            np.add.at(r, i * nn + space.cell_nodes, 0.5 * loc_grad[:, :, j])
            np.add.at(r, j * nn + space.cell_nodes, -0.5 * loc_grad[:, :, i])
            rows.append(r)
    return np.array(rows)


def korn_gap(f: Field):
    """Return ``(ratio, ratio)`` with ``ratio = |f - P_R f|_{H1} / |eps(f)|_{L2}``.

    The pair is the per-field contribution to the lower and upper Korn
    constants; callers aggregate min and max over a family of fields.
    """
    w = f.space.geometry().wdet
    eps = strain(f)
    eps_norm = math.sqrt(float(np.einsum("cq,cqij,cqij->", w, eps, eps)))
    scale = max(norm(f, "H1"), 1.0)
    if eps_norm <= 1e-12 * scale:
        raise DegenerateInput("field is rigid; the Korn ratio is undefined")
    rest = f - project_rigid(f).to_field(f.space)
    ratio = norm(rest, "H1") / eps_norm
    return ratio, ratio


# --- stationary Neumann problem ----------------------------------------------

def solid_space(mesh: Mesh) -> FeSpace:
    return FeSpace(mesh, 2, vector=True, restriction="Solid")


def neumann_phi_closed_form(params: ElasticParams, dim: int, centroid=None):
    """``phi_N(y) = (y - centroid) / (2 lambda1 + d lambda2)``.

    Exact for any solid, since ``Sigma(c y) = (2 lambda1 + d lambda2) c Id``.
    """
    c = 1.0 / (2 * params.lambda1 + dim * params.lambda2)
    centroid = np.zeros(dim) if centroid is None else np.asarray(centroid, dtype=float)
    return lambda y: c * (np.atleast_2d(np.asarray(y, dtype=float)) - centroid)


def traction_defect(xi: Field, params: ElasticParams, target_q: float = 1.0) -> float:
    """``|Sigma(xi) n - q n| / |q n|`` in L2 of the interface, from one-sided gradients."""
    fs = FacetSet(xi.space, INTERFACE)
    grad = fs.gradients(xi.coeffs)
    d = grad.shape[-1]
    eps = 0.5 * (grad + np.swapaxes(grad, -1, -2))
    tr = np.trace(eps, axis1=-2, axis2=-1)
    sig = 2 * params.lambda1 * eps + params.lambda2 * tr[..., None, None] * np.eye(d)
    n = fs.normal
    res = np.einsum("fqij,fj->fqi", sig, n) - target_q * n[:, None, :]
    num = float(np.sum(fs.weights * np.sum(res * res, axis=-1)))
    den = target_q**2 * float(np.sum(fs.weights))
    return math.sqrt(num / den)


def solve_neumann_phi(mesh: Mesh, params: ElasticParams):
    """Solve ``-Div Sigma(phi) = 0``, ``Sigma(phi) n = n`` with ``P_R phi = 0``.

    The rigid kernel is removed by Lagrange multipliers, one per rigid mode.

    Returns
    -------
    phi_N : Field
        Solution on the solid P2 space.
    defect : float
        Relative L2 mismatch of ``Sigma(phi_N) n`` and ``n`` on the interface.
    """
    space = solid_space(mesh)
    K = strain_matrix(space, params.lambda1, params.lambda2)
    load = FacetSet(space, INTERFACE).normal_load()
    C = rigid_constraints(space)
    m = C.shape[0]
    A = sp.bmat([[K, sp.csr_matrix(C).T], [sp.csr_matrix(C), None]], format="csc")
    rhs = np.concatenate([load, np.zeros(m)])
    try:
        sol = spla.splu(A).solve(rhs)
    except RuntimeError as exc:
        raise SolveFailure(f"Neumann system is singular: {exc}") from exc
    if not np.all(np.isfinite(sol)) or np.linalg.norm(A @ sol - rhs) > 1e-8 * max(np.linalg.norm(rhs), 1.0):
        raise SolveFailure("Neumann system is singular beyond the rigid kernel")
    phi = Field(space, sol[:space.ndof])
    return phi, traction_defect(phi, params)


# --- Dirichlet eigenproblem ----------------------------------------------------

@dataclass(eq=False)
class EigenPair:
    """Dirichlet-Lame eigenpair with its interface traction diagnostics.

    ``neumann_trace`` is the discrete traction ``Sigma(psi) n`` as a field on
    the solid space, nonzero only at interface nodes.  It is the Riesz
    representative in ``L2(interface)`` of the residual functional
    ``v -> a(psi, v) - mu (psi, v)``, which is the variationally consistent
    boundary traction of a finite element solution.
    """

    index: int
    mu: float
    psi: Field
    neumann_trace: Field
    q_fit: float
    badness: float


@dataclass(eq=False)
class _SolidOperators:
    space: FeSpace
    K: sp.csr_matrix
    M: sp.csr_matrix
    facets: FacetSet
    boundary: np.ndarray
    interior: np.ndarray
    _gamma_lu: object = field(default=None, repr=False)

    @classmethod
    def build(cls, mesh: Mesh, params: ElasticParams):
        space = solid_space(mesh)
        K = strain_matrix(space, params.lambda1, params.lambda2)
        M = mass_matrix(space)
        fs = FacetSet(space, INTERFACE)
        bd = fs.dof_indices()
        inner = np.setdiff1d(np.arange(space.ndof), bd)
        return cls(space, K, M, fs, bd, inner)

    @property
    def gamma_lu(self):
        if self._gamma_lu is None:
            Mg = self.facets.mass_matrix()[self.boundary][:, self.boundary].tocsc()
            self._gamma_lu = spla.splu(Mg)
        return self._gamma_lu


def _fix_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def _smallest_eigs(Ki, Mi, n_modes):
    n = Ki.shape[0]
    if n <= DENSE_LIMIT:
        w, v = sla.eigh(Ki.toarray(), Mi.toarray(), subset_by_index=[0, n_modes - 1])
        return w, v
    try:
        w, v = spla.eigsh(Ki.tocsc(), k=n_modes, M=Mi.tocsc(), sigma=0.0, which="LM", tol=1e-12)
    except spla.ArpackNoConvergence as exc:
        raise SolveFailure(f"eigensolver did not converge: {exc}") from exc
    order = np.argsort(w)
    return w[order], v[:, order]


def dirichlet_eigs(mesh: Mesh, params: ElasticParams, n_modes: int) -> list[EigenPair]:
    """Smallest ``n_modes`` eigenpairs of ``-Div Sigma`` with zero interface data.

    Modes are normalised in L2 and their sign is fixed so that the largest
    coefficient is positive, which makes repeated runs reproducible.
    """
    if n_modes < 1:
        raise InvalidArgument("n_modes must be >= 1")
    ops = _SolidOperators.build(mesh, params)
    inner = ops.interior
    if n_modes > len(inner):
        raise InvalidArgument(f"n_modes={n_modes} exceeds the {len(inner)} interior dofs")
    Ki = ops.K[inner][:, inner]
    Mi = ops.M[inner][:, inner]
    w, v = _smallest_eigs(Ki, Mi, n_modes)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise SolveFailure("eigensolver returned non-positive eigenvalues")
    pairs = []
    for k in range(n_modes):
        psi = np.zeros(ops.space.ndof)
        psi[inner] = _fix_sign(v[:, k])
        psi /= math.sqrt(psi @ (ops.M @ psi))
        pairs.append(_make_pair(ops, k + 1, float(w[k]), psi))
    return pairs


def _make_pair(ops: _SolidOperators, index: int, mu: float, psi: np.ndarray) -> EigenPair:
    R = (ops.K @ psi - mu * (ops.M @ psi))[ops.boundary]
    trace = np.zeros(ops.space.ndof)
    trace[ops.boundary] = ops.gamma_lu.solve(R)
    pair = EigenPair(index, mu, Field(ops.space, psi), Field(ops.space, trace), 0.0, 0.0)
    q, bad = _trace_fit(ops.facets, ops.boundary, ops.gamma_lu, trace)
    pair.q_fit, pair.badness = q, bad
    return pair


def _trace_fit(fs: FacetSet, bd, lu, trace: np.ndarray):
    """Best fit ``trace ~ q n`` in ``L2(interface)``, ``n`` replaced by its projection."""
    Mg = fs.mass_matrix()
    tau = trace[bd]
    N = fs.normal_load()[bd]
    nu = lu.solve(N)
    tt = float(trace @ (Mg @ trace))
    if tt < 1e-28:
        raise DegenerateInput("eigenmode carries no interface traction")
    q = float(tau @ N) / float(nu @ N)
    res = np.zeros_like(trace)
    res[bd] = tau - q * nu
    rr = float(res @ (Mg @ res))
    return q, math.sqrt(max(rr, 0.0) / tt)


def badness_score(pair, mesh: Mesh | None = None) -> float:
    """Relative distance of a mode's interface traction from a multiple of ``n``.

    Accepts an :class:`EigenPair` or an :class:`AnalyticBallMode`; the latter is
    scored on a Gauss product rule of the sphere.  Invariant under ``psi -> a psi``.
    """
    if isinstance(pair, AnalyticBallMode):
        return ball_badness(pair)[1]
    space = pair.neumann_trace.space
    fs = FacetSet(space, INTERFACE)
    bd = fs.dof_indices()
    lu = spla.splu(fs.mass_matrix()[bd][:, bd].tocsc())
    return _trace_fit(fs, bd, lu, pair.neumann_trace.coeffs)[1]


@dataclass(frozen=True)
class Classification:
    """``good`` is True when no scanned mode is within ``threshold`` of a pressure wave."""

    good: bool
    threshold: float
    bad_modes: tuple = ()   # (index, mu, q_fit, badness)

    @property
    def label(self) -> str:
        return "Good" if self.good else "Bad"


def classify_domain(mesh: Mesh, params: ElasticParams, n_modes: int = 20,
                    threshold: float = DEFAULT_THRESHOLD, pairs=None) -> Classification:
    if n_modes < 1:
        raise InvalidArgument("n_modes must be >= 1")
    if not 0 < threshold < 1:
        raise InvalidArgument("threshold must lie in (0, 1)")
    pairs = dirichlet_eigs(mesh, params, n_modes) if pairs is None else pairs[:n_modes]
    bad = tuple((p.index, p.mu, p.q_fit, p.badness) for p in pairs if p.badness < threshold)
    return Classification(not bad, threshold, bad)


def write_eigen_report(pairs, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "mu", "q_fit", "badness"])
        for p in pairs:
            w.writerow([p.index, f"{p.mu:.17g}", f"{p.q_fit:.17g}", f"{p.badness:.17g}"])

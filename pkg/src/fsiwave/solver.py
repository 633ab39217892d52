"""Time integration of the coupled fluid-structure system.

One step of the implicit midpoint rule on the composite velocity ``V`` and the
displacement ``xi`` reads

    M (V' - V) / dt + A Vm + C(Vm) - B^T pm + S^T K xim = 0,   B V' = 0,
    xi' = xi + dt S Vm,

with ``Vm = (V + V') / 2``, ``xim = (xi + xi') / 2`` and ``S`` the restriction
to the solid.  Eliminating ``xi'`` leaves a symmetric saddle-point system whose
matrix does not depend on the state; it is factorised once and the convection
load ``C`` is updated by Picard iteration.  For the structure alone this is
the Newmark scheme with ``beta = 1/4, gamma = 1/2``.

Testing the step with ``Vm`` gives the discrete energy law

    E' - E = -dt (2 Vm^T A Vm + 2 C(Vm) . Vm),

so the energy identity holds up to the time-quadrature error of the
dissipation and convection-work integrals.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elasticity import ElasticParams
from .errors import BlowUp, InvalidArgument, PicardDivergence, SolveFailure
from .fem import (FacetSet, FeSpace, Field, h1_gram, mass_matrix, strain_matrix,
                  write_field_csv)
from .fluid import CoupledMatrices, FluidParams, assemble_coupled, mean_pressure
from .mesh import INTERFACE, DomainSpec, build_mesh

BLOWUP_FACTOR = 10.0
BLOWUP_FLOOR = 1e-8
MAX_REFINEMENTS = 3

DIAGNOSTIC_COLUMNS = ("t", "E", "K", "dissipation", "u_H1", "q", "p_hat_L2",
                      "interface_flux", "energy_residual", "margin_E", "margin_K")


@dataclass(frozen=True)
class ScenarioConfig:
    domain: DomainSpec
    fluid: FluidParams = FluidParams()
    elastic: ElasticParams = ElasticParams()
    dt: float = 1e-2
    t_end: float = 1.0
    picard_tol: float = 1e-10
    picard_max: int = 50
    monitor_C_hat: float = 1.0
    monitor_C_tilde: float = 1.0
    linear_tol: float = 1e-12
    stride: int = 1
    convection: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise InvalidArgument("dt must be positive")
        if not self.t_end >= self.dt * (1 - 1e-12):
            raise InvalidArgument("t_end must be at least dt")
        if self.picard_max < 1 or self.stride < 1:
            raise InvalidArgument("picard_max and stride must be >= 1")
        if not self.picard_tol > 0:
            raise InvalidArgument("picard_tol must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["domain"] = self.domain.to_dict()
        out["fluid"] = asdict(self.fluid)
        out["elastic"] = asdict(self.elastic)
        return out


@dataclass(eq=False)
class State:
    """Solution at time ``t``.

    ``velocity`` is the composite field on the whole mesh; ``u`` and ``xi_dot``
    are its fluid and solid restrictions, so the interface traces agree by
    construction.  ``p_mid`` is the pressure of the step that produced this
    state (the midpoint value), used to extrapolate the next pressure.
    """

    t: float
    velocity: Field
    p: Field
    xi: Field
    u: Field
    xi_dot: Field
    p_mid: np.ndarray | None = None

    @classmethod
    def build(cls, mats: CoupledMatrices, t: float, V, p, xi, p_mid=None) -> "State":
        V = np.asarray(V, dtype=float)
        return cls(float(t), Field(mats.velocity, V), Field(mats.pressure, np.asarray(p, dtype=float)),
                   Field(mats.structure, np.asarray(xi, dtype=float)), mats.fluid_part(V),
                   mats.structure_part(V), p_mid)

    @classmethod
    def zero(cls, mats: CoupledMatrices, t: float = 0.0) -> "State":
        return cls.build(mats, t, np.zeros(mats.velocity.ndof), np.zeros(mats.pressure.ndof),
                         np.zeros(mats.structure.ndof))

    @classmethod
    def from_fields(cls, mats: CoupledMatrices, u: Field, p: Field, xi: Field, xi_dot: Field,
                    t: float = 0.0) -> "State":
        """Glue fluid and structure velocities into the composite field.

        The interface values are taken from ``u``; ``xi_dot`` must agree there.
        """
        V = mats.to_structure.T @ xi_dot.coeffs
        V = np.where(mats.to_fluid.T @ np.ones(mats.fluid_velocity.ndof) > 0,
                     mats.to_fluid.T @ u.coeffs, V)
        return cls.build(mats, t, V, p.coeffs, xi.coeffs)


class Stepper:
    """Factorised midpoint step for fixed matrices, ``dt`` and solver settings."""

    def __init__(self, mats: CoupledMatrices, config: ScenarioConfig, dt: float | None = None):
        self.mats = mats
        self.config = config
        self.dt = config.dt if dt is None else float(dt)
        dt = self.dt
        f = mats.free
        S = mats.to_structure
        self.SKS = (S.T @ mats.K @ S).tocsr()
        lhs = mats.M / dt + 0.5 * mats.A + 0.25 * dt * self.SKS
        Bf = mats.B[:, f]
        sys_ = sp.bmat([[lhs[f][:, f], -Bf.T], [-Bf, None]], format="csc")
        try:
            self._lu = spla.splu(sys_)
        except RuntimeError as exc:
            raise SolveFailure(f"coupled system is singular: {exc}") from exc
        self._sys = sys_
        self._sys_norm = float(abs(sys_).sum(axis=1).max())
        self._nf = len(f)

    def _solve(self, rhs_f):
        """Direct solve, refined until the normwise backward error is below ``linear_tol``."""
        rhs = np.concatenate([rhs_f, np.zeros(self.mats.pressure.ndof)])
        sol = self._lu.solve(rhs)
        for _ in range(MAX_REFINEMENTS + 1):
            if not np.all(np.isfinite(sol)):
                raise SolveFailure("linear solve produced non-finite values")
            res = rhs - self._sys @ sol
            scale = self._sys_norm * np.abs(sol).max() + np.abs(rhs).max()
            if np.abs(res).max() <= self.config.linear_tol * scale:
                return sol[:self._nf], sol[self._nf:]
            sol = sol + self._lu.solve(res)
        raise SolveFailure(f"linear residual above linear_tol={self.config.linear_tol:g} after "
                           f"{MAX_REFINEMENTS} refinement sweeps")

    def step(self, state: State) -> tuple[State, int]:
        """Advance one step; returns the new state and the Picard iteration count."""
        mats, cfg, dt = self.mats, self.config, self.dt
        f = mats.free
        V = state.velocity.coeffs
        xi = state.xi.coeffs
        S = mats.to_structure
        base = (mats.M @ V) / dt - 0.5 * (mats.A @ V) - S.T @ (mats.K @ xi) - 0.25 * dt * (self.SKS @ V)
        base_f = base[f]
        Vn = V.copy()
        if not cfg.convection:
            Vf, lam = self._solve(base_f)
            Vn[f] = Vf
            iters = 1
        else:
            iters = 0
            while True:
                iters += 1
                conv = mats.convection_load(0.5 * (V + Vn))
                if not np.all(np.isfinite(conv)):
                    raise PicardDivergence(f"Picard iteration blew up at t={state.t + dt:.6g}")
                Vf, lam = self._solve(base_f - conv[f])
                diff = np.linalg.norm(Vf - Vn[f])
                scale = max(np.linalg.norm(Vf), np.linalg.norm(V[f]))
                Vn[f] = Vf
                if diff <= cfg.picard_tol * scale or diff == 0.0:
                    break
                if iters >= cfg.picard_max:
                    raise PicardDivergence(
                        f"Picard iteration stalled at t={state.t + dt:.6g}: relative update "
                        f"{diff / max(scale, 1e-300):.3e} after {iters} iterations")
        xi_new = xi + 0.5 * dt * (S @ (V + Vn))
        if state.p_mid is None:
            p_new = 2 * lam - state.p.coeffs
        else:
            p_new = lam + 0.5 * (lam - state.p_mid)
        return State.build(mats, state.t + dt, Vn, p_new, xi_new, lam), iters


_STEPPERS: dict = {}


def step(state: State, config: ScenarioConfig, mats: CoupledMatrices) -> State:
    """One midpoint step; factorisations are cached per (matrices, dt)."""
    key = (id(mats), config.dt, config.convection)
    st = _STEPPERS.get(key)
    if st is None or st.mats is not mats or st.config != config:
        st = Stepper(mats, config)
        _STEPPERS.clear()
        _STEPPERS[key] = st
    return st.step(state)[0]


# --- energies ----------------------------------------------------------------

def energy(state: State, mats: CoupledMatrices) -> float:
    """``|u|^2 + |xi_dot|^2 + int Sigma(xi):eps(xi)``."""
    V = state.velocity.coeffs
    xi = state.xi.coeffs
    return float(V @ (mats.M @ V) + xi @ (mats.K @ xi))


def dissipation(state: State, mats: CoupledMatrices) -> float:
    """``4 nu |eps(u)|^2``."""
    V = state.velocity.coeffs
    return float(2.0 * V @ (mats.A @ V))


def convection_work(state: State, mats: CoupledMatrices) -> float:
    """``int (u . grad) u . u``, zero for pointwise solenoidal ``u``."""
    V = state.velocity.coeffs
    return float(mats.convection_load(V) @ V)


def _k_value(mats, V_now, V_prev, dt):
    dV = (V_now - V_prev) / dt
    sv = mats.to_structure @ V_now
    return float(dV @ (mats.M @ dV) + sv @ (mats.K @ sv))


def energy_k_initial(mats: CoupledMatrices, state: State, u1: Field, xi2: Field) -> float:
    """``K(0) = |u1|^2 + |xi2|^2 + int Sigma(xi1):eps(xi1)`` from compatible data."""
    sv = state.xi_dot.coeffs
    return float(u1.coeffs @ (mats.M_u @ u1.coeffs) + xi2.coeffs @ (mats.M_xi @ xi2.coeffs)
                 + sv @ (mats.K @ sv))


@dataclass
class Diagnostics:
    """Per-step diagnostic series; ``rows[i]`` follows :data:`DIAGNOSTIC_COLUMNS`."""

    rows: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        i = DIAGNOSTIC_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def __len__(self):
        return len(self.rows)

    def write_csv(self, path) -> None:
        """Write the CSV and a whitespace-separated ``.dat`` mirror for plotting."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(DIAGNOSTIC_COLUMNS)
            for r in self.rows:
                w.writerow([f"{x:.17g}" for x in r])
        with open(os.path.splitext(path)[0] + ".dat", "w", encoding="utf-8") as fh:
            fh.write("# " + " ".join(DIAGNOSTIC_COLUMNS) + "\n")
            for r in self.rows:
                fh.write(" ".join(f"{x:.17g}" for x in r) + "\n")


@dataclass(eq=False)
class Trajectory:
    states: list
    diagnostics: Diagnostics
    config: ScenarioConfig
    matrices: CoupledMatrices
    step_indices: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])


class _Monitor:
    def __init__(self, mats: CoupledMatrices, config: ScenarioConfig):
        self.mats = mats
        self.config = config
        self.G_u = h1_gram(mats.fluid_velocity)
        self.M_p = mass_matrix(mats.pressure)
        self.N = FacetSet(mats.velocity, INTERFACE).normal_load()

    def u_h1(self, state):
        u = state.u.coeffs
        return math.sqrt(max(float(u @ (self.G_u @ u)), 0.0))

    def pressure_stats(self, state):
        q = mean_pressure(state.p)
        ph = state.p.coeffs - q
        return q, math.sqrt(max(float(ph @ (self.M_p @ ph)), 0.0))

    def flux(self, state):
        return float(self.N @ state.velocity.coeffs)


def run(config: ScenarioConfig, initial: State, mats: CoupledMatrices | None = None,
        u1: Field | None = None, xi2: Field | None = None, callback=None) -> Trajectory:
    """Integrate from ``initial`` to ``config.t_end``.

    Diagnostics are recorded every step and states every ``config.stride``
    steps.  ``u1`` and ``xi2`` (the initial accelerations of compatible data)
    give ``K(0)``; without them ``K(0)`` is taken from the first step.

    Raises
    ------
    BlowUp
        If ``E`` exceeds ``10 E(0) + 1e-8`` or the solution stops being finite.
    """
    if mats is None:
        mats = assemble_coupled(build_mesh(config.domain), config.fluid, config.elastic)
    stepper = Stepper(mats, config)
    mon = _Monitor(mats, config)
    nu = config.fluid.nu
    dt = config.dt

    E0 = energy(initial, mats)
    K0 = energy_k_initial(mats, initial, u1, xi2) if (u1 is not None and xi2 is not None) else None
    limit = BLOWUP_FACTOR * E0 + BLOWUP_FLOOR

    diag = Diagnostics()
    states = [initial]
    indices = [0]
    state = initial
    D_prev = dissipation(state, mats)
    W_prev = convection_work(state, mats) if config.convection else 0.0
    integral = 0.0
    pending_first = None

    def record(st, E, K, D, res, margin_K):
        q, ph = mon.pressure_stats(st)
        margin_E = 4 * nu - config.monitor_C_hat * math.sqrt(E0)
        return [st.t, E, K, D, mon.u_h1(st), q, ph, mon.flux(st), res, margin_E, margin_K]

    first = record(state, E0, K0 if K0 is not None else 0.0, D_prev, 0.0, 0.0)
    for n in range(1, config.n_steps + 1):
        try:
            new, _ = stepper.step(state)
        except InvalidArgument as exc:
            raise BlowUp(f"solution became non-finite at t={state.t + dt:.6g}") from exc
        E = energy(new, mats)
        if not math.isfinite(E) or E > limit:
            raise BlowUp(f"energy {E:.6g} exceeds guard {limit:.6g} at t={new.t:.6g}")
        D = dissipation(new, mats)
        W = convection_work(new, mats) if config.convection else 0.0
        integral += 0.5 * dt * ((D_prev + D) + 2.0 * (W_prev + W))
        res = E + integral - E0
        K = _k_value(mats, new.velocity.coeffs, state.velocity.coeffs, dt)
        if K0 is None:
            K0 = K
        margin_K = 4 * nu - config.monitor_C_tilde * math.sqrt(E0 + K0)
        if pending_first is None:
            first[2] = K0
            first[10] = margin_K
            diag.rows.append(first)
            pending_first = True
        diag.rows.append(record(new, E, K, D, res, margin_K))
        if n % config.stride == 0:
            states.append(new)
            indices.append(n)
        if callback is not None:
            callback(n, new)
        state, D_prev, W_prev = new, D, W
    return Trajectory(states, diag, config, mats, indices)


def energy_k(traj: Trajectory, index: int) -> float:
    """``K`` at stored state ``index`` from a backward difference of stored states."""
    if index < 1 or index >= len(traj.states):
        raise InvalidArgument("energy_k needs 1 <= index < number of stored states")
    a, b = traj.states[index - 1], traj.states[index]
    return _k_value(traj.matrices, b.velocity.coeffs, a.velocity.coeffs, b.t - a.t)


def energy_residual(traj: Trajectory):
    """Per-step residual of the energy identity and its maximum modulus.

    ``E(t) + int 4 nu |eps(u)|^2 - E(0) + 2 int int (u . grad) u . u`` with the
    time integrals evaluated by the trapezoidal rule.
    """
    series = traj.diagnostics.column("energy_residual")
    return series, float(np.max(np.abs(series))) if len(series) else 0.0


@dataclass(frozen=True)
class SmallDataReport:
    E0: float
    K0: float
    u0_H1: float
    margin_E: float
    margin_K: float
    C_hat: float
    C_tilde: float

    @property
    def small_data(self) -> bool:
        """True when both margins are positive for the supplied constants."""
        return self.margin_E > 0 and self.margin_K > 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["small_data"] = self.small_data
        return out


def small_data_report(initial: State, config: ScenarioConfig, mats: CoupledMatrices,
                      u1: Field, xi2: Field) -> SmallDataReport:
    E0 = energy(initial, mats)
    K0 = energy_k_initial(mats, initial, u1, xi2)
    u = initial.u.coeffs
    uh1 = math.sqrt(max(float(u @ (h1_gram(mats.fluid_velocity) @ u)), 0.0))
    nu = config.fluid.nu
    return SmallDataReport(E0, K0, uh1, 4 * nu - config.monitor_C_hat * math.sqrt(E0),
                           4 * nu - config.monitor_C_tilde * math.sqrt(E0 + K0),
                           config.monitor_C_hat, config.monitor_C_tilde)


# --- output ------------------------------------------------------------------

def write_trajectory(traj: Trajectory, directory) -> None:
    """Diagnostics CSV/DAT, one field CSV per stored state and a manifest."""
    os.makedirs(directory, exist_ok=True)
    traj.diagnostics.write_csv(os.path.join(directory, "diagnostics.csv"))
    snaps = os.path.join(directory, "snapshots")
    os.makedirs(snaps, exist_ok=True)
    entries = []
    for idx, st in zip(traj.step_indices, traj.states):
        names = {}
        for name in ("u", "p", "xi", "xi_dot"):
            fname = f"step_{idx:06d}_{name}.csv"
            write_field_csv(getattr(st, name), os.path.join(snaps, fname))
            names[name] = fname
        entries.append({"step": idx, "t": float(f"{st.t:.17g}"), "files": names})
    manifest = {"config": traj.config.to_dict(), "snapshots": entries}
    with open(os.path.join(directory, "trajectory.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


# --- structure-only wave in 1D -----------------------------------------------

@dataclass
class Wave1DResult:
    space: FeSpace
    times: np.ndarray
    displacement: np.ndarray   # (n_times, ndof)
    traction: np.ndarray       # right-end traction Sigma(eta) n per time

    def nodes(self) -> np.ndarray:
        return self.space.coords[:, 0]


def run_wave_1d(n_cells: int, dt: float, t_end: float, params: ElasticParams,
                eta0, eta1=None, a: float = -1.0, b: float = 1.0, degree: int = 1,
                store_every: int = 1) -> Wave1DResult:
    """Newmark (1/4, 1/2) for ``eta_tt = (2 lambda1 + lambda2) eta_xx``, zero end values.

    ``eta0`` and ``eta1`` are callables of the node coordinates (n, 1).
    """
    if n_cells < 1 or dt <= 0 or t_end < dt:
        raise InvalidArgument("need n_cells >= 1, dt > 0 and t_end >= dt")
    mesh = build_mesh(DomainSpec.interval(a, b, (b - a) / n_cells))
    space = FeSpace(mesh, degree, vector=True, restriction="Solid")
    M = mass_matrix(space)
    K = strain_matrix(space, params.lambda1, params.lambda2)
    ends = space.dofs(space.boundary_nodes(INTERFACE))
    inner = np.setdiff1d(np.arange(space.ndof), ends)
    Mi, Ki = M[inner][:, inner].tocsc(), K[inner][:, inner].tocsc()
    lu = spla.splu((Mi / dt + 0.25 * dt * Ki).tocsc())
    eta = space.interpolate(eta0).coeffs
    vel = np.zeros(space.ndof) if eta1 is None else space.interpolate(eta1).coeffs
    eta[ends] = 0.0
    vel[ends] = 0.0
    right = ends[np.argmax(space.coords[space.boundary_nodes(INTERFACE), 0])]

    mass_lu = spla.splu(Mi)

    def traction(full):
        # boundary functional M eta_tt + K eta at the right end, with the
        # interior acceleration taken from the semi-discrete equation
        acc = np.zeros(space.ndof)
        acc[inner] = mass_lu.solve(-(Ki @ full[inner]))
        return float((K @ full + M @ acc)[right])

    n_steps = int(round(t_end / dt))
    times, snaps, tracs = [0.0], [eta.copy()], [traction(eta)]
    x, v = eta[inner], vel[inner]
    for n in range(1, n_steps + 1):
        v_new = lu.solve(Mi @ v / dt - Ki @ x - 0.25 * dt * (Ki @ v))
        x = x + 0.5 * dt * (v + v_new)
        v = v_new
        if n % store_every == 0:
            full = np.zeros(space.ndof)
            full[inner] = x
            times.append(n * dt)
            snaps.append(full)
            tracs.append(traction(full))
    return Wave1DResult(space, np.array(times), np.array(snaps), np.array(tracs))

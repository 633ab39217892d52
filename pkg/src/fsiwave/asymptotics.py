"""Long-time structure of the displacement.

For small data the displacement approaches

    xi(t) ~ eta*(t) + phi_N0 + r(t),

where ``eta*`` is a superposition of pressure waves (Dirichlet modes whose
traction is normal), ``phi_N0`` a static Neumann offset fixed by the initial
strain and ``r`` a rigid motion.  This module recovers those pieces from a
recorded trajectory by modal projection and least-squares fitting.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .elasticity import DEFAULT_THRESHOLD, ElasticParams, project_rigid
from .errors import DegenerateInput, InsufficientWindow, InvalidArgument
from .fem import FeSpace, Field, h1_gram, mass_matrix, strain_matrix

MIN_SAMPLES_PER_PERIOD = 4


@dataclass(eq=False)
class DisplacementSeries:
    """Solid displacement (and optionally velocity) snapshots at uniform times."""

    space: FeSpace
    times: np.ndarray
    xi: np.ndarray                 # (nt, ndof)
    xi_dot: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.xi = np.atleast_2d(np.asarray(self.xi, dtype=float))
        if len(self.times) != len(self.xi):
            raise InvalidArgument("times and snapshots differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidArgument("times must be strictly increasing")

    @classmethod
    def from_trajectory(cls, traj) -> "DisplacementSeries":
        return cls(traj.matrices.structure, traj.times,
                   np.array([s.xi.coeffs for s in traj.states]),
                   np.array([s.xi_dot.coeffs for s in traj.states]))

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0


def _as_series(obj) -> DisplacementSeries:
    return obj if isinstance(obj, DisplacementSeries) else DisplacementSeries.from_trajectory(obj)


# --- modal analysis ------------------------------------------------------------

@dataclass(eq=False)
class ModalSeries:
    indices: np.ndarray
    times: np.ndarray
    coeffs: np.ndarray             # (nt, nk)


def modal_coeffs(fields, basis, times=None) -> ModalSeries:
    """``c_k(t_j) = (field(t_j), psi_k)`` in L2 of the solid.

    ``fields`` is a :class:`DisplacementSeries`, a list of solid Fields or an
    array (nt, ndof) on the basis space.
    """
    space = basis[0].psi.space
    if isinstance(fields, DisplacementSeries):
        times, arr = fields.times, fields.xi
    elif isinstance(fields, (list, tuple)) and fields and isinstance(fields[0], Field):
        arr = np.array([f.coeffs for f in fields])
    else:
        arr = np.atleast_2d(np.asarray(fields, dtype=float))
    times = np.arange(len(arr), dtype=float) if times is None else np.asarray(times, dtype=float)
    M = mass_matrix(space)
    Psi = np.column_stack([p.psi.coeffs for p in basis])
    coeffs = arr @ (M @ Psi)
    if not np.all(np.isfinite(coeffs)):
        raise InvalidArgument("non-finite modal coefficients")
    return ModalSeries(np.array([p.index for p in basis]), times, coeffs)


# --- pressure-wave fitting ------------------------------------------------------

@dataclass(eq=False)
class PressureWaveFit:
    """``c_k(t) ~ a_k sin(w_k (t - t_ref)) + b_k cos(w_k (t - t_ref)) + o_k``.

    ``o_k`` is a constant nuisance term absorbing static projections; it is not
    part of the pressure wave ``eta*``.
    """

    indices: np.ndarray
    mu: np.ndarray
    amplitudes: np.ndarray         # (nk, 2) rows (a_k, b_k)
    offsets: np.ndarray
    t_ref: float
    window: tuple
    residual: float

    @property
    def omega(self) -> np.ndarray:
        return np.sqrt(self.mu)

    def modal_values(self, t, derivative: int = 0) -> np.ndarray:
        """Coefficients of ``eta*`` (or its time derivatives) at times ``t``, (nt, nk)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        w = self.omega
        ph = np.outer(t - self.t_ref, w)
        a, b = self.amplitudes[:, 0], self.amplitudes[:, 1]
        s, c = np.sin(ph), np.cos(ph)
        if derivative == 0:
            return a * s + b * c
        if derivative == 1:
            return w * (a * c - b * s)
        if derivative == 2:
            return -w**2 * (a * s + b * c)
        raise InvalidArgument("derivative must be 0, 1 or 2")

    def referenced_to(self, t_ref: float = 0.0) -> "PressureWaveFit":
        """The same curves with the phase origin moved to ``t_ref``."""
        phi = self.omega * (t_ref - self.t_ref)
        a, b = self.amplitudes[:, 0], self.amplitudes[:, 1]
        c, s = np.cos(phi), np.sin(phi)
        amps = np.column_stack([a * c - b * s, a * s + b * c])
        return PressureWaveFit(self.indices, self.mu, amps, self.offsets, float(t_ref), self.window,
                               self.residual)

    def field_values(self, t, basis, derivative: int = 0) -> np.ndarray:
        """``eta*`` as solid coefficient vectors (nt, ndof)."""
        if len(self.indices) == 0:
            return np.zeros((len(np.atleast_1d(t)), basis[0].psi.space.ndof))
        lookup = {p.index: p for p in basis}
        Psi = np.column_stack([lookup[int(k)].psi.coeffs for k in self.indices])
        return self.modal_values(t, derivative) @ Psi.T


def fit_pressure_wave(series: ModalSeries, bad_modes, window=None) -> PressureWaveFit:
    """Least-squares fit of each bad mode's coefficient over ``window``.

    Parameters
    ----------
    bad_modes : sequence of (index, mu)
    window : (t_a, t_b) or None for the whole series.
    """
    bad_modes = list(bad_modes)
    t = series.times
    ta, tb = (t[0], t[-1]) if window is None else window
    sel = (t >= ta - 1e-12) & (t <= tb + 1e-12)
    if not bad_modes:
        return PressureWaveFit(np.zeros(0, int), np.zeros(0), np.zeros((0, 2)), np.zeros(0),
                               float(ta), (float(ta), float(tb)), 0.0)
    ts = t[sel]
    if len(ts) < 3:
        raise InsufficientWindow(f"window [{ta}, {tb}] holds {len(ts)} samples")
    col = {int(k): j for j, k in enumerate(series.indices)}
    amps, offs, sq = [], [], 0.0
    step = float(np.max(np.diff(ts)))
    for k, mu in bad_modes:
        w = math.sqrt(mu)
        if 2 * math.pi / w / step < MIN_SAMPLES_PER_PERIOD:
            raise InsufficientWindow(f"mode {k}: fewer than {MIN_SAMPLES_PER_PERIOD} samples per period")
        y = series.coeffs[sel, col[int(k)]]
        ph = w * (ts - ta)
        A = np.column_stack([np.sin(ph), np.cos(ph), np.ones_like(ph)])
        sol, *_ = np.linalg.lstsq(A, y, rcond=None)
        sq += float(np.sum((A @ sol - y) ** 2))
        amps.append(sol[:2])
        offs.append(sol[2])
    resid = math.sqrt(sq / (len(ts) * len(bad_modes)))
    return PressureWaveFit(np.array([int(k) for k, _ in bad_modes]), np.array([m for _, m in bad_modes]),
                           np.array(amps), np.array(offs), float(ta), (float(ta), float(tb)), resid)


# --- static offset ---------------------------------------------------------------

def phi_n0(xi0: Field, phi_N: Field, params: ElasticParams):
    """``phi_N0 = (int Sigma(xi0):eps(phi_N) / int Sigma(phi_N):eps(phi_N)) phi_N``.

    Returns the coefficient and the scaled field.
    """
    K = strain_matrix(phi_N.space, params.lambda1, params.lambda2)
    Kphi = K @ phi_N.coeffs
    den = float(phi_N.coeffs @ Kphi)
    if den < 1e-14:
        raise DegenerateInput("phi_N carries no elastic energy")
    coef = float(xi0.coeffs @ Kphi) / den
    return coef, coef * phi_N


# --- shifted differences ------------------------------------------------------------

@dataclass(eq=False)
class ShiftDifference:
    t0: float
    times: np.ndarray
    xi_tilde: np.ndarray           # (nt, ndof)
    window_starts: np.ndarray
    distances: np.ndarray
    norms: np.ndarray


def _h1_norms(arr, gram):
    return np.sqrt(np.maximum(np.einsum("ti,ti->t", arr, (gram @ arr.T).T), 0.0))


def shift_difference(traj, t0: float, basis=None, bad_modes=(), window_length=None) -> ShiftDifference:
    """``xi~(t) = xi(t0 + t) - xi(t)`` and its distance to the pressure-wave set.

    The distance on each window is ``max |xi~ - Pi xi~|_{H1}`` where ``Pi`` is
    the projection onto the bad modes followed by a periodic fit over the
    window.  Windows have length ``window_length`` (default: three periods of
    the slowest bad mode, or the whole series if there are no bad modes).
    """
    s = _as_series(traj)
    dt = s.dt
    if t0 < 0:
        raise InvalidArgument("t0 must be non-negative")
    shift = int(round(t0 / dt)) if dt > 0 else 0
    if dt > 0 and abs(shift * dt - t0) > 1e-9 * max(1.0, t0):
        raise InvalidArgument(f"t0={t0} is not a multiple of the stored spacing {dt}")
    if shift >= len(s.times):
        raise InvalidArgument("trajectory too short for this shift")
    n = len(s.times) - shift
    xt = s.xi[shift:] - s.xi[:n]
    times = s.times[:n]
    gram = h1_gram(s.space)
    norms = _h1_norms(xt, gram)
    bad_modes = list(bad_modes)
    if bad_modes and basis is not None:
        slow = min(math.sqrt(m) for _, m in bad_modes)
        length = window_length or 3 * 2 * math.pi / slow
    else:
        length = window_length or (times[-1] - times[0] + dt)
    starts, dists = [], []
    t_a = times[0]
    while t_a <= times[-1] + 1e-12:
        t_b = min(t_a + length, times[-1])
        sel = (times >= t_a - 1e-12) & (times <= t_b + 1e-12)
        resid = xt[sel]
        if bad_modes and basis is not None:
            ms = modal_coeffs(resid, basis, times[sel])
            fit = fit_pressure_wave(ms, bad_modes, (t_a, t_b))
            resid = resid - fit.field_values(times[sel], basis)
        starts.append(t_a)
        dists.append(float(_h1_norms(resid, gram).max()))
        if t_b >= times[-1]:
            break
        t_a = t_b
    return ShiftDifference(t0, times, xt, np.array(starts), np.array(dists), norms)


# --- decomposition ---------------------------------------------------------------

@dataclass(eq=False)
class Decomposition:
    eta_star: PressureWaveFit
    phi_N0_coeff: float
    phi_N0: Field
    rigid_series: list
    times: np.ndarray
    residual_series: np.ndarray
    xi_dot_gap: np.ndarray
    xi_ddot_gap: np.ndarray
    bad_modes: list = field(default_factory=list)
    slowest_period: float = 0.0

    def tail_is_nonincreasing(self, fraction: float = 0.5, n_windows: int | None = None,
                              rtol: float = 1e-9) -> bool:
        """Windowed maxima of the residual over the trailing ``fraction`` never increase.

        Without ``n_windows`` each window spans at least one period of the
        slowest structure mode, so a decaying oscillation is judged by its
        envelope rather than by its phase.
        """
        r = self.residual_series
        start = int(len(r) * (1 - fraction))
        tail = r[start:]
        if n_windows is None:
            span = float(self.times[-1] - self.times[start]) if len(tail) > 1 else 0.0
            n_windows = int(span / self.slowest_period) if self.slowest_period > 0 else len(tail)
            n_windows = max(n_windows, 2)
        if len(tail) < n_windows:
            return bool(np.all(np.diff(tail) <= rtol * max(tail.max(initial=0.0), 1e-300)))
        env = np.array([c.max() for c in np.array_split(tail, n_windows)])
        return bool(np.all(np.diff(env) <= rtol * max(env.max(), 1e-300)))

    def to_report(self, residual_csv: str) -> dict:
        """Report dict; ``eta_star`` holds (sin, cos) amplitudes with phase origin ``t = 0``."""
        fit = self.eta_star.referenced_to(0.0)
        return {
            "bad_modes": [{"k": int(k), "mu": float(f"{mu:.17g}")} for k, mu in self.bad_modes],
            "eta_star": {str(int(k)): [float(f"{a:.17g}"), float(f"{b:.17g}")]
                         for k, (a, b) in zip(fit.indices, fit.amplitudes)},
            "eta_star_t_ref": float(f"{fit.t_ref:.17g}"),
            "eta_star_fit_residual": float(f"{fit.residual:.17g}"),
            "phi_N0_coeff": float(f"{self.phi_N0_coeff:.17g}"),
            "residual_csv_path": residual_csv,
        }


def default_window(times, bad_modes, fraction: float = 0.25, min_periods: float = 3.0):
    """Trailing ``fraction`` of the run, widened to ``min_periods`` of the slowest bad mode."""
    t_end, t_start = float(times[-1]), float(times[0])
    length = fraction * (t_end - t_start)
    if bad_modes:
        period = 2 * math.pi / min(math.sqrt(m) for _, m in bad_modes)
        need = min_periods * period
        if need > (t_end - t_start) + 1e-12:
            raise InsufficientWindow(
                f"run of length {t_end - t_start:.6g} is shorter than {min_periods} periods ({need:.6g})")
        length = max(length, need)
    return (t_end - length, t_end)


def decompose(traj, basis, phi_N: Field, params: ElasticParams, bad_modes=None,
              threshold: float = DEFAULT_THRESHOLD, window=None, xi0: Field | None = None) -> Decomposition:
    """Split ``xi(t)`` into ``eta*(t) + phi_N0 + r(t)`` plus a residual.

    Parameters
    ----------
    bad_modes : sequence of (index, mu), optional
        Defaults to the basis modes with badness below ``threshold``.
    window : (t_a, t_b), optional
        Fitting window for ``eta*``; defaults to :func:`default_window`.
    """
    s = _as_series(traj)
    space = s.space
    if bad_modes is None:
        bad_modes = [(p.index, p.mu) for p in basis if p.badness < threshold]
    bad_modes = list(bad_modes)
    xi0 = Field(space, s.xi[0]) if xi0 is None else xi0
    coef, phi0 = phi_n0(xi0, phi_N, params)

    z = s.xi - phi0.coeffs[None, :]
    if bad_modes:
        wnd = default_window(s.times, bad_modes) if window is None else window
        ms = modal_coeffs(z, [p for p in basis if p.index in {k for k, _ in bad_modes}], s.times)
        fit = fit_pressure_wave(ms, bad_modes, wnd)
    else:
        fit = fit_pressure_wave(ModalSeries(np.zeros(0, int), s.times, np.zeros((len(s.times), 0))), [])
    eta = fit.field_values(s.times, basis)
    rigid, rest = [], np.empty_like(z)
    for j in range(len(s.times)):
        rm = project_rigid(Field(space, s.xi[j] - eta[j]))
        rigid.append(rm)
        rest[j] = z[j] - eta[j] - rm.to_field(space).coeffs
    gram = h1_gram(space)
    residual = _h1_norms(rest, gram)

    M = mass_matrix(space)
    if s.xi_dot is not None:
        vel = s.xi_dot
    else:
        vel = np.gradient(s.xi, s.times, axis=0) if len(s.times) > 1 else np.zeros_like(s.xi)
    dgap = vel - fit.field_values(s.times, basis, 1)
    xi_dot_gap = np.sqrt(np.maximum(np.einsum("ti,ti->t", dgap, (M @ dgap.T).T), 0.0))
    ddgap = np.full(len(s.times), np.nan)
    if len(s.times) >= 3:
        h = s.dt
        acc = (3 * vel[2:] - 4 * vel[1:-1] + vel[:-2]) / (2 * h)
        g = M @ (acc - fit.field_values(s.times[2:], basis, 2)).T
        lu = spla.splu(gram.tocsc())
        ddgap[2:] = np.sqrt(np.maximum(np.einsum("it,it->t", g, lu.solve(g)), 0.0))
    period = 2 * math.pi / math.sqrt(min(p.mu for p in basis)) if len(basis) else 0.0
    return Decomposition(fit, coef, phi0, rigid, s.times, residual, xi_dot_gap, ddgap, bad_modes, period)


def write_decomposition(dec: Decomposition, directory, stem: str = "decomposition") -> str:
    """Write ``<stem>.json`` and ``<stem>_residual.csv``; returns the JSON path."""
    os.makedirs(directory, exist_ok=True)
    csv_name = f"{stem}_residual.csv"
    with open(os.path.join(directory, csv_name), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "residual_H1", "xi_dot_gap_L2", "xi_ddot_gap_dual"])
        for row in zip(dec.times, dec.residual_series, dec.xi_dot_gap, dec.xi_ddot_gap):
            w.writerow([f"{x:.17g}" for x in row])
    path = os.path.join(directory, f"{stem}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dec.to_report(csv_name), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# --- one-dimensional oracle -----------------------------------------------------------

def oracle_wave_1d(t, x):
    """Closed-form 1D solution ``eta = cos(pi t) sin(pi x)``, ``q = -cos(pi t)``.

    ``eta`` solves ``eta_tt = eta_xx`` on ``(-1, 1)`` with zero end values (wave
    speed one, i.e. ``2 lambda1 + lambda2 = 1``).  The returned ``q`` is the
    tabulated pressure coefficient; the elastic end traction ``eta_x n`` of this
    solution equals ``pi q``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1 + 1e-14):
        raise InvalidArgument("x must lie in [-1, 1]")
    t = np.asarray(t, dtype=float)
    return np.cos(np.pi * t) * np.sin(np.pi * x), -np.cos(np.pi * t)

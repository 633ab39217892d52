"""Closed-form pressure-wave modes of the ball (3D) and the disc (2D).

A pressure wave is a Dirichlet-Lame eigenfunction whose boundary traction is a
scalar multiple of the normal.  On the ball of radius ``r`` the radial modes

    psi_i(y) = (r^2 sin(r_i |y|/r) / (r_i^2 |y|^3) - r cos(r_i |y|/r) / (r_i |y|^2)) y

qualify, where ``r_i`` is the i-th positive root of the spherical Bessel
function ``j1(s) = sin(s)/s^2 - cos(s)/s``.  The disc analogue is the gradient
of ``J0(k |y|)`` with ``J1(k R) = 0``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import InvalidArgument

# |y| / r below which the radial coefficient is evaluated by its Taylor series
SERIES_CUTOFF = 1e-3


def j1(s):
    """Spherical Bessel function of the first kind, order one."""
    s = np.asarray(s, dtype=float)
    return np.sin(s) / s**2 - np.cos(s) / s


def _j1_prime(s):
    # j1' = j0 - 2 j1 / s
    return np.sin(s) / s - 2.0 * j1(s) / s


def spherical_bessel_roots(n: int, tol: float = 1e-12) -> np.ndarray:
    """First ``n`` positive roots of ``j1``.

    Root ``i`` lies in ``(i*pi, (i+1/2)*pi)`` where ``tan r = r`` has exactly one
    solution.  Each root is bisected on ``g(r) = sin r - r cos r`` (same zeros,
    no 1/r^2 scaling) and then polished with Newton steps on ``j1``.
    """
    if n < 1:
        raise InvalidArgument("need n >= 1")
    g = lambda r: math.sin(r) - r * math.cos(r)
    roots = np.empty(n)
    for i in range(1, n + 1):
        lo, hi = i * math.pi, (i + 0.5) * math.pi
        glo = g(lo)
        # bisection to a tight bracket; g changes sign exactly once on (lo, hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            gm = g(mid)
            if gm == 0.0:
                lo = hi = mid
                break
            if (gm > 0) == (glo > 0):
                lo, glo = mid, gm
            else:
                hi = mid
            if hi - lo < 1e-14 * hi:
                break
        r = 0.5 * (lo + hi)
        for _ in range(3):
            step = float(j1(r) / _j1_prime(r))
            r -= step
            if abs(step) < 1e-16 * r:
                break
        if abs(float(j1(r))) > tol:
            raise ArithmeticError(f"root {i} not converged: j1 = {float(j1(r)):.3e}")
        roots[i - 1] = r
    return roots


def _g_and_dg_over_s(s, cutoff):
    """``g(s) = j1(s)/s`` and ``g'(s)/s`` with a Taylor branch for ``s < cutoff``."""
    s = np.asarray(s, dtype=float)
    g = np.empty_like(s)
    dgs = np.empty_like(s)
    small = s < cutoff
    ss = s[small]
    g[small] = 1 / 3 - ss**2 / 30 + ss**4 / 840
    dgs[small] = -1 / 15 + ss**2 / 210 - ss**4 / 7560
    sl = s[~small]
    g[~small] = special.spherical_jn(1, sl) / sl
    # (j1(s)/s)' = -j2(s)/s, free of the cancellation in the elementary form
    dgs[~small] = -special.spherical_jn(2, sl) / sl**2
    return g, dgs


@dataclass(frozen=True)
class AnalyticBallMode:
    """Radial pressure-wave mode of the ball ``B_r(0)`` in 3D."""

    index: int
    radius: float
    root: float
    mu: float
    q: float
    lambda1: float
    lambda2: float

    @property
    def wavenumber(self) -> float:
        return self.root / self.radius

    def _coeff(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        rho = np.linalg.norm(y, axis=1)
        k = self.wavenumber
        g, dgs = _g_and_dg_over_s(k * rho, SERIES_CUTOFF * self.root)
        # psi = f(rho) y with f = k g(k rho); f'(rho)/rho = k^3 g'(s)/s
        return y, k * g, k**3 * dgs

    def displacement(self, y) -> np.ndarray:
        """psi_i at points ``y`` of shape (n, 3)."""
        y, f, _ = self._coeff(y)
        return f[:, None] * y

    __call__ = displacement

    def gradient(self, y) -> np.ndarray:
        """Displacement gradient (n, 3, 3); symmetric for radial fields."""
        y, f, fp_over_rho = self._coeff(y)
        eye = np.eye(3)[None]
        return f[:, None, None] * eye + fp_over_rho[:, None, None] * np.einsum("ni,nj->nij", y, y)

    def stress(self, y) -> np.ndarray:
        grad = self.gradient(y)
        eps = 0.5 * (grad + np.swapaxes(grad, 1, 2))
        tr = np.trace(eps, axis1=1, axis2=2)
        return 2 * self.lambda1 * eps + self.lambda2 * tr[:, None, None] * np.eye(3)[None]


def ball_pressure_wave(i: int, r: float, params) -> AnalyticBallMode:
    """Mode ``i >= 1`` on the ball of radius ``r``.

    ``mu_i = (2 lambda1 + lambda2) r_i^2 / r^2``.  The traction on the sphere is
    ``q_i n`` with ``q_i = (2 lambda1 + lambda2) sin(r_i) / r``, which is
    ``(2 lambda1 + lambda2) sin(r_i)`` on the unit ball.
    """
    if i < 1 or r <= 0:
        raise InvalidArgument("need i >= 1 and r > 0")
    ri = float(spherical_bessel_roots(i)[-1])
    c = 2 * params.lambda1 + params.lambda2
    return AnalyticBallMode(index=i, radius=float(r), root=ri, mu=c * ri**2 / r**2,
                            q=c * math.sin(ri) / r, lambda1=params.lambda1,
                            lambda2=params.lambda2)


def sphere_rule(n_theta: int = 64, n_phi: int = 128):
    """Unit-sphere points (m, 3) and weights summing to 4 pi."""
    x, w = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    ct, ph = np.meshgrid(x, phi, indexing="ij")
    st = np.sqrt(1 - ct**2)
    pts = np.column_stack([(st * np.cos(ph)).ravel(), (st * np.sin(ph)).ravel(), ct.ravel()])
    wts = np.repeat(w, n_phi) * (2 * np.pi / n_phi)
    return pts, wts


def ball_badness(mode: AnalyticBallMode, n_theta: int = 64, n_phi: int = 128):
    """Return ``(q_fit, badness)`` of the mode's traction on the sphere."""
    n, w = sphere_rule(n_theta, n_phi)
    y = mode.radius * n
    t = np.einsum("nij,nj->ni", mode.stress(y), n)
    w = w * mode.radius**2
    q = float(np.sum(w * np.einsum("ni,ni->n", t, n)) / np.sum(w))
    res = t - q * n
    tn = math.sqrt(float(np.sum(w * np.sum(t * t, axis=1))))
    return q, math.sqrt(float(np.sum(w * np.sum(res * res, axis=1)))) / tn


@dataclass(frozen=True)
class DiscPressureWave:
    """Radial Dirichlet-Lame mode of the disc ``B_R(c)`` in 2D, L2-normalised.

    ``psi = C grad J0(k |y - c|)`` with ``J1(k R) = 0``; the traction on the
    circle is ``q n`` with ``q = -(2 lambda1 + lambda2) C k^2 J0(k R)``.
    """

    index: int
    radius: float
    center: tuple[float, float]
    wavenumber: float
    mu: float
    q: float
    scale: float

    def displacement(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float)) - np.asarray(self.center)
        rho = np.linalg.norm(y, axis=1)
        k = self.wavenumber
        s = k * rho
        # J1(s)/s, with its series at the origin
        ratio = np.where(s < 1e-6, 0.5 - s**2 / 16, special.j1(s) / np.where(s < 1e-6, 1.0, s))
        return (-self.scale * k * k * ratio)[:, None] * y

    __call__ = displacement


def disc_pressure_wave(i: int, radius: float, params, center=(0.0, 0.0)) -> DiscPressureWave:
    if i < 1 or radius <= 0:
        raise InvalidArgument("need i >= 1 and radius > 0")
    x = float(special.jn_zeros(1, i)[-1])
    k = x / radius
    j0 = float(special.j0(x))
    scale = 1.0 / (k * radius * abs(j0) * math.sqrt(math.pi))
    c = 2 * params.lambda1 + params.lambda2
    return DiscPressureWave(index=i, radius=float(radius), center=tuple(center), wavenumber=k,
                            mu=c * k * k, q=-c * scale * k * k * j0, scale=scale)


def write_mode_samples_csv(mode, points, path) -> None:
    """Sample a mode closure at ``points`` and write ``x,y,z,psi_x,psi_y,psi_z``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vals = mode.displacement(pts)
    pad = lambda a: np.column_stack([a, np.zeros((len(a), 3 - a.shape[1]))])
    pts3, vals3 = pad(pts), pad(vals)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "psi_x", "psi_y", "psi_z"])
        for p, v in zip(pts3, vals3):
            w.writerow([f"{x:.17g}" for x in (*p, *v)])

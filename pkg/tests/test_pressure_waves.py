import csv
import math

import numpy as np
import pytest
from scipy import integrate, special

from fsiwave import ElasticParams, InvalidArgument
from fsiwave.pressure_waves import (ball_badness, ball_pressure_wave, disc_pressure_wave, j1,
                                    spherical_bessel_roots, write_mode_samples_csv)


def test_first_roots():
    r = spherical_bessel_roots(2)
    assert r == pytest.approx([4.493409, 7.725252], abs=1e-6)
    assert np.all(np.abs(np.tan(r) - r) <= 1e-10)


def test_roots_bracketing_and_sign_change():
    r = spherical_bessel_roots(6)
    assert math.pi < r[0] < 1.5 * math.pi
    for i, x in enumerate(r, start=1):
        assert i * math.pi < x < (i + 0.5) * math.pi
        assert j1(x - 1e-6) * j1(x + 1e-6) < 0
    # independent check against scipy's spherical Bessel function
    assert np.all(np.abs(special.spherical_jn(1, r)) < 1e-14)


@pytest.mark.parametrize("n", [0, -2])
def test_roots_reject_bad_count(n):
    with pytest.raises(InvalidArgument):
        spherical_bessel_roots(n)


def test_ball_mode_constants():
    mode = ball_pressure_wave(1, 1.0, ElasticParams())
    r1 = 4.493409457909064
    assert mode.mu == pytest.approx(3 * r1**2, abs=1e-10)
    assert mode.mu == pytest.approx(60.572, abs=1e-3)
    # sin(r1) = -r1 / sqrt(1 + r1^2) in the third quadrant
    assert mode.q == pytest.approx(-3 * r1 / math.sqrt(1 + r1**2), abs=1e-12)
    assert mode.q == pytest.approx(-2.9284, abs=1e-4)


def test_ball_mode_vanishes_on_sphere(rng):
    mode = ball_pressure_wave(2, 1.5, ElasticParams(0.7, 2.0))
    n = rng.standard_normal((50, 3))
    n /= np.linalg.norm(n, axis=1)[:, None]
    assert np.abs(mode(1.5 * n)).max() < 1e-14


def _div_stress_fd(mode, y, h=1e-3):
    """Fourth-order central differences of the closure's stress."""
    out = np.zeros_like(y)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        d = (-mode.stress(y + 2 * e) + 8 * mode.stress(y + e) - 8 * mode.stress(y - e)
             + mode.stress(y - 2 * e)) / (12 * h)
        out += d[:, :, j]
    return out


def test_ball_mode_pointwise_eigen_residual(rng):
    mode = ball_pressure_wave(1, 1.0, ElasticParams())
    y = rng.standard_normal((100, 3))
    y *= (0.9 * rng.random(100) ** (1 / 3) / np.linalg.norm(y, axis=1))[:, None]
    psi = mode(y)
    res = -_div_stress_fd(mode, y) - mode.mu * psi
    assert np.abs(res).max() <= 1e-8 * np.abs(psi).max() * mode.mu


def test_ball_mode_gradient_matches_differences(rng):
    mode = ball_pressure_wave(1, 1.0, ElasticParams())
    y = rng.uniform(-0.5, 0.5, (20, 3))
    h = 1e-6
    fd = np.stack([(mode(y + h * e) - mode(y - h * e)) / (2 * h) for e in np.eye(3)], axis=2)
    assert np.abs(fd - mode.gradient(y)).max() < 1e-7


def test_ball_mode_series_branch_matches_bessel_form():
    # psi = C j1(k rho) y / rho; d psi_x / dx along the x-axis is C k j1'(k rho)
    mode = ball_pressure_wave(1, 1.0, ElasticParams())
    k = mode.wavenumber
    far = 0.6
    C = mode(np.array([[far, 0, 0]]))[0, 0] / special.spherical_jn(1, k * far)
    for rho in (0.5e-3 / k, 0.999e-3 * mode.root / k, 1.001e-3 * mode.root / k, 0.3):
        y = np.array([[rho, 0.0, 0.0]])
        assert mode(y)[0, 0] == pytest.approx(C * special.spherical_jn(1, k * rho), rel=1e-12)
        dref = C * k * special.spherical_jn(1, k * rho, derivative=True)
        assert mode.gradient(y)[0, 0, 0] == pytest.approx(dref, rel=1e-12)
    assert np.all(np.isfinite(mode.gradient(np.zeros((1, 3)))))


def test_ball_mode_traction_is_normal():
    mode = ball_pressure_wave(1, 1.0, ElasticParams())
    q, bad = ball_badness(mode)
    assert bad <= 1e-8
    assert q == pytest.approx(mode.q, rel=1e-10)


def test_ball_q_scales_inversely_with_radius():
    p = ElasticParams()
    q1, q2 = ball_pressure_wave(1, 1.0, p).q, ball_pressure_wave(1, 2.0, p).q
    assert q2 == pytest.approx(q1 / 2, rel=1e-12)
    assert ball_badness(ball_pressure_wave(1, 2.0, p))[0] == pytest.approx(q2, rel=1e-10)


def test_disc_mode_constants_and_normalisation():
    p = ElasticParams()
    mode = disc_pressure_wave(1, 1.0, p)
    assert mode.mu == pytest.approx(3 * 3.831705970207512**2, rel=1e-12)
    assert mode.mu == pytest.approx(44.046, abs=1e-3)
    # L2 norm over the disc in polar coordinates
    f = lambda r: np.sum(mode(np.array([[r, 0.0]])) ** 2) * 2 * math.pi * r
    assert integrate.quad(f, 0, 1, limit=200)[0] == pytest.approx(1.0, rel=1e-10)
    assert np.abs(mode(np.array([[0.0, 1.0], [math.sqrt(0.5), -math.sqrt(0.5)]]))).max() < 1e-14


def test_disc_mode_traction_is_q():
    p = ElasticParams(0.5, 2.0)
    mode = disc_pressure_wave(1, 1.0, p)
    h = 1e-5
    # radial field psi = g(r) e_r: sigma_rr = (2 l1 + l2) g' + l2 g / r, g(1) = 0
    g = lambda r: mode(np.array([[r, 0.0]]))[0, 0]
    gp = (g(1 + h) - g(1 - h)) / (2 * h)
    assert mode.q == pytest.approx((2 * p.lambda1 + p.lambda2) * gp, rel=1e-8)


@pytest.mark.parametrize("make", [ball_pressure_wave, disc_pressure_wave])
def test_bad_arguments(make):
    with pytest.raises(InvalidArgument):
        make(0, 1.0, ElasticParams())
    with pytest.raises(InvalidArgument):
        make(1, -1.0, ElasticParams())


def test_samples_csv(tmp_path):
    mode = ball_pressure_wave(1, 1.0, ElasticParams())
    pts = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [1.0, 0.0, 0.0]])
    write_mode_samples_csv(mode, pts, tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["x", "y", "z", "psi_x", "psi_y", "psi_z"]
    assert float(rows[2][3]) == mode(pts[1:2])[0, 0]

import math

import numpy as np
import pytest

from fsiwave import InsufficientWindow, InvalidArgument, decompose, oracle_wave_1d, shift_difference
from fsiwave.asymptotics import (DisplacementSeries, ModalSeries, PressureWaveFit, fit_pressure_wave,
                                 modal_coeffs, phi_n0, write_decomposition)
from fsiwave.fem import FacetSet, Field, mass_matrix

A, C = 1e-2, 3e-3


@pytest.fixture(scope="module")
def omega(disc_wave):
    return math.sqrt(disc_wave.mu)


@pytest.fixture(scope="module")
def exact(disc_wave, disc_phi, omega):
    """xi(t) = A cos(w t) psi + C phi_N sampled 40 times per period over 8 periods."""
    period = 2 * math.pi / omega
    t = np.arange(0, 8 * period, period / 40)
    psi = disc_wave.psi.coeffs
    xi = A * np.cos(omega * t)[:, None] * psi + C * disc_phi.coeffs
    xd = -A * omega * np.sin(omega * t)[:, None] * psi
    return DisplacementSeries(disc_wave.psi.space, t, xi, xd)


@pytest.fixture(scope="module")
def rigid_field(disc_wave):
    y = disc_wave.psi.space.coords
    return np.concatenate([-0.3 * y[:, 1] + 0.1, 0.3 * y[:, 0] - 0.2])


# --- modal coefficients ------------------------------------------------------------

def test_modal_coeffs_of_basis_vectors(disc_basis):
    fields = [p.psi for p in disc_basis[:4]]
    ms = modal_coeffs(fields, disc_basis[:4])
    assert np.allclose(ms.coeffs, np.eye(4), atol=1e-10)
    assert np.array_equal(ms.indices, [p.index for p in disc_basis[:4]])


def test_modal_coeffs_bessel_inequality(disc_basis, rng):
    space = disc_basis[0].psi.space
    x = rng.standard_normal(space.ndof)
    x[FacetSet(space).dof_indices()] = 0.0
    c = modal_coeffs(x[None, :], disc_basis).coeffs[0]
    assert c @ c <= x @ mass_matrix(space) @ x * (1 + 1e-12)
    # the span of the basis is reproduced exactly
    y = sum(ck * p.psi.coeffs for ck, p in zip(c, disc_basis))
    assert np.allclose(modal_coeffs(y[None, :], disc_basis).coeffs[0], c, atol=1e-12)


def test_modal_coeffs_rejects_nan(disc_basis):
    bad = np.full(disc_basis[0].psi.space.ndof, np.nan)
    with pytest.raises(InvalidArgument):
        modal_coeffs(bad[None, :], disc_basis)


# --- fitting ------------------------------------------------------------------------

def _series(mu, a, b, o, t, noise=None):
    w = math.sqrt(mu)
    y = a * np.sin(w * t) + b * np.cos(w * t) + o
    if noise is not None:
        y = y + noise
    return ModalSeries(np.array([3]), t, y[:, None])


def test_fit_exact():
    t = np.linspace(0, 5, 501)
    fit = fit_pressure_wave(_series(40.0, 0.3, -0.2, 0.05, t), [(3, 40.0)])
    assert np.allclose(fit.amplitudes, [[0.3, -0.2]], atol=1e-12)
    assert fit.offsets[0] == pytest.approx(0.05, abs=1e-12)
    assert fit.residual < 1e-12


def test_fit_zero_and_no_modes():
    t = np.linspace(0, 5, 501)
    fit = fit_pressure_wave(_series(40.0, 0, 0, 0, t), [(3, 40.0)])
    assert not np.any(fit.amplitudes)
    empty = fit_pressure_wave(_series(40.0, 1, 0, 0, t), [])
    assert empty.amplitudes.shape == (0, 2)


def test_fit_noise_is_averaged(rng):
    t = np.linspace(0, 20, 4001)
    fit = fit_pressure_wave(_series(40.0, 0.3, -0.2, 0.0, t, 1e-3 * rng.standard_normal(len(t))), [(3, 40.0)])
    # least squares reduces white noise by about sqrt(n / 2)
    assert np.allclose(fit.amplitudes, [[0.3, -0.2]], atol=1e-4)


def test_fit_window_and_phase_reference():
    t = np.linspace(0, 5, 501)
    fit = fit_pressure_wave(_series(40.0, 0.3, -0.2, 0.0, t), [(3, 40.0)], window=(2.0, 5.0))
    assert fit.t_ref == 2.0
    assert np.allclose(fit.modal_values(t)[:, 0], 0.3 * np.sin(math.sqrt(40) * t) - 0.2 * np.cos(math.sqrt(40) * t),
                       atol=1e-12)
    at0 = fit.referenced_to(0.0)
    assert np.allclose(at0.amplitudes, [[0.3, -0.2]], atol=1e-12)
    assert np.allclose(at0.modal_values(t, 1), fit.modal_values(t, 1), atol=1e-12)
    assert np.allclose(at0.modal_values(t, 2), -40.0 * fit.modal_values(t), atol=1e-10)
    with pytest.raises(InvalidArgument):
        fit.modal_values(t, 3)


def test_fit_insufficient_window():
    t = np.linspace(0, 5, 501)
    with pytest.raises(InsufficientWindow):
        fit_pressure_wave(_series(40.0, 1, 0, 0, t), [(3, 40.0)], window=(1.0, 1.01))
    coarse = np.linspace(0, 5, 11)
    with pytest.raises(InsufficientWindow):
        fit_pressure_wave(_series(40.0, 1, 0, 0, coarse), [(3, 40.0)])


# --- static offset ------------------------------------------------------------------------

def test_phi_n0(disc_phi, disc_wave, elastic):
    coef, field = phi_n0(2.5 * disc_phi, disc_phi, elastic)
    assert coef == pytest.approx(2.5, rel=1e-12)
    assert np.allclose(field.coeffs, 2.5 * disc_phi.coeffs)
    # Dirichlet modes are energy-orthogonal to phi_N (its traction is the constant normal)
    mixed = Field(disc_phi.space, disc_phi.coeffs + 0.7 * disc_wave.psi.coeffs)
    coef2, _ = phi_n0(mixed, disc_phi, elastic)
    assert coef2 == pytest.approx(1.0, abs=1e-10)
    coef0, _ = phi_n0(0.0 * disc_phi, disc_phi, elastic)
    assert coef0 == 0.0


# --- shifted differences ---------------------------------------------------------------------

def test_shift_difference_zero_shift(exact):
    sd = shift_difference(exact, 0.0)
    assert not sd.xi_tilde.any()
    assert not sd.distances.any()


def test_shift_difference_constant_series(disc_phi):
    t = np.arange(50) * 0.1
    s = DisplacementSeries(disc_phi.space, t, np.tile(disc_phi.coeffs, (50, 1)))
    sd = shift_difference(s, 0.7)
    assert np.abs(sd.xi_tilde).max() == 0.0
    assert len(sd.times) == 43


def test_shift_difference_of_a_pressure_wave(exact, disc_basis, disc_wave, omega):
    bad = [(disc_wave.index, disc_wave.mu)]
    sd = shift_difference(exact, exact.times[7], disc_basis, bad)
    assert sd.norms.max() > 1e-3
    assert sd.distances.max() < 1e-10 * sd.norms.max()


def test_shift_difference_arguments(exact):
    with pytest.raises(InvalidArgument):
        shift_difference(exact, -1.0)
    with pytest.raises(InvalidArgument):
        shift_difference(exact, 0.5 * exact.dt)
    with pytest.raises(InvalidArgument):
        shift_difference(exact, exact.times[-1] + exact.dt)


# --- decomposition -------------------------------------------------------------------------

def test_decompose_exact_trajectory(exact, disc_basis, disc_phi, disc_wave, elastic):
    dec = decompose(exact, disc_basis, disc_phi, elastic)
    assert [k for k, _ in dec.bad_modes] == [disc_wave.index]
    assert dec.phi_N0_coeff == pytest.approx(C, abs=1e-6)
    assert math.hypot(*dec.eta_star.amplitudes[0]) == pytest.approx(A, abs=1e-4)
    assert max(np.abs(r.skew).max() + np.abs(r.shift).max() for r in dec.rigid_series) < 1e-12
    assert dec.residual_series.max() <= 1e-6 * (A + C)
    assert np.nanmax(dec.xi_dot_gap) < 1e-10
    report = dec.to_report("r.csv")
    a0, b0 = report["eta_star"][str(disc_wave.index)]
    assert report["eta_star_t_ref"] == 0.0
    assert a0 == pytest.approx(0.0, abs=1e-10) and b0 == pytest.approx(A, rel=1e-8)


def test_decompose_sees_through_rigid_motion(exact, rigid_field, disc_basis, disc_phi, elastic):
    moved = DisplacementSeries(exact.space, exact.times, exact.xi + rigid_field, exact.xi_dot)
    d0 = decompose(exact, disc_basis, disc_phi, elastic)
    d1 = decompose(moved, disc_basis, disc_phi, elastic)
    assert np.abs(d1.residual_series - d0.residual_series).max() < 1e-12
    r = d1.rigid_series[5]
    assert np.allclose(r.to_field(exact.space).coeffs, rigid_field, atol=1e-10)


def test_decompose_zero(exact, disc_basis, disc_phi, elastic):
    zero = DisplacementSeries(exact.space, exact.times, np.zeros_like(exact.xi))
    dec = decompose(zero, disc_basis, disc_phi, elastic)
    assert dec.phi_N0_coeff == 0.0
    assert not np.any(dec.eta_star.amplitudes)
    assert not dec.residual_series.any()
    assert dec.tail_is_nonincreasing()


def test_decompose_window_too_short(exact, disc_basis, disc_phi, elastic):
    short = DisplacementSeries(exact.space, exact.times[:60], exact.xi[:60])
    with pytest.raises(InsufficientWindow):
        decompose(short, disc_basis, disc_phi, elastic)


def test_tail_judged_by_envelope(exact, disc_basis, disc_phi, elastic):
    dec = decompose(exact, disc_basis, disc_phi, elastic, bad_modes=[])
    t = dec.times
    w = 2 * math.pi / dec.slowest_period
    dec.residual_series = np.exp(-0.2 * t) * np.abs(np.cos(w * t))
    assert dec.tail_is_nonincreasing()
    dec.residual_series = np.exp(0.05 * t) * np.abs(np.cos(w * t))
    assert not dec.tail_is_nonincreasing()


def test_write_decomposition(tmp_path, exact, disc_basis, disc_phi, elastic):
    dec = decompose(exact, disc_basis, disc_phi, elastic)
    path = write_decomposition(dec, tmp_path)
    import json
    rep = json.load(open(path))
    assert rep["residual_csv_path"] == "decomposition_residual.csv"
    rows = (tmp_path / "decomposition_residual.csv").read_text().splitlines()
    assert rows[0] == "t,residual_H1,xi_dot_gap_L2,xi_ddot_gap_dual"
    assert len(rows) == len(exact.times) + 1


# --- 1D oracle --------------------------------------------------------------------------------

def test_oracle_wave_1d_values():
    eta, q = oracle_wave_1d(0.0, 0.5)
    assert eta == pytest.approx(1.0) and q == pytest.approx(-1.0)
    eta, _ = oracle_wave_1d(-0.5, np.linspace(-1, 1, 7))
    assert np.abs(eta).max() < 1e-15
    eta, _ = oracle_wave_1d(0.3, np.array([-1.0, 1.0]))
    assert np.abs(eta).max() < 1e-15
    with pytest.raises(InvalidArgument):
        oracle_wave_1d(0.0, 1.5)


def test_oracle_wave_1d_solves_the_wave_equation():
    t, x, h = 0.37, 0.21, 1e-4
    f = lambda s, y: oracle_wave_1d(s, y)[0]
    tt = (f(t + h, x) - 2 * f(t, x) + f(t - h, x)) / h**2
    xx = (f(t, x + h) - 2 * f(t, x) + f(t, x - h)) / h**2
    assert tt == pytest.approx(xx, rel=1e-5)

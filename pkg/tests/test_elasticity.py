import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsiwave import (DegenerateInput, DomainSpec, ElasticParams, Field, InvalidArgument, badness_score,
                     build_mesh, classify_domain, dirichlet_eigs, korn_gap, project_rigid,
                     solve_neumann_phi)
from fsiwave.elasticity import (RigidMotion, elastic_energy_density, neumann_phi_closed_form,
                                solid_space, strain, stress_elastic, write_eigen_report)
from fsiwave.fem import mass_matrix, strain_matrix
from fsiwave.pressure_waves import ball_pressure_wave


@pytest.fixture(scope="module")
def S(disc_mesh):
    return solid_space(disc_mesh)


def _affine(S, A, b=(0.0, 0.0)):
    A, b = np.asarray(A, float), np.asarray(b, float)
    return S.interpolate(lambda y: y @ A.T + b)


# --- pointwise operators ---------------------------------------------------------

def test_strain_of_rigid_motion_vanishes(S):
    f = _affine(S, [[0, -0.7], [0.7, 0]], [1.0, 2.0])
    assert np.abs(strain(f)).max() < 1e-13


def test_strain_and_stress_of_identity(S):
    f = _affine(S, np.eye(2))
    assert np.allclose(strain(f), np.eye(2), atol=1e-13)
    assert np.allclose(stress_elastic(f, ElasticParams()), 4 * np.eye(2), atol=1e-12)


def test_shear_field(S):
    f = _affine(S, [[0, 1], [0, 0]])
    assert np.allclose(strain(f), [[0, 0.5], [0.5, 0]], atol=1e-13)
    assert np.allclose(stress_elastic(f, ElasticParams()), [[0, 1], [1, 0]], atol=1e-13)


def test_stress_is_linear(S, rng):
    p = ElasticParams(0.3, 1.7)
    a, b = Field(S, rng.standard_normal(S.ndof)), Field(S, rng.standard_normal(S.ndof))
    lhs = stress_elastic(a * 2.0 + b * 0.5, p)
    assert np.allclose(lhs, 2 * stress_elastic(a, p) + 0.5 * stress_elastic(b, p), atol=1e-10)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_params_validate(bad):
    with pytest.raises(InvalidArgument):
        ElasticParams(bad, 1.0)
    with pytest.raises(InvalidArgument):
        ElasticParams(1.0, bad)


# --- rigid projection ----------------------------------------------------------

def test_projection_of_constant(S):
    r = project_rigid(_affine(S, np.zeros((2, 2)), [0.3, -2.0]))
    assert np.allclose(r.skew, 0, atol=1e-14)
    assert np.allclose(r.shift, [0.3, -2.0], atol=1e-14)


def test_projection_recovers_skew_part(S):
    r0 = project_rigid(S.zeros())
    A = np.array([[0, 0.4], [-0.4, 0]])
    f = S.interpolate(lambda y: (y - r0.centroid) @ A.T)
    r = project_rigid(f)
    assert np.allclose(r.skew, A, atol=1e-14)
    assert np.allclose(r.shift, 0, atol=1e-14)


def test_projection_of_position(S):
    f = _affine(S, np.eye(2))
    r = project_rigid(f)
    assert np.allclose(r.skew, 0, atol=1e-14)
    assert np.allclose(r.shift, r.centroid, atol=1e-14)
    assert np.abs(r.centroid).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_projection_is_idempotent_and_strain_free(seed):
    S = _space()
    f = Field(S, np.random.default_rng(seed).standard_normal(S.ndof))
    rf = project_rigid(f).to_field(S)
    again = project_rigid(rf)
    assert np.abs(again.to_field(S).coeffs - rf.coeffs).max() <= 1e-12 * max(1.0, np.abs(rf.coeffs).max())
    assert np.abs(strain(rf)).max() <= 1e-12 * max(1.0, np.abs(rf.coeffs).max())


def test_rigid_motion_requires_skew():
    with pytest.raises(InvalidArgument):
        RigidMotion(np.eye(2), np.zeros(2), np.zeros(2))


# --- Korn ratio ------------------------------------------------------------------

def test_korn_ratio_family_is_bounded(S):
    fields = [_affine(S, np.eye(2)), _affine(S, [[0, 1], [0, 0]]),
              S.interpolate(lambda y: np.column_stack([y[:, 0] ** 2, 0 * y[:, 0]]))]
    ratios = [korn_gap(f)[0] for f in fields]
    assert all(0 < r < 10 for r in ratios)
    # f = y: |y - c|_{H1}^2 = |Omega|(2 + second moment/|Omega|) against |eps|^2 = 2|Omega|
    assert ratios[0] > 1.0


def test_korn_rejects_rigid(S):
    with pytest.raises(DegenerateInput):
        korn_gap(_affine(S, [[0, 1], [-1, 0]], [3.0, 0.0]))


# --- energy bounds ---------------------------------------------------------------

def test_energy_two_sided_bound(S, rng):
    p = ElasticParams(0.8, 1.3)
    d = 2
    w = S.geometry().wdet
    for _ in range(50):
        f = Field(S, rng.standard_normal(S.ndof))
        eps = strain(f)
        e2 = float(np.einsum("cq,cqij,cqij->", w, eps, eps))
        energy = elastic_energy_density(f, p)
        assert 2 * p.lambda1 * e2 * (1 - 1e-12) <= energy <= (2 * p.lambda1 + d * p.lambda2) * e2 * (1 + 1e-12)


def test_stiffness_matches_energy_density(S, rng):
    p = ElasticParams(0.8, 1.3)
    K = strain_matrix(S, p.lambda1, p.lambda2)
    f = Field(S, rng.standard_normal(S.ndof))
    assert f.coeffs @ (K @ f.coeffs) == pytest.approx(elastic_energy_density(f, p), rel=1e-12)


# --- Neumann problem ----------------------------------------------------------------

@pytest.mark.parametrize("p", [ElasticParams(), ElasticParams(0.5, 2.0)])
def test_neumann_phi_is_scaled_position(disc_mesh, p):
    phi, defect = solve_neumann_phi(disc_mesh, p)
    exact = neumann_phi_closed_form(p, 2)(phi.space.coords)
    assert np.abs(phi.nodal - exact).max() < 1e-10
    assert defect < 1e-10
    r = project_rigid(phi)
    assert max(np.abs(r.skew).max(), np.abs(r.shift).max()) < 1e-10


def test_neumann_phi_closed_form_3d():
    f = neumann_phi_closed_form(ElasticParams(), 3)
    y = np.array([[1.0, 2.0, -0.5]])
    assert np.allclose(f(y), y / 5)


# --- eigenpairs --------------------------------------------------------------------

def test_eigenpairs_orthonormal_and_rayleigh(disc_basis, elastic):
    S = disc_basis[0].psi.space
    M = mass_matrix(S)
    K = strain_matrix(S, elastic.lambda1, elastic.lambda2)
    Psi = np.column_stack([p.psi.coeffs for p in disc_basis])
    assert np.abs(Psi.T @ M @ Psi - np.eye(len(disc_basis))).max() < 1e-8
    for p in disc_basis:
        rq = p.psi.coeffs @ K @ p.psi.coeffs / (p.psi.coeffs @ M @ p.psi.coeffs)
        assert rq == pytest.approx(p.mu, rel=1e-8)
    mus = [p.mu for p in disc_basis]
    assert all(m > 0 for m in mus) and all(np.diff(mus) >= -1e-9 * max(mus))
    assert [p.index for p in disc_basis] == list(range(1, len(disc_basis) + 1))


def test_eigenmodes_vanish_on_interface(disc_basis):
    from fsiwave.fem import FacetSet
    fs = FacetSet(disc_basis[0].psi.space)
    for p in disc_basis:
        assert np.abs(p.psi.coeffs[fs.dof_indices()]).max() == 0.0


def test_badness_scale_invariant_and_recomputable(disc_wave, disc_mesh):
    from dataclasses import replace
    assert badness_score(disc_wave, disc_mesh) == pytest.approx(disc_wave.badness, rel=1e-12)
    scaled = replace(disc_wave, psi=disc_wave.psi * -3.0, neumann_trace=disc_wave.neumann_trace * -3.0)
    assert badness_score(scaled) == pytest.approx(disc_wave.badness, rel=1e-10)
    assert 0.0 <= disc_wave.badness <= 1.0


def test_badness_accepts_analytic_ball_mode():
    assert badness_score(ball_pressure_wave(1, 1.0, ElasticParams())) < 1e-8


def test_coarse_disc_radial_mode(disc_wave):
    # 3 j_{1,1}^2, polygonal disc at h = 0.2
    assert disc_wave.mu == pytest.approx(44.046, rel=0.03)
    assert disc_wave.badness < 0.1
    assert disc_wave.q_fit == pytest.approx(6.4854, rel=0.03)


def test_fine_disc_and_square_classification():
    p = ElasticParams()
    disc = build_mesh(DomainSpec.disc_in_square(3.0, 1.0, 0.05))
    pairs = dirichlet_eigs(disc, p, 20)
    cls = classify_domain(disc, p, 20, 0.1, pairs=pairs)
    assert cls.label == "Bad"
    assert any(abs(mu - 44.046) / 44.046 < 0.02 for _, mu, _, _ in cls.bad_modes)
    square = build_mesh(DomainSpec.square_in_square(2.0, 1.0, 0.05))
    pairs = dirichlet_eigs(square, p, 20)
    assert min(q.badness for q in pairs) > 0.2
    assert classify_domain(square, p, 20, 0.1, pairs=pairs).label == "Good"


def test_classify_rejects_bad_arguments(disc_mesh, elastic):
    with pytest.raises(InvalidArgument):
        classify_domain(disc_mesh, elastic, 0)
    with pytest.raises(InvalidArgument):
        classify_domain(disc_mesh, elastic, 5, threshold=1.5)
    with pytest.raises(InvalidArgument):
        dirichlet_eigs(disc_mesh, elastic, 0)


def test_sparse_path_agrees_with_dense(disc_mesh, elastic, disc_basis, monkeypatch):
    import fsiwave.elasticity as el
    monkeypatch.setattr(el, "DENSE_LIMIT", 10)
    sparse = el.dirichlet_eigs(disc_mesh, elastic, 6)
    assert [p.mu for p in sparse] == pytest.approx([p.mu for p in disc_basis[:6]], rel=1e-10)


def test_eigen_report(tmp_path, disc_basis):
    write_eigen_report(disc_basis[:3], tmp_path / "e.csv")
    rows = list(csv.reader(open(tmp_path / "e.csv")))
    assert rows[0] == ["k", "mu", "q_fit", "badness"]
    assert float(rows[1][1]) == disc_basis[0].mu


_CACHE = {}


def _space():
    if "S" not in _CACHE:
        _CACHE["S"] = solid_space(build_mesh(DomainSpec.disc_in_square(3.0, 1.0, 0.3)))
    return _CACHE["S"]

"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line (output capture is
bypassed for it) and then asserts the same conditions.
"""
import math
import time

import numpy as np
import pytest

from fsiwave import (DomainSpec, ElasticParams, Field, FluidParams, ScenarioConfig, Seed, State, assemble_coupled,
                     build_mesh, check_compatibility, classify_domain, construct_compatible, decompose,
                     dirichlet_eigs, project_rigid, run, run_wave_1d, solve_neumann_phi)
from fsiwave.asymptotics import DisplacementSeries
from fsiwave.elasticity import elastic_energy_density, solid_space, strain
from fsiwave.fem import norm
from fsiwave.fluid import trilinear
from fsiwave.mesh import INTERFACE, OUTER
from fsiwave.pressure_waves import ball_badness, ball_pressure_wave, spherical_bessel_roots
from fsiwave.solver import energy_residual

pytestmark = pytest.mark.slow


@pytest.fixture
def report(pytestconfig):
    """Collect named checks, print a single verdict line, then assert each check."""
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")

    def _report(number, checks, started):
        ok = all(passed for _, passed, _ in checks)
        detail = "; ".join(f"{name}={value}" for name, _, value in checks)
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({time.time() - started:.1f} s) {detail}"
        with capman.global_and_fixture_disabled():
            print("\n" + line)
        failed = [name for name, passed, _ in checks if not passed]
        assert not failed, f"criterion {number} failed: {failed}"
    return _report


def _fmt(x):
    return f"{x:.3g}"


def test_criterion_1_spherical_bessel_roots(report):
    t = time.time()
    r = spherical_bessel_roots(2)
    err = np.abs(r - [4.493409, 7.725252]).max()
    eq = np.abs(np.tan(r) - r).max()
    report(1, [("root_err", err <= 1e-6, _fmt(err)), ("tan_r_minus_r", eq <= 1e-10, _fmt(eq)),
               ("runtime", time.time() - t < 1.0, _fmt(time.time() - t))], t)


def test_criterion_2_analytic_ball_mode(report):
    t = time.time()
    mode = ball_pressure_wave(1, 1.0, ElasticParams(1.0, 1.0))
    r1 = spherical_bessel_roots(1)[0]
    mu_err = abs(mode.mu - 3 * r1**2)
    rng = np.random.default_rng(7)
    y = rng.standard_normal((100, 3))
    y *= (0.9 * rng.random(100) ** (1 / 3) / np.linalg.norm(y, axis=1))[:, None]
    h = 1e-3
    div = np.zeros_like(y)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        div += ((-mode.stress(y + 2 * e) + 8 * mode.stress(y + e) - 8 * mode.stress(y - e)
                 + mode.stress(y - 2 * e)) / (12 * h))[:, :, j]
    # relative to the size of the terms being balanced
    res = np.abs(-div - mode.mu * mode(y)).max() / (mode.mu * np.abs(mode(y)).max())
    _, bad = ball_badness(mode)
    el = time.time() - t
    report(2, [("mu_err", mu_err <= 1e-10, _fmt(mu_err)), ("eigen_residual", res <= 1e-8, _fmt(res)),
               ("badness", bad <= 1e-8, _fmt(bad)), ("runtime", el < 5.0, _fmt(el))], t)


def test_criterion_3_fem_eigenvalues(report):
    t = time.time()
    p = ElasticParams()
    disc = build_mesh(DomainSpec.disc_in_square(3.0, 1.0, 0.05))
    pairs = dirichlet_eigs(disc, p, 20)
    target = 3 * 3.831705970207512**2
    radial = min(pairs, key=lambda q: q.badness)
    rel = abs(radial.mu - target) / target
    disc_label = classify_domain(disc, p, 20, 0.1, pairs=pairs).label
    square = build_mesh(DomainSpec.square_in_square(2.0, 1.0, 0.05))
    sq_pairs = dirichlet_eigs(square, p, 20)
    sq_min = min(q.badness for q in sq_pairs)
    sq_label = classify_domain(square, p, 20, 0.1, pairs=sq_pairs).label
    el = time.time() - t
    report(3, [("radial_mu_rel_err", rel < 0.02, _fmt(rel)), ("radial_badness", radial.badness < 0.05,
                                                                  _fmt(radial.badness)),
               ("disc", disc_label == "Bad", disc_label), ("square_min_badness", sq_min > 0.2, _fmt(sq_min)),
               ("square", sq_label == "Good", sq_label), ("runtime", el < 120, _fmt(el))], t)


def test_criterion_4_one_dimensional_oracle(report):
    t = time.time()
    p = ElasticParams(1 / 3, 1 / 3)       # unit wave speed
    errs = []
    for cells, dt in ((200, 1e-3), (400, 5e-4)):
        r = run_wave_1d(cells, dt, 2.0, p, lambda x: np.sin(np.pi * x[:, 0]))
        exact = np.cos(np.pi * r.times)[:, None] * np.sin(np.pi * r.nodes())[None]
        errs.append(np.abs(r.displacement - exact).max())
    ratio = errs[0] / errs[1]
    el = time.time() - t
    report(4, [("max_err", errs[0] < 1e-3, _fmt(errs[0])), ("ratio", 3.5 < ratio < 4.5, _fmt(ratio)),
               ("runtime", el < 30, _fmt(el))], t)


@pytest.fixture(scope="module")
def pressure_wave_run():
    """Disc-in-square run seeded with (0, -a q, a psi, 0) over three periods."""
    t = time.time()
    spec = DomainSpec.disc_in_square(3.0, 1.0, 0.2)
    mesh = build_mesh(spec)
    fp, ep = FluidParams(1.0), ElasticParams()
    mats = assemble_coupled(mesh, fp, ep)
    wave = min(dirichlet_eigs(mesh, ep, 12), key=lambda q: q.badness)
    a = 1e-2
    period = 2 * math.pi / math.sqrt(wave.mu)
    cfg = ScenarioConfig(spec, fp, ep, dt=period / 40, t_end=3 * period)
    state = State.build(mats, 0.0, np.zeros(mats.velocity.ndof), np.full(mats.pressure.ndof, -a * wave.q_fit),
                        a * wave.psi.coeffs)
    traj = run(cfg, state, mats)
    return traj, cfg, time.time() - t


def test_criterion_5_exact_coupled_pressure_wave(report, pressure_wave_run):
    traj, cfg, el = pressure_wave_run
    t = time.time() - el
    d = traj.diagnostics
    E = d.column("E")
    u = d.column("u_H1").max()
    drift = np.abs(E - E[0]).max() / E[0]
    _, res = energy_residual(traj)
    res /= E[0]
    report(5, [("max_u_H1", u <= 1e-6, _fmt(u)), ("energy_drift", drift <= 1e-6, _fmt(drift)),
               ("energy_identity", res <= 1e-8, _fmt(res)), ("runtime", el < 300, _fmt(el))], t)


def test_criterion_6_discrete_energy_equality(report):
    t = time.time()
    spec = DomainSpec.disc_in_square(3.0, 1.0, 0.2)
    mesh = build_mesh(spec)
    fp, ep = FluidParams(1.0), ElasticParams()
    mats = assemble_coupled(mesh, fp, ep)
    data = construct_compatible(mesh, fp, ep, Seed("curl_bump", "bump", amplitude=1e-2), mats)
    state = State.from_fields(mats, data.u0, data.p0, data.xi0, data.xi1)
    res = []
    for dt in (8e-3, 4e-3, 2e-3):
        traj = run(ScenarioConfig(spec, fp, ep, dt=dt, t_end=0.48), state, mats, u1=data.u1, xi2=data.xi2)
        res.append(energy_residual(traj)[1])
    ratios = [res[0] / res[1], res[1] / res[2]]
    el = time.time() - t
    report(6, [("ratios", all(3.5 < q < 4.5 for q in ratios), "/".join(_fmt(q) for q in ratios)),
               ("runtime", el < 600, _fmt(el))], t)


def test_criterion_7_decomposition(report):
    t = time.time()
    ep = ElasticParams()
    mesh = build_mesh(DomainSpec.disc_in_square(3.0, 1.0, 0.2))
    basis = dirichlet_eigs(mesh, ep, 12)
    phi, _ = solve_neumann_phi(mesh, ep)
    wave = min(basis, key=lambda q: q.badness)
    w = math.sqrt(wave.mu)
    a, c = 1e-2, 3e-3
    times = np.arange(0, 8 * 2 * math.pi / w, 2 * math.pi / w / 40)
    xi = a * np.cos(w * times)[:, None] * wave.psi.coeffs + c * phi.coeffs
    xd = -a * w * np.sin(w * times)[:, None] * wave.psi.coeffs
    dec = decompose(DisplacementSeries(wave.psi.space, times, xi, xd), basis, phi, ep)
    c_err = abs(dec.phi_N0_coeff - c)
    amp_err = abs(math.hypot(*dec.eta_star.amplitudes[0]) - a) if len(dec.bad_modes) == 1 else math.inf
    rigid = max(np.abs(r.skew).max() + np.abs(r.shift).max() for r in dec.rigid_series)
    resid = dec.residual_series.max() / (abs(a) + abs(c))

    # good domain: a generic small-data run on the square-in-square geometry
    spec = DomainSpec.square_in_square(3.0, 1.0, 0.2)
    sq = build_mesh(spec)
    fp = FluidParams(1.0)
    mats = assemble_coupled(sq, fp, ep)
    data = construct_compatible(sq, fp, ep, Seed("curl_bump", "bump", amplitude=1e-2), mats)
    state = State.from_fields(mats, data.u0, data.p0, data.xi0, data.xi1)
    traj = run(ScenarioConfig(spec, fp, ep, dt=1e-2, t_end=6.0), state, mats, u1=data.u1, xi2=data.xi2)
    floor = math.sqrt(energy_residual(traj)[1])
    sq_basis = dirichlet_eigs(sq, ep, 20)
    sq_phi, _ = solve_neumann_phi(sq, ep)
    good = decompose(traj, sq_basis, sq_phi, ep)
    # no mode qualifies, so fit the least-bad one to measure what a wave would have to hide in
    best = min(sq_basis, key=lambda q: q.badness)
    forced = decompose(traj, sq_basis, sq_phi, ep, bad_modes=[(best.index, best.mu)])
    amp = float(np.abs(forced.eta_star.amplitudes).max())
    el = time.time() - t
    report(7, [("phi_N0_err", c_err <= 1e-6, _fmt(c_err)), ("eta_amp_err", amp_err <= 1e-4, _fmt(amp_err)),
               ("rigid", rigid <= 1e-12, _fmt(rigid)), ("residual_rel", resid <= 1e-6, _fmt(resid)),
               ("good_bad_modes", not good.bad_modes, str(len(good.bad_modes))),
               ("good_eta_amp", amp < 10 * floor, f"{_fmt(amp)}<10*{_fmt(floor)}"),
               ("good_tail_nonincreasing", good.tail_is_nonincreasing(), str(good.tail_is_nonincreasing())),
               ("runtime", el < 600, _fmt(el))], t)


def _stream_curl(U):
    def f(y):
        x, z = y[:, 0], y[:, 1]
        return np.column_stack([x**2 - z**2 + x * z, -(2 * x * z + z**2 / 2 + 1)])
    return U.interpolate(f)


def test_criterion_8_invariants(report, pressure_wave_run):
    t = time.time()
    rng = np.random.default_rng(11)
    spec = DomainSpec.disc_in_square(3.0, 1.0, 0.2)
    mesh = build_mesh(spec)
    ep, fp = ElasticParams(), FluidParams(1.0)
    S = solid_space(mesh)

    proj = 0.0
    for _ in range(20):
        f = Field(S, rng.standard_normal(S.ndof))
        rf = project_rigid(f).to_field(S)
        scale = max(1.0, np.abs(rf.coeffs).max())
        proj = max(proj, np.abs(project_rigid(rf).to_field(S).coeffs - rf.coeffs).max() / scale,
                   np.abs(strain(rf)).max() / scale)

    w = S.geometry().wdet
    lo = hi = math.inf
    for _ in range(50):
        f = Field(S, rng.standard_normal(S.ndof))
        eps = strain(f)
        e2 = float(np.einsum("cq,cqij,cqij->", w, eps, eps))
        energy = elastic_energy_density(f, ep)
        lo = min(lo, energy / (2 * ep.lambda1 * e2) - 1)
        hi = min(hi, (2 * ep.lambda1 + 2 * ep.lambda2) * e2 / energy - 1)
    bounds_ok = lo >= -1e-12 and hi >= -1e-12

    mats = assemble_coupled(mesh, fp, ep)
    U = mats.fluid_velocity
    u = _stream_curl(U)
    bd = np.union1d(U.dofs(U.boundary_nodes(OUTER)), U.dofs(U.boundary_nodes(INTERFACE)))
    free = np.setdiff1d(np.arange(U.ndof), bd)
    anti = 0.0
    for _ in range(5):
        wv = np.zeros((2, U.ndof))
        wv[:, free] = rng.standard_normal((2, len(free)))
        a_, b_ = Field(U, wv[0]), Field(U, wv[1])
        scale = norm(u, "H1") * norm(a_, "H1") * norm(b_, "H1")
        anti = max(anti, abs(trilinear(u, a_, b_) + trilinear(u, b_, a_)) / scale,
                   abs(trilinear(u, a_, a_)) / (norm(u, "H1") * norm(a_, "H1") ** 2))

    traj, cfg, _ = pressure_wave_run
    flux = np.abs(traj.diagnostics.column("interface_flux")).max()

    compat = 0.0
    for seed in (Seed("curl_bump", "bump", amplitude=1e-2), Seed(xi2="pressure_wave", amplitude=1e-2)):
        data = construct_compatible(mesh, fp, ep, seed, mats)
        compat = max(compat, max(check_compatibility(data, mesh, fp, ep, mats).values()))
    el = time.time() - t
    report(8, [("rigid_projection", proj <= 1e-12, _fmt(proj)),
               ("energy_bounds", bounds_ok, f"{_fmt(lo)},{_fmt(hi)}"),
               ("antisymmetry", anti <= 1e-8, _fmt(anti)),
               ("interface_flux", flux <= 10 * cfg.linear_tol, _fmt(flux)),
               ("compatibility", compat <= 1e-8, _fmt(compat)), ("runtime", el < 120, _fmt(el))], t)

"""Command-line front end.

Every command reads a JSON scenario (or a run directory) and writes CSV/JSON
results under the scenario's ``output_dir``.  Exit codes: 0 success, 1 bad
input, 2 energy blow-up or a diverging convection iteration.  Errors are
reported on stderr as one JSON line.

Relative ``output_dir`` values are resolved against the scenario file's
directory.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys
from contextlib import nullcontext
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .elasticity import (DEFAULT_THRESHOLD, ElasticParams, classify_domain, dirichlet_eigs,
                         solve_neumann_phi, write_eigen_report)
from .errors import BlowUp, FsiwError, MissingArtifacts, PicardDivergence
from .fem import Field, read_field_csv
from .fluid import FluidParams, assemble_coupled
from .initdata import Seed, check_compatibility, construct_compatible, save_initial_data
from .mesh import DomainSpec, Mesh, build_mesh
from .pressure_waves import ball_pressure_wave, disc_pressure_wave, write_mode_samples_csv
from .solver import ScenarioConfig, State, run, small_data_report, write_trajectory

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2


class ConfigError(FsiwError):
    def __init__(self, key, message):
        super().__init__(message)
        self.key = key


# --- scenario files ----------------------------------------------------------------

SECTIONS = {"domain", "fluid", "elastic", "time", "seed", "analysis", "output_dir"}
TIME_KEYS = {"dt", "t_end", "stride", "picard_tol", "picard_max", "linear_tol", "convection"}
SEED_KEYS = {"type", "u1", "xi2", "amplitude", "g_scale", "mode"}
ANALYSIS_KEYS = {"modes", "threshold", "monitor_C_hat", "monitor_C_tilde", "t0", "window_fraction"}


@dataclass
class Scenario:
    domain: DomainSpec
    fluid: FluidParams
    elastic: ElasticParams
    time: dict
    seed: dict
    analysis: dict
    output_dir: str
    raw: dict = field(default_factory=dict)

    def config(self) -> ScenarioConfig:
        t = self.time
        return ScenarioConfig(self.domain, self.fluid, self.elastic, dt=t["dt"], t_end=t["t_end"],
                              picard_tol=t.get("picard_tol", 1e-10), picard_max=t.get("picard_max", 50),
                              monitor_C_hat=self.analysis.get("monitor_C_hat", 1.0),
                              monitor_C_tilde=self.analysis.get("monitor_C_tilde", 1.0),
                              linear_tol=t.get("linear_tol", 1e-12), stride=t.get("stride", 1),
                              convection=t.get("convection", True))


def _json_error_key(text: str, pos: int):
    """Name of the last object key before a parse error, if any."""
    keys = re.findall(r'"([^"\\]+)"\s*:', text[:pos])
    return keys[-1] if keys else None


def _number(section: dict, key: str, prefix: str, positive=False, integer=False, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"{prefix}.{key}", f"missing required key {prefix}.{key}")
        return default
    v = section[key]
    ok = isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
    if ok and integer:
        ok = float(v).is_integer()
    if ok and positive:
        ok = v > 0
    if not ok:
        kind = "a positive " if positive else "a "
        raise ConfigError(f"{prefix}.{key}", f"{prefix}.{key} must be {kind}{'integer' if integer else 'number'}, got {v!r}")
    return int(v) if integer else float(v)


def _check_keys(section, allowed, prefix):
    if not isinstance(section, dict):
        raise ConfigError(prefix, f"{prefix} must be an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{prefix}.{unknown[0]}", f"unknown key {prefix}.{unknown[0]}")


def parse_scenario(data: dict, base_dir: str = ".") -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError(None, "scenario must be a JSON object")
    unknown = sorted(set(data) - SECTIONS)
    if unknown:
        raise ConfigError(unknown[0], f"unknown section {unknown[0]!r}")
    if "domain" not in data:
        raise ConfigError("domain", "missing required section domain")
    try:
        domain = DomainSpec.from_dict(data["domain"])
        domain.validate()
    except FsiwError as exc:
        named = [k for k in (data["domain"] if isinstance(data["domain"], dict) else ())
                 if re.search(rf"\b{re.escape(str(k))}\b", str(exc))]
        key = "domain." + named[0] if named else "domain"
        raise ConfigError(key, str(exc)) from exc
    except TypeError as exc:
        raise ConfigError("domain", str(exc)) from exc

    fl = data.get("fluid", {})
    _check_keys(fl, {"nu"}, "fluid")
    fluid = FluidParams(_number(fl, "nu", "fluid", positive=True, default=1.0))
    el = data.get("elastic", {})
    _check_keys(el, {"lambda1", "lambda2"}, "elastic")
    elastic = ElasticParams(_number(el, "lambda1", "elastic", positive=True, default=1.0),
                            _number(el, "lambda2", "elastic", positive=True, default=1.0))

    tm = data.get("time", {})
    _check_keys(tm, TIME_KEYS, "time")
    time = {"dt": _number(tm, "dt", "time", positive=True, default=1e-2),
            "t_end": _number(tm, "t_end", "time", positive=True, default=1.0),
            "stride": _number(tm, "stride", "time", positive=True, integer=True, default=1),
            "picard_tol": _number(tm, "picard_tol", "time", positive=True, default=1e-10),
            "picard_max": _number(tm, "picard_max", "time", positive=True, integer=True, default=50),
            "linear_tol": _number(tm, "linear_tol", "time", positive=True, default=1e-12),
            "convection": bool(tm.get("convection", True))}
    if time["t_end"] < time["dt"]:
        raise ConfigError("time.t_end", "time.t_end must be at least time.dt")

    sd = data.get("seed", {})
    _check_keys(sd, SEED_KEYS, "seed")
    seed = {"type": sd.get("type", "compatible"), "u1": sd.get("u1", "zero"), "xi2": sd.get("xi2", "zero"),
            "amplitude": _number(sd, "amplitude", "seed", default=0.0),
            "g_scale": _number(sd, "g_scale", "seed", default=0.0),
            "mode": sd.get("mode")}
    if seed["type"] not in ("compatible", "pressure_wave"):
        raise ConfigError("seed.type", "seed.type must be 'compatible' or 'pressure_wave'")
    if seed["u1"] not in ("zero", "curl_bump"):
        raise ConfigError("seed.u1", "seed.u1 must be 'zero' or 'curl_bump'")
    if seed["xi2"] not in ("zero", "bump", "pressure_wave"):
        raise ConfigError("seed.xi2", "seed.xi2 must be 'zero', 'bump' or 'pressure_wave'")
    if seed["mode"] is not None:
        seed["mode"] = _number(sd, "mode", "seed", positive=True, integer=True)

    an = data.get("analysis", {})
    _check_keys(an, ANALYSIS_KEYS, "analysis")
    analysis = {"modes": _number(an, "modes", "analysis", positive=True, integer=True, default=12),
                "threshold": _number(an, "threshold", "analysis", positive=True, default=DEFAULT_THRESHOLD),
                "monitor_C_hat": _number(an, "monitor_C_hat", "analysis", default=1.0),
                "monitor_C_tilde": _number(an, "monitor_C_tilde", "analysis", default=1.0),
                "window_fraction": _number(an, "window_fraction", "analysis", positive=True, default=0.25)}
    if an.get("t0") is not None:
        analysis["t0"] = _number(an, "t0", "analysis")
    if not analysis["threshold"] < 1:
        raise ConfigError("analysis.threshold", "analysis.threshold must lie in (0, 1)")

    out = data.get("output_dir", "out")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir", "output_dir must be a non-empty string")
    out = out if os.path.isabs(out) else os.path.normpath(os.path.join(base_dir, out))
    return Scenario(domain, fluid, elastic, time, seed, analysis, out, data)


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(None, f"cannot read scenario {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        key = _json_error_key(text, exc.pos)
        raise ConfigError(key, f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_scenario(data, os.path.dirname(os.path.abspath(path)))


# --- helpers -------------------------------------------------------------------------

def _fmt(x) -> str:
    return f"{x:.17g}"


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows) -> None:
    """CSV plus a whitespace-separated ``.dat`` mirror."""
    rows = [list(r) for r in rows]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) if isinstance(x, float) else x for x in r])
    with open(os.path.splitext(path)[0] + ".dat", "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for r in rows:
            fh.write(" ".join(_fmt(x) if isinstance(x, float) else str(x) for x in r) + "\n")


def _dat_mirror(path) -> None:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    with open(os.path.splitext(path)[0] + ".dat", "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(rows[0]) + "\n")
        for r in rows[1:]:
            fh.write(" ".join(r) + "\n")


def _eigen_outputs(sc: Scenario, n_modes, threshold, mesh=None):
    mesh = build_mesh(sc.domain) if mesh is None else mesh
    pairs = dirichlet_eigs(mesh, sc.elastic, n_modes)
    os.makedirs(sc.output_dir, exist_ok=True)
    path = os.path.join(sc.output_dir, "eigen_report.csv")
    write_eigen_report(pairs, path)
    _dat_mirror(path)
    return mesh, pairs, classify_domain(mesh, sc.elastic, n_modes, threshold, pairs=pairs)


def _pressure_wave_state(mats, pairs, amplitude, mode=None):
    pair = pairs[mode - 1] if mode else min(pairs, key=lambda p: p.badness)
    S = mats.structure
    zero_v = np.zeros(mats.velocity.ndof)
    state = State.build(mats, 0.0, zero_v, np.full(mats.pressure.ndof, -amplitude * pair.q_fit),
                        amplitude * pair.psi.coeffs)
    u1 = Field(mats.fluid_velocity, np.zeros(mats.fluid_velocity.ndof))
    xi2 = Field(S, -amplitude * pair.mu * pair.psi.coeffs)
    return state, u1, xi2, pair


def _initial_data(sc: Scenario, mesh, mats):
    sd = sc.seed
    g = None
    if sd["g_scale"]:
        scale = sd["g_scale"]
        g = lambda y: scale * y
    seed = Seed(sd["u1"], sd["xi2"], g, sd["amplitude"], sd["mode"], max(sc.analysis["modes"], sd["mode"] or 1))
    return construct_compatible(mesh, sc.fluid, sc.elastic, seed, mats)


# --- commands ----------------------------------------------------------------------

def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    cfg = sc.config()
    mesh = build_mesh(sc.domain)
    mats = assemble_coupled(mesh, sc.fluid, sc.elastic)
    os.makedirs(sc.output_dir, exist_ok=True)
    mesh.save(os.path.join(sc.output_dir, "mesh.json"))
    if sc.seed["type"] == "pressure_wave":
        pairs = dirichlet_eigs(mesh, sc.elastic, max(sc.analysis["modes"], sc.seed["mode"] or 1))
        state, u1, xi2, pair = _pressure_wave_state(mats, pairs, sc.seed["amplitude"], sc.seed["mode"])
        seeded = {"type": "pressure_wave", "k": pair.index, "mu": pair.mu, "q_fit": pair.q_fit,
                  "amplitude": sc.seed["amplitude"]}
    else:
        data = _initial_data(sc, mesh, mats)
        res = check_compatibility(data, mesh, sc.fluid, sc.elastic, mats)
        save_initial_data(data, os.path.join(sc.output_dir, "initial_data"), sc.raw, res)
        state = State.from_fields(mats, data.u0, data.p0, data.xi0, data.xi1)
        u1, xi2 = data.u1, data.xi2
        seeded = {"type": "compatible"}
    report = small_data_report(state, cfg, mats, u1, xi2)
    _write_json(os.path.join(sc.output_dir, "small_data.json"), report.to_dict())
    _write_json(os.path.join(sc.output_dir, "seed.json"),
                {k: (float(_fmt(v)) if isinstance(v, float) else v) for k, v in seeded.items()})
    traj = run(cfg, state, mats, u1=u1, xi2=xi2)
    write_trajectory(traj, sc.output_dir)
    _write_json(os.path.join(sc.output_dir, "scenario.json"), sc.raw)
    print(os.path.join(sc.output_dir, "diagnostics.csv"))
    return EXIT_OK


def cmd_eigs(args) -> int:
    sc = load_scenario(args.scenario)
    n = args.modes if args.modes is not None else sc.analysis["modes"]
    if n < 1:
        raise ConfigError("--modes", "--modes must be >= 1")
    _eigen_outputs(sc, n, sc.analysis["threshold"])
    print(os.path.join(sc.output_dir, "eigen_report.csv"))
    return EXIT_OK


def cmd_classify(args) -> int:
    sc = load_scenario(args.scenario)
    n = args.modes if args.modes is not None else sc.analysis["modes"]
    tau = args.threshold if args.threshold is not None else sc.analysis["threshold"]
    if n < 1:
        raise ConfigError("--modes", "--modes must be >= 1")
    if not 0 < tau < 1:
        raise ConfigError("--threshold", "--threshold must lie in (0, 1)")
    _, _, cls = _eigen_outputs(sc, n, tau)
    out = {"verdict": cls.label, "threshold": tau,
           "bad_modes": [{"k": k, "mu": float(_fmt(mu)), "q_fit": float(_fmt(q)), "badness": float(_fmt(b))}
                         for k, mu, q, b in cls.bad_modes]}
    _write_json(os.path.join(sc.output_dir, "classification.json"), out)
    print(cls.label)
    return EXIT_OK


def cmd_pressure_wave(args) -> int:
    if args.index < 1 or args.radius <= 0 or args.samples < 2:
        raise ConfigError("--index", "need --index >= 1, --radius > 0 and --samples >= 2")
    params = ElasticParams(args.lambda1, args.lambda2)
    os.makedirs(args.output_dir, exist_ok=True)
    if args.kind == "ball":
        mode = ball_pressure_wave(args.index, args.radius, params)
        info = {"kind": "ball", "index": mode.index, "radius": mode.radius, "root": mode.root,
                "mu": mode.mu, "q": mode.q}
        pts = np.zeros((args.samples, 3))
    else:
        mode = disc_pressure_wave(args.index, args.radius, params)
        info = {"kind": "disc", "index": mode.index, "radius": mode.radius, "wavenumber": mode.wavenumber,
                "mu": mode.mu, "q": mode.q}
        pts = np.zeros((args.samples, 2))
    pts[:, 0] = np.linspace(0.0, args.radius, args.samples)
    write_mode_samples_csv(mode, pts, os.path.join(args.output_dir, "mode_samples.csv"))
    _dat_mirror(os.path.join(args.output_dir, "mode_samples.csv"))
    _write_json(os.path.join(args.output_dir, "mode.json"),
                {k: (float(_fmt(v)) if isinstance(v, float) else v) for k, v in info.items()})
    print(os.path.join(args.output_dir, "mode.json"))
    return EXIT_OK


def cmd_make_data(args) -> int:
    sc = load_scenario(args.scenario)
    mesh = build_mesh(sc.domain)
    mats = assemble_coupled(mesh, sc.fluid, sc.elastic)
    data = _initial_data(sc, mesh, mats)
    res = check_compatibility(data, mesh, sc.fluid, sc.elastic, mats)
    target = os.path.join(sc.output_dir, "initial_data")
    save_initial_data(data, target, sc.raw, res)
    print(target)
    return EXIT_OK


def _load_run(directory):
    from .asymptotics import DisplacementSeries
    man_path = os.path.join(directory, "trajectory.json")
    mesh_path = os.path.join(directory, "mesh.json")
    if not (os.path.isfile(man_path) and os.path.isfile(mesh_path)):
        raise MissingArtifacts(f"{directory} holds no trajectory (trajectory.json, mesh.json)")
    with open(man_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    snaps = manifest.get("snapshots", [])
    if len(snaps) < 2:
        raise MissingArtifacts(f"{directory}: fewer than two snapshots")
    mesh = Mesh.load(mesh_path)
    cfg = manifest["config"]
    elastic = ElasticParams(**cfg["elastic"])
    from .elasticity import solid_space
    space = solid_space(mesh)
    xi, xd = [], []
    for e in snaps:
        for name, store in (("xi", xi), ("xi_dot", xd)):
            p = os.path.join(directory, "snapshots", e["files"][name])
            if not os.path.isfile(p):
                raise MissingArtifacts(f"missing snapshot {p}")
            store.append(read_field_csv(space, p).coeffs)
    series = DisplacementSeries(space, [e["t"] for e in snaps], np.array(xi), np.array(xd))
    return mesh, elastic, series, manifest


def cmd_analyze(args) -> int:
    from .asymptotics import decompose, shift_difference, write_decomposition
    directory = args.run_dir
    if not os.path.isdir(directory):
        raise MissingArtifacts(f"{directory} is not a directory")
    mesh, elastic, series, manifest = _load_run(directory)
    scen_path = os.path.join(directory, "scenario.json")
    analysis = {}
    if os.path.isfile(scen_path):
        with open(scen_path, encoding="utf-8") as fh:
            analysis = json.load(fh).get("analysis", {})
    n_modes = args.modes or int(analysis.get("modes", 12))
    tau = args.threshold or float(analysis.get("threshold", DEFAULT_THRESHOLD))
    basis = dirichlet_eigs(mesh, elastic, n_modes)
    phi, _ = solve_neumann_phi(mesh, elastic)
    dec = decompose(series, basis, phi, elastic, threshold=tau)
    path = write_decomposition(dec, directory)
    t0 = args.t0 if args.t0 is not None else analysis.get("t0")
    if t0 is None:
        t0 = series.times[len(series.times) // 4] - series.times[0]
    sd = shift_difference(series, float(t0), basis, dec.bad_modes)
    _write_csv(os.path.join(directory, "shift_difference.csv"), ["window_start", "distance_H1"],
               [(float(a), float(b)) for a, b in zip(sd.window_starts, sd.distances)])
    print(path)
    return EXIT_OK


def cmd_oracle_1d(args) -> int:
    from .asymptotics import oracle_wave_1d
    if args.nx < 2 or args.nt < 2:
        raise ConfigError("--nx", "need --nx >= 2 and --nt >= 2")
    os.makedirs(args.output_dir, exist_ok=True)
    xs = np.linspace(-1.0, 1.0, args.nx)
    ts = np.linspace(0.0, args.t_end, args.nt)
    rows = []
    for t in ts:
        eta, q = oracle_wave_1d(t, xs)
        rows.extend((float(t), float(x), float(e), float(q)) for x, e in zip(xs, eta))
    path = os.path.join(args.output_dir, "oracle_1d.csv")
    _write_csv(path, ["t", "x", "eta", "q"], rows)
    print(path)
    return EXIT_OK


# --- entry point -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fsiwave", description="Fluid-structure pressure-wave experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", help="integrate a scenario and write diagnostics and snapshots")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_run)

    for name, func, help_ in (("eigs", cmd_eigs, "Dirichlet-Lame eigenpairs with traction scores"),
                              ("classify", cmd_classify, "good/bad verdict for the solid domain")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("scenario")
        s.add_argument("--modes", type=int, default=None)
        s.add_argument("--threshold", type=float, default=None)
        s.set_defaults(func=func)

    s = sub.add_parser("pressure-wave", help="tabulate an analytic ball or disc pressure wave")
    s.add_argument("--kind", choices=("ball", "disc"), default="ball")
    s.add_argument("--index", type=int, default=1)
    s.add_argument("--radius", type=float, default=1.0)
    s.add_argument("--lambda1", type=float, default=1.0)
    s.add_argument("--lambda2", type=float, default=1.0)
    s.add_argument("--samples", type=int, default=101)
    s.add_argument("--output-dir", required=True)
    s.set_defaults(func=cmd_pressure_wave)

    s = sub.add_parser("make-data", help="construct compatible initial data and its residual report")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_make_data)

    s = sub.add_parser("analyze", help="decompose a recorded run into pressure wave, offset and drift")
    s.add_argument("run_dir")
    s.add_argument("--t0", type=float, default=None)
    s.add_argument("--modes", type=int, default=None)
    s.add_argument("--threshold", type=float, default=None)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("oracle-1d", help="tabulate the closed-form 1D pressure wave")
    s.add_argument("--nx", type=int, default=41)
    s.add_argument("--nt", type=int, default=21)
    s.add_argument("--t-end", type=float, default=2.0)
    s.add_argument("--output-dir", required=True)
    s.set_defaults(func=cmd_oracle_1d)
    return p


def _report(kind, key, message) -> None:
    sys.stderr.write(json.dumps({"error": kind, "key": key, "message": message}) + "\n")


def _thread_limit():
    n = os.environ.get("FSIW_THREADS")
    if not n:
        return nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return nullcontext()
    return threadpool_limits(limits=max(int(n), 1))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with _thread_limit():
            return args.func(args)
    except ConfigError as exc:
        _report("ConfigError", exc.key, str(exc))
        return EXIT_CONFIG
    except (BlowUp, PicardDivergence) as exc:
        _report(type(exc).__name__, None, str(exc))
        return EXIT_BLOWUP
    except FsiwError as exc:
        _report(type(exc).__name__, None, str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Configuration is a flat ``key = value`` text file (blank lines and ``#``
comments allowed); every key is validated and unknown keys are hard errors,
so typos cannot silently change an experiment.  Each subcommand writes a
``manifest.txt`` with the fully resolved configuration for reproducibility.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import ComplexField, DofMap, assemble_system
from .diagnostics import CsvSink, export_vtk
from .groundstate import (
    GradientFlowConfig,
    GroundStateError,
    normalized_gradient_flow,
    seed_field,
)
from .mesh import MeshError, build_rect_mesh
from .model import (
    check_divergence_free,
    gpe_rotating,
    harmonic_potential,
    validate_assumptions,
)
from .regularizer import verify_truncated_cubic
from .steppers import StepperConfig, StepperError, run
from .verification import (
    dissipation_experiment,
    eigenmode_case,
    manufactured_cubic_case,
    run_projection_eoc,
    run_space_eoc,
    run_time_eoc,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration schema
# ---------------------------------------------------------------------------

def _parse_domain(text):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError("expected four comma-separated numbers x0,x1,y0,y1")
    x0, x1, y0, y1 = (float(p) for p in parts)
    if not (x0 < x1 and y0 < y1):
        raise ValueError("domain bounds are degenerate")
    return (x0, x1, y0, y1)


def _parse_float_list(text):
    return tuple(float(p.strip()) for p in text.split(","))


def _positive(x):
    if not x > 0:
        raise ValueError("must be positive")
    return x


def _nonnegative(x):
    if x < 0:
        raise ValueError("must be nonnegative")
    return x


def _choice(*options):
    def convert(text):
        if text not in options:
            raise ValueError(f"must be one of {options}")
        return text

    return convert


_SCHEMA = {
    "domain": (_parse_domain, None),
    "nx": (lambda s: _positive(int(s)), None),
    "ny": (lambda s: _positive(int(s)), None),
    "model": (_choice("gpe_rotating"), None),
    "omega": (float, None),
    "beta": (lambda s: _nonnegative(float(s)), None),
    "gamma_x": (float, None),
    "gamma_y": (float, None),
    "scheme": (
        _choice("irk", "crank_nicolson", "be", "backward_euler", "irk_regularized"),
        "irk",
    ),
    "tau": (lambda s: _positive(float(s)), None),
    "T": (lambda s: _nonnegative(float(s)), None),
    "newton_tol": (lambda s: _positive(float(s)), 1e-8),
    "newton_max_iter": (lambda s: _positive(int(s)), 50),
    "record_every": (lambda s: _positive(int(s)), 1),
    "out": (str, "out"),
    "seed": (int, 0),
    "initial": (str, "gaussian"),
    "cutoff": (lambda s: _positive(float(s)), None),
    "quad_degree": (lambda s: int(_choice("1", "2", "4", "6")(s)), 4),
    "zeta1": (float, 1.01),
    "flow_tau": (lambda s: _positive(float(s)), 0.05),
    "flow_tol": (lambda s: _positive(float(s)), 1e-8),
    "flow_max_steps": (lambda s: _positive(int(s)), 50000),
    "seed_profile": (_choice("auto", "gaussian", "vortex", "mixed"), "auto"),
    "taus": (_parse_float_list, (1.0, 0.1, 0.01, 0.001)),
    "n_steps": (lambda s: _positive(int(s)), 100),
}

_ALWAYS_REQUIRED = ("domain", "nx", "ny", "model", "omega", "beta",
                    "gamma_x", "gamma_y")
_RUN_REQUIRED = ("scheme", "tau", "T")


@dataclass
class RunConfig:
    values: dict

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None

    def manifest_lines(self):
        return [f"{k} = {self.values[k]}" for k in sorted(self.values)]


def parse_config(path=None, overrides=(), required=()):
    """Read, validate and type a configuration.

    ``overrides`` are ``key=value`` strings applied after the file.  Unknown
    keys, unparsable values and missing required keys all raise ConfigError
    naming the offending line.
    """
    raw = {}
    if path is not None:
        try:
            lines = Path(path).read_text().splitlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            raw[key.strip()] = (value.strip(), f"{path}:{lineno}")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, _, value = item.partition("=")
        raw[key.strip()] = (value.strip(), f"--set {item!r}")

    values = {}
    for key, (text, where) in raw.items():
        if key not in _SCHEMA:
            raise ConfigError(f"{where}: unknown key {key!r}")
        parse, _ = _SCHEMA[key]
        try:
            values[key] = parse(text)
        except ValueError as exc:
            raise ConfigError(f"{where}: invalid value for {key!r}: {exc}") from exc
    for key, (_, default) in _SCHEMA.items():
        if key not in values and default is not None:
            values[key] = default
    missing = [k for k in required if k not in values]
    if missing:
        raise ConfigError(f"missing required config keys: {', '.join(missing)}")
    return RunConfig(values)


def _build_problem(cfg, quad_degree=None):
    mesh = build_rect_mesh(cfg.domain, cfg.nx, cfg.ny)
    dofmap = DofMap.build(mesh, dirichlet=True)
    coeffs = gpe_rotating(
        cfg.omega, harmonic_potential(cfg.gamma_x, cfg.gamma_y), cfg.beta
    )
    systems = assemble_system(
        mesh, dofmap, coeffs, quad_degree or cfg.values.get("quad_degree", 4)
    )
    return systems


def _write_manifest(out_dir: Path, cfg, command: str, extra=(), elapsed=None):
    lines = [
        f"command = {command}",
        f"gpefem_version = {__version__}",
    ]
    if cfg is not None:
        lines += cfg.manifest_lines()
    lines += list(extra)
    if elapsed is not None:
        lines.append(f"elapsed_seconds = {elapsed:.3f}")
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _initial_field(cfg, systems):
    initial = cfg.values.get("initial", "gaussian")
    if initial == "gaussian":
        return seed_field(systems, "gaussian")
    if initial == "groundstate":
        # ground state of the isotropic-trap operator with the run's
        # rotation speed and interaction strength
        iso = gpe_rotating(cfg.omega, harmonic_potential(1.0, 1.0), cfg.beta)
        iso_sys = assemble_system(
            systems.mesh, systems.dofmap, iso, systems.quad_degree
        )
        flow = GradientFlowConfig(
            tau_flow=cfg.flow_tau, tol=cfg.flow_tol,
            max_steps=cfg.flow_max_steps, seed_profile=cfg.seed_profile,
        )
        return normalized_gradient_flow(iso_sys, flow).field
    path = Path(initial)
    if not path.exists():
        raise ConfigError(f"initial = {initial!r}: no such profile or file")
    data = np.load(path)
    values = np.asarray(data["values"], dtype=complex)
    if values.shape != (systems.dofmap.n_dofs,):
        raise ConfigError(
            f"initial field in {initial} has {values.shape[0]} values, "
            f"expected {systems.dofmap.n_dofs}"
        )
    return ComplexField(values, systems.dofmap)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_run(args) -> int:
    cfg = parse_config(args.config, args.set, _ALWAYS_REQUIRED + _RUN_REQUIRED)
    if args.out is not None:
        cfg.values["out"] = args.out
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()

    systems = _build_problem(cfg)
    report = validate_assumptions(systems.coeffs, systems.mesh, cfg.zeta1)
    div_free = check_divergence_free(systems.coeffs, systems.mesh, 1e-10)
    if not report.ok:
        print("note: running outside theory-backed mode")
        print(report.summary())

    u0 = _initial_field(cfg, systems)
    config = StepperConfig(
        scheme=cfg.scheme,
        tau=cfg.tau,
        t_final=cfg.T,
        newton_tol=cfg.newton_tol,
        newton_max_iter=cfg.newton_max_iter,
        record_every=cfg.record_every,
        cutoff=cfg.values.get("cutoff"),
    )

    with CsvSink(out_dir / "diagnostics.csv") as sink:
        result = run(u0, config, systems, sink=sink)
    for record, step in zip(result.records, result.results):
        export_vtk(step.field, systems.mesh, out_dir / f"snapshot_{record.step}.vtk")

    extra = [
        f"assumptions_certificate = {report.ok}",
        f"drift_divergence_free = {div_free}",
        f"coupling_indicator = {result.coupling_indicator}",
        f"run_failed = {result.failed}",
    ]
    _write_manifest(out_dir, cfg, "run", extra, time.perf_counter() - start)
    if result.failed:
        print(f"step failure: {result.failure}", file=sys.stderr)
        return EXIT_SOLVER
    final = result.records[-1]
    print(
        f"run complete: {final.step} steps to t = {final.t:g}, "
        f"mass {final.mass:.12g}, energy {final.energy:.12g}"
    )
    return EXIT_OK


def _cmd_groundstate(args) -> int:
    cfg = parse_config(args.config, args.set, _ALWAYS_REQUIRED)
    if args.out is not None:
        cfg.values["out"] = args.out
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()

    systems = _build_problem(cfg)
    flow = GradientFlowConfig(
        tau_flow=cfg.flow_tau, tol=cfg.flow_tol, max_steps=cfg.flow_max_steps,
        seed_profile=cfg.seed_profile,
    )
    try:
        state = normalized_gradient_flow(systems, flow)
    except GroundStateError as exc:
        print(f"gradient flow failed: {exc}", file=sys.stderr)
        _write_manifest(out_dir, cfg, "groundstate", [f"failed = {exc}"])
        return EXIT_SOLVER

    export_vtk(state.field, systems.mesh, out_dir / "groundstate.vtk")
    np.savez(
        out_dir / "groundstate.npz",
        values=state.field.values,
        energy=state.energy,
        domain=np.asarray(cfg.domain),
        nx=cfg.nx,
        ny=cfg.ny,
    )
    extra = [
        f"energy = {state.energy!r}",
        f"flow_steps = {state.steps}",
        f"stationarity = {state.stationarity!r}",
    ]
    _write_manifest(out_dir, cfg, "groundstate", extra, time.perf_counter() - start)
    print(f"ground state energy {state.energy:.6f} after {state.steps} flow steps")
    return EXIT_OK


_CASES = {
    "eigenmode-space": ("space", eigenmode_case),
    "manufactured-space": ("space", manufactured_cubic_case),
    "eigenmode-time-irk": ("time-irk", eigenmode_case),
    "eigenmode-time-be": ("time-be", eigenmode_case),
    "projection-rotating": ("projection", None),
}


def _cmd_convergence(args) -> int:
    kind, factory = _CASES[args.case]
    out_dir = Path(args.out or "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    k = args.levels
    if kind == "space":
        levels = [16 * 2**j for j in range(k)]
        table = run_space_eoc(factory(), levels=levels)
    elif kind in ("time-irk", "time-be"):
        taus = [0.2 / 2**j for j in range(k)]
        table = run_time_eoc(
            factory(), nx=64, tau_levels=taus,
            scheme="irk" if kind == "time-irk" else "be",
        )
    else:
        pi = np.pi

        def f(points):
            return np.sin(pi * points[:, 0]) * np.sin(pi * points[:, 1]).astype(complex)

        def grad_f(points):
            out = np.empty((len(points), 2), dtype=complex)
            out[:, 0] = pi * np.cos(pi * points[:, 0]) * np.sin(pi * points[:, 1])
            out[:, 1] = pi * np.sin(pi * points[:, 0]) * np.cos(pi * points[:, 1])
            return out

        coeffs = gpe_rotating(0.8, harmonic_potential(0.9, 1.1), beta=100.0)
        levels = [16 * 2**j for j in range(k)]
        table = run_projection_eoc(f, grad_f, levels, coeffs)

    (out_dir / "eoc.csv").write_text(table.to_csv() + "\n")
    _write_manifest(out_dir, None, f"convergence --case {args.case} --levels {k}")
    print(table.to_text())
    return EXIT_OK


def _cmd_table1(args) -> int:
    cfg = parse_config(args.config, args.set, _ALWAYS_REQUIRED)
    if args.out is not None:
        cfg.values["out"] = args.out
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()

    systems = _build_problem(cfg)
    u0 = _initial_field(cfg, systems)
    try:
        table = dissipation_experiment(
            systems,
            u0,
            tau_list=cfg.taus,
            n_steps=cfg.n_steps,
            newton_tol=cfg.newton_tol,
            newton_max_iter=cfg.newton_max_iter,
        )
    except Exception as exc:
        print(f"dissipation experiment failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    (out_dir / "table1.csv").write_text(table.to_csv() + "\n")
    _write_manifest(out_dir, cfg, "table1", elapsed=time.perf_counter() - start)
    print(table.to_text())
    return EXIT_OK


def _cmd_verify_fm(args) -> int:
    report = verify_truncated_cubic(args.M, args.samples, seed=args.seed)
    print(report.summary())
    return EXIT_OK if report.all_ok else EXIT_VERIFY


def _cmd_verify_assumptions(args) -> int:
    cfg = parse_config(args.config, args.set, _ALWAYS_REQUIRED)
    mesh = build_rect_mesh(cfg.domain, cfg.nx, cfg.ny)
    coeffs = gpe_rotating(
        cfg.omega, harmonic_potential(cfg.gamma_x, cfg.gamma_y), cfg.beta
    )
    report = validate_assumptions(coeffs, mesh, cfg.zeta1)
    div_free = check_divergence_free(coeffs, mesh, 1e-10)
    print(report.summary())
    print(f"drift divergence-free: {div_free}")
    return EXIT_OK if (report.ok and div_free) else EXIT_VERIFY


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(parser):
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    parser.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpefem",
        description="P1 finite element solver for the rotating Gross-Pitaevskii equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="time-step the configured problem")
    _add_common(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("groundstate", help="compute the ground state by gradient flow")
    _add_common(p)
    p.set_defaults(func=_cmd_groundstate)

    p = sub.add_parser("convergence", help="experimental convergence orders")
    p.add_argument("--case", choices=sorted(_CASES), required=True)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_convergence)

    p = sub.add_parser("table1", help="mass/energy loss comparison of BE vs IRK")
    _add_common(p)
    p.set_defaults(func=_cmd_table1)

    p = sub.add_parser("verify-fm", help="property suite of the truncated cubic")
    p.add_argument("--M", type=float, required=True)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify_fm)

    p = sub.add_parser("verify-assumptions", help="check model assumptions on a mesh")
    _add_common(p)
    p.set_defaults(func=_cmd_verify_assumptions)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MeshError, StepperError, GroundStateError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

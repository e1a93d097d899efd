"""Command-line entry point.

Three subcommands: ``mesh`` generates a domain triangulation, ``solve``
runs one parabolic or obstacle evolution from a JSON config, ``study``
runs a full domain- or obstacle-family convergence study.  Exit codes: 0
success, 1 numerical failure, 2 usage or config error.

All artifacts are plain text.  Manifests echo the config and hash the
inputs so a rerun is byte-identical; wall-clock timings go to a
``timings.txt`` sidecar to keep the JSON reproducible.  The env var
MOSCO_LAB_SEED overrides the seed of every randomized estimate.

Config schema (JSON)
--------------------
Solve configs::

    {
      "problem": "parabolic" | "vi",
      "mesh": {"file": "m.mesh2d"} |
              {"generator": "cracked_disk" | "dumbbell" | "fixed_hole" |
                            "disk" | "rectangle",
               "h": 0.05, "delta": 0.25, "width": 0.5, "radius": 0.25},
      "bc": "dirichlet" | "neumann",
      "grid": {"T": 0.25, "steps": 25},
      "theta": 1.0,
      "coefficients": {"preset": "laplacian", "diffusion": 1.0, "c0": 0.0} |
                      {"preset": "general", "a": [[entry, entry], [entry, entry]],
                       "a_lower": [entry, entry], "b": [entry, entry],
                       "c0": entry, "alpha": 0.5, "bound": 2.0, "shift": 0.0},
      "source": preset, "u0": preset,
      "obstacle": preset, "obstacle_shift": 0.0,        (vi only)
      "manufactured": "heat_sine"                       (overrides data)
    }

where a coefficient ``entry`` is ``[name, [params...]]`` with the presets
of :class:`moscolab.Coefficient`, and a data ``preset`` is one of::

    {"preset": "zero"}
    {"preset": "constant", "params": [c]}
    {"preset": "linear",   "params": [c0, cx, cy]}
    {"preset": "sinprod",  "params": [amplitude]}
    {"preset": "quartic",  "params": [amplitude]}       A x(1-x) y(1-y)
    {"preset": "bump",     "params": [cx, cy, radius, height]}

Study configs::

    {
      "study": "dirichlet" | "neumann" | "vi",
      "family": {"kind": "cracked_disk", "h": 0.04, "n_max": 6,
                 "params": [optional explicit parameters]},
      "grid": {"T": 0.25, "steps": 25},
      "coefficients": ..., "source": ..., "u0": ...,
      "theta": 1.0, "n_cells": 128, "sup_from": null,
      "mesh": {...}, "obstacle": preset,                (vi only)
      "obstacle_shifts": [optional per-index shifts]
    }
"""

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .fem import (AssemblyError, Coefficient, CoefficientSet, FunctionSpace,
                  SolverError)
from .mesh import (DomainFamily, MeshError, generate_cracked_disk,
                   generate_disk, generate_dumbbell, generate_fixed_hole,
                   generate_rectangle, read_mesh, write_mesh)
from .parabolic import ParabolicProblem, TimeGrid, solve_parabolic, write_trajectory
from .study import (StudyConfig, manufactured_error, run_dirichlet_study,
                    run_neumann_study, run_vi_study, write_report)
from .vi import ConvexConstraint, VIProblem, solve_parabolic_vi

__all__ = ["main", "ConfigError"]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


# ---------------------------------------------------------------------------
# config pieces
# ---------------------------------------------------------------------------

def _require(cfg, key, what):
    if key not in cfg:
        raise ConfigError(f"{what}: missing required key {key!r}")
    return cfg[key]


def _data_fn(spec, what):
    """Preset spec -> vectorized callable of (points, time), or None."""
    if spec is None:
        return None
    if not isinstance(spec, dict) or "preset" not in spec:
        raise ConfigError(f"{what}: expected an object with a 'preset' key")
    name = spec["preset"]
    params = [float(p) for p in spec.get("params", [])]

    def need(k):
        if len(params) != k:
            raise ConfigError(f"{what}: preset {name!r} takes {k} parameters")

    if name == "zero":
        return None
    if name == "constant":
        need(1)
        return lambda x, t=0.0: np.full(len(x), params[0])
    if name == "linear":
        need(3)
        return lambda x, t=0.0: params[0] + params[1] * x[:, 0] + params[2] * x[:, 1]
    if name == "sinprod":
        need(1)
        return lambda x, t=0.0: params[0] * np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
    if name == "quartic":
        need(1)
        return lambda x, t=0.0: (params[0] * x[:, 0] * (1.0 - x[:, 0])
                                 * x[:, 1] * (1.0 - x[:, 1]))
    if name == "bump":
        need(4)
        cx, cy, radius, height = params
        if radius <= 0:
            raise ConfigError(f"{what}: bump radius must be positive")

        def bump(x, t=0.0):
            s2 = ((x[:, 0] - cx) ** 2 + (x[:, 1] - cy) ** 2) / radius ** 2
            out = np.zeros(len(x))
            inside = s2 < 1.0
            out[inside] = height * np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
            return out
        return bump
    raise ConfigError(f"{what}: unknown data preset {name!r}")


def _coefficients_from(spec):
    if spec is None:
        return CoefficientSet.laplacian(1.0)
    preset = spec.get("preset", "laplacian")
    if preset == "laplacian":
        return CoefficientSet.laplacian(
            diffusion=float(spec.get("diffusion", 1.0)),
            c0=float(spec.get("c0", 0.0)),
            alpha=spec.get("alpha"),
            bound=spec.get("bound"),
            shift=float(spec.get("shift", 0.0)))
    if preset == "general":
        def entry(e):
            if np.isscalar(e):
                return Coefficient.constant(float(e))
            name, params = e
            return Coefficient(name, params)
        kwargs = {}
        if "a" in spec:
            kwargs["a"] = [[entry(e) for e in row] for row in spec["a"]]
        for key in ("a_lower", "b"):
            if key in spec:
                kwargs[key] = [entry(e) for e in spec[key]]
        if "c0" in spec:
            kwargs["c0"] = entry(spec["c0"])
        for key in ("alpha", "bound", "shift"):
            if key in spec:
                kwargs[key] = float(spec[key])
        return CoefficientSet(**kwargs)
    raise ConfigError(f"coefficients: unknown preset {preset!r}")


def _mesh_from(spec, used_inputs):
    if not isinstance(spec, dict):
        raise ConfigError("mesh: expected an object")
    if "file" in spec:
        used_inputs["mesh"] = spec["file"]
        return read_mesh(spec["file"])
    gen = _require(spec, "generator", "mesh")
    h = float(_require(spec, "h", "mesh"))
    if gen == "cracked_disk":
        return generate_cracked_disk(float(_require(spec, "delta", "mesh")), h)
    if gen == "dumbbell":
        return generate_dumbbell(float(_require(spec, "width", "mesh")), h)
    if gen == "fixed_hole":
        return generate_fixed_hole(float(_require(spec, "radius", "mesh")), h)
    if gen == "disk":
        return generate_disk(h)
    if gen == "rectangle":
        return generate_rectangle(h,
                                  x0=float(spec.get("x0", 0.0)),
                                  x1=float(spec.get("x1", 1.0)),
                                  y0=float(spec.get("y0", 0.0)),
                                  y1=float(spec.get("y1", 1.0)))
    raise ConfigError(f"mesh: unknown generator {gen!r}")


def _grid_from(spec):
    if not isinstance(spec, dict):
        raise ConfigError("grid: expected an object with T and steps")
    return TimeGrid(float(_require(spec, "T", "grid")),
                    int(_require(spec, "steps", "grid")))


def _family_from(spec):
    if not isinstance(spec, dict):
        raise ConfigError("family: expected an object")
    return DomainFamily(_require(spec, "kind", "family"),
                        float(_require(spec, "h", "family")),
                        n_max=int(spec.get("n_max", 6)),
                        params=spec.get("params"))


_HEAT_SINE = {
    "value": lambda x, t: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]) * math.exp(-t),
    "gradient": lambda x, t: math.exp(-t) * np.pi * np.column_stack([
        np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
        np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])]),
    "source": lambda x, t: ((2.0 * np.pi ** 2 - 1.0) * math.exp(-t)
                            * np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])),
}


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(outdir, command, config, input_paths, outputs, metrics=None):
    manifest = {
        "tool": "moscolab",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {role: _sha256(path) for role, path in sorted(input_paths.items())},
        "outputs": sorted(outputs),
    }
    if metrics is not None:
        manifest["metrics"] = metrics
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _write_timings(outdir, stages):
    path = os.path.join(outdir, "timings.txt")
    with open(path, "w") as fh:
        for name, seconds in stages:
            fh.write(f"{name} {seconds:.3f}\n")
    return path


def _load_config(path, used_inputs):
    used_inputs["config"] = path
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_mesh(args):
    h = args.h
    if args.family == "cracked_disk":
        if args.delta is None:
            raise ConfigError("cracked_disk needs --delta")
        mesh = generate_cracked_disk(args.delta, h)
    elif args.family == "dumbbell":
        if args.width is None:
            raise ConfigError("dumbbell needs --width")
        mesh = generate_dumbbell(args.width, h)
    elif args.family == "fixed_hole":
        if args.radius is None:
            raise ConfigError("fixed_hole needs --radius")
        mesh = generate_fixed_hole(args.radius, h)
    elif args.family == "disk":
        mesh = generate_disk(h)
    else:
        mesh = generate_rectangle(h)
    write_mesh(mesh, args.out)
    print(f"wrote {args.out}: {len(mesh.vertices)} vertices, "
          f"{len(mesh.triangles)} triangles")
    return 0


def cmd_solve(args):
    t0 = time.perf_counter()
    used_inputs = {}
    cfg = _load_config(args.config, used_inputs)
    problem_kind = cfg.get("problem", "parabolic")
    if problem_kind not in ("parabolic", "vi"):
        raise ConfigError(f"problem must be 'parabolic' or 'vi', got {problem_kind!r}")
    mesh = _mesh_from(_require(cfg, "mesh", "config"), used_inputs)
    grid = _grid_from(_require(cfg, "grid", "config"))
    coeffs = _coefficients_from(cfg.get("coefficients"))
    manufactured = cfg.get("manufactured")
    if manufactured is not None and manufactured != "heat_sine":
        raise ConfigError(f"unknown manufactured solution {manufactured!r}")
    if manufactured:
        bc = "dirichlet"
        source = _HEAT_SINE["source"]
        u0 = lambda x: _HEAT_SINE["value"](x, 0.0)
    else:
        bc = cfg.get("bc", "dirichlet")
        if bc not in ("dirichlet", "neumann"):
            raise ConfigError(f"bc must be 'dirichlet' or 'neumann', got {bc!r}")
        source = _data_fn(cfg.get("source"), "source")
        u0 = _data_fn(cfg.get("u0"), "u0")
    space = FunctionSpace(mesh, bc)
    t1 = time.perf_counter()

    os.makedirs(args.out, exist_ok=True)
    outputs = []
    if problem_kind == "vi":
        if bc != "dirichlet":
            raise ConfigError("obstacle solves use Dirichlet conditions")
        psi_fn = _data_fn(_require(cfg, "obstacle", "config"), "obstacle")
        psi = np.zeros(space.n_dofs) if psi_fn is None else psi_fn(space.dof_coords)
        psi = np.asarray(psi, dtype=float) + float(cfg.get("obstacle_shift", 0.0))
        constraint = ConvexConstraint(space, psi)
        problem = VIProblem(space, coeffs, source, u0, grid, constraint)
        traj = solve_parabolic_vi(problem)
        obs_path = os.path.join(args.out, "obstacle.txt")
        with open(obs_path, "w") as fh:
            fh.write("\n".join(format(v, ".17g") for v in constraint.lower) + "\n")
        outputs.append("obstacle.txt")
    else:
        problem = ParabolicProblem(space, coeffs, source, u0, grid,
                                   theta=float(cfg.get("theta", 1.0)))
        traj = solve_parabolic(problem, tol=float(cfg.get("tol", 1e-10)))
    t2 = time.perf_counter()

    write_trajectory(traj, args.out)
    outputs.append("traj.txt")
    outputs.extend(f"field_{k:04d}.txt" for k in range(grid.steps + 1))
    metrics = None
    if manufactured:
        err_l2h1, err_cl2 = manufactured_error(traj, _HEAT_SINE["value"],
                                               _HEAT_SINE["gradient"])
        metrics = {"err_L2H1": err_l2h1, "err_CL2": err_cl2}
    t3 = time.perf_counter()

    outputs.append("timings.txt")
    _write_timings(args.out, [("setup", t1 - t0), ("solve", t2 - t1),
                              ("write", t3 - t2)])
    _write_manifest(args.out, "solve", cfg, used_inputs, outputs, metrics)
    print(f"wrote {args.out}: {grid.steps + 1} time levels, {space.n_dofs} dofs")
    return 0


def cmd_study(args):
    t0 = time.perf_counter()
    used_inputs = {}
    cfg = _load_config(args.config, used_inputs)
    study_kind = _require(cfg, "study", "config")
    if study_kind not in ("dirichlet", "neumann", "vi"):
        raise ConfigError(f"study must be dirichlet, neumann or vi, got {study_kind!r}")
    grid = _grid_from(_require(cfg, "grid", "config"))
    common = dict(
        grid=grid,
        coeffs=_coefficients_from(cfg.get("coefficients")),
        source=_data_fn(cfg.get("source"), "source"),
        u0=_data_fn(cfg.get("u0"), "u0"),
        theta=float(cfg.get("theta", 1.0)),
        n_cells=int(cfg.get("n_cells", 128)),
        sup_from=cfg.get("sup_from"),
        indices=cfg.get("indices"),
        jobs=args.jobs,
    )
    if study_kind == "vi":
        mesh = _mesh_from(_require(cfg, "mesh", "config"), used_inputs)
        psi_fn = _data_fn(_require(cfg, "obstacle", "config"), "obstacle")
        study_cfg = StudyConfig(mesh=mesh,
                                obstacle=psi_fn if psi_fn is not None else 0.0,
                                obstacle_shifts=cfg.get("obstacle_shifts"),
                                **common)
        if common["indices"] is None:
            study_cfg.indices = list(range(1, int(cfg.get("n_max", 6)) + 1))
        report = run_vi_study(study_cfg)
    else:
        family = _family_from(_require(cfg, "family", "config"))
        study_cfg = StudyConfig(family=family, **common)
        runner = run_dirichlet_study if study_kind == "dirichlet" else run_neumann_study
        report = runner(study_cfg)
    t1 = time.perf_counter()

    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "report.csv")
    write_report(csv_path, report)
    outputs = ["report.csv", "timings.txt"]
    _write_timings(args.out, [("run", t1 - t0),
                              ("write", time.perf_counter() - t1)])
    _write_manifest(args.out, "study", cfg, used_inputs, outputs,
                    metrics={"report": report.to_dict()})
    print(f"wrote {csv_path}: verdict {report.verdict}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="moscolab",
        description="Finite element studies of domain perturbation for "
                    "parabolic equations and variational inequalities.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_mesh = sub.add_parser("mesh", help="generate a domain triangulation")
    p_mesh.add_argument("--family", required=True,
                        choices=["cracked_disk", "dumbbell", "fixed_hole",
                                 "disk", "rectangle"])
    p_mesh.add_argument("--h", type=float, required=True, help="target mesh size")
    p_mesh.add_argument("--delta", type=float, help="crack tip abscissa")
    p_mesh.add_argument("--width", type=float, help="dumbbell handle width")
    p_mesh.add_argument("--radius", type=float, help="hole radius")
    p_mesh.add_argument("--out", required=True, help="output mesh2d file")
    p_mesh.set_defaults(func=cmd_mesh)

    p_solve = sub.add_parser("solve", help="run one evolution from a config")
    p_solve.add_argument("--config", required=True, help="JSON run config")
    p_solve.add_argument("--out", required=True, help="output directory")
    p_solve.add_argument("--jobs", type=int, default=1,
                         help="concurrent solves (accepted for symmetry)")
    p_solve.set_defaults(func=cmd_solve)

    p_study = sub.add_parser("study", help="run a convergence study")
    p_study.add_argument("--config", required=True, help="JSON study config")
    p_study.add_argument("--out", required=True, help="output directory")
    p_study.add_argument("--jobs", type=int, default=1,
                         help="concurrent per-index solves")
    p_study.set_defaults(func=cmd_study)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SolverError, AssemblyError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, MeshError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Run configuration, command-line interface and result files.

Configuration files are INI documents with optional sections::

    [run]
    N = 16
    r = 2
    mult_degree = 3
    eps = 1.0
    mu = 1.0

    [time]
    dt = 0.006135923151542565
    steps = 1024
    vtk_stride = 0

    [eigen]
    sigma = 2.0
    tol = 1e-10
    reference = interpolant

    [convergence]
    r_list = 2, 3, 4, 5
    N_list = 2, 4, 8, 16, 32
    workers = 1

    [output]
    dir = out

    [solver]
    rank_tol = 1e-10

Command-line flags override file values.  Unknown sections or keys are
errors.
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from math import isclose, pi

import numpy as np

KINDS = ("time", "eigen", "convergence", "check", "mesh-info")
EXIT_CONFIG, EXIT_SOLVER, EXIT_IO, EXIT_CHECK = 2, 3, 4, 5


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    kind: str = "eigen"
    N: int = 16
    r: int = 2
    mult_degree: int | None = None
    eps: float = 1.0
    mu: float = 1.0
    dt: float | None = None
    steps: int | None = None
    t_end: float | None = None
    vtk_stride: int = 0
    sigma: float = 2.0
    tol: float = 1e-10
    reference: str = "interpolant"
    r_list: tuple = (2, 3, 4, 5)
    N_list: tuple = (2, 4, 8, 16, 32)
    workers: int = 1
    out: str = ""
    rank_tol: float = 1e-10
    echo: str = field(default="", repr=False)

    @property
    def m(self) -> int:
        return self.r + 1 if self.mult_degree is None else self.mult_degree

    @property
    def nonconforming(self) -> bool:
        return self.m <= self.r


# section -> key -> (attribute, parser)
def _ints(s):
    return tuple(int(v) for v in str(s).replace(",", " ").split())


SCHEMA = {
    "run": {"N": int, "r": int, "mult_degree": int, "eps": float, "mu": float},
    "time": {"dt": float, "steps": int, "t_end": float, "vtk_stride": int},
    "eigen": {"sigma": float, "tol": float, "reference": str},
    "convergence": {"r_list": _ints, "N_list": _ints, "workers": int},
    "output": {"dir": str},
    "solver": {"rank_tol": float},
}
_ATTR = {("output", "dir"): "out"}


def _convert(section, key, raw):
    try:
        return SCHEMA[section][key](raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from exc


def read_config_file(path) -> tuple[dict, str]:
    """Parse an INI file into {attribute: value}; returns (values, raw text)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            values[_ATTR.get((section, key), key)] = _convert(section, key, raw)
    return values, text


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.kind not in KINDS:
        raise ConfigError(f"kind: unknown experiment {cfg.kind!r}")
    if cfg.N < 1:
        raise ConfigError(f"N: must be a positive integer, got {cfg.N}")
    if not 2 <= cfg.r <= 5:
        raise ConfigError(f"r: supported range is 2..5, got {cfg.r}")
    if not 1 <= cfg.m <= 6:
        raise ConfigError(f"mult_degree: supported range is 1..6, got {cfg.m}")
    if cfg.eps <= 0 or cfg.mu <= 0:
        raise ConfigError("eps, mu: must be positive")
    if cfg.reference not in ("interpolant", "analytic"):
        raise ConfigError(f"reference: expected interpolant or analytic, got {cfg.reference!r}")
    for r in cfg.r_list:
        if not 2 <= r <= 5:
            raise ConfigError(f"r_list: degree {r} outside 2..5")
    for N in cfg.N_list:
        if N < 1:
            raise ConfigError(f"N_list: invalid N {N}")
    if cfg.vtk_stride < 0:
        raise ConfigError("vtk_stride: must be nonnegative")
    if cfg.kind == "time":
        given = [v is not None for v in (cfg.dt, cfg.steps, cfg.t_end)]
        if all(given):
            if not isclose(cfg.dt * cfg.steps, cfg.t_end, rel_tol=1e-12):
                raise ConfigError("t_end: dt * steps does not equal t_end")
        elif cfg.t_end is not None and cfg.dt is not None:
            cfg.steps = int(round(cfg.t_end / cfg.dt))
        elif cfg.t_end is not None and cfg.steps is not None:
            cfg.dt = cfg.t_end / cfg.steps
        if cfg.dt is None:
            cfg.dt = pi / 512
        if cfg.steps is None:
            cfg.steps = 1024
        if cfg.dt <= 0 or cfg.steps < 0:
            raise ConfigError("dt, steps: must be positive")
        cfg.t_end = cfg.dt * cfg.steps
    return cfg


def parse_config(kind: str, path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file, then explicit overrides."""
    values, echo = ({}, "") if path is None else read_config_file(path)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown key {key}")
    if not values.get("out"):
        values["out"] = os.environ.get("HYBRIDEM_OUT", "hybridem-out")
    return validate(RunConfig(kind=kind, echo=echo, **values))


# ---------------------------------------------------------------------------
# running


@dataclass
class ResultBundle:
    config: RunConfig
    files: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)


def _write_metadata(bundle: ResultBundle, wall: float):
    cfg = bundle.config
    meta = {
        "kind": cfg.kind,
        "config": {k: v for k, v in asdict(cfg).items() if k != "echo"},
        "nonconforming": cfg.nonconforming,
        "wall_time_s": round(wall, 3),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    meta.update(bundle.metadata)
    bundle.metadata = meta
    path = os.path.join(cfg.out, f"{cfg.kind}-metadata.json")
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    bundle.files.append(path)
    if cfg.echo:
        echo = os.path.join(cfg.out, f"{cfg.kind}-config.ini")
        with open(echo, "w") as fh:
            fh.write(cfg.echo)
        bundle.files.append(echo)


def _kernel_nullity(S) -> int | None:
    from .solvers import NULLSPACE_SIZE_LIMIT, nullspace_basis
    if S.B.shape[0] > NULLSPACE_SIZE_LIMIT // 4:
        return None
    return int(nullspace_basis(S.B).shape[1])


def run_time(cfg: RunConfig, bundle: ResultBundle):
    from .assembly import assemble
    from .mesh import generate_uniform_grid
    from .timedomain import run_time_domain
    S = assemble(generate_uniform_grid(cfg.N), cfg.r, cfg.m, cfg.eps, cfg.mu)
    csv_path = os.path.join(cfg.out, "time-series.csv")
    vtk_dir = os.path.join(cfg.out, "vtk") if cfg.vtk_stride else None
    if vtk_dir:
        os.makedirs(vtk_dir, exist_ok=True)
    series, state = run_time_domain(S, cfg.dt, cfg.steps, csv_path=csv_path,
                                    vtk_dir=vtk_dir, vtk_stride=cfg.vtk_stride)
    bundle.files.append(csv_path)
    bundle.metadata.update({
        "conforming_dim": S.conf.dim,
        "max_seminorm_Dhat": float(np.nanmax(series.column("seminorm_Dhat"))),
        "max_constraint_residual": float(np.nanmax(series.column("constraint_residual"))),
        "final_seminorm_D": float(series.column("seminorm_D")[-1]),
    })
    if cfg.nonconforming:
        bundle.metadata["kernel_nullity"] = _kernel_nullity(S)
    print(f"{cfg.steps} steps to t={state.t:.6g}; max |Dhat|_div = "
          f"{bundle.metadata['max_seminorm_Dhat']:.3e}; final |D|_div = "
          f"{bundle.metadata['final_seminorm_D']:.3e}")


def run_eigen_cmd(cfg: RunConfig, bundle: ResultBundle):
    from .frequencydomain import run_eigen
    from .vtk import write_snapshot
    eig, S = run_eigen(cfg.N, cfg.r, cfg.m, cfg.sigma, cfg.tol, cfg.reference)
    path = os.path.join(cfg.out, "eigen.csv")
    with open(path, "w") as fh:
        fh.write("r,N,omega2,residual,err_H,err_Hhat,err_D,err_Dhat,div_D,div_Dhat\n")
        e = eig.errors
        fh.write(",".join([str(cfg.r), str(cfg.N), repr(eig.omega2), repr(eig.residual)]
                          + [repr(e[k]) for k in ("err_H", "err_Hhat", "err_D", "err_Dhat",
                                                  "div_D", "div_Dhat")]) + "\n")
    bundle.files.append(path)
    if cfg.vtk_stride:
        from .timedomain import TimeState
        vtk = os.path.join(cfg.out, "eigenmode.vtk")
        write_snapshot(vtk, S, TimeState(0, 0.0, eig.A, eig.D, eig.Dhat, eig.Hhat))
        bundle.files.append(vtk)
    bundle.metadata.update({"omega2": eig.omega2, "residual": eig.residual, **eig.errors})
    print(f"omega_h^2 = {eig.omega2:.12g} (residual {eig.residual:.2e})")
    for k, v in eig.errors.items():
        print(f"  {k:9s} {v:.4e}")


def run_convergence(cfg: RunConfig, bundle: ResultBundle):
    from .frequencydomain import convergence_study
    table = convergence_study(cfg.r_list, cfg.N_list, cfg.sigma, cfg.workers, cfg.reference)
    path = os.path.join(cfg.out, "convergence.csv")
    table.write_csv(path)
    bundle.files.append(path)
    bundle.metadata["cells"] = [
        {"r": row["r"], "N": row["N"], "omega2": row["omega2"], "residual": row["residual"]}
        for row in table.rows]
    with open(path) as fh:
        sys.stdout.write(fh.read())


def run_mesh_info(cfg: RunConfig, bundle: ResultBundle):
    from .mesh import generate_uniform_grid
    mesh = generate_uniform_grid(cfg.N)
    info = {"N": cfg.N, "vertices": mesh.n_vertices, "cells": mesh.n_cells,
            "edges": mesh.n_edges, "boundary_edges": int(mesh.boundary_edge.sum()),
            "h": mesh.h}
    bundle.metadata.update(info)
    print(f"{mesh.n_cells} cells, {mesh.n_vertices} vertices, {mesh.n_edges} edges "
          f"({info['boundary_edges']} on the boundary), h = {mesh.h:.6g}")


def run_check(cfg: RunConfig, bundle: ResultBundle):
    from .selfcheck import run_all
    results = run_all()
    failed = [name for name, ok, _ in results if not ok]
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    bundle.metadata["checks"] = {name: ok for name, ok, _ in results}
    if failed:
        raise CheckFailed(", ".join(failed))


class CheckFailed(RuntimeError):
    pass


RUNNERS = {"time": run_time, "eigen": run_eigen_cmd, "convergence": run_convergence,
           "check": run_check, "mesh-info": run_mesh_info}


def run(cfg: RunConfig) -> ResultBundle:
    bundle = ResultBundle(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.perf_counter()
    RUNNERS[cfg.kind](cfg, bundle)
    _write_metadata(bundle, time.perf_counter() - t0)
    return bundle


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridem",
                                description="Hybrid finite elements for 2-D Maxwell.")
    p.add_argument("kind", choices=KINDS, metavar="subcommand",
                   help="one of: " + ", ".join(KINDS))
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--N", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--mult-degree", dest="mult_degree", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--out", help="output directory (default $HYBRIDEM_OUT)")
    p.add_argument("--vtk-stride", dest="vtk_stride", type=int)
    p.add_argument("--r-list", dest="r_list", type=_ints, help="e.g. '2,3'")
    p.add_argument("--N-list", dest="N_list", type=_ints, help="e.g. '2,4,8'")
    p.add_argument("--workers", type=int)
    p.add_argument("--reference", choices=("interpolant", "analytic"))
    return p


def main(argv=None) -> int:
    from .solvers import SolverError
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("kind", "config")}
    try:
        cfg = parse_config(args.kind, args.config, overrides)
        run(cfg)
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailed as exc:
        print(f"error[check]: failed suites: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except SolverError as exc:
        print(f"error[solver]: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())

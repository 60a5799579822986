"""Command-line front end.

Every subcommand reads an optional flat config file, applies flag overrides,
validates everything, then solves and writes ``<subcommand>.json`` (and CSV
fields with ``--csv``) into the output directory.

Exit codes: 0 success, 1 solver failure (or failed acceptance criteria),
2 configuration error.  Nothing is written when the configuration is
rejected.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .config import (OUTPUT_ENV, RunConfig, build_run_config, load_config,
                     resolve_output_dir)
from .errors import ConfigError, MesovortexError, ResolutionError

log = logging.getLogger("mesovortex")

# flag dest -> config key
FLAG_KEYS = {
    "shape": "shape", "radius": "radius", "inclusion_radius": "inclusion_radius",
    "a": "a", "nx": "nx", "ny": "ny", "omega": "solver.omega", "tol": "solver.tol",
    "max_iter": "solver.max_iter", "lambdas": "obstacle.lambdas", "factors": "obstacle.factors",
    "epsilons": "ueps.epsilons", "R": "radial.R", "N": "radial.N", "m": "radial.m",
    "sources": "green.sources", "epsilon": "green.epsilon", "seed": "seed",
    "scale": "accept.scale", "only": "accept.only",
}


def _versions() -> dict:
    import scipy
    return {"mesovortex": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _grid_and_p(cfg: RunConfig):
    from .geometry import build_grid, pinning_field
    grid = build_grid(cfg.domain)
    return grid, pinning_field(grid)


def _lambda_list(cfg, crit):
    lams = list(cfg.lambdas) + [f * crit.lambda0 for f in cfg.lambda_factors]
    return sorted(lams)


# ------------------------------------------------------------ subcommands
# each returns (results, csv_fields, grid_hash, ok); csv_fields is a list of
# (file name, grid, values, field name)

def cmd_solve_h0(cfg):
    from .fields import solve_h0
    from .obstacle import critical_lambdas
    grid, p = _grid_and_p(cfg)
    h0 = solve_h0(grid, p)
    crit = critical_lambdas(grid, p, h0)
    res = {"nodes": grid.n, "s1_nodes": int(grid.s1.sum()), "s2_nodes": int(grid.s2.sum()),
           "min_h0": float(h0.min()), "max_h0": float(h0.max()), "critical": crit.as_dict()}
    return res, [("h0.csv", grid, h0, "h0")], grid.grid_hash, True


def cmd_green(cfg):
    from .fields import green_column, nearest_node
    grid, p = _grid_and_p(cfg)
    coeff = 1.0 / p
    if cfg.green_epsilon is not None:
        from .finite_eps import solve_ueps
        coeff = 1.0 / solve_ueps(grid, p, cfg.green_epsilon).u ** 2
    nodes = [nearest_node(grid, x, y) for x, y in cfg.sources]
    cols = [green_column(grid, coeff, k).values for k in nodes]
    cross = [[float(c[k]) for k in nodes] for c in cols]
    sym = 0.0
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            sym = max(sym, abs(cross[i][j] - cross[j][i]) / max(abs(cross[i][j]), 1e-300))
    res = {"epsilon": cfg.green_epsilon,
           "sources": [{"x": float(grid.xs[k]), "y": float(grid.ys[k]), "node": int(k),
                        "min": float(c.min()), "max": float(c.max())} for k, c in zip(nodes, cols)],
           "values_at_sources": cross, "symmetry_error": sym}
    csvs = [(f"green_{i}.csv", grid, c, "G") for i, c in enumerate(cols)]
    return res, csvs, grid.grid_hash, True


def _obstacle_csvs(grid, sol, k):
    mask = np.where(sol.w1, 1.0, np.where(sol.w2, 2.0, 0.0))
    return [(f"h_star_{k}.csv", grid, sol.h_star, "h_star"),
            (f"mu_star_{k}.csv", grid, sol.mu_star.density, "mu_star_density"),
            (f"coincidence_{k}.csv", grid, mask, "coincidence (0 none, 1 S1, 2 S2)")]


def cmd_obstacle(cfg):
    from .fields import solve_h0
    from .obstacle import critical_lambdas, solve_obstacle
    grid, p = _grid_and_p(cfg)
    h0 = solve_h0(grid, p)
    crit = critical_lambdas(grid, p, h0)
    rows, csvs = [], []
    for k, lam in enumerate(_lambda_list(cfg, crit)):
        sol = solve_obstacle(grid, p, lam, omega=cfg.omega, tol=cfg.tol, x0=h0,
                             max_iter=cfg.max_iter)
        row = sol.summary(p)
        row["near_threshold"] = bool(abs(lam / crit.lambda0 - 1.0) < 2 * grid.h)
        rows.append(row)
        csvs += _obstacle_csvs(grid, sol, k)
    return {"critical": crit.as_dict(), "rows": rows}, csvs, grid.grid_hash, True


def cmd_sweep(cfg):
    from .fields import solve_h0
    from .obstacle import critical_lambdas, sweep_lambda
    grid, p = _grid_and_p(cfg)
    crit = critical_lambdas(grid, p, solve_h0(grid, p))
    res = sweep_lambda(grid, p, _lambda_list(cfg, crit), omega=cfg.omega, tol=cfg.tol,
                       keep_solutions=cfg.write_csv, critical=crit)
    csvs = []
    for k, sol in enumerate(res.solutions):
        csvs += _obstacle_csvs(grid, sol, k)
    out = {"critical": crit.as_dict(), **res.as_dict()}
    return out, csvs, grid.grid_hash, res.failed_at is None


def cmd_radial(cfg):
    from .errors import ConvergenceError
    from .radial import RadialParams, radial_lambdas, series_coefficients, shoot_ode, small_a_check
    params = RadialParams(cfg.radial_R, cfg.radial_a, cfg.radial_N, cfg.radial_m,
                          allow_degenerate=cfg.domain.allow_degenerate)
    prof = shoot_ode(params)
    crit = radial_lambdas(params, prof)
    res = {"R": params.R, "a": params.a, "N": params.N, "m": params.m,
           "lambda1": crit.lambda1, "lambda2": crit.lambda2, "lambda0": crit.lambda0,
           "lambda2_lt_lambda1": bool(crit.lambda2 < crit.lambda1),
           "a0": None, "alpha": None, "beta": None, "c0": None, "holds": None, "notes": []}
    try:
        ser = series_coefficients(params)
        res.update(a0=ser.a0, alpha=ser.alpha, beta=ser.beta, series_ratio=ser.ratio)
    except ConvergenceError as exc:
        res["notes"].append(f"power series unavailable: {exc}")
    if params.R > 0.5:
        chk = small_a_check(params.R)
        res.update(c0=chk["c0"], holds=chk["holds"], one_minus_alpha_inv=chk["one_minus_alpha_inv"])
    else:
        res["notes"].append("small-a limit needs R > 1/2")
    profile = "r,h,dh\n" + "".join(f"{r:.17g},{h:.17g},{d:.17g}\n"
                                   for r, h, d in zip(prof.r, prof.h, prof.dh))
    return res, [("radial_profile.csv", None, profile, "profile")], None, True


def cmd_ueps(cfg):
    from .finite_eps import decay_fit, solve_ueps
    grid, p = _grid_and_p(cfg)
    rows, csvs = [], []
    for eps in cfg.epsilons:
        sol = solve_ueps(grid, p, eps)
        row = sol.summary()
        try:
            row["delta_hat"] = decay_fit(grid, sol, p)["delta_hat"]
        except ResolutionError as exc:
            row["delta_hat"] = None
            row["note"] = str(exc)
        rows.append(row)
        csvs.append((f"u_eps_{eps:g}.csv", grid, sol.u, "u_eps"))
    return {"runs": rows}, csvs, grid.grid_hash, True


def cmd_accept(cfg):
    from .acceptance import format_line, run_acceptance
    results = run_acceptance(cfg.scale, cfg.seed, cfg.only)
    for r in results:
        print(format_line(r), flush=True)
    lines = "".join(r.json_line() + "\n" for r in results)
    summary = {"scale": cfg.scale, "passed": sum(r.passed for r in results),
               "total": len(results)}
    return summary, [("acceptance.jsonl", None, lines, "report")], None, all(r.passed for r in results)


COMMANDS = {"solve-h0": cmd_solve_h0, "green": cmd_green, "obstacle": cmd_obstacle,
            "sweep": cmd_sweep, "radial": cmd_radial, "ueps": cmd_ueps, "accept": cmd_accept}


def run(cfg: RunConfig, out_dir: str) -> int:
    """Execute a validated configuration and write its artifacts."""
    from .fields import atomic_write, write_field_csv
    t0 = time.perf_counter()
    try:
        results, csvs, grid_hash, ok = COMMANDS[cfg.subcommand](cfg)
    except MesovortexError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    wall = time.perf_counter() - t0

    os.makedirs(out_dir, exist_ok=True)
    for name, grid, values, label in csvs:
        path = os.path.join(out_dir, name)
        if grid is None:
            # pre-formatted text: the acceptance report is always written
            if label == "report" or cfg.write_csv:
                atomic_write(path, values)
        elif cfg.write_csv:
            write_field_csv(path, grid, values, name=label)
    meta = {"subcommand": cfg.subcommand, "config": cfg.echo(), "versions": _versions(),
            "grid_hash": grid_hash, "wall_time": wall}
    atomic_write(os.path.join(out_dir, f"{cfg.subcommand}.json"),
                 _dumps({"meta": meta, "results": results}))
    log.info("wrote %s", out_dir)
    return 0 if ok else 1


# ------------------------------------------------------------------ parser

def _add_common(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--out", help=f"output directory (overrides {OUTPUT_ENV} and output.dir)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key; may be repeated")
    p.add_argument("--csv", action="store_true", default=None, help="also write field CSVs")
    p.add_argument("--seed", type=int, help="seed for randomized probes")
    p.add_argument("-v", "--verbose", action="store_true")
    g = p.add_argument_group("domain")
    g.add_argument("--shape", choices=["disc", "rectangle"])
    g.add_argument("--radius", type=float)
    g.add_argument("--inclusion-radius", type=float)
    g.add_argument("--a", type=float, help="pinning value in S2")
    g.add_argument("--nx", type=int)
    g.add_argument("--ny", type=int)
    s = p.add_argument_group("solver")
    s.add_argument("--omega", type=float)
    s.add_argument("--tol", type=float)
    s.add_argument("--max-iter", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mesovortex", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("solve-h0", help="vortex-free field and critical ratios")
    _add_common(p)

    p = sub.add_parser("green", help="Green columns at source points")
    _add_common(p)
    p.add_argument("--sources", help="x1,y1,x2,y2,...")
    p.add_argument("--epsilon", type=float, help="use the conductivity 1/u_eps^2")

    for name, text in (("obstacle", "obstacle problem at each lambda"),
                       ("sweep", "warm-started lambda sweep with nesting report")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--lambdas", help="comma separated lambda values")
        p.add_argument("--factors", help="comma separated multiples of lambda0")

    p = sub.add_parser("radial", help="radial series, shooting and critical ratios")
    _add_common(p)
    p.add_argument("--R", type=float, help="inclusion radius")
    p.add_argument("--N", type=int, help="series truncation order")
    p.add_argument("--m", type=int, help="shooting steps")

    p = sub.add_parser("ueps", help="zero-field minimizer for a list of eps")
    _add_common(p)
    p.add_argument("--epsilons", help="comma separated eps values")

    p = sub.add_parser("accept", help="run the acceptance suite")
    _add_common(p)
    p.add_argument("--scale", choices=["desk", "reduced"])
    p.add_argument("--only", help="comma separated criterion numbers")
    return parser


def _merge(args) -> dict:
    values = load_config(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        values[key] = value
    for dest, key in FLAG_KEYS.items():
        v = getattr(args, dest, None)
        if v is not None:
            if dest == "a" and args.subcommand == "radial":
                key = "radial.a"
            values[key] = v
    if args.csv:
        values["output.csv"] = True
    return values


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_run_config(args.subcommand, _merge(args))
        out_dir = resolve_output_dir(cfg, args.out)
        if os.path.exists(out_dir) and not os.path.isdir(out_dir):
            raise ConfigError(f"output path {out_dir} is not a directory")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run(cfg, out_dir)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Every subcommand writes plain CSV/JSON and a manifest recording the inputs,
their SHA-256 hash, library versions, wall time and output hashes.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import LatticeBathError, NumericalError, ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
OPERATIONS = ("levelset", "greens", "ghost", "scan", "orbit", "simulate", "ensemble", "reproduce")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _versions() -> dict:
    import scipy
    return {"latticebath": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(path, command: str, inputs: dict, outputs, seconds: float, summary=None,
                   extra_input_bytes: bytes = b"") -> dict:
    """Write a JSON manifest; output files are hashed so reruns can be compared."""
    canon = json.dumps(inputs, sort_keys=True, default=str).encode() + extra_input_bytes
    outs = []
    for f in outputs:
        p = Path(f)
        if p.is_file():
            outs.append({"path": str(p), "sha256": _sha(p.read_bytes())})
    man = {"command": command, "inputs": inputs, "inputs_sha256": _sha(canon),
           "versions": _versions(), "timings": {"seconds": seconds}, "outputs": outs,
           "summary": summary or {}}
    Path(path).write_text(json.dumps(man, indent=2, default=_jsonable))
    return man


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    if hasattr(x, "__dict__"):
        return x.__dict__
    return str(x)


# ---------------------------------------------------------------------------
# argument helpers

def _model(args):
    from . import lattice as lat
    if args.model == "square":
        return lat.build_square(args.jx, args.jy)
    if args.model == "honeycomb":
        return lat.build_honeycomb(args.jx, args.t_nnn * args.jx)
    if args.model == "file":
        if not args.lattice:
            raise ValidationError("--model file needs --lattice PATH")
        return lat.from_json(Path(args.lattice).read_text())
    raise ValidationError(f"unknown model {args.model!r}")


def _pair(text):
    try:
        a, b = (float(v) for v in str(text).replace(";", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from None
    return a, b


def _band(args, spec):
    if args.band == "all":
        return None
    b = int(args.band)
    if not 0 <= b < spec.n_sub:
        raise ValidationError(f"band {b} outside 0..{spec.n_sub - 1}")
    return b


def _out_path(args, default):
    if args.out:
        p = Path(args.out)
    else:
        p = Path(args.out_dir) / default
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _common(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=("square", "honeycomb", "file"), default="square")
    g.add_argument("--lattice", help="lattice JSON document (with --model file)")
    g.add_argument("--jx", type=float, default=1.0, help="J_x (square) or J_1 (honeycomb)")
    g.add_argument("--jy", type=float, default=1.0)
    g.add_argument("--t-nnn", type=float, default=0.0, help="honeycomb J_2 / J_1")
    g.add_argument("--band", default="0", help="band index or 'all'")
    g.add_argument("--delta", type=float, default=-1.0)
    g.add_argument("--alpha", type=float, default=0.01)
    g.add_argument("--g", type=float, default=0.1)
    g.add_argument("--chi", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--scale", choices=("desk", "full"), default="desk")
    g.add_argument("--out-dir", default=".")
    g.add_argument("--out", default=None, help="main output file")


# ---------------------------------------------------------------------------
# subcommands

def cmd_levelset(args):
    from . import resonant as res
    spec = _model(args)
    band = _band(args, spec) or 0
    rs = res.extract(spec, band, args.delta, grid_n=args.grid)
    out = _out_path(args, "levelset.csv")
    rs.to_csv(out)
    summ = {"n_curves": len(rs.curves), "closed": rs.closed, "length": rs.length,
            "winding_vectors": [list(map(int, c.winding_vector)) for c in rs.curves]}
    try:
        n, r = res.winding(rs)
        summ.update(winding=n, winding_residual=r)
    except LatticeBathError as exc:
        summ["winding_error"] = str(exc)
    cl = res.caustics(rs)
    summ["caustics"] = [{"k": c.k.tolist(), "direction": c.direction.tolist(), "order": c.order,
                         "curve_id": c.curve_id} for c in cl]
    return [out], summ


def _rho_list(args, spec):
    if args.rho:
        return np.array(args.rho, dtype=float)
    st = np.asarray(args.direction, float) @ spec.vectors
    n = np.arange(args.n_min, args.n_max + 1)
    return n[:, None] * st


def cmd_greens(args):
    from . import greens as gf
    spec = _model(args)
    band = _band(args, spec)
    rho = _rho_list(args, spec)
    sub = tuple(args.sub)
    cols = {"rho_x": rho[:, 0], "rho_y": rho[:, 1]}
    methods = ("exact", "tube", "stationary", "brute") if args.method == "all" else (args.method,)
    for m in methods:
        if m == "exact":
            G = np.atleast_1d(gf.greens_exact(spec, band, rho, args.delta, sub=sub))
        elif m == "tube":
            G = np.atleast_1d(gf.tube_approximant(spec, band, rho, args.delta, eps=args.eps, sub=sub))
        elif m == "stationary":
            G = np.array([gf.stationary_phase(spec, band, r, args.delta, sub=sub) for r in rho])
        else:
            G = np.atleast_1d(gf.omega_brute(spec, band, rho, args.delta, sub=sub).G)
        cols[f"{m}_re"] = G.real
        cols[f"{m}_im"] = G.imag
    out = _out_path(args, "greens.csv")
    np.savetxt(out, np.column_stack(list(cols.values())), delimiter=",", header=",".join(cols),
               comments="", fmt="%.15g")
    return [out], {"n": len(rho), "methods": list(methods)}


def cmd_ghost(args):
    import math

    from . import greens as gf
    from . import recipes
    from . import resonant as res
    spec = _model(args)
    band = _band(args, spec) or 0
    rs = res.extract(spec, band, args.delta)
    if args.theta_c is None:
        cl = res.caustics(rs)
        if not cl:
            raise ValidationError("no caustic on this resonant set; pass --theta-c")
        thc = min(abs(math.atan2(c.direction[1], c.direction[0])) for c in cl)
    else:
        thc = args.theta_c
    dirs = recipes.ghost_directions(spec, thc, args.dmin, args.dmax, args.max_step)
    if len(dirs) < 3:
        raise ValidationError("fewer than three lattice directions in the requested window")
    scan = gf.ghost_scan(spec, band, args.delta, thc, dirs, recipes._ghost_n_range(spec, thc),
                         r2_min=args.r2_min)
    dth = np.abs(scan.thetas - thc)
    kfit = scan.prefactor * dth ** scan.p
    out = _out_path(args, "ghost.csv")
    np.savetxt(out, np.column_stack([scan.thetas, scan.kappa, kfit]), delimiter=",",
               header="theta,kappa_exact,kappa_fit", comments="", fmt="%.15g")
    return [out], {"theta_c": thc, "p": scan.p, "r2": scan.r2, "prefactor": scan.prefactor}


def cmd_orbit(args):
    from . import resonant as res
    from . import semiclassics as sc
    spec = _model(args)
    band = _band(args, spec) or 0
    rs = res.extract(spec, band, args.delta)
    k0 = np.array(args.k0) if args.k0 else rs.curves[0].k[0]
    summ = {"k0": list(map(float, k0))}
    try:
        op = sc.orbit_periods(rs, args.alpha)
        summ.update(l=op.l.tolist(), tau=op.tau, tau_from_gamma=op.tau_from_gamma,
                    transverse_extent=op.transverse_extent)
        t_max = args.periods * op.tau if args.t_max is None else args.t_max
    except LatticeBathError as exc:
        summ["periods_error"] = str(exc)
        t_max = args.t_max
    tr = sc.integrate_orbit(spec, band, k0, (0.0, 0.0), args.alpha, t_max=t_max)
    out = _out_path(args, "orbit.csv")
    tr.to_csv(out)
    summ.update(classification=tr.classification, ode_period=tr.period, ode_l=tr.l.tolist(),
                energy_drift=tr.energy_drift)
    return [out], summ


def _sim_config(args):
    from . import bath
    if args.config:
        cfg = bath.load_config(args.config)
        return cfg
    if args.model != "square":
        raise ValidationError("simulate builds square lattices only")
    ems = args.emitter or [(0.0, 0.0)]
    t = np.linspace(0.0, args.t_max, args.n_t)
    snaps = args.snapshot if args.snapshot else [t[-1]]
    t = np.unique(np.r_[t, snaps])
    return bath.SimulationConfig(
        nx=args.nx, ny=args.ny, jx=args.jx, jy=args.jy, alpha=args.alpha,
        emitters=[bath.Emitter(int(x), int(y), args.delta, args.g) for x, y in ems],
        obstructions=[tuple(map(int, o)) for o in (args.obstruction or [])], chi=args.chi,
        seed=args.seed, t_grid=list(t), snapshot_times=list(snaps), slices=args.slice or [])


def cmd_simulate(args):
    from . import bath
    cfg = _sim_config(args)
    if args.state == "dark":
        init = bath.dark_state(len(cfg.emitters), cfg)
    else:
        init = bath.excite(cfg, np.eye(len(cfg.emitters))[0])
    r = bath.evolve(cfg, init)
    out = Path(args.out_dir)
    man = r.write(out)
    files = [out / f for f in man["files"]["snapshots"].values()]
    files += [out / f for f in man["files"]["slices"].values()]
    files.append(out / man["files"]["emitters"])
    return files, {"max_norm_drift": man["max_norm_drift"], "edge_population": man["edge_population"],
                   "final_emitter_population": float(r.total_emitter_population[-1])}


def cmd_ensemble(args):
    from . import bath
    cfg = _sim_config(args)
    e = bath.disorder_ensemble(cfg, args.n_real, cfg.snapshot_times, slice_y=args.slice_y,
                               workers=args.threads)
    out = _out_path(args, "ensemble.csv")
    e.to_csv(out)
    files = [out]
    if args.slice_y is not None:
        sp = out.with_name(out.stem + "_slice.csv")
        e.slice_csv(sp)
        files.append(sp)
    return files, {"n_realizations": e.n_realizations, "times": e.times.tolist()}


def _parse_set(items):
    out = {}
    for it in items or []:
        if "=" not in it:
            raise ValidationError(f"--set expects key=value, got {it!r}")
        k, v = it.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def cmd_reproduce(args):
    from . import recipes
    over = _parse_set(args.set)
    r = recipes.reproduce(args.figure, args.scale, args.out_dir, threads=args.threads, **over)
    return r.files, dict(r.summary, params=r.params)


COMMANDS = dict(levelset=cmd_levelset, greens=cmd_greens, ghost=cmd_ghost, scan=cmd_ghost,
                orbit=cmd_orbit,
                simulate=cmd_simulate, ensemble=cmd_ensemble, reproduce=cmd_reproduce)


def build_parser() -> argparse.ArgumentParser:
    from .recipes import FIGURES
    p = _Parser(prog="latticebath", description="Lattice Green's functions, resonant-set "
                "geometry, magnetic orbits and emitter-bath dynamics.")
    p.add_argument("--version", action="version", version=f"latticebath {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("levelset", help="extract the resonant set S(Delta) as CSV")
    _common(s)
    s.add_argument("--grid", type=int, default=512)

    s = sub.add_parser("greens", help="G(rho, Delta) by exact, tube, stationary or brute evaluation")
    _common(s)
    s.add_argument("--rho", type=_pair, action="append", help="separation 'x,y' (repeatable)")
    s.add_argument("--direction", type=int, nargs=2, default=(1, 1), metavar=("P", "Q"),
                   help="lattice step p a1 + q a2 (with --n-min/--n-max)")
    s.add_argument("--n-min", type=int, default=1)
    s.add_argument("--n-max", type=int, default=10)
    s.add_argument("--sub", type=int, nargs=2, default=(0, 0), metavar=("I", "J"))
    s.add_argument("--method", choices=("exact", "tube", "stationary", "brute", "all"),
                   default="exact")
    s.add_argument("--eps", type=float, default=None, help="tube radius")

    s = sub.add_parser("ghost", aliases=["scan"], help="ghost-wave decay rates beyond a caustic")
    _common(s)
    s.add_argument("--theta-c", type=float, default=None)
    s.add_argument("--dmin", type=float, default=0.02)
    s.add_argument("--dmax", type=float, default=0.2)
    s.add_argument("--max-step", type=float, default=12.0)
    s.add_argument("--r2-min", type=float, default=0.98)

    s = sub.add_parser("orbit", help="semiclassical orbit periods and trajectory")
    _common(s)
    s.add_argument("--k0", type=float, nargs=2, default=None)
    s.add_argument("--t-max", type=float, default=None)
    s.add_argument("--periods", type=float, default=3.0)

    for name, hlp in (("simulate", "time evolution of emitters in a finite lattice"),
                      ("ensemble", "disorder-averaged log populations")):
        s = sub.add_parser(name, help=hlp)
        _common(s)
        s.add_argument("--config", help="SimulationConfig as JSON or TOML")
        s.add_argument("--nx", type=int, default=61)
        s.add_argument("--ny", type=int, default=401)
        s.add_argument("--emitter", type=_pair, action="append", help="emitter site 'x,y'")
        s.add_argument("--obstruction", type=_pair, action="append", help="obstruction site 'x,y'")
        s.add_argument("--t-max", type=float, default=10.0)
        s.add_argument("--n-t", type=int, default=11)
        s.add_argument("--snapshot", type=float, action="append")
        s.add_argument("--slice", type=float, action="append", help="row y to record")
        if name == "simulate":
            s.add_argument("--state", choices=("first", "dark"), default="first")
        else:
            s.add_argument("--n-real", type=int, default=100)
            s.add_argument("--slice-y", type=float, default=None)

    s = sub.add_parser("reproduce", help="regenerate the data of one figure")
    _common(s)
    s.add_argument("figure", choices=FIGURES)
    s.add_argument("--set", action="append", help="override a recipe parameter, key=value")

    s = sub.add_parser("run", help="execute an experiment recipe (JSON or TOML)")
    s.add_argument("recipe")
    s.add_argument("--out-dir", default=None, help="override the recipe's output directory")
    s.add_argument("--threads", type=int, default=None)
    return p


# ---------------------------------------------------------------------------
# recipes

def load_recipe(path) -> dict:
    """Parse and validate an experiment recipe.

    Schema::

        name       : str
        operation  : one of levelset, greens, ghost, orbit, simulate, ensemble, reproduce
        params     : table of command-line options (without leading dashes);
                     for reproduce, "figure" plus optional "scale" and "set" table
        outputs    : {"out_dir": str, "out": str (optional)}
        seed       : int (optional)
    """
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python 3.10
            import tomli as tomllib
        try:
            rec = tomllib.loads(raw.decode())
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"recipe is not valid TOML: {exc}") from None
    else:
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"recipe is not valid JSON: {exc}") from None
    if not isinstance(rec, dict):
        raise ValidationError("recipe must be a table")
    allowed = {"name", "operation", "module", "params", "outputs", "seed"}
    extra = set(rec) - allowed
    if extra:
        raise ValidationError(f"unknown recipe fields: {', '.join(sorted(extra))}")
    if not isinstance(rec.get("name"), str) or not rec["name"]:
        raise ValidationError("recipe needs a non-empty string 'name'")
    if rec.get("operation") not in OPERATIONS:
        raise ValidationError(f"recipe 'operation' must be one of {', '.join(OPERATIONS)}")
    if not isinstance(rec.get("params", {}), dict):
        raise ValidationError("recipe 'params' must be a table")
    if not isinstance(rec.get("outputs", {}), dict):
        raise ValidationError("recipe 'outputs' must be a table")
    if "seed" in rec and not isinstance(rec["seed"], int):
        raise ValidationError("recipe 'seed' must be an integer")
    rec["_bytes"] = raw
    return rec


def recipe_argv(rec: dict, out_dir=None, threads=None) -> list:
    """Translate a recipe into the argument vector of its subcommand."""
    params = dict(rec.get("params", {}))
    argv = [rec["operation"]]
    if rec["operation"] == "reproduce":
        if "figure" not in params:
            raise ValidationError("reproduce recipe needs params.figure")
        argv.append(str(params.pop("figure")))
        for k, v in (params.pop("set", None) or {}).items():
            argv += ["--set", f"{k}={json.dumps(v)}"]
    outs = rec.get("outputs", {})
    params.setdefault("out_dir", out_dir or outs.get("out_dir", "."))
    if out_dir:
        params["out_dir"] = out_dir
    if outs.get("out"):
        params.setdefault("out", str(Path(params["out_dir"]) / outs["out"]))
    if "seed" in rec:
        params["seed"] = rec["seed"]
    if threads:
        params["threads"] = threads
    for k, v in params.items():
        flag = "--" + k.replace("_", "-")
        if isinstance(v, bool):
            if v:
                argv.append(flag)
        elif isinstance(v, (list, tuple)) and v and isinstance(v[0], (list, tuple)):
            for item in v:
                argv += [flag, ",".join(str(x) for x in item)]
        elif isinstance(v, (list, tuple)):
            argv += [flag] + [str(x) for x in v]
        else:
            argv += [flag, str(v)]
    return argv


def _execute(args, argv, extra=b"", name=None):
    t0 = time.perf_counter()
    files, summ = COMMANDS[args.command](args)
    dt = time.perf_counter() - t0
    inputs = {k: v for k, v in vars(args).items() if k != "func"}
    stem = name or args.command
    out = getattr(args, "out", None)
    base = Path(out).parent if out else Path(args.out_dir)
    mp = base / f"{stem}.manifest.json"
    mp.parent.mkdir(parents=True, exist_ok=True)
    write_manifest(mp, " ".join(argv), inputs, files, dt, summ, extra)
    print(json.dumps({"manifest": str(mp), "outputs": [str(f) for f in files], "seconds": dt},
                     default=_jsonable))


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    stage = "arguments"
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            stage = "recipe"
            rec = load_recipe(args.recipe)
            sub_argv = recipe_argv(rec, args.out_dir, args.threads)
            sub_args = parser.parse_args(sub_argv)
            stage = sub_args.command
            _execute(sub_args, sub_argv, rec["_bytes"], name=rec["name"])
        else:
            stage = args.command
            _execute(args, argv)
        return EXIT_OK
    except ValidationError as exc:
        print(f"error [{stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"error [{stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError) as exc:
        print(f"error [{stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end.

Every subcommand reads a model JSON file and writes one JSON record (or a CSV
table for ``study``) to ``--out`` or standard output. Exit codes: 0 success,
1 validation failure, 2 usage or domain error, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .asym import VARIANTS, WindowPolicy, martin_kernel, predict_green, prefactor_select, ray_study
from .errors import ConvergenceError, DomainError, ModelError, UnstableStudyError
from .genfun import solve_alpha, twisted_measure
from .green import (
    DEFAULT_MAX_STEPS,
    DEFAULT_TOL,
    green_mc,
    harmonic_from_dp,
    harmonic_h,
    harmonicity_residual,
    run_killed_dp,
)
from .model import check_a1, check_a2, default_window, load_model, smallest_cone_point
from .series import TorusGrid, functional_eq_residual, killed_green_table

log = logging.getLogger("conegreen")

THREADS_ENV = "CONEGREEN_THREADS"
EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    """Bad command line input detected after parsing."""


# --------------------------------------------------------------------------
# output


def _fmt_float(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    return format(v, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float printed to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _emit_json(record: dict, args) -> None:
    _emit(dumps(record) + "\n", args.out)


# --------------------------------------------------------------------------
# argument types


def int_vector(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list of integers") from None


def float_vector(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list of numbers") from None
    if not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError("entries must be finite")
    return vals


def complex_vector(text: str) -> tuple[complex, ...]:
    try:
        return tuple(complex(t.replace(" ", "")) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list of complex numbers") from None


def positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def positive_float(text: str) -> float:
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be a positive number")
    return v


def _direction(u: Sequence[float], d: int) -> np.ndarray:
    v = np.asarray(u, dtype=float)
    if v.shape != (d,):
        raise UsageError(f"direction must have {d} entries")
    n = float(np.linalg.norm(v))
    if n == 0:
        raise UsageError("direction must be nonzero")
    return v / n


def _check_dim(name: str, v, d: int) -> None:
    if v is not None and len(v) != d:
        raise UsageError(f"--{name} must have {d} entries")


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be a positive integer") from None
        if n <= 0:
            raise UsageError(f"{THREADS_ENV} must be a positive integer")
        return n
    return 1


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for stochastic methods")
    return args.seed


# --------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    model = load_model(args.model, check_hypotheses=False)
    a1 = check_a1(model.measure, args.box_radius)
    base = args.base or smallest_cone_point(model.cone)
    _check_dim("base", base, model.dimension)
    window = default_window(model.cone, args.window)
    a2 = check_a2(model, window, base)
    record = {
        "model": model.name,
        "dimension": model.dimension,
        "a1": a1.to_dict(),
        "a2": a2,
        "base": list(base),
        "window": args.window,
        "ok": a1.ok and a2,
    }
    _emit_json(record, args)
    return EXIT_OK if record["ok"] else EXIT_INVALID


def cmd_alpha(args) -> int:
    model = load_model(args.model)
    u = _direction(args.u, model.dimension)
    bd = solve_alpha(model.measure, u, tol=args.tol)
    _emit_json({"model": model.name, "tol": args.tol, **bd.to_dict()}, args)
    return EXIT_OK


def cmd_twist(args) -> int:
    model = load_model(args.model)
    d = model.dimension
    if (args.u is None) == (args.alpha is None):
        raise UsageError("give exactly one of --u and --alpha")
    record = {"model": model.name}
    if args.u is not None:
        u = _direction(args.u, d)
        alpha = solve_alpha(model.measure, u).alpha
        record["u"] = u
    else:
        _check_dim("alpha", args.alpha, d)
        alpha = np.asarray(args.alpha, dtype=float)
    tw = twisted_measure(model.measure, alpha, tol=args.tol)
    record.update({
        "alpha": alpha,
        "tol": args.tol,
        "steps": [{"v": list(s), "p": p} for s, p in zip(tw.steps, tw.probs)],
        "mean": tw.mean,
    })
    _emit_json(record, args)
    return EXIT_OK


def cmd_green(args) -> int:
    model = load_model(args.model)
    d = model.dimension
    _check_dim("k", args.k, d)
    _check_dim("m", args.m, d)
    record = {"model": model.name, "k": list(args.k), "m": list(args.m), "method": args.method}
    if args.method == "dp":
        run = run_killed_dp(model, args.k, args.window, args.tol, args.max_steps)
        est = run.estimate(args.m)
        record.update({"window": args.window, "tol": args.tol, "max_steps": args.max_steps})
    else:
        seed = _require_seed(args)
        est = green_mc(model, args.k, args.m, args.n_traj, args.horizon, seed, threads=_threads(args))
        record.update({"n_traj": args.n_traj, "horizon": args.horizon, "seed": seed})
    record["estimate"] = est.to_dict()
    _emit_json(record, args)
    return EXIT_OK


def cmd_exitlaw(args) -> int:
    model = load_model(args.model)
    _check_dim("k", args.k, model.dimension)
    run = run_killed_dp(model, args.k, args.window, args.tol, args.max_steps)
    law = run.exit_law()
    _emit_json({"model": model.name, "window": args.window, "tol": args.tol, **law.to_dict()}, args)
    return EXIT_OK


def cmd_harmonic(args) -> int:
    model = load_model(args.model)
    d = model.dimension
    _check_dim("k", args.k, d)
    u = _direction(args.u, d)
    bd = solve_alpha(model.measure, u)
    record = {"model": model.name, "u": u, "alpha": bd.alpha, "k": list(args.k), "method": args.method}
    if args.method == "series":
        est = harmonic_h(model, bd, args.k, "series", args.window, args.tol)
        record.update({"window": args.window, "tol": args.tol})
        if args.residual:
            record["harmonicity_residual"] = harmonicity_residual(model, bd, args.k, args.window, args.tol)
    else:
        seed = _require_seed(args)
        est = harmonic_h(model, bd, args.k, "mc", n_samples=args.n_samples, horizon=args.horizon,
                         escape_radius=args.escape_radius, seed=seed, threads=_threads(args))
        record.update({"n_samples": args.n_samples, "horizon": args.horizon,
                       "escape_radius": args.escape_radius, "seed": seed})
    record["estimate"] = est.to_dict()
    _emit_json(record, args)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    d = model.dimension
    _check_dim("k", args.k, d)
    _check_dim("m", args.m, d)
    m = np.asarray(args.m, dtype=float)
    if not model.cone.contains(m):
        raise DomainError(f"m = {list(args.m)} is not in the cone")
    bd = solve_alpha(model.measure, m / np.linalg.norm(m))
    run = run_killed_dp(model, args.k, args.window, args.tol, args.max_steps)
    h = harmonic_from_dp(run, bd)
    variants = VARIANTS if args.variant == "both" else (args.variant,)
    preds = {v: predict_green(bd, h.value, args.k, args.m, v, model.cone).value for v in variants}
    record = {
        "model": model.name,
        "k": list(args.k),
        "m": list(args.m),
        "u_m": bd.u,
        "window": args.window,
        "tol": args.tol,
        "h_k": h.to_dict(),
        "boundary": bd.to_dict(),
        "predictions": preds,
    }
    _emit_json(record, args)
    return EXIT_OK


def cmd_study(args) -> int:
    model = load_model(args.model)
    d = model.dimension
    _check_dim("k", args.k, d)
    u = _direction(args.u, d)
    policy = WindowPolicy(margin=args.margin, fixed=args.window)
    table = ray_study(model, args.k, u, args.radii, policy, args.tol, args.seed)
    _emit(table.to_csv(), args.out)
    try:
        verdict = prefactor_select(table)
        log.info("prefactor verdict: %s", dumps(verdict.to_dict(), indent=0).replace("\n", " "))
    except UnstableStudyError as exc:
        log.info("no prefactor verdict: %s", exc)
    return EXIT_OK


def cmd_check_fe(args) -> int:
    model = load_model(args.model)
    d = model.dimension
    _check_dim("k", args.k, d)
    _check_dim("x", args.x, d)
    res = functional_eq_residual(model, args.k, args.x, args.window, args.tol)
    record = {
        "model": model.name,
        "k": list(args.k),
        "x": [[z.real, z.imag] for z in args.x],
        "window": args.window,
        "tol": args.tol,
        **res.to_dict(),
    }
    _emit_json(record, args)
    return EXIT_OK if res.ok else EXIT_INVALID


def cmd_check_quadrature(args) -> int:
    model = load_model(args.model)
    d = model.dimension
    _check_dim("k", args.k, d)
    _check_dim("m", args.m, d)
    if args.base is not None:
        _check_dim("base", args.base, d)
        grid = TorusGrid(d, args.n, np.asarray(args.base))
    else:
        grid = TorusGrid.centred(model.measure, args.n)
    run = run_killed_dp(model, args.k, args.window, args.tol, args.max_steps)
    table = killed_green_table(model, args.k, grid, run.exit_law())
    q = table.complex_value(args.m)
    dp = run.estimate(args.m)
    diff = abs(q.real - dp.value)
    record = {
        "model": model.name,
        "k": list(args.k),
        "m": list(args.m),
        "n_per_axis": args.n,
        "base": grid.base,
        "window": args.window,
        "tol": args.tol,
        "quadrature": q.real,
        "quadrature_imag": q.imag,
        "dp": dp.to_dict(),
        "difference": diff,
        "atol": args.atol,
        "ok": diff <= args.atol,
    }
    _emit_json(record, args)
    return EXIT_OK if record["ok"] else EXIT_INVALID


def cmd_martin(args) -> int:
    model = load_model(args.model)
    d = model.dimension
    for name in ("k", "k0", "m"):
        _check_dim(name, getattr(args, name), d)
    m = np.asarray(args.m, dtype=float)
    if not model.cone.contains(m):
        raise DomainError(f"m = {list(args.m)} is not in the cone")
    run_k = run_killed_dp(model, args.k, args.window, args.tol, args.max_steps)
    run_k0 = run_killed_dp(model, args.k0, args.window, args.tol, args.max_steps)
    mk = martin_kernel(run_k.estimate(args.m), run_k0.estimate(args.m))
    bd = solve_alpha(model.measure, m / np.linalg.norm(m))
    limit = harmonic_from_dp(run_k, bd).value / harmonic_from_dp(run_k0, bd).value
    record = {
        "model": model.name,
        "k": list(args.k),
        "k0": list(args.k0),
        "m": list(args.m),
        "u_m": bd.u,
        "window": args.window,
        "tol": args.tol,
        **mk.to_dict(),
        "h_ratio": limit,
        "difference": abs(mk.value - limit),
    }
    _emit_json(record, args)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _dp_options(p: argparse.ArgumentParser, window: int = 60) -> None:
    p.add_argument("--window", type=positive_int, default=window,
                   help="DP window size in lattice units per axis (default: %(default)s)")
    p.add_argument("--tol", type=positive_float, default=DEFAULT_TOL,
                   help="stop when live in-window mass falls below this (default: %(default)s)")
    p.add_argument("--max-steps", type=positive_int, default=DEFAULT_MAX_STEPS,
                   help="cap on DP time steps (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conegreen",
        description="Green functions of lattice random walks killed on leaving a cone.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, func, help_text: str, stochastic: bool = False) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("model", help="model JSON file")
        p.add_argument("--out", help="output file (default: standard output)")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
        p.add_argument("--threads", type=positive_int, default=None,
                       help=f"worker threads for sampling; overrides ${THREADS_ENV} (default: 1)")
        if stochastic:
            p.add_argument("--seed", type=int, default=None,
                           help="random seed, required by Monte Carlo methods")
        p.set_defaults(func=func)
        return p

    p = add("validate", cmd_validate, "check the irreducibility and drift hypotheses")
    p.add_argument("--box-radius", type=positive_int, default=None,
                   help="half-width of the reachability test box (default: max step norm)")
    p.add_argument("--window", type=positive_int, default=40,
                   help="window size for the in-cone connectivity check (default: %(default)s)")
    p.add_argument("--base", type=int_vector, default=None,
                   help="base lattice point in the cone (default: smallest cone point)")

    p = add("alpha", cmd_alpha, "boundary point alpha(u) and its second-order data")
    p.add_argument("--u", type=float_vector, required=True, help="direction, normalized internally")
    p.add_argument("--tol", type=positive_float, default=1e-10,
                   help="tolerance on |P(alpha) - 1| (default: %(default)s)")

    p = add("twist", cmd_twist, "exponentially twisted step law")
    p.add_argument("--u", type=float_vector, help="twist at alpha(u) for this direction")
    p.add_argument("--alpha", type=float_vector, help="twist at this boundary point")
    p.add_argument("--tol", type=positive_float, default=1e-10,
                   help="tolerance on |P(alpha) - 1| (default: %(default)s)")

    p = add("green", cmd_green, "killed Green function G(k, m)", stochastic=True)
    p.add_argument("--k", type=int_vector, required=True, help="start point")
    p.add_argument("--m", type=int_vector, required=True, help="target point")
    p.add_argument("--method", choices=("dp", "mc"), default="dp", help="estimator (default: %(default)s)")
    _dp_options(p)
    p.add_argument("--n-traj", type=positive_int, default=100_000,
                   help="Monte Carlo trajectories (default: %(default)s)")
    p.add_argument("--horizon", type=positive_int, default=2000,
                   help="Monte Carlo time horizon in steps (default: %(default)s)")

    p = add("exitlaw", cmd_exitlaw, "law of the exit position")
    p.add_argument("--k", type=int_vector, required=True, help="start point")
    _dp_options(p)

    p = add("harmonic", cmd_harmonic, "harmonic function h at alpha(u)", stochastic=True)
    p.add_argument("--u", type=float_vector, required=True, help="direction, normalized internally")
    p.add_argument("--k", type=int_vector, required=True, help="evaluation point")
    p.add_argument("--method", choices=("series", "mc"), default="series",
                   help="estimator (default: %(default)s)")
    p.add_argument("--residual", action="store_true", help="also report the one-step harmonicity residual")
    _dp_options(p)
    p.add_argument("--n-samples", type=positive_int, default=100_000,
                   help="twisted-walk samples (default: %(default)s)")
    p.add_argument("--horizon", type=positive_int, default=400,
                   help="twisted-walk time horizon in steps (default: %(default)s)")
    p.add_argument("--escape-radius", type=positive_float, default=20.0,
                   help="depth counted as escaped, in lattice units (default: %(default)s)")

    p = add("predict", cmd_predict, "asymptotic prediction of G(k, m)")
    p.add_argument("--k", type=int_vector, required=True, help="start point")
    p.add_argument("--m", type=int_vector, required=True, help="target point")
    p.add_argument("--variant", choices=(*VARIANTS, "both"), default="both",
                   help="prefactor variant (default: %(default)s)")
    _dp_options(p)

    p = add("study", cmd_study, "ray study of DP values against the asymptotics; writes CSV")
    p.add_argument("--k", type=int_vector, required=True, help="start point")
    p.add_argument("--u", type=float_vector, required=True, help="ray direction, normalized internally")
    p.add_argument("--radii", type=float_vector, required=True, help="increasing radii")
    p.add_argument("--seed", type=int, default=None, help="recorded for reproducibility; the study is deterministic")
    p.add_argument("--window", type=positive_int, default=None,
                   help="DP window size (default: 2*max(radii) + margin)")
    p.add_argument("--margin", type=int, default=20, help="window margin in lattice units (default: %(default)s)")
    p.add_argument("--tol", type=positive_float, default=DEFAULT_TOL,
                   help="DP live-mass tolerance (default: %(default)s)")

    p = add("check-fe", cmd_check_fe, "functional equation residual at a complex point")
    p.add_argument("--k", type=int_vector, required=True, help="start point")
    p.add_argument("--x", type=complex_vector, required=True,
                   help="complex point, e.g. 0.6,0.7j; |x| must lie inside the convergence domain")
    _dp_options(p)

    p = add("check-quadrature", cmd_check_quadrature, "torus quadrature of G(k, m) against the DP")
    p.add_argument("--k", type=int_vector, required=True, help="start point")
    p.add_argument("--m", type=int_vector, required=True, help="target point")
    p.add_argument("--n", type=positive_int, default=256, help="nodes per axis, a power of two (default: %(default)s)")
    p.add_argument("--base", type=float_vector, default=None,
                   help="contour radii (default: exp of the minimiser of P)")
    p.add_argument("--atol", type=positive_float, default=1e-5,
                   help="allowed |quadrature - dp| (default: %(default)s)")
    _dp_options(p, window=100)

    p = add("martin", cmd_martin, "Martin kernel G(k, m) / G(k0, m) and its limit")
    p.add_argument("--k", type=int_vector, required=True, help="numerator start point")
    p.add_argument("--k0", type=int_vector, required=True, help="reference start point")
    p.add_argument("--m", type=int_vector, required=True, help="target point")
    _dp_options(p, window=140)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ModelError as exc:
        print(f"conegreen: invalid model: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (UsageError, DomainError, UnstableStudyError) as exc:
        print(f"conegreen: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"conegreen: no convergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"conegreen: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

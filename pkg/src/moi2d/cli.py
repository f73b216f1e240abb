"""Command-line front end.

Exit codes: 0 success (or comparison passed), 1 domain error or failed
comparison, 2 usage error, 3 internal consistency failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .correlation import INFINITY, ProcessSpec, angles, is_infinite, rho_from_k, solvable_k
from .errors import ConsistencyError, DomainError
from .images import build_image_set_mapping, build_image_set_rotation
from .montecarlo import Diffusion, SimConfig, compare, empirical_pdf, empirical_survival, simulate
from .solution import Rho1Evaluator, SolutionEvaluator

EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_CONSISTENCY = 3

# options whose values may start with '-' (e.g. --s0 -1.5,-1.5)
_VALUE_FLAGS = {"--s0", "--mu", "--grid", "--rho", "--rhos", "--t", "--snapshots", "--k"}


def _vector(text: str) -> tuple[float, float]:
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}") from None
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return parts[0], parts[1]


def _floats(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _axis(text: str) -> tuple[float, float, int]:
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected min:max:count, got {text!r}") from None
    if not (hi > lo and n >= 1):
        raise argparse.ArgumentTypeError(f"need max > min and count >= 1 in {text!r}")
    return lo, hi, n


def _grid(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected x1min:x1max:n,x2min:x2max:n, got {text!r}")
    return _axis(parts[0]), _axis(parts[1])


def _k(text: str):
    if text.lower() in {"inf", "infinity"}:
        return INFINITY
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"k must be an integer or 'inf', got {text!r}") from None


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _add_process(p, *, rho_any=False):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--k", type=_k, help="solvable index, rho = -cos(pi/k); 'inf' for rho = -1")
    g.add_argument("--rho", type=float, help="correlation" + (" in [-1, 0]" if rho_any else " (must be -cos(pi/k))"))
    p.add_argument("--s0", type=_vector, required=True, help="start point, e.g. -1.5,-1.5")
    p.add_argument("--mu", type=_vector, default=(0.0, 0.0), help="drift, e.g. 2,1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moi2d", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("list-rho", help="tabulate the solvable correlations")
    p.add_argument("--max-k", type=int, required=True)

    p = sub.add_parser("images", help="image sources and weights as JSON")
    _add_process(p)
    p.add_argument("--formalism", choices=["mapping", "rotation", "both"], default="rotation")
    p.add_argument("--out", default="-")

    p = sub.add_parser("pdf", help="density on a grid (CSV x1,x2,t,xi)")
    _add_process(p)
    p.add_argument("--t", type=_floats, required=True, help="time or comma-separated times")
    p.add_argument("--grid", type=_grid, required=True, help="x1min:x1max:n,x2min:x2max:n")
    p.add_argument("--bins", action="store_true", help="write exact bin masses (x1_bin,x2_bin,mass); grid counts are bins")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--formalism", choices=["mapping", "rotation"], default="rotation")
    p.add_argument("--out", required=True)

    p = sub.add_parser("survival", help="survival curve (CSV t,survival)")
    _add_process(p)
    p.add_argument("--tmax", type=_positive, required=True)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="Euler-Maruyama reference simulation")
    _add_process(p, rho_any=True)
    p.add_argument("--dt", type=_positive, default=1e-3)
    p.add_argument("--n", type=int, default=50_000)
    p.add_argument("--horizon", type=_positive, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bridge", action="store_true", help="Brownian-bridge crossing correction")
    p.add_argument("--snapshots", type=_floats, default=[], help="times at which to histogram survivors")
    p.add_argument("--grid", type=_grid, default=((-4.0, 0.0, 20), (-4.0, 0.0, 20)))
    p.add_argument("--survival-points", type=int, default=50)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("compare", help="analytic vs empirical report; exit 0 iff gates pass")
    p.add_argument("--analytic-file", required=True)
    p.add_argument("--empirical-file", required=True)
    p.add_argument("--n", type=int, help="trajectory count (default: from the empirical manifest)")
    p.add_argument("--bias-allowance", type=float, help="default 1.5*sqrt(dt) for plain Euler runs, else 0")
    p.add_argument("--z-max", type=float, default=3.0)
    p.add_argument("--min-fraction", type=float, default=0.95)
    p.add_argument("--min-expected", type=float, default=0.0)
    p.add_argument("--max-l1", type=float, help="additional gate on the summed absolute difference")
    p.add_argument("--out", default="-")

    p = sub.add_parser("sweep-rho", help="empirical survival at fixed t across correlations")
    p.add_argument("--t", type=_positive, required=True)
    p.add_argument("--s0", type=_vector, required=True)
    p.add_argument("--mu", type=_vector, default=(0.0, 0.0))
    p.add_argument("--rhos", type=_floats, default=[])
    p.add_argument("--ks", type=_ints, default=[], help="solvable indices to include exactly")
    p.add_argument("--dt", type=_positive, default=1e-3)
    p.add_argument("--n", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bridge", action="store_true")
    p.add_argument("--solvable-tol", type=float, default=1e-9)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    return parser


def _spec(args) -> ProcessSpec:
    k = args.k if args.k is not None else solvable_k(args.rho)
    return ProcessSpec(mu=args.mu, s0=args.s0, k=k)


def _params(args) -> dict:
    out = {}
    for key, v in vars(args).items():
        if key in {"cmd", "func"}:
            continue
        if isinstance(v, float) and math.isinf(v):
            v = "inf"
        elif isinstance(v, tuple):
            v = [list(x) if isinstance(x, tuple) else x for x in v]
        out[key] = v
    return out


def _axis_points(axis):
    lo, hi, n = axis
    return np.linspace(lo, hi, n)


def _axis_edges(axis):
    lo, hi, n = axis
    return np.linspace(lo, hi, n + 1)


def cmd_list_rho(args) -> int:
    if args.max_k < 2:
        raise _Usage("--max-k must be >= 2")
    print("k,rho,alpha,n_images")
    for k in range(2, args.max_k + 1):
        print(",".join([str(k), io.fmt(rho_from_k(k)), io.fmt(angles(k).alpha), str(2 * k)]))
    return 0


def cmd_images(args) -> int:
    spec = _spec(args)
    man = io.manifest("images", _params(args))
    if args.formalism == "both":
        a = build_image_set_mapping(spec)
        b = build_image_set_rotation(spec)
        src_diff = float(np.max(np.abs(a.sources - b.sources)))
        w_diff = float(np.max(np.abs(a.weights - b.weights) / np.maximum(1.0, np.abs(a.weights))))
        ok = src_diff <= 1e-10 and w_diff <= 1e-10
        data = b.to_dict()
        data["cross_check"] = {"max_source_diff": src_diff, "max_weight_rel_diff": w_diff, "passed": ok}
        data["manifest"] = man
        io.write_json(args.out, data)
        if not ok:
            print(f"mapping and rotation constructions differ (sources {src_diff:.3g})", file=sys.stderr)
            return EXIT_CONSISTENCY
        return 0
    iset = build_image_set_mapping(spec) if args.formalism == "mapping" else build_image_set_rotation(spec)
    data = iset.to_dict()
    data["manifest"] = man
    io.write_json(args.out, data)
    return 0


def cmd_pdf(args) -> int:
    spec = _spec(args)
    ev = SolutionEvaluator.from_spec(spec, args.formalism)
    man = io.manifest("pdf", _params(args))
    ax1, ax2 = args.grid
    if args.bins:
        e1, e2 = _axis_edges(ax1), _axis_edges(ax2)
        rows = []
        for t in args.t:
            m = ev.bin_masses(e1, e2, t)
            rows += [(t, *r) for r in io.histogram_rows((e1, e2), m)]
        header = ["t", *io.HISTOGRAM_HEADER] if len(args.t) > 1 else io.HISTOGRAM_HEADER
        rows = rows if len(args.t) > 1 else [r[1:] for r in rows]
    else:
        x1, x2 = _axis_points(ax1), _axis_points(ax2)
        pts = np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1)
        rows = []
        for t in args.t:
            vals = ev.pdf(pts, t)
            rows += [(pts[i, j, 0], pts[i, j, 1], t, vals[i, j]) for i in range(len(x1)) for j in range(len(x2))]
        header = io.GRID_HEADER
    if args.format == "json":
        io.write_json(args.out, {"columns": header, "rows": [list(map(float, r)) for r in rows], "manifest": man})
    else:
        io.write_csv(args.out, header, rows, man)
    return 0


def cmd_survival(args) -> int:
    ts = np.linspace(0.0, args.tmax, args.steps + 1)
    if args.steps < 1:
        raise _Usage("--steps must be >= 1")
    k = args.k if args.k is not None else solvable_k(args.rho)
    if is_infinite(k):
        ev = Rho1Evaluator.from_start(args.s0, args.mu)
        surv = [ev.survival(t) for t in ts[1:]]
    else:
        ev = SolutionEvaluator.from_spec(ProcessSpec(mu=args.mu, s0=args.s0, k=k))
        surv = list(ev.survival(ts[1:]))
    rows = [(0.0, 1.0)] + list(zip(ts[1:], surv))
    io.write_csv(args.out, io.SURVIVAL_HEADER, rows, io.manifest("survival", _params(args)))
    return 0


def _sim_process(args) -> Diffusion:
    rho = rho_from_k(args.k) if args.k is not None else args.rho
    return Diffusion(mu=args.mu, s0=args.s0, rho=rho)


def cmd_simulate(args) -> int:
    proc = _sim_process(args)
    cfg = SimConfig(dt=args.dt, n_traj=args.n, horizon=args.horizon, seed=args.seed, bridge_correction=args.bridge)
    batch = simulate(proc, cfg, snapshots=args.snapshots, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = io.manifest("simulate", _params(args), seed=args.seed)

    summary = batch.summary()
    summary["manifest"] = man
    io.write_json(out / "summary.json", summary)

    m = max(1, args.survival_points)
    steps = np.unique(np.round(np.linspace(0, cfg.n_steps, m + 1)).astype(int))
    ts = steps * cfg.dt
    s = empirical_survival(batch, ts)
    se = np.sqrt(s * (1.0 - s) / cfg.n_traj)
    io.write_csv(out / "survival.csv", ["t", "survival", "stderr"], zip(ts, s, se), man)

    e1, e2 = _axis_edges(args.grid[0]), _axis_edges(args.grid[1])
    for t in args.snapshots:
        h = empirical_pdf(batch, t, e1, e2)
        io.write_csv(out / f"histogram_t{io.fmt(t)}.csv", io.HISTOGRAM_HEADER, io.histogram_rows((e1, e2), h.mass), man)
    return 0


def _load_columns(path):
    header, data = io.read_csv(path)
    if header[:2] == ["t", "survival"]:
        return "curve", data[:, 0], data[:, 1]
    if header[:3] == io.HISTOGRAM_HEADER:
        return "field", data[:, :2], data[:, 2]
    raise _Usage(f"{path}: unrecognised columns {header}")


def cmd_compare(args) -> int:
    kind_a, pts_a, val_a = _load_columns(args.analytic_file)
    kind_e, pts_e, val_e = _load_columns(args.empirical_file)
    if kind_a != kind_e:
        raise _Usage("analytic and empirical files hold different kinds of data")
    emp_man = io.read_manifest(args.empirical_file)
    params = (emp_man or {}).get("params", {})
    n = args.n if args.n is not None else params.get("n")
    if n is None:
        raise _Usage("trajectory count unknown: pass --n or keep the empirical manifest next to the file")
    allowance = args.bias_allowance
    if allowance is None:
        plain_euler = "dt" in params and not params.get("bridge", False)
        allowance = 1.5 * math.sqrt(params["dt"]) if plain_euler else 0.0
    try:
        rep = compare(val_a, val_e, n, bias_allowance=allowance, min_expected=args.min_expected,
                      analytic_points=pts_a, empirical_points=pts_e)
    except ValueError as exc:
        raise _Usage(str(exc)) from None
    data = rep.to_dict(args.z_max, args.min_fraction)
    ok = data["passed"]
    if args.max_l1 is not None:
        data["max_l1"] = args.max_l1
        ok = ok and rep.l1_distance <= args.max_l1
    data["passed"] = ok
    data["kind"] = kind_a
    data["manifest"] = io.manifest("compare", _params(args))
    io.write_json(args.out, data)
    return 0 if ok else 1


def cmd_sweep_rho(args) -> int:
    rhos = sorted(set([float(r) for r in args.rhos] + [rho_from_k(k) for k in args.ks]))
    if not rhos:
        raise _Usage("give at least one correlation via --rhos or --ks")
    bad = [r for r in rhos if not -1.0 <= r <= 0.0]
    if bad:
        raise DomainError(f"correlations must lie in [-1, 0] for simulation, got {bad}")
    cfg = SimConfig(dt=args.dt, n_traj=args.n, horizon=args.t, seed=args.seed, bridge_correction=args.bridge)
    rows = []
    for rho in rhos:
        batch = simulate(Diffusion(mu=args.mu, s0=args.s0, rho=rho), cfg, workers=args.workers)
        s = float(empirical_survival(batch, [args.t])[0])
        se = math.sqrt(s * (1.0 - s) / cfg.n_traj)
        rows.append((rho, s, se, _analytic_survival(args, rho)))
    io.write_csv(args.out, ["rho", "empirical_survival", "stderr", "analytic_survival"], rows,
                 io.manifest("sweep-rho", _params(args), seed=args.seed))
    return 0


def _analytic_survival(args, rho):
    try:
        k = solvable_k(rho, tol=args.solvable_tol)
    except DomainError:
        return None
    if is_infinite(k):
        try:
            return Rho1Evaluator.from_start(args.s0, args.mu).survival(args.t)
        except DomainError:
            return None
    return SolutionEvaluator.from_spec(ProcessSpec(mu=args.mu, s0=args.s0, k=k)).survival(args.t)


class _Usage(Exception):
    pass


COMMANDS = {
    "list-rho": cmd_list_rho,
    "images": cmd_images,
    "pdf": cmd_pdf,
    "survival": cmd_survival,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "sweep-rho": cmd_sweep_rho,
}


def _join_negative_values(argv):
    """Rewrite ``--s0 -1.5,-1.5`` as ``--s0=-1.5,-1.5`` so argparse accepts it."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-") and not argv[i + 1].startswith("--"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.cmd](args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"moi2d {args.cmd}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"moi2d {args.cmd}: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ConsistencyError as exc:
        print(f"moi2d {args.cmd}: consistency failure: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except ValueError as exc:
        print(f"moi2d {args.cmd}: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 success, 1 bad input, 2 singular or degenerate input (target on
a caustic, degenerate pole, suspect crossing), 3 exhausted restarts.
"""

from __future__ import annotations

import argparse
import colorsys
import contextlib
import csv
import json
import sys
import warnings

import numpy as np

from .critical import caustics as compute_caustics, trace_critical_curves, winding_number, write_caustics_csv
from .errors import Exhausted, GuardViolation, HarmonicError, InitialPhaseFailure
from .harmonic import BUILDERS, HarmonicMapping, load_mapping
from .newton import MAX_ITER, distinct_filter, newton_solve_many
from .transport import SolveOptions, TransportSolver

EXIT_OK, EXIT_INPUT, EXIT_SINGULAR, EXIT_EXHAUSTED = 0, 1, 2, 3


class InputError(Exception):
    pass


def _complex_arg(text: str) -> complex:
    try:
        re_, im_ = (float(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected RE,IM, got {text!r}") from exc
    return complex(re_, im_)


def _bbox_arg(text: str) -> tuple:
    try:
        box = tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected x0,x1,y0,y1, got {text!r}") from exc
    if len(box) != 4 or box[0] >= box[1] or box[2] >= box[3]:
        raise argparse.ArgumentTypeError("bbox needs x0 < x1 and y0 < y1")
    return box


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("mapping")
    src.add_argument("--builder", choices=sorted(BUILDERS))
    src.add_argument("--file", help="mapping spec (JSON)")
    src.add_argument("--n", type=int)
    src.add_argument("--rho", type=float)
    src.add_argument("--eps", type=float)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--theta", type=float, help="angle of the first ray")
    common.add_argument("--out", default="-", help="output path ('-' for stdout)")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--deterministic", action="store_true",
                        help="omit timestamps and timings from JSON output")
    common.add_argument("--k-nodes", type=int, default=1024, help="critical-curve resolution")

    parser = argparse.ArgumentParser(prog="harmzeros", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("zeros", parents=[common], help="all zeros of f")
    p = sub.add_parser("preimages", parents=[common], help="all solutions of f(z) = eta")
    p.add_argument("--eta", type=_complex_arg, required=True)
    p = sub.add_parser("caustics", parents=[common], help="critical curves and caustics")
    p.add_argument("--eta", type=_complex_arg, default=0j, help="point for the winding summary")
    p = sub.add_parser("trace", parents=[common], help="homotopy curves along a path")
    p.add_argument("--eta", type=_complex_arg, required=True, help="start of the path")
    p.add_argument("--to", type=_complex_arg, default=0j, help="end of the path")
    p.add_argument("--samples", type=int, default=32)
    p = sub.add_parser("basins", parents=[common], help="Newton basins of attraction (P6 image)")
    p.add_argument("--eta", type=_complex_arg, required=True)
    p.add_argument("--bbox", type=_bbox_arg, required=True)
    p.add_argument("--resolution", type=int, default=200)
    return parser


def load_from_args(args) -> HarmonicMapping:
    if bool(args.builder) == bool(args.file):
        raise InputError("give exactly one of --builder and --file")
    if args.file:
        try:
            return load_mapping(args.file)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise InputError(f"cannot read mapping spec {args.file}: {exc}") from exc
    name = args.builder
    try:
        if name in ("log_example", "chang_refsdal"):
            return BUILDERS[name]()
        if args.n is None:
            raise InputError(f"--n is required for {name}")
        if name == "wilmshurst":
            return BUILDERS[name](args.n)
        if args.rho is None:
            raise InputError(f"--rho is required for {name}")
        if name == "mpw":
            return BUILDERS[name](args.n, args.rho)
        if args.eps is None:
            raise InputError("--eps is required for rhie")
        return BUILDERS[name](args.n, args.rho, args.eps)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


@contextlib.contextmanager
def _open_out(path: str, binary: bool = False):
    if path == "-":
        yield sys.stdout.buffer if binary else sys.stdout
    else:
        with open(path, "wb" if binary else "w", newline=None if binary else "") as fh:
            yield fh


def _options(args) -> SolveOptions:
    return SolveOptions(theta=args.theta, k_nodes=args.k_nodes)


def _write_report(report, args) -> None:
    if (args.format or "json") == "csv":
        with _open_out(args.out) as fh:
            w = csv.writer(fh)
            w.writerow(["re_z", "im_z", "residual", "jacobian"])
            for z, r, j in zip(report.zeros, report.residuals, report.jacobians):
                w.writerow([repr(float(z.real)), repr(float(z.imag)), repr(float(r)), repr(float(j))])
        return
    with _open_out(args.out) as fh:
        fh.write(report.to_json(args.deterministic) + "\n")


def cmd_zeros(args) -> int:
    f = load_from_args(args)
    report = TransportSolver(f, _options(args)).solve(0j, args.seed)
    _write_report(report, args)
    return EXIT_OK


def cmd_preimages(args) -> int:
    f = load_from_args(args)
    report = TransportSolver(f, _options(args)).solve(args.eta, args.seed)
    _write_report(report, args)
    return EXIT_OK


def cmd_caustics(args) -> int:
    f = load_from_args(args)
    curves = trace_critical_curves(f, args.k_nodes)
    caus = compute_caustics(f, curves)
    if not caus:
        print("warning: the mapping has no critical curves", file=sys.stderr)
    if (args.format or "csv") == "csv":
        with _open_out(args.out) as fh:
            write_caustics_csv(caus, fh)
        return EXIT_OK
    summary = []
    for cid, c in enumerate(caus):
        try:
            wind = winding_number(c, args.eta)
        except GuardViolation:
            wind = None
        summary.append({
            "curve_id": cid,
            "nodes": int(c.points.size),
            "windings": int(c.critical.windings),
            "not_light": c.not_light,
            "cusp_indices": list(c.cusp_indices),
            "winding_number": wind,
            "critical": [[float(z.real), float(z.imag)] for z in c.critical.points],
            "caustic": [[float(z.real), float(z.imag)] for z in c.points],
        })
    with _open_out(args.out) as fh:
        json.dump({"eta": [args.eta.real, args.eta.imag], "pole_count": f.pole_count,
                   "curves": summary}, fh, indent=1)
        fh.write("\n")
    return EXIT_OK


def cmd_trace(args) -> int:
    f = load_from_args(args)
    solver = TransportSolver(f, _options(args))
    branches = solver.trace([args.eta, args.to], args.samples, args.seed)
    if (args.format or "csv") == "csv":
        with _open_out(args.out) as fh:
            w = csv.writer(fh)
            w.writerow(["branch_id", "k", "re_eta", "im_eta", "re_z", "im_z", "turning"])
            for bid, br in enumerate(branches):
                last = len(br.points) - 1
                for k, (eta, z) in enumerate(zip(br.etas, br.points)):
                    turning = int((k == 0 and br.start_turning) or (k == last and br.end_turning))
                    w.writerow([bid, k, repr(float(eta.real)), repr(float(eta.imag)),
                                repr(float(z.real)), repr(float(z.imag)), turning])
        return EXIT_OK
    out = [{"etas": [[float(e.real), float(e.imag)] for e in br.etas],
            "points": [[float(z.real), float(z.imag)] for z in br.points],
            "start_turning": br.start_turning, "end_turning": br.end_turning} for br in branches]
    with _open_out(args.out) as fh:
        json.dump({"branches": out}, fh, indent=1)
        fh.write("\n")
    return EXIT_OK


def basin_raster(f: HarmonicMapping, eta: complex, bbox, resolution: int, max_iter: int = MAX_ITER):
    """Newton limits on a ``resolution x resolution`` grid (row 0 at the top).

    Returns ``(rgb uint8 array, limits)`` where ``limits`` are the distinct
    attracting solutions in (Re, Im) order; hue encodes the limit, brightness
    the iteration count, and black marks non-convergence.
    """
    x0, x1, y0, y1 = bbox
    if resolution == 1:
        xs, ys = np.array([0.5 * (x0 + x1)]), np.array([0.5 * (y0 + y1)])
    else:
        xs, ys = np.linspace(x0, x1, resolution), np.linspace(y1, y0, resolution)
    grid = (xs[None, :] + 1j * ys[:, None]).ravel()
    batch = newton_solve_many(f, eta, grid, max_iter=max_iter)
    ok = batch.converged
    limits = distinct_filter(batch.limits[ok], 1e-6)
    limits = sorted(limits, key=lambda z: (z.real, z.imag))
    rgb = np.zeros((grid.size, 3), dtype=np.uint8)
    if limits:
        lim = np.array(limits)
        label = np.argmin(np.abs(batch.limits[:, None] - lim[None, :]), axis=1)
        palette = np.array([colorsys.hsv_to_rgb(k / len(lim), 0.85, 1.0) for k in range(len(lim))])
        shade = 1.0 - 0.7 * np.minimum(batch.iterations, max_iter) / max_iter
        colors = palette[label] * shade[:, None]
        rgb[ok] = np.round(255 * colors[ok]).astype(np.uint8)
    return rgb.reshape(resolution, resolution, 3), limits


def cmd_basins(args) -> int:
    if args.resolution < 1:
        raise InputError("--resolution must be positive")
    if args.out == "-":
        raise InputError("basins needs --out for the pixmap")
    f = load_from_args(args)
    rgb, limits = basin_raster(f, args.eta, args.bbox, args.resolution)
    with open(args.out, "wb") as fh:
        fh.write(f"P6\n{args.resolution} {args.resolution}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
    with open(args.out + ".legend.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "r", "g", "b", "re_z", "im_z"])
        for k, z in enumerate(limits):
            r, g, b = (round(255 * c) for c in colorsys.hsv_to_rgb(k / len(limits), 0.85, 1.0))
            w.writerow([k, r, g, b, repr(z.real), repr(z.imag)])
    return EXIT_OK


COMMANDS = {
    "zeros": cmd_zeros,
    "preimages": cmd_preimages,
    "caustics": cmd_caustics,
    "trace": cmd_trace,
    "basins": cmd_basins,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (Exhausted, InitialPhaseFailure) as exc:
        print(f"exhausted: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED
    except HarmonicError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: generate, build, query, render, validate.

Exit codes: 0 success, 1 validation violations, 2 bad flags or inputs,
3 refinement depth exhausted, 4 rendering a non-planar diagram.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from .cover import format_covers
from .diagram import build_diagram, dump_diagram, load_diagram
from .errors import AwvdError, OutOfRange, RefinementDepthExceeded
from .geometry import SiteSet
from .oracle import (
    brute_nn,
    gen_instance,
    query_ratios,
    ratio_check,
    sample_query_points,
)
from .render import render_svg, save_ratio_histogram
from .validate import SUITES, run_suites

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_USAGE = 2
EXIT_DEPTH = 3
EXIT_RENDER_DIM = 4


def write_sites_file(path, sites: SiteSet) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{sites.d} {sites.n}\n")
        for i in range(sites.n):
            coords = " ".join(f"{c:.17g}" for c in sites.coords[i])
            fh.write(f"{coords} {sites.weights[i]:.17g}\n")


def read_sites_file(path) -> SiteSet:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise AwvdError(f"bad sites header in {path}")
        d, n = int(header[0]), int(header[1])
        coords = np.empty((n, d))
        weights = np.empty(n)
        for i in range(n):
            parts = fh.readline().split()
            if len(parts) != d + 1:
                raise AwvdError(f"bad site line {i + 2} in {path}")
            coords[i] = [float(x) for x in parts[:d]]
            weights[i] = float(parts[d])
    return SiteSet(coords, weights)


def _read_points_file(path, d: int) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != d:
                raise AwvdError(f"point line needs {d} coordinates: {line.rstrip()}")
            rows.append([float(x) for x in parts])
    return np.array(rows).reshape(-1, d)


def _default_threads() -> int:
    env = os.environ.get("AWVD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def cmd_generate(args) -> int:
    if args.n < 1:
        print("error: --n must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        instance = gen_instance(args.n, args.d, args.weights, args.seed, args.wmax)
    except OutOfRange as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    write_sites_file(args.out, instance.sites)
    print(f"wrote {args.n} sites (d={args.d}, weights={instance.weight_spec}) to {args.out}")
    return EXIT_OK


def cmd_build(args) -> int:
    if not 0.0 < args.eps < 1.0:
        print(f"error: --eps must be in (0, 1), got {args.eps}", file=sys.stderr)
        return EXIT_USAGE
    try:
        sites = read_sites_file(args.sites)
    except (OSError, AwvdError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        diagram = build_diagram(
            sites,
            args.eps,
            mode=args.mode,
            frac_bits=args.frac_bits,
            threads=args.threads,
        )
    except RefinementDepthExceeded as err:
        print(
            f"error: {err} (site index {err.apex_index}); "
            f"retry with a larger --frac-bits",
            file=sys.stderr,
        )
        return EXIT_DEPTH
    dump_diagram(diagram, args.out)
    stats_path = Path(str(args.out) + ".stats.txt")
    stats_path.write_text(diagram.stats.text(), encoding="ascii")
    for line in diagram.stats.lines():
        print(line)
    print(f"wrote diagram to {args.out} and stats to {stats_path}")
    return EXIT_OK


def cmd_query(args) -> int:
    try:
        diagram = load_diagram(args.diagram)
    except (OSError, AwvdError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    sites = diagram.sites
    if args.points:
        try:
            points = _read_points_file(args.points, sites.d)
        except (OSError, AwvdError, ValueError) as err:
            print(f"error: {err}", file=sys.stderr)
            return EXIT_USAGE
    elif args.random:
        points = sample_query_points(sites, args.random, args.seed)
    else:
        print("error: need --points or --random", file=sys.stderr)
        return EXIT_USAGE

    rows = []
    for p in points:
        label, dist = diagram.query(p)
        row = [*(f"{c:.17g}" for c in p), str(label), f"{dist:.17g}"]
        if args.check:
            exact_idx, exact = brute_nn(sites, p)
            ratio = 1.0 if exact == dist == 0.0 else (np.inf if exact == 0.0 else dist / exact)
            row += [str(exact_idx), f"{exact:.17g}", f"{ratio:.12g}"]
        rows.append(row)
        print(" ".join(row))

    if args.check:
        ratios = np.array([float(r[-1]) for r in rows])
        print(f"max_ratio={ratios.max():.12g}")
        print(f"mean_ratio={ratios.mean():.12g}")
    if args.report_dir:
        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        header = [f"x{k}" for k in range(sites.d)] + ["label", "distance"]
        if args.check:
            header += ["exact_label", "exact_distance", "ratio"]
        with open(out / "queries.csv", "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        if args.check:
            report = ratio_check(diagram, sites, max(len(points), 100), args.seed)
            (out / "report.txt").write_text(
                "\n".join(report.lines()) + "\n", encoding="ascii"
            )
            save_ratio_histogram(ratios, diagram.params.eps if diagram.params else 0.0,
                                 out / "ratio_hist.png")
        print(f"wrote report files to {out}")
    return EXIT_OK


def cmd_render(args) -> int:
    try:
        diagram = load_diagram(args.diagram)
    except (OSError, AwvdError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        count = render_svg(diagram, args.out)
    except OutOfRange as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RENDER_DIM
    print(f"rendered {count} cells to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    if not 0.0 < args.eps < 1.0:
        print(f"error: --eps must be in (0, 1), got {args.eps}", file=sys.stderr)
        return EXIT_USAGE
    try:
        sites = read_sites_file(args.sites)
    except (OSError, AwvdError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    names = list(SUITES) if args.suite == "all" else [args.suite]
    violations, report, artifacts = run_suites(names, sites, args.eps, seed=args.seed)
    for key in sorted(report):
        print(f"{key}={report[key]}")
    if args.report_dir:
        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = [f"{key}={report[key]}" for key in sorted(report)]
        lines += [f"violation={v}" for v in violations]
        (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="ascii")
        covers = artifacts.get("covers")
        if covers:
            (out / "covers.txt").write_text(format_covers(covers), encoding="ascii")
        for mode in ("full", "reduced"):
            diagram = artifacts.get(f"{mode}_diagram")
            if diagram is not None:
                pts = sample_query_points(sites, 2000, args.seed)
                save_ratio_histogram(
                    query_ratios(diagram, pts), args.eps, out / f"ratio_{mode}.png"
                )
        print(f"wrote report files to {out}")
    if violations:
        for v in violations:
            print(f"VIOLATION: {v}", file=sys.stderr)
        return EXIT_VIOLATIONS
    print("all checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="awvd",
        description="Approximate multiplicatively weighted Voronoi diagrams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a random sites file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--weights", choices=["equal", "uniform", "two-class"],
                   default="uniform")
    p.add_argument("--wmax", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("build", help="build a diagram from a sites file")
    p.add_argument("--sites", required=True)
    p.add_argument("--eps", type=float, default=0.25)
    p.add_argument("--mode", choices=["full", "reduced"], default="reduced")
    p.add_argument("--frac-bits", type=int, default=48)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="answer nearest-site queries")
    p.add_argument("--diagram", required=True)
    p.add_argument("--points")
    p.add_argument("--random", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--check", action="store_true",
                   help="compare against the exact brute-force answer")
    p.add_argument("--report-dir")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("render", help="render a d=2 diagram to SVG")
    p.add_argument("--diagram", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("validate", help="run invariant suites")
    p.add_argument("--sites", required=True)
    p.add_argument("--eps", type=float, default=0.25)
    p.add_argument("--suite", choices=[*SUITES, "all"], default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report-dir")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

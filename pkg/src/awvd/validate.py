"""Invariant suites behind the validate command.

Each suite returns a list of violation strings (empty means pass) plus a
report dictionary of measured quantities.
"""

from __future__ import annotations

import math

import numpy as np

from .cover import (
    build_covers,
    build_sspd,
    cover_size_cap,
    cover_spotcheck,
    validate_sspd,
)
from .cubes import GridConfig, check_tree
from .diagram import build_diagram, dumps_diagram
from .geometry import ApproxParams, SiteSet, build_params, pair_ball
from .oracle import (
    brute_refinement_oracle,
    corner_query_points,
    query_ratios,
    ratio_check,
)
from .refine import BOUNDARY, BallIntersection, classify_cube, refine_region

SUITES = ("refine", "sspd", "cover", "e2e")


def _sample_regions(sites: SiteSet, params: ApproxParams, seed: int, count: int):
    rng = np.random.default_rng(seed)
    n = sites.n
    for _ in range(count):
        apex = int(rng.integers(1, n))
        heavier = np.arange(apex + 1, n + 1)
        size = int(rng.integers(1, min(8, len(heavier)) + 1))
        partners = rng.choice(heavier, size=size, replace=False)
        balls = [pair_ball(sites, apex, int(j), params.floor_eps) for j in partners]
        yield BallIntersection(apex, sites.coords[apex - 1], balls)


def suite_refine(sites: SiteSet, params: ApproxParams, seed: int = 0):
    """Refinement vs the plain-splitting oracle, split accounting, and
    parent minimality on regions sampled from the instance."""
    violations: list[str] = []
    report: dict[str, float] = {}
    grid = GridConfig.from_points(sites.coords)
    total_cubes = 0
    for idx, region in enumerate(_sample_regions(sites, params, seed, 6)):
        out = refine_region(region, params.refine_eps, grid)
        ref = brute_refinement_oracle(region, params.refine_eps, grid)
        if set(out.cubes) != set(ref.cubes):
            violations.append(f"refine/oracle cube sets differ on region {idx}")
        if out.type_one_splits > out.type_two_splits + 1:
            violations.append(f"split accounting violated on region {idx}")
        if out.total_splits > 2 * len(out.cubes):
            violations.append(f"total splits exceed 2|L| on region {idx}")
        for cube in out.cubes:
            if cube.level == out.start.level:
                continue
            parent = cube.parent()
            verdict = out.verdicts.get((parent.level, parent.anchor))
            if verdict is None:
                verdict = classify_cube(region, parent, grid)
            if verdict != BOUNDARY:
                violations.append(f"parent of {cube} not boundary (region {idx})")
                break
            lo, hi = grid.cube_bounds(parent)
            delta = np.maximum(np.maximum(lo - region.apex, region.apex - hi), 0.0)
            if grid.cube_side(parent.level) <= params.refine_eps * math.sqrt(
                float((delta**2).sum())
            ):
                violations.append(f"parent of {cube} already small (region {idx})")
                break
        total_cubes += len(out.cubes)
    report["refine_regions"] = 6
    report["refine_total_cubes"] = total_cubes
    return violations, report


def suite_sspd(sites: SiteSet, params: ApproxParams):
    violations: list[str] = []
    report: dict[str, float] = {}
    pd = build_sspd(sites, params.separation)
    result = validate_sspd(pd, sites, params.separation)
    if not result.ok:
        violations.append(
            f"sspd invalid: {len(result.coverage_violations)} coverage, "
            f"{len(result.separation_violations)} separation"
        )
    report["sspd_pairs"] = result.pair_count
    report["sspd_weight"] = result.weight
    report["sspd_normalized_weight"] = result.normalized_weight
    if sites.n <= 64:
        brute = build_sspd(sites, params.separation, brute=True)
        if not validate_sspd(brute, sites, params.separation).ok:
            violations.append("brute-force fallback decomposition invalid")
        report["sspd_brute_weight"] = brute.weight
    return violations, report


def suite_cover(sites: SiteSet, params: ApproxParams, directions: int = 300):
    violations: list[str] = []
    report: dict[str, float] = {}
    artifacts: dict[str, object] = {}
    covers = build_covers(sites, params)
    artifacts["covers"] = covers
    cap = cover_size_cap(params, sites.d)
    max_size = 0
    for cover in covers:
        max_size = max(max_size, len(cover.partners))
        if not cover.partners:
            violations.append(f"empty cover for site {cover.apex}")
        if any(m <= cover.apex for m in cover.partners):
            violations.append(f"cover of site {cover.apex} keeps a lighter site")
        if len(cover.partners) > cap:
            violations.append(f"cover of site {cover.apex} exceeds the size cap")
    alpha = (1.0 + params.eps) / (1.0 + params.refine_eps)
    bad_rays = 0
    for cover in covers:
        full = list(range(cover.apex + 1, sites.n + 1))
        result = cover_spotcheck(
            sites,
            cover.apex,
            list(cover.partners),
            full,
            alpha,
            directions,
            params.floor_eps,
            seed=cover.apex,
        )
        bad_rays += len(result.violations)
    if bad_rays:
        violations.append(f"cover spotcheck violations: {bad_rays}")
    report["cover_max_size"] = max_size
    report["cover_size_cap"] = cap
    report["cover_alpha"] = alpha
    report["cover_directions"] = directions
    return violations, report, artifacts


def suite_e2e(sites: SiteSet, eps: float, seed: int = 0, queries: int = 4000):
    violations: list[str] = []
    report: dict[str, float] = {}
    artifacts: dict[str, object] = {}
    for mode in ("full", "reduced"):
        diagram = build_diagram(sites, eps, mode=mode)
        structure = check_tree(diagram.tree, sites.n)
        if structure:
            violations.append(f"{mode}: tree structure invalid: {structure[0]}")
        result = ratio_check(diagram, sites, queries, seed=seed)
        report[f"{mode}_max_ratio"] = result.max_ratio
        report[f"{mode}_mean_ratio"] = result.mean_ratio
        report[f"{mode}_cells"] = diagram.tree.cell_count
        if result.max_ratio > 1.0 + eps:
            violations.append(f"{mode}: ratio bound exceeded: {result.max_ratio:.6f}")
        corners = corner_query_points(diagram, max(queries // 10, 10), seed=seed + 1)
        corner_ratios = query_ratios(diagram, corners)
        if corner_ratios.max() > 1.0 + eps:
            violations.append(
                f"{mode}: corner-query ratio exceeded: {corner_ratios.max():.6f}"
            )
        rebuilt = build_diagram(sites, eps, mode=mode)
        if dumps_diagram(rebuilt) != dumps_diagram(diagram):
            violations.append(f"{mode}: rebuild is not byte-identical")
        artifacts[f"{mode}_ratios"] = result
        artifacts[f"{mode}_diagram"] = diagram
    return violations, report, artifacts


def run_suites(names, sites: SiteSet, eps: float, seed: int = 0):
    """Run the requested suites; returns (violations, report, artifacts)."""
    params = build_params(eps)
    violations: list[str] = []
    report: dict[str, float] = {"eps": eps, "n": sites.n, "d": sites.d}
    artifacts: dict[str, object] = {}
    if sites.n < 2:
        names = [name for name in names if name == "e2e"]
        report["skipped_suites"] = "single-site instance"
    for name in names:
        if name == "refine":
            v, r = suite_refine(sites, params, seed=seed)
        elif name == "sspd":
            v, r = suite_sspd(sites, params)
        elif name == "cover":
            v, r, art = suite_cover(sites, params)
            artifacts.update(art)
        elif name == "e2e":
            v, r, art = suite_e2e(sites, eps, seed=seed)
            artifacts.update(art)
        else:
            raise ValueError(f"unknown suite {name!r}")
        violations.extend(v)
        report.update(r)
    return violations, report, artifacts

"""Exact brute-force oracles, instance generators, and ratio measurement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cubes import GridConfig
from .errors import EmptyInput, OutOfRange
from .geometry import Site, SiteSet, make_ball
from .refine import BallIntersection, RefinementOutput, refine_region

WEIGHT_LAWS = ("uniform", "two-class", "equal")


@dataclass(frozen=True)
class Instance:
    """Reproducible random instance: (seed, spec) fully determine it."""

    d: int
    n: int
    sites: SiteSet
    seed: int
    generator: str
    weight_spec: str


def gen_instance(
    n: int, d: int, weight_law: str = "uniform", seed: int = 0, w_max: float = 4.0
) -> Instance:
    """Sites uniform in the unit cube; weights per the named law."""
    if n < 1:
        raise OutOfRange("n must be >= 1")
    if not 2 <= d <= 4:
        raise OutOfRange("d must be in [2, 4]")
    if weight_law not in WEIGHT_LAWS:
        raise OutOfRange(f"unknown weight law {weight_law!r}")
    rng = np.random.default_rng(seed)
    coords = rng.random((n, d))
    if weight_law == "uniform":
        weights = rng.uniform(1.0, w_max, size=n)
        spec = f"uniform[1,{w_max:g}]"
    elif weight_law == "two-class":
        weights = np.where(rng.random(n) < 0.5, 1.0, w_max)
        spec = f"two-class{{1,{w_max:g}}}"
    else:
        weights = np.ones(n)
        spec = "all-equal"
    return Instance(
        d=d,
        n=n,
        sites=SiteSet(coords, weights),
        seed=seed,
        generator="unit-cube-uniform",
        weight_spec=spec,
    )


def brute_nn(sites: SiteSet, p) -> tuple[int, float]:
    """Exact weighted nearest neighbor: lowest index wins ties (1-based)."""
    p = np.asarray(p, dtype=float)
    dists = np.sqrt(((sites.coords - p) ** 2).sum(axis=1)) / sites.weights
    idx = int(np.argmin(dists))
    return idx + 1, float(dists[idx])


def brute_nn_alt(sites: SiteSet, p) -> tuple[int, float]:
    """Independently coded scan (plain loops) used to cross-check brute_nn."""
    best_idx = 1
    best = None
    for i in range(sites.n):
        acc = 0.0
        for k in range(sites.d):
            delta = float(sites.coords[i, k]) - float(p[k])
            acc += delta * delta
        dist = acc**0.5 / float(sites.weights[i])
        if best is None or dist < best:
            best = dist
            best_idx = i + 1
    return best_idx, best


def brute_refinement_oracle(
    region: BallIntersection,
    refine_eps: float,
    grid: GridConfig,
    budget: int = 10**6,
) -> RefinementOutput:
    """Plain breadth-first splitting with no chain collapsing.

    Uses the same classification as refine_region (verdicts are a pure
    function of the region and cube), so the emitted cube set must match
    it exactly.  Guarded by a cube budget for runaway regions.
    """
    return refine_region(region, refine_eps, grid, zoom=False, budget=budget)


def random_ball_region(
    d: int, n_balls: int, seed: int, floor_eps: float = 0.05
) -> tuple[BallIntersection, GridConfig]:
    """Synthetic apex-centered region of 1..n_balls random Apollonius balls
    plus a grid sized for it; used to exercise refinement against oracles."""
    rng = np.random.default_rng(seed)
    apex = rng.uniform(-1.0, 1.0, size=d)
    apex_site = Site(apex, 1.0, 1)
    balls = []
    for b in range(n_balls):
        direction = rng.normal(size=d)
        direction /= np.linalg.norm(direction)
        dist = rng.uniform(0.2, 2.0)
        partner = Site(apex + direction * dist, 1.0, b + 2)
        gamma = max(1.0 + floor_eps, rng.uniform(1.0, 4.0))
        balls.append(make_ball(apex_site, partner, gamma))
    region = BallIntersection(apex_index=1, apex=apex, balls=balls)
    outer = max(ball.far_dist for ball in balls)
    anchors = np.stack([apex - outer, apex + outer])
    grid = GridConfig.from_points(anchors, frac_bits=48)
    return region, grid


@dataclass
class RatioReport:
    max_ratio: float
    mean_ratio: float
    histogram: list[tuple[float, int]]
    n_queries: int
    max_comparisons: int
    cell_count: int
    seed: int

    def lines(self) -> list[str]:
        out = [
            f"queries={self.n_queries}",
            f"seed={self.seed}",
            f"max_ratio={self.max_ratio:.12g}",
            f"mean_ratio={self.mean_ratio:.12g}",
            f"max_comparisons={self.max_comparisons}",
            f"cell_count={self.cell_count}",
        ]
        for edge, count in self.histogram:
            out.append(f"hist_le_{edge:g}={count}")
        return out


def sample_query_points(sites: SiteSet, m: int, seed: int, inflate: float = 1.5):
    """Uniform points in the site bounding box inflated about its center."""
    lo, hi = sites.bbox()
    center = (lo + hi) / 2.0
    half = np.maximum((hi - lo) / 2.0, 1e-9) * inflate
    rng = np.random.default_rng(seed)
    return center + rng.uniform(-1.0, 1.0, size=(m, sites.d)) * half


def query_ratios(diagram, points) -> np.ndarray:
    """Ratio of the diagram's answer to the exact optimum per point (0/0 -> 1)."""
    sites = diagram.sites
    ratios = np.empty(len(points))
    for idx, p in enumerate(points):
        label, dist = diagram.query(p)
        _, exact = brute_nn(sites, p)
        if exact == 0.0:
            ratios[idx] = 1.0 if dist == 0.0 else np.inf
        else:
            ratios[idx] = dist / exact
    return ratios


def ratio_check(diagram, sites: SiteSet, m: int, seed: int) -> RatioReport:
    """Max/mean ratio over m uniform queries in the inflated bounding box."""
    if m < 1:
        raise EmptyInput("need at least one query")
    points = sample_query_points(sites, m, seed)
    diagram.reset_comparison_stats()
    ratios = query_ratios(diagram, points)
    edges = [1.0, 1.01, 1.05, 1.1, 1.25, 1.5, 2.0, np.inf]
    hist = []
    for edge in edges:
        hist.append((edge, int((ratios <= edge).sum())))
    return RatioReport(
        max_ratio=float(ratios.max()),
        mean_ratio=float(ratios.mean()),
        histogram=hist,
        n_queries=m,
        max_comparisons=diagram.max_comparisons,
        cell_count=diagram.tree.cell_count,
        seed=seed,
    )


def corner_query_points(diagram, m: int, seed: int) -> np.ndarray:
    """Corner points of randomly chosen diagram cubes (adversarial queries)."""
    rng = np.random.default_rng(seed)
    nodes = diagram.tree.nodes
    picks = rng.integers(0, len(nodes), size=m)
    grid = diagram.grid
    points = np.empty((m, grid.d))
    corner_choice = rng.integers(0, 2, size=(m, grid.d))
    for row, node_idx in enumerate(picks):
        lo, hi = grid.cube_bounds(nodes[node_idx].cube)
        points[row] = np.where(corner_choice[row] == 0, lo, hi)
    return points

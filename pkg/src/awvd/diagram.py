"""Assemble the approximate weighted Voronoi diagram and answer queries.

Every site except the heaviest contributes the cube approximation of its
ball-intersection region, labeled with the site index; the root cube is
labeled with the heaviest site.  Duplicates keep the minimum label, the
compressed tree is built over the cubes, and labels propagate top-down.
A query locates the smallest containing cell and reports its label; the
answer's weighted distance is within (1 + eps) of optimal.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cover import CoverSet, build_covers
from .cubes import (
    CanonicalCube,
    CompressedQuadTree,
    GridConfig,
    VERSION_TAG,
    build_compressed_tree,
    propagate_labels,
)
from .errors import AwvdError, OutOfRange
from .geometry import ApproxParams, SiteSet, build_params, pair_ball, weighted_distance
from .refine import BallIntersection, RefinementOutput, refine_region

FULL = "full"
REDUCED = "reduced"


@dataclass
class DiagramStats:
    n: int
    d: int
    eps: float
    refine_eps: float
    floor_eps: float
    mode: str
    frac_bits: int
    per_core_cubes: dict[int, int] = field(default_factory=dict)
    per_core_partners: dict[int, int] = field(default_factory=dict)
    type_one_splits: int = 0
    type_two_splits: int = 0
    cell_count: int = 0
    node_count: int = 0
    depth: int = 0
    build_seconds: float = 0.0

    @property
    def total_cubes(self) -> int:
        return sum(self.per_core_cubes.values())

    def lines(self, include_timing: bool = True) -> list[str]:
        sizes = sorted(self.per_core_cubes.values())
        out = [
            f"n={self.n}",
            f"d={self.d}",
            f"eps={self.eps:.12g}",
            f"refine_eps={self.refine_eps:.12g}",
            f"floor_eps={self.floor_eps:.12g}",
            f"mode={self.mode}",
            f"frac_bits={self.frac_bits}",
            f"regions={len(self.per_core_cubes)}",
            f"total_cubes={self.total_cubes}",
            f"cubes_min={sizes[0] if sizes else 0}",
            f"cubes_median={sizes[len(sizes) // 2] if sizes else 0}",
            f"cubes_max={sizes[-1] if sizes else 0}",
            f"max_partners={max(self.per_core_partners.values()) if self.per_core_partners else 0}",
            f"type_one_splits={self.type_one_splits}",
            f"type_two_splits={self.type_two_splits}",
            f"node_count={self.node_count}",
            f"cell_count={self.cell_count}",
            f"tree_depth={self.depth}",
        ]
        if include_timing:
            out.append(f"build_seconds={self.build_seconds:.3f}")
        return out

    def text(self, include_timing: bool = True) -> str:
        return "\n".join(self.lines(include_timing)) + "\n"


class AMWVD:
    """Built diagram: immutable tree plus the sites it answers for.

    Queries are safe for concurrent readers; the comparison counters they
    update are plain instrumentation and only reliable single-threaded.
    """

    def __init__(
        self,
        tree: CompressedQuadTree,
        sites: SiteSet,
        params: ApproxParams | None,
        stats: DiagramStats | None,
        mode: str,
    ):
        self.tree = tree
        self.sites = sites
        self.params = params
        self.stats = stats
        self.mode = mode
        self.refinements: list[tuple[int, RefinementOutput]] | None = None
        self.max_comparisons = 0
        self.total_comparisons = 0
        self.query_count = 0

    @property
    def grid(self) -> GridConfig:
        return self.tree.grid

    def reset_comparison_stats(self) -> None:
        self.max_comparisons = 0
        self.total_comparisons = 0
        self.query_count = 0

    def query(self, p) -> tuple[int, float]:
        """Label and weighted distance of the approximate nearest site.

        Points outside the root cube are clamped onto it first; the root
        is padded well beyond the sites, so those points belong to the
        heaviest site's territory anyway.
        """
        label, _, comparisons = self.tree.point_locate(p, clamp=True)
        self.max_comparisons = max(self.max_comparisons, comparisons)
        self.total_comparisons += comparisons
        self.query_count += 1
        return label, weighted_distance(p, self.sites.site(label))


def _region_for(
    sites: SiteSet, apex: int, partners, floor_eps: float
) -> BallIntersection | None:
    """Ball-intersection region of a site, or None when it is empty.

    A heavier site at the exact same point beats the apex everywhere (the
    pair's ball, point scaled by the effective weight, is empty), so the
    apex contributes no cells at all.
    """
    balls = []
    for j in partners:
        if np.array_equal(sites.coords[apex - 1], sites.coords[j - 1]):
            return None
        balls.append(pair_ball(sites, apex, int(j), floor_eps))
    return BallIntersection(
        apex_index=apex, apex=sites.coords[apex - 1], balls=balls
    )


def build_diagram(
    sites: SiteSet,
    eps: float,
    mode: str = REDUCED,
    *,
    params: ApproxParams | None = None,
    covers: list[CoverSet] | None = None,
    frac_bits: int = 48,
    threads: int = 1,
    keep_refinements: bool = False,
) -> AMWVD:
    """Build the diagram for the given target eps.

    ``mode='full'`` refines each site against all heavier sites;
    ``mode='reduced'`` first thins the partner sets with the pair
    decomposition pipeline.  Output is deterministic for fixed inputs
    regardless of ``threads``.
    """
    if mode not in (FULL, REDUCED):
        raise OutOfRange(f"mode must be 'full' or 'reduced', got {mode!r}")
    t0 = time.perf_counter()
    if params is None:
        params = build_params(eps)
    n = sites.n
    grid = GridConfig.from_points(sites.coords, frac_bits=frac_bits)

    partner_lists: dict[int, list[int]] = {}
    if n > 1:
        if mode == FULL:
            for i in range(1, n):
                partner_lists[i] = list(range(i + 1, n + 1))
        else:
            if covers is None:
                covers = build_covers(sites, params)
            for cover in covers:
                partner_lists[cover.apex] = list(cover.partners)

    stats = DiagramStats(
        n=n,
        d=sites.d,
        eps=params.eps,
        refine_eps=params.refine_eps,
        floor_eps=params.floor_eps,
        mode=mode,
        frac_bits=frac_bits,
    )

    def refine_one(apex: int) -> RefinementOutput:
        empty = RefinementOutput([], {}, 0, 0, {}, grid.root, 0)
        heavier = sites.coords[apex:]
        if len(heavier) and (heavier == sites.coords[apex - 1]).all(axis=1).any():
            # A heavier site at the same point wins everywhere.
            return empty
        region = _region_for(sites, apex, partner_lists[apex], params.floor_eps)
        if region is None or not region.balls:
            return empty
        return refine_region(region, params.refine_eps, grid)

    apexes = sorted(partner_lists)
    if threads > 1 and len(apexes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(refine_one, apexes))
    else:
        outputs = [refine_one(a) for a in apexes]

    labeled: list[tuple[CanonicalCube, int]] = [(grid.root, n)]
    for apex, out in zip(apexes, outputs):
        stats.per_core_cubes[apex] = len(out.cubes)
        stats.per_core_partners[apex] = len(partner_lists[apex])
        stats.type_one_splits += out.type_one_splits
        stats.type_two_splits += out.type_two_splits
        for cube in out.cubes:
            labeled.append((cube, apex))

    tree = build_compressed_tree(grid, labeled)
    propagate_labels(tree, n)
    stats.node_count = tree.node_count
    stats.cell_count = tree.cell_count
    stats.depth = tree.depth
    stats.build_seconds = time.perf_counter() - t0
    diagram = AMWVD(tree, sites, params, stats, mode)
    if keep_refinements:
        diagram.refinements = list(zip(apexes, outputs))
    return diagram


# ---------------------------------------------------------------------------
# Serialization: self-contained text dump (header, sites, cells)


def dumps_diagram(diagram: AMWVD) -> str:
    grid = diagram.grid
    sites = diagram.sites
    lines = [
        f"{VERSION_TAG} d={grid.d} B={grid.frac_bits} root={grid.header_fields()}",
        f"mode={diagram.mode} eps={diagram.params.eps:.17g}" if diagram.params
        else f"mode={diagram.mode} eps=nan",
        f"sites {sites.n}",
    ]
    for i in range(sites.n):
        coords = " ".join(f"{c:.17g}" for c in sites.coords[i])
        lines.append(f"{coords} {sites.weights[i]:.17g}")
    lines.append(f"cells {diagram.tree.node_count}")
    for node in diagram.tree.nodes:
        anchors = " ".join(str(a) for a in node.cube.anchor)
        lines.append(f"{node.cube.level} {anchors} {node.label}")
    return "\n".join(lines) + "\n"


def dump_diagram(diagram: AMWVD, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps_diagram(diagram))


def loads_diagram(text: str) -> AMWVD:
    lines = text.splitlines()
    if not lines:
        raise AwvdError("empty dump")
    header = lines[0].split()
    if " ".join(header[:2]) != VERSION_TAG:
        raise AwvdError(f"unrecognized dump header: {lines[0]!r}")
    fields = dict(part.split("=", 1) for part in header[2:] if "=" in part)
    d = int(fields["d"])
    frac_bits = int(fields["B"])
    root_idx = lines[0].index("root=")
    root_fields = lines[0][root_idx + len("root="):].split()
    grid = GridConfig.from_header_fields(d, frac_bits, root_fields)

    meta = dict(part.split("=", 1) for part in lines[1].split())
    mode = meta.get("mode", REDUCED)
    eps = float(meta.get("eps", "nan"))

    cursor = 2
    tag, count = lines[cursor].split()
    if tag != "sites":
        raise AwvdError("expected sites section")
    n = int(count)
    coords = []
    weights = []
    for row in range(n):
        parts = lines[cursor + 1 + row].split()
        coords.append([float(x) for x in parts[:d]])
        weights.append(float(parts[d]))
    sites = SiteSet(np.array(coords), np.array(weights))
    cursor += 1 + n

    tag, count = lines[cursor].split()
    if tag != "cells":
        raise AwvdError("expected cells section")
    m = int(count)
    labeled: list[tuple[CanonicalCube, int]] = []
    for row in range(m):
        parts = lines[cursor + 1 + row].split()
        level = int(parts[0])
        anchor = tuple(int(x) for x in parts[1 : 1 + d])
        labeled.append((CanonicalCube(level, anchor), int(parts[1 + d])))

    tree = build_compressed_tree(grid, labeled)
    propagate_labels(tree, n)
    params = None
    if eps == eps and 0.0 < eps < 1.0:  # eps is not NaN
        params = build_params(eps)
    return AMWVD(tree, sites, params, None, mode)


def load_diagram(path) -> AMWVD:
    with open(path, "r", encoding="ascii") as fh:
        return loads_diagram(fh.read())

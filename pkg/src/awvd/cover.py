"""Pair decomposition, direction cones, and per-site ball-set reduction.

For every site, the candidate partner set (all heavier sites) is thinned
to a small subset whose ball intersection still sits inside every
slightly enlarged original ball.  The reduction walks a semi-separated
pair decomposition of the sites and keeps, per direction cone and per
distance interval, only the minimum-diameter ball.

Site points are assumed pairwise distinct here; exact duplicates are
resolved upstream by the diagram builder (a heavier twin erases the
lighter site's region outright).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoincidentPoints, DegenerateGamma, EmptyInput
from .geometry import ApproxParams, SiteSet, enlarged_ball, pair_ball

# ---------------------------------------------------------------------------
# Semi-separated pair decomposition


@dataclass(frozen=True)
class SitePair:
    """One decomposition pair; ``light`` has the smaller maximum index."""

    light: np.ndarray  # 1-based site indices
    heavy: np.ndarray
    diam_light: float
    diam_heavy: float
    top_light: int
    top_heavy: int


@dataclass
class PairDecomposition:
    pairs: list[SitePair]
    sigma: float

    @property
    def weight(self) -> int:
        return sum(len(p.light) + len(p.heavy) for p in self.pairs)


def _exact_diameter(coords: np.ndarray) -> float:
    if coords.shape[0] < 2:
        return 0.0
    diff = coords[:, None, :] - coords[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=-1).max()))


def _make_pair(sites: SiteSet, a: np.ndarray, b: np.ndarray) -> SitePair:
    top_a = int(a.max())
    top_b = int(b.max())
    diam_a = _exact_diameter(sites.coords[a - 1])
    diam_b = _exact_diameter(sites.coords[b - 1])
    if top_a < top_b:
        return SitePair(a, b, diam_a, diam_b, top_a, top_b)
    return SitePair(b, a, diam_b, diam_a, top_b, top_a)


class _SplitNode:
    __slots__ = ("indices", "lo", "hi", "left", "right")

    def __init__(self, coords: np.ndarray, indices: np.ndarray):
        self.indices = indices
        pts = coords[indices - 1]
        self.lo = pts.min(axis=0)
        self.hi = pts.max(axis=0)
        self.left = self.right = None
        if len(indices) > 1:
            axis = int(np.argmax(self.hi - self.lo))
            order = indices[np.argsort(pts[:, axis], kind="stable")]
            half = len(order) // 2
            self.left = _SplitNode(coords, order[:half])
            self.right = _SplitNode(coords, order[half:])

    @property
    def diameter_ub(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))


def _box_gap(u: _SplitNode, v: _SplitNode) -> float:
    gap = np.maximum(np.maximum(u.lo - v.hi, v.lo - u.hi), 0.0)
    return float(np.linalg.norm(gap))


def build_sspd(sites: SiteSet, sigma: float, brute: bool = False) -> PairDecomposition:
    """Pair decomposition where each pair's smaller diameter times sigma is
    at most the inter-set distance.

    The default construction recurses on a median split tree, splitting
    the larger-diameter side until the bounding boxes certify the
    separation.  ``brute`` emits one singleton pair per site pair (always
    valid, quadratic weight); handy as a reference for small inputs.
    """
    if sites.n < 2:
        raise EmptyInput("need at least two sites")
    if sigma <= 1.0:
        raise ValueError("sigma must exceed 1")
    pairs: list[SitePair] = []
    if brute:
        for i in range(1, sites.n + 1):
            for j in range(i + 1, sites.n + 1):
                pairs.append(
                    _make_pair(sites, np.array([i]), np.array([j]))
                )
        return PairDecomposition(pairs, sigma)

    root = _SplitNode(sites.coords, np.arange(1, sites.n + 1))

    def find(u: _SplitNode, v: _SplitNode) -> None:
        du, dv = u.diameter_ub, v.diameter_ub
        if sigma * min(du, dv) <= _box_gap(u, v):
            pairs.append(_make_pair(sites, u.indices, v.indices))
            return
        if du >= dv and u.left is not None:
            find(u.left, v)
            find(u.right, v)
        elif v.left is not None:
            find(u, v.left)
            find(u, v.right)
        else:
            find(u.left, v)
            find(u.right, v)

    def walk(node: _SplitNode) -> None:
        if node.left is None:
            return
        find(node.left, node.right)
        walk(node.left)
        walk(node.right)

    walk(root)
    return PairDecomposition(pairs, sigma)


@dataclass
class SspdReport:
    coverage_violations: list[tuple[int, int]]
    separation_violations: list[int]
    weight: int
    pair_count: int
    normalized_weight: float

    @property
    def ok(self) -> bool:
        return not self.coverage_violations and not self.separation_violations


def validate_sspd(pd: PairDecomposition, sites: SiteSet, sigma: float) -> SspdReport:
    """Brute-force check: every site pair separated by some pair, and each
    pair obeys the diameter-form separation with exact distances."""
    n = sites.n
    covered = np.zeros((n + 1, n + 1), dtype=bool)
    separation_bad: list[int] = []
    for idx, pr in enumerate(pd.pairs):
        covered[np.ix_(pr.light, pr.heavy)] = True
        covered[np.ix_(pr.heavy, pr.light)] = True
        a = sites.coords[pr.light - 1]
        b = sites.coords[pr.heavy - 1]
        cross = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))
        min_cross = float(cross.min())
        small = min(_exact_diameter(a), _exact_diameter(b))
        if small * sigma > min_cross * (1.0 + 1e-9):
            separation_bad.append(idx)
    coverage_bad = [
        (i, j)
        for i in range(1, n + 1)
        for j in range(i + 1, n + 1)
        if not covered[i, j]
    ]
    weight = pd.weight
    norm = weight / (sigma**sites.d * n * max(math.log2(n), 1.0))
    return SspdReport(coverage_bad, separation_bad, weight, len(pd.pairs), norm)


# ---------------------------------------------------------------------------
# Direction cones


@dataclass(frozen=True)
class ConeGrid:
    """Angular bins around a site.

    Each of the d-1 spherical coordinates is cut into intervals of width
    ``cone_angle / sqrt(d-1)``; since the round metric is bounded by the
    flat coordinate metric, two directions in the same bin differ by a
    total angle of at most ``cone_angle``.
    """

    d: int
    cone_angle: float
    width: float
    counts: tuple[int, ...]

    @classmethod
    def from_angle(cls, d: int, cone_angle: float) -> "ConeGrid":
        if d < 2:
            raise ValueError("need d >= 2")
        if not 0.0 < cone_angle < math.pi:
            raise ValueError("cone_angle must be in (0, pi)")
        width = cone_angle / math.sqrt(d - 1)
        counts = tuple(
            math.ceil(math.pi / width) for _ in range(d - 2)
        ) + (math.ceil(2.0 * math.pi / width),)
        return cls(d, cone_angle, width, counts)

    @property
    def total(self) -> int:
        out = 1
        for c in self.counts:
            out *= c
        return out

    def index(self, apex, target) -> int:
        v = np.asarray(target, dtype=float) - np.asarray(apex, dtype=float)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise CoincidentPoints("direction undefined for coincident points")
        angles = []
        for k in range(self.d - 2):
            tail = float(np.linalg.norm(v[k + 1 :]))
            angles.append(math.atan2(tail, v[k]))
        azimuth = math.atan2(v[-1], v[-2]) % (2.0 * math.pi)
        angles.append(azimuth)
        idx = 0
        for angle, count in zip(angles, self.counts):
            slot = min(int(angle / self.width), count - 1)
            idx = idx * count + slot
        return idx


# ---------------------------------------------------------------------------
# Champion scan and the three-pass reduction


def _near_far(sites: SiteSet, i: int, m: int, floor_eps: float) -> tuple[float, float]:
    """Surface distances of the (apex i, partner m) ball; any m != i."""
    diff = sites.coords[m - 1] - sites.coords[i - 1]
    dist = float(np.linalg.norm(diff))
    if dist == 0.0:
        raise CoincidentPoints(f"sites {i} and {m} coincide")
    gamma = max(float(sites.weights[m - 1] / sites.weights[i - 1]), 1.0 + floor_eps)
    return dist / (gamma + 1.0), dist / (gamma - 1.0)


def _interval_index(a: float, b: float, length: float, t: float) -> int | None:
    """Slot of value t among the intervals of the given length covering
    [a, b]; the first interval is closed at a.  None when t lies beyond
    the last interval."""
    n_int = max(1, math.ceil((b - a) / length)) if b > a else 1
    if t > a + n_int * length * (1.0 + 1e-12):
        return None
    if t <= a + length:
        return 0
    return min(math.ceil((t - a) / length) - 1, n_int - 1)


def interval_cap(params: ApproxParams) -> int:
    """Upper bound on occupied intervals per cone: ceil(4/(cone*floor)) + 2."""
    return math.ceil(4.0 / (params.cone_eps * params.floor_eps)) + 2


def cover_size_cap(params: ApproxParams, d: int) -> int:
    """Structural bound on a reduced partner set: cones times intervals."""
    return ConeGrid.from_angle(d, params.cone_angle).total * interval_cap(params)


def scan_cone_sites(
    sites: SiteSet, i: int, partners, cone_eps: float, floor_eps: float
) -> list[int]:
    """Champion partners of one cone around site i.

    Distance intervals of length (min near distance) * cone_eps / 2 cover
    the range up to the minimum far distance; each interval keeps the
    partner whose ball has the smallest diameter.  Partners beyond the
    last interval are dominated and dropped.
    """
    partners = [int(m) for m in partners]
    if not partners:
        return []
    values = [(_near_far(sites, i, m, floor_eps), m) for m in partners]
    a = min(nf[0] for nf, _ in values)
    b = min(nf[1] for nf, _ in values)
    length = a * cone_eps / 2.0
    champions: dict[int, tuple[float, int]] = {}
    for (near, far), m in values:
        slot = _interval_index(a, b, length, near)
        if slot is None:
            continue
        diameter = near + far
        incumbent = champions.get(slot)
        if incumbent is None or diameter < incumbent[0]:
            champions[slot] = (diameter, m)
    return sorted(m for _, m in champions.values())


@dataclass(frozen=True)
class CoverSet:
    """Reduced partner list of one site; always a subset of the heavier sites."""

    apex: int
    partners: tuple[int, ...]


def format_covers(covers: list["CoverSet"]) -> str:
    """One line per site, `i: j1 j2 ...`; handy for diffing full against
    reduced builds."""
    lines = [
        f"{cover.apex}: " + " ".join(str(m) for m in cover.partners)
        for cover in covers
    ]
    return "\n".join(lines) + "\n"


def parse_covers(text: str) -> list["CoverSet"]:
    covers = []
    for line in text.splitlines():
        if not line.strip():
            continue
        head, _, rest = line.partition(":")
        covers.append(
            CoverSet(int(head), tuple(int(tok) for tok in rest.split()))
        )
    return covers


def build_covers(
    sites: SiteSet, params: ApproxParams, pd: PairDecomposition | None = None
) -> list[CoverSet]:
    """Reduced partner sets for every site except the heaviest.

    Three passes over the pair decomposition: thin each heavy side to its
    per-cone champions as seen from the light side's top site; accumulate
    per (site, cone) distance ranges over the surviving candidates; then
    re-scan the candidates against interval champion tables and collect
    the winners.
    """
    n = sites.n
    if n < 2:
        return []
    if pd is None:
        pd = build_sspd(sites, params.separation)
    grid = ConeGrid.from_angle(sites.d, params.cone_angle)
    floor_eps = params.floor_eps
    cone_eps = params.cone_eps

    reduced_heavy: list[list[int]] = []
    for pr in pd.pairs:
        if pr.diam_heavy <= pr.diam_light:
            reduced_heavy.append([pr.top_heavy])
            continue
        ell = pr.top_light
        cones: dict[int, list[int]] = {}
        for m in sorted(int(x) for x in pr.heavy):
            try:
                cid = grid.index(sites.coords[ell - 1], sites.coords[m - 1])
            except CoincidentPoints:
                continue
            cones.setdefault(cid, []).append(m)
        kept: list[int] = []
        for cid in sorted(cones):
            kept.extend(scan_cone_sites(sites, ell, cones[cid], cone_eps, floor_eps))
        reduced_heavy.append(sorted(set(kept)))

    def iter_candidates(pr: SitePair, survivors: list[int]):
        members = sorted(set(int(x) for x in pr.light) | set(int(x) for x in pr.heavy))
        cand = sorted(set(survivors) | {pr.top_light, pr.top_heavy})
        for i in members:
            for m in cand:
                if m <= i:
                    continue
                try:
                    near, far = _near_far(sites, i, m, floor_eps)
                    cid = grid.index(sites.coords[i - 1], sites.coords[m - 1])
                except CoincidentPoints:
                    continue
                yield i, m, cid, near, far

    bounds: dict[tuple[int, int], list[float]] = {}
    for pr, survivors in zip(pd.pairs, reduced_heavy):
        for i, m, cid, near, far in iter_candidates(pr, survivors):
            slot = bounds.get((i, cid))
            if slot is None:
                bounds[(i, cid)] = [near, far]
            else:
                slot[0] = min(slot[0], near)
                slot[1] = min(slot[1], far)

    champions: dict[tuple[int, int], dict[int, tuple[float, int]]] = {}
    for pr, survivors in zip(pd.pairs, reduced_heavy):
        for i, m, cid, near, far in iter_candidates(pr, survivors):
            a, b = bounds[(i, cid)]
            length = a * cone_eps / 2.0
            slot = _interval_index(a, b, length, near)
            if slot is None:
                continue
            table = champions.setdefault((i, cid), {})
            diameter = near + far
            incumbent = table.get(slot)
            if incumbent is None or diameter < incumbent[0]:
                table[slot] = (diameter, m)

    collected: dict[int, set[int]] = {i: set() for i in range(1, n)}
    for (i, _), table in champions.items():
        for _, m in table.values():
            collected[i].add(m)
    return [CoverSet(i, tuple(sorted(collected[i]))) for i in range(1, n)]


# ---------------------------------------------------------------------------
# Sampling verification of the cover quality


@dataclass
class SpotcheckReport:
    violations: list[tuple[int, int]]  # (direction index, offending partner)
    degenerate: list[int]  # partners whose enlarged ball is no longer a ball
    samples: int

    @property
    def ok(self) -> bool:
        return not self.violations


def cover_spotcheck(
    sites: SiteSet,
    apex: int,
    kept,
    full,
    alpha: float,
    samples: int,
    floor_eps: float,
    seed: int = 0,
) -> SpotcheckReport:
    """Shoot rays from the apex site through random directions to the
    nearest kept-ball surface and check each boundary point against every
    alpha-enlarged original ball."""
    if alpha < 1.0:
        raise ValueError("alpha must be >= 1")
    rng = np.random.default_rng(seed)
    d = sites.d
    apex_pt = sites.coords[apex - 1]
    kept = [int(m) for m in kept]
    full = [int(m) for m in full]

    degenerate: list[int] = []
    alpha_centers = []
    alpha_radii = []
    checked = []
    for m in full:
        ball = pair_ball(sites, apex, m, floor_eps)
        try:
            grown = enlarged_ball(ball, alpha)
        except DegenerateGamma:
            degenerate.append(m)
            continue
        alpha_centers.append(grown.center)
        alpha_radii.append(grown.radius)
        checked.append(m)
    alpha_centers = np.array(alpha_centers).reshape(len(checked), d)
    alpha_radii = np.array(alpha_radii)

    if not kept:
        violations = [(-1, m) for m in checked]
        return SpotcheckReport(violations, degenerate, samples)

    kept_balls = [pair_ball(sites, apex, m, floor_eps) for m in kept]
    centers = np.array([b.center for b in kept_balls])
    radii = np.array([b.radius for b in kept_balls])
    offsets = centers - apex_pt

    violations: list[tuple[int, int]] = []
    for s in range(samples):
        u = rng.normal(size=d)
        u /= np.linalg.norm(u)
        proj = offsets @ u
        inside_margin = radii**2 - ((offsets**2).sum(axis=1) - proj**2)
        exit_t = proj + np.sqrt(np.maximum(inside_margin, 0.0))
        t = float(exit_t.min())
        x = apex_pt + t * u
        if len(checked):
            gap = np.sqrt(((x - alpha_centers) ** 2).sum(axis=1)) - alpha_radii
            bad = np.nonzero(gap > 1e-9 * np.maximum(alpha_radii, 1.0))[0]
            for b in bad:
                violations.append((s, checked[b]))
    return SpotcheckReport(violations, degenerate, samples)

"""Adaptive cube refinement of ball-intersection regions.

A region is the intersection of Apollonius balls sharing an apex point
(optionally clipped to a box).  Refinement recursively splits dyadic
cubes, discarding cubes certified outside the region and emitting cubes
that are either fully inside or boundary-crossing and small relative to
their distance from the apex.  Long chains of splits that keep only a
single child are collapsed by jumping to the smallest cube containing
the region's overlap with the current cube.

Refinement of one region is sequential; independent regions share no
state and may run concurrently.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cubes import CanonicalCube, GridConfig, cube_contains
from .errors import (
    BudgetExceeded,
    EmptyBallList,
    EmptyOverlap,
    RefinementDepthExceeded,
)
from .geometry import ApolloniusBall

INSIDE, OUTSIDE, BOUNDARY = 0, 1, 2

_OUT_MARGIN = 1.0 + 1e-12  # relative margin before certifying a ball separation


@lru_cache(maxsize=None)
def _corner_offsets(d: int) -> np.ndarray:
    """Unit-cube corners ordered with the axis-0 bit most significant."""
    corners = np.zeros((1 << d, d))
    for c in range(1 << d):
        for axis in range(d):
            corners[c, axis] = (c >> (d - 1 - axis)) & 1
    corners.setflags(write=False)
    return corners


@lru_cache(maxsize=None)
def _child_offsets(d: int) -> np.ndarray:
    offsets = _corner_offsets(d).astype(np.int64)
    offsets.setflags(write=False)
    return offsets


@dataclass
class BallIntersection:
    """Convex region: intersection of balls around an apex site, with an
    optional clip box.  An empty ball list with a clip box means the box
    itself."""

    apex_index: int
    apex: np.ndarray
    balls: list[ApolloniusBall]
    clip_lo: np.ndarray | None = None
    clip_hi: np.ndarray | None = None

    def __post_init__(self):
        self.apex = np.asarray(self.apex, dtype=float)
        k = len(self.balls)
        d = self.apex.shape[0]
        self.centers = np.array([b.center for b in self.balls]).reshape(k, d)
        self.radii = np.array([b.radius for b in self.balls])
        self.radii_sq = self.radii**2
        if k:
            gaps = ((self.apex - self.centers) ** 2).sum(axis=1)
            if np.any(gaps >= self.radii_sq):
                raise ValueError("apex must lie strictly inside every ball")

    @property
    def d(self) -> int:
        return self.apex.shape[0]

    def contains(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        if len(self.balls):
            d2 = ((p - self.centers) ** 2).sum(axis=1)
            if np.any(d2 > self.radii_sq * (1.0 + tol)):
                return False
        if self.clip_lo is not None:
            span = float(np.max(self.clip_hi - self.clip_lo))
            if np.any(p < self.clip_lo - tol * span) or np.any(p > self.clip_hi + tol * span):
                return False
        return True


def fatness_radii(region: BallIntersection) -> tuple[float, float]:
    """Inscribed and enclosing radii around the apex.

    The inscribed radius is the smallest near surface distance over the
    balls; the enclosing bound is the far distance of the ball attaining
    it, which contains the whole intersection.
    """
    if not region.balls:
        raise EmptyBallList("region has no balls")
    best = min(range(len(region.balls)), key=lambda k: region.balls[k].near_dist)
    return region.balls[best].near_dist, region.balls[best].far_dist


@dataclass
class RefinementOutput:
    cubes: list[CanonicalCube]
    halting: dict[CanonicalCube, int]
    type_one_splits: int
    type_two_splits: int
    verdicts: dict[tuple, int]
    start: CanonicalCube
    active_balls: int

    @property
    def total_splits(self) -> int:
        return self.type_one_splits + self.type_two_splits


class _CoreArrays:
    """Ball constraints active over the refinement domain.

    Balls that contain the whole starting cube can never reject or bound
    a descendant cube, so they are dropped up front; verdicts are
    unchanged by construction.
    """

    def __init__(self, region: BallIntersection, box_lo, box_hi):
        centers = region.centers
        radii_sq = region.radii_sq
        if len(region.balls):
            far = np.maximum(np.abs(box_lo - centers), np.abs(box_hi - centers))
            covers_box = (far**2).sum(axis=1) <= radii_sq
            keep = ~covers_box
            centers = centers[keep]
            radii_sq = radii_sq[keep]
        self.centers = centers
        self.radii_sq = radii_sq
        self.radii = np.sqrt(radii_sq)
        self.k = centers.shape[0]
        self.clip_lo = region.clip_lo
        self.clip_hi = region.clip_hi
        scale = 1.0
        if self.k:
            scale = max(scale, float(self.radii.max()))
        self.tol_len = 1e-12 * scale


def _classify_arrays(ca: _CoreArrays, lo: np.ndarray, side: np.ndarray) -> np.ndarray:
    """Verdicts for a batch of cubes given as (m, d) corners and (m,) sides."""
    m, d = lo.shape
    hi = lo + side[:, None]
    if ca.k:
        pts = lo[:, None, :] + side[:, None, None] * _corner_offsets(d)[None, :, :]
        d2 = ((pts[:, :, None, :] - ca.centers[None, None, :, :]) ** 2).sum(axis=-1)
        corner_in = d2 <= ca.radii_sq[None, None, :]
        inside = corner_in.all(axis=(1, 2))
        # A corner inside every ball certifies the cube meets the region,
        # which spares the exclusion probe for ordinary boundary cubes.
        touches = corner_in.all(axis=2).any(axis=1)
        delta = np.maximum(
            np.maximum(lo[:, None, :] - ca.centers[None, :, :],
                       ca.centers[None, :, :] - hi[:, None, :]),
            0.0,
        )
        bd2 = (delta**2).sum(axis=-1)
        outside = (bd2 > ca.radii_sq[None, :] * _OUT_MARGIN).any(axis=1)
    else:
        inside = np.ones(m, dtype=bool)
        outside = np.zeros(m, dtype=bool)
        touches = np.ones(m, dtype=bool)
    if ca.clip_lo is not None:
        inside &= (lo >= ca.clip_lo).all(axis=1) & (hi <= ca.clip_hi).all(axis=1)
        outside |= (lo >= ca.clip_hi).any(axis=1) | (hi <= ca.clip_lo).any(axis=1)
        # A corner inside the balls may still fall outside the clip box, so
        # the shortcut does not apply to clipped regions.
        touches = np.zeros(m, dtype=bool)
    verdicts = np.full(m, BOUNDARY, dtype=np.int8)
    verdicts[outside] = OUTSIDE
    verdicts[inside] = INSIDE
    if ca.k >= 2:
        probe_mask = (verdicts == BOUNDARY) & ~touches
        for idx in np.nonzero(probe_mask)[0]:
            blo, bhi = lo[idx], hi[idx]
            if ca.clip_lo is not None:
                blo = np.maximum(blo, ca.clip_lo)
                bhi = np.minimum(bhi, ca.clip_hi)
                if np.any(blo >= bhi):
                    verdicts[idx] = OUTSIDE
                    continue
            if _pocs_excludes(blo, bhi, ca.centers, ca.radii, ca.tol_len):
                verdicts[idx] = OUTSIDE
    return verdicts


def _pair_support_min(u_hat, c1, r1, c2, r2) -> float:
    """Exact minimum of u_hat . p over the intersection of two balls
    (u_hat a unit vector); +inf when the balls are disjoint."""
    p1 = c1 - r1 * u_hat
    if float(((p1 - c2) ** 2).sum()) <= r2 * r2:
        return float(u_hat @ c1) - r1
    p2 = c2 - r2 * u_hat
    if float(((p2 - c1) ** 2).sum()) <= r1 * r1:
        return float(u_hat @ c2) - r2
    n = c2 - c1
    nn = float(n @ n)
    if nn == 0.0:
        return float(u_hat @ c1) - min(r1, r2)
    t = (r1 * r1 - r2 * r2 + nn) / (2.0 * nn)
    rho_sq = r1 * r1 - t * t * nn
    if rho_sq < 0.0:
        return np.inf  # no common rim and neither cap inside: disjoint balls
    rim_center = c1 + t * n
    u_par = (float(u_hat @ n) / nn) * n
    u_perp = u_hat - u_par
    return float(u_hat @ rim_center) - np.sqrt(rho_sq) * float(
        np.sqrt(u_perp @ u_perp)
    )


def _intersection_support_lb(u, centers, radii) -> float:
    """Lower bound on min of u . p over the ball intersection: the best of
    the single-ball and exact two-ball support minima (all pairs, vectorized)."""
    norm_u = float(np.sqrt(u @ u))
    u_hat = u / norm_u
    proj = centers @ u_hat
    best = float((proj - radii).max())
    k = len(radii)
    if k >= 2:
        ia, ib = np.triu_indices(k, 1)
        c1, c2 = centers[ia], centers[ib]
        r1, r2 = radii[ia], radii[ib]
        # Case 1/2: one ball's support point lies in the other ball.
        p1_in = ((c1 - r1[:, None] * u_hat - c2) ** 2).sum(axis=1) <= r2 * r2
        p2_in = ((c2 - r2[:, None] * u_hat - c1) ** 2).sum(axis=1) <= r1 * r1
        n = c2 - c1
        nn = (n**2).sum(axis=1)
        safe_nn = np.where(nn > 0.0, nn, 1.0)
        t = (r1 * r1 - r2 * r2 + nn) / (2.0 * safe_nn)
        rho_sq = r1 * r1 - t * t * nn
        u_dot_n = n @ u_hat
        perp_sq = np.maximum(1.0 - u_dot_n * u_dot_n / safe_nn, 0.0)
        rim_val = (
            proj[ia] + t * u_dot_n - np.sqrt(np.maximum(rho_sq, 0.0) * perp_sq)
        )
        single = np.maximum(proj[ia] - r1, proj[ib] - r2)
        pair_val = np.where(
            p1_in,
            proj[ia] - r1,
            np.where(
                p2_in,
                proj[ib] - r2,
                np.where(nn == 0.0, single, np.where(rho_sq < 0.0, np.inf, rim_val)),
            ),
        )
        if len(pair_val):
            best = max(best, float(pair_val.max()))
    return best * norm_u


def _pocs_excludes(lo, hi, centers, radii, tol_len) -> bool:
    """Probe whether the box misses the ball intersection.

    Alternates projections between the box and the most violated ball
    (at most 64 ball projections), then checks whether the resulting
    displacement direction separates the box from a support lower bound
    of the intersection.  Never claims exclusion for an intersecting box.
    """
    margin_scale = 1e-9 * max(1.0, float(radii.max()))
    x = (lo + hi) / 2.0
    for _ in range(8):
        y = x
        for _ in range(8):
            dc = y - centers
            dist = np.sqrt((dc**2).sum(axis=1))
            viol = dist - radii
            j = int(np.argmax(viol))
            if viol[j] <= tol_len:
                if np.all(y >= lo) and np.all(y <= hi):
                    return False
                break
            y = centers[j] + dc[j] * (radii[j] / dist[j])
        x2 = np.clip(y, lo, hi)
        dc = x2 - centers
        if np.all((dc**2).sum(axis=1) <= (radii + tol_len) ** 2):
            return False
        u = y - x2
        norm_u = float(np.sqrt(u @ u))
        if norm_u > 0.0:
            box_sup = float(np.maximum(u * lo, u * hi).sum())
            if box_sup + margin_scale * norm_u < _intersection_support_lb(
                u, centers, radii
            ):
                return True
        if np.array_equal(x2, x):
            break  # stalled: keep the last certificate attempt's verdict
        x = x2
    return False


def classify_cube(region: BallIntersection, cube: CanonicalCube, grid: GridConfig) -> int:
    """INSIDE / OUTSIDE / BOUNDARY verdict for one cube.

    INSIDE checks all corners against every ball (exact, by convexity);
    OUTSIDE requires a certificate, either a single separated ball or a
    projection probe, so a cube meeting the region is never ruled out.
    """
    lo, hi = grid.cube_bounds(cube)
    ca = _CoreArrays(region, lo, hi)
    return int(_classify_arrays(ca, lo[None, :], np.array([hi[0] - lo[0]]))[0])


def _sphere_slice(center, radius_sq, fixed_axes, fixed_vals, free_axes):
    """Restrict a sphere to an axis-aligned slice; None if it misses it."""
    drop = 0.0
    for axis, val in zip(fixed_axes, fixed_vals):
        drop += (val - center[axis]) ** 2
    rest = radius_sq - drop
    if rest < -1e-12 * max(radius_sq, 1.0):
        return None
    return center[free_axes], max(rest, 0.0)


def _face_candidates(centers_f, radii_sq_f, q):
    """Extremal points of each coordinate on the intersection of spheres
    living in a q-dimensional slice.  Returns a list of q-vectors."""
    pts: list[np.ndarray] = []
    m = len(centers_f)
    c0 = centers_f[0]
    r0_sq = radii_sq_f[0]
    if m == 1:
        rho = float(np.sqrt(max(r0_sq, 0.0)))
        for b in range(q):
            e = np.zeros(q)
            e[b] = rho
            pts.append(c0 + e)
            pts.append(c0 - e)
        return pts
    if m == 2:
        # Single radical hyperplane: work with the explicit projector onto
        # it rather than a least-squares solve.
        c1 = centers_f[1]
        r1_sq = radii_sq_f[1]
        a = 2.0 * (c1 - c0)
        beta = (c1 @ c1 - r1_sq) - (c0 @ c0 - r0_sq)
        aa = float(a @ a)
        if aa == 0.0:
            return pts  # concentric spheres: no proper rim
        y0 = (beta / aa) * a
        z = c0 - y0
        z_perp = z - (float(z @ a) / aa) * a
        rad_sq = r0_sq - float(z @ z - z_perp @ z_perp)
        if rad_sq < -1e-9 * max(r0_sq, 1.0):
            return pts
        rad = float(np.sqrt(max(rad_sq, 0.0)))
        base = y0 + z_perp
        for axis in range(q):
            g = np.zeros(q)
            g[axis] = 1.0
            g -= (a[axis] / aa) * a
            ng = float(np.sqrt(g @ g))
            if ng <= 1e-15:
                continue
            step = (rad / ng) * g
            pts.append(base + step)
            pts.append(base - step)
        if not pts:
            pts.append(base)
        return pts

    # Radical hyperplanes of each later sphere against sphere 0.
    rows = []
    rhs = []
    for cj, rj_sq in zip(centers_f[1:], radii_sq_f[1:]):
        rows.append(2.0 * (cj - c0))
        rhs.append((cj @ cj - rj_sq) - (c0 @ c0 - r0_sq))
    A = np.array(rows)
    b = np.array(rhs)
    scale = max(1.0, float(np.abs(A).max()), float(np.abs(b).max()))
    y0, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if float(np.linalg.norm(A @ y0 - b)) > 1e-8 * scale:
        return pts  # inconsistent radical system: spheres have no common point
    _, s, vt = np.linalg.svd(A)
    tol_rank = max(A.shape) * (s[0] if len(s) else 0.0) * 1e-12
    null_dim = q - int((s > tol_rank).sum())
    N = vt[q - null_dim:].T if null_dim else np.zeros((q, 0))
    z = c0 - y0
    t_c = N.T @ z if null_dim else np.zeros(0)
    rad_sq = r0_sq - float(z @ z - t_c @ t_c)
    if rad_sq < -1e-9 * max(r0_sq, 1.0):
        return pts
    rad = float(np.sqrt(max(rad_sq, 0.0)))
    if null_dim == 0:
        pts.append(y0)
        return pts
    base = y0 + N @ t_c
    for axis in range(q):
        g = N.T @ np.eye(q)[axis]
        ng = float(np.sqrt(g @ g))
        if ng <= 1e-15:
            continue
        step = N @ (g / ng) * rad
        pts.append(base + step)
        pts.append(base - step)
    return pts


def axis_projection(
    region: BallIntersection, cube: CanonicalCube, grid: GridConfig
) -> np.ndarray:
    """Per-axis [min, max] of the region's overlap with the cube.

    Enumerates candidate extremal points over all subsets of at most d
    active constraints (ball surfaces plus box faces), keeps the feasible
    ones, and reads off the attained extremes.  Raises EmptyOverlap when
    no candidate is feasible.
    """
    lo, hi = grid.cube_bounds(cube)
    return _axis_projection_bounds(region, lo, hi)


def _axis_projection_bounds(region: BallIntersection, box_lo, box_hi) -> np.ndarray:
    lo = np.array(box_lo, dtype=float)
    hi = np.array(box_hi, dtype=float)
    if region.clip_lo is not None:
        lo = np.maximum(lo, region.clip_lo)
        hi = np.minimum(hi, region.clip_hi)
    if np.any(lo >= hi):
        raise EmptyOverlap("box does not meet the clip region")
    d = lo.shape[0]
    centers = region.centers
    radii = region.radii
    radii_sq = region.radii_sq
    scale = max(1.0, float(np.max(hi - lo)))
    if len(radii):
        scale = max(scale, float(radii.max()))
        delta = np.maximum(np.maximum(lo - centers, centers - hi), 0.0)
        if np.any((delta**2).sum(axis=1) > radii_sq):
            raise EmptyOverlap("a ball misses the box entirely")
        far = np.maximum(np.abs(lo - centers), np.abs(hi - centers))
        active = (far**2).sum(axis=1) > radii_sq
        act_centers = centers[active]
        act_radii_sq = radii_sq[active]
    else:
        act_centers = np.zeros((0, d))
        act_radii_sq = np.zeros(0)
    tol = 1e-9 * scale

    candidates: list[np.ndarray] = []
    corners = _corner_offsets(d)
    candidates.extend(lo + corners * (hi - lo))

    k = len(act_centers)
    axes = list(range(d))
    for t in range(d):
        for fixed_axes in itertools.combinations(axes, t):
            free_axes = [a for a in axes if a not in fixed_axes]
            q = len(free_axes)
            side_choices = itertools.product(
                *[(lo[a], hi[a]) for a in fixed_axes]
            ) if t else [()]
            for fixed_vals in side_choices:
                for m in range(1, min(k, d - t) + 1):
                    for subset in itertools.combinations(range(k), m):
                        sliced = []
                        ok = True
                        for s_idx in subset:
                            res = _sphere_slice(
                                act_centers[s_idx], act_radii_sq[s_idx],
                                fixed_axes, fixed_vals, free_axes,
                            )
                            if res is None:
                                ok = False
                                break
                            sliced.append(res)
                        if not ok:
                            continue
                        face_pts = _face_candidates(
                            [c for c, _ in sliced], [r for _, r in sliced], q
                        )
                        for fp in face_pts:
                            full = np.empty(d)
                            for axis, val in zip(fixed_axes, fixed_vals):
                                full[axis] = val
                            full[free_axes] = fp
                            candidates.append(full)

    pts = np.array(candidates)
    in_box = np.all(pts >= lo - tol, axis=1) & np.all(pts <= hi + tol, axis=1)
    pts = pts[in_box]
    if len(centers) and len(pts):
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
        feasible = (d2 <= radii_sq[None, :] + 2.0 * tol * scale).all(axis=1)
        pts = pts[feasible]
    if len(pts) == 0:
        raise EmptyOverlap("no feasible extremal candidates: empty overlap")
    pts = np.clip(pts, lo, hi)
    return np.stack([pts.min(axis=0), pts.max(axis=0)], axis=1)


def zoom_in(
    region: BallIntersection, cube: CanonicalCube, grid: GridConfig
) -> CanonicalCube:
    """Smallest canonical cube containing the region's overlap with ``cube``.

    The overlap's bounding box is snapped to the fixed-point grid inside
    the cube, so the result is always a descendant of (or equal to) the
    input cube and still covers the overlap.
    """
    intervals = axis_projection(region, cube, grid)
    shift = grid.frac_bits - cube.level
    cell_lo = [a << shift for a in cube.anchor]
    cell_hi = [((a + 1) << shift) - 1 for a in cube.anchor]
    f_lo = grid.to_fixed(intervals[:, 0], clamp=True)
    f_hi = grid.to_fixed(intervals[:, 1], clamp=True)
    f_lo = tuple(min(max(v, c_lo), c_hi) for v, c_lo, c_hi in zip(f_lo, cell_lo, cell_hi))
    f_hi = tuple(min(max(v, c_lo), c_hi) for v, c_lo, c_hi in zip(f_hi, cell_lo, cell_hi))
    return grid.smallest_cube_covering(f_lo, f_hi)


def _apex_distances(apex, lo, hi) -> np.ndarray:
    """Distance from the apex to each box (0 when the apex is inside)."""
    delta = np.maximum(np.maximum(lo - apex[None, :], apex[None, :] - hi), 0.0)
    return np.sqrt((delta**2).sum(axis=1))


def refine_region(
    region: BallIntersection,
    refine_eps: float,
    grid: GridConfig,
    *,
    zoom: bool = True,
    budget: int | None = None,
) -> RefinementOutput:
    """Cube approximation of the region, measured from its apex.

    Splits recursively from the smallest canonical cube containing the
    region (clipped to the root), discarding certified-outside cubes and
    emitting cubes that are inside, or boundary-crossing with side at
    most ``refine_eps`` times their distance to the apex.  With ``zoom``
    enabled, a split leaving a single surviving child jumps straight to
    the smallest cube containing the overlap; with it disabled the chain
    is walked one level at a time (the reference behaviour for oracles).
    """
    if not 0.0 < refine_eps < 1.0:
        raise ValueError(f"refine_eps={refine_eps} not in (0, 1)")
    d = grid.d
    n_children = 1 << d
    apex = region.apex

    if region.balls:
        _, outer = fatness_radii(region)
        lo_pt = apex - outer
        hi_pt = apex + outer
    elif region.clip_lo is not None:
        lo_pt = region.clip_lo
        hi_pt = region.clip_hi
    else:
        raise EmptyBallList("region needs balls or a clip box")
    start = grid.smallest_cube_covering(
        grid.to_fixed(lo_pt, clamp=True), grid.to_fixed(hi_pt, clamp=True)
    )
    s_lo, s_hi = grid.cube_bounds(start)
    ca = _CoreArrays(region, s_lo, s_hi)

    child_off = _child_offsets(d)
    emitted: list[CanonicalCube] = []
    halting: dict[CanonicalCube, int] = {}
    verdicts: dict[tuple, int] = {}
    type_one = 0
    type_two = 0
    processed = 0

    def classify_one(level: int, anchor: tuple) -> int:
        key = (level, anchor)
        cached = verdicts.get(key)
        if cached is not None:
            return cached
        side = grid.cube_side(level)
        lo = grid.origin + np.asarray(anchor, dtype=float) * side
        verdict = int(_classify_arrays(ca, lo[None, :], np.array([side]))[0])
        verdicts[key] = verdict
        return verdict

    def emit(level: int, anchor: tuple, condition: int) -> None:
        cube = CanonicalCube(level, anchor)
        emitted.append(cube)
        halting[cube] = condition

    def collapse(parent: CanonicalCube, kid_anchor: tuple, enqueue) -> None:
        """Fast-forward a single-survivor chain from the parent's kid."""
        kid_level = parent.level + 1
        try:
            target = zoom_in(region, parent, grid)
        except EmptyOverlap:
            target = None
        kid = CanonicalCube(kid_level, kid_anchor)
        if target is None or target == kid or not cube_contains(kid, target):
            enqueue(kid_level, kid_anchor)
            return
        level, anchor = kid_level, kid_anchor
        while (level, anchor) != (target.level, target.anchor):
            verdict = classify_one(level, anchor)
            if verdict == OUTSIDE:
                return
            if verdict == INSIDE:
                emit(level, anchor, 1)
                return
            side = grid.cube_side(level)
            lo = grid.origin + np.asarray(anchor, dtype=float) * side
            dist = float(_apex_distances(apex, lo[None, :], lo[None, :] + side)[0])
            if side <= refine_eps * dist:
                emit(level, anchor, 3)
                return
            if level == grid.frac_bits:
                raise RefinementDepthExceeded(
                    f"refinement needs cubes below level {grid.frac_bits}",
                    apex_index=region.apex_index,
                )
            shift = target.level - (level + 1)
            anchor = tuple(a >> shift for a in target.anchor)
            level += 1
        enqueue(target.level, target.anchor)

    frontier: dict[int, list[np.ndarray]] = {start.level: [np.array([start.anchor], dtype=np.int64)]}

    def enqueue(level: int, anchor: tuple) -> None:
        frontier.setdefault(level, []).append(np.array([anchor], dtype=np.int64))

    while frontier:
        level = min(frontier)
        anchors = np.concatenate(frontier.pop(level), axis=0)
        m = anchors.shape[0]
        processed += m
        if budget is not None and processed > budget:
            raise BudgetExceeded(f"refinement exceeded {budget} cubes")
        side = grid.cube_side(level)
        lo = grid.origin + anchors.astype(float) * side
        batch = _classify_arrays(ca, lo, np.full(m, side))
        for row, verdict in zip(anchors, batch):
            verdicts[(level, tuple(int(a) for a in row))] = int(verdict)
        dists = _apex_distances(apex, lo, lo + side)
        halt3 = (batch == BOUNDARY) & (side <= refine_eps * dists)
        for idx in np.nonzero(batch == INSIDE)[0]:
            emit(level, tuple(int(a) for a in anchors[idx]), 1)
        for idx in np.nonzero(halt3)[0]:
            emit(level, tuple(int(a) for a in anchors[idx]), 3)
        split_idx = np.nonzero((batch == BOUNDARY) & ~halt3)[0]
        if len(split_idx) == 0:
            continue
        if level == grid.frac_bits:
            raise RefinementDepthExceeded(
                f"refinement needs cubes below level {grid.frac_bits}",
                apex_index=region.apex_index,
            )
        parents = anchors[split_idx]
        kids = parents[:, None, :] * 2 + child_off[None, :, :]
        flat = kids.reshape(-1, d)
        kid_side = grid.cube_side(level + 1)
        kid_lo = grid.origin + flat.astype(float) * kid_side
        kid_verdicts = _classify_arrays(ca, kid_lo, np.full(len(flat), kid_side))
        for row, verdict in zip(flat, kid_verdicts):
            verdicts[(level + 1, tuple(int(a) for a in row))] = int(verdict)
        kid_verdicts = kid_verdicts.reshape(-1, n_children)
        out_counts = (kid_verdicts == OUTSIDE).sum(axis=1)
        keep_batch: list[np.ndarray] = []
        for p_idx in range(len(split_idx)):
            alive = np.nonzero(kid_verdicts[p_idx] != OUTSIDE)[0]
            if out_counts[p_idx] >= n_children - 1:
                type_one += 1
                if len(alive) == 0:
                    continue
                kid_anchor = tuple(int(a) for a in kids[p_idx, alive[0]])
                if zoom:
                    parent_cube = CanonicalCube(
                        level, tuple(int(a) for a in parents[p_idx])
                    )
                    collapse(parent_cube, kid_anchor, enqueue)
                else:
                    enqueue(level + 1, kid_anchor)
            else:
                type_two += 1
                keep_batch.append(kids[p_idx, alive])
        if keep_batch:
            frontier.setdefault(level + 1, []).append(np.concatenate(keep_batch, axis=0))

    return RefinementOutput(
        cubes=emitted,
        halting=halting,
        type_one_splits=type_one,
        type_two_splits=type_two,
        verdicts=verdicts,
        start=start,
        active_balls=ca.k,
    )

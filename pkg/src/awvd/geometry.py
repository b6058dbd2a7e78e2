"""Weighted sites, Apollonius balls, and the approximation tolerance budget.

A site is a point with a positive weight; the weighted distance from a
query point p to site s is ``|p - s| / w``.  For an ordered pair of sites
the locus where the lighter site is within a factor ``gamma`` of the
heavier one is a Euclidean ball (an Apollonius ball) as long as
``gamma > 1``; a floor of ``1 + floor_eps`` on gamma keeps equal-weight
bisectors from degenerating into hyperplanes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateGamma,
    DegenerateSites,
    EmptyInput,
    IndexOrder,
    NotOnCommonRay,
    OutOfRange,
)

# Cosine-deficit tolerance for deciding that two partner directions share
# a ray (roughly 4.5e-5 rad).
RAY_COS_TOL = 1e-9


@dataclass(frozen=True)
class Site:
    """A weighted point; ``index`` is the 1-based rank after weight sorting."""

    coords: np.ndarray
    weight: float
    index: int


class SiteSet:
    """Input sites sorted by weight ascending (stable: ties keep input order).

    All site indices used elsewhere in the package refer to the 1-based
    rank in this sorted order.
    """

    def __init__(self, coords, weights):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        weights = np.asarray(weights, dtype=float).ravel()
        if coords.shape[0] != weights.shape[0]:
            raise ValueError("coords and weights must have matching length")
        if coords.shape[0] == 0:
            raise EmptyInput("need at least one site")
        if not np.all(weights > 0):
            raise ValueError("site weights must be positive")
        order = np.argsort(weights, kind="stable")
        self.coords = np.ascontiguousarray(coords[order])
        self.weights = np.ascontiguousarray(weights[order])
        self.input_order = order

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    def __len__(self) -> int:
        return self.n

    def site(self, i: int) -> Site:
        """Return the site with 1-based index ``i``."""
        if not 1 <= i <= self.n:
            raise IndexError(f"site index {i} out of range 1..{self.n}")
        return Site(self.coords[i - 1], float(self.weights[i - 1]), i)

    def bbox(self):
        return self.coords.min(axis=0), self.coords.max(axis=0)

    def bbox_diameter(self) -> float:
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))


def weighted_distance(p, s: Site) -> float:
    """Euclidean distance from ``p`` to the site, divided by its weight."""
    return float(np.linalg.norm(np.asarray(p, dtype=float) - s.coords) / s.weight)


def effective_weight(sites: SiteSet, i: int, j: int, floor_eps: float) -> float:
    """Weight ratio of the ordered pair (i, j), floored at ``1 + floor_eps``.

    Requires i < j so the ratio is at least 1; the floor guarantees the
    pair bisector is a genuine ball.
    """
    if i >= j:
        raise IndexOrder(f"need i < j, got i={i}, j={j}")
    if floor_eps <= 0:
        raise OutOfRange("floor_eps must be positive")
    return max(float(sites.weights[j - 1] / sites.weights[i - 1]), 1.0 + floor_eps)


@dataclass(frozen=True)
class ApolloniusBall:
    """Ball of points where the apex site beats its partner up to factor gamma.

    ``near_dist`` / ``far_dist`` are the closest / farthest distances from
    the apex to the ball surface; both surface points lie on the apex ->
    partner line.  ``dist_sq`` is the squared site distance, kept so that
    containment comparisons can be done without square roots.
    """

    i: int
    j: int
    gamma: float
    center: np.ndarray
    radius: float
    near_dist: float
    far_dist: float
    apex: np.ndarray
    partner: np.ndarray
    dist_sq: float

    def contains(self, p, tol: float = 0.0) -> bool:
        delta = np.asarray(p, dtype=float) - self.center
        return float(delta @ delta) <= self.radius * self.radius * (1.0 + tol)


def make_ball(s_i: Site, s_j: Site, gamma: float) -> ApolloniusBall:
    """Construct the Apollonius ball of the ordered site pair with the given gamma.

    Closed forms: with D = |s_j - s_i|,
      near = D/(gamma+1), far = D/(gamma-1), radius = D/(gamma - 1/gamma),
      center = s_i - (s_j - s_i)/(gamma^2 - 1).
    """
    diff = s_j.coords - s_i.coords
    dist_sq = float(diff @ diff)
    if dist_sq == 0.0:
        raise DegenerateSites(f"sites {s_i.index} and {s_j.index} coincide")
    if gamma <= 1.0:
        raise DegenerateGamma(f"gamma={gamma} must exceed 1")
    dist = math.sqrt(dist_sq)
    near = dist / (gamma + 1.0)
    far = dist / (gamma - 1.0)
    radius = dist / (gamma - 1.0 / gamma)
    center = s_i.coords - diff / (gamma * gamma - 1.0)
    return ApolloniusBall(
        i=s_i.index,
        j=s_j.index,
        gamma=gamma,
        center=center,
        radius=radius,
        near_dist=near,
        far_dist=far,
        apex=s_i.coords,
        partner=s_j.coords,
        dist_sq=dist_sq,
    )


def pair_ball(sites: SiteSet, i: int, j: int, floor_eps: float) -> ApolloniusBall:
    """Ball of the sorted pair i < j using the floored effective weight."""
    gamma = effective_weight(sites, i, j, floor_eps)
    return make_ball(sites.site(i), sites.site(j), gamma)


def enlarged_ball(ball: ApolloniusBall, alpha: float) -> ApolloniusBall:
    """The ball regrown with gamma/alpha; grows the region for alpha > 1."""
    gamma = ball.gamma / alpha
    if gamma <= 1.0:
        raise DegenerateGamma(
            f"gamma/alpha = {gamma} <= 1: enlargement degenerates the ball"
        )
    site_a = Site(ball.apex, 1.0, ball.i)
    site_b = Site(ball.partner, 1.0, ball.j)
    return make_ball(site_a, site_b, gamma)


def same_ray_dominates(a: ApolloniusBall, b: ApolloniusBall) -> bool:
    """True iff ball ``a`` is contained in ball ``b``, for balls sharing an
    apex whose partners lie on a common ray from it.

    Containment on a common ray reduces to ``a.near <= b.near`` and
    ``a.far <= b.far``; both are decided in squared / cross-multiplied form
    so no square roots are taken.
    """
    if not np.array_equal(a.apex, b.apex):
        raise NotOnCommonRay("balls do not share an apex point")
    da = a.partner - a.apex
    db = b.partner - b.apex
    dot = float(da @ db)
    # Same direction within tolerance: dot > 0 and dot^2 >= (1-tol)^2 |da|^2 |db|^2.
    if dot <= 0.0 or dot * dot < (1.0 - RAY_COS_TOL) ** 2 * a.dist_sq * b.dist_sq:
        raise NotOnCommonRay("partner directions differ beyond tolerance")
    near_ok = a.dist_sq * (b.gamma + 1.0) ** 2 <= b.dist_sq * (a.gamma + 1.0) ** 2
    far_ok = a.dist_sq * (b.gamma - 1.0) ** 2 <= b.dist_sq * (a.gamma - 1.0) ** 2
    return near_ok and far_ok


@dataclass(frozen=True)
class ApproxParams:
    """Tolerance budget splitting a target eps across pipeline stages.

    refine_eps drives the cube refinement, floor_eps floors effective
    weights, cone_eps bounds the per-cone champion selection, and
    translation_eps / rotation_eps budget the virtual site moves used by
    the cover reduction.  cone_angle and separation are derived knobs for
    the cone grid and the pair decomposition.
    """

    eps: float
    refine_eps: float
    floor_eps: float
    cone_eps: float
    translation_eps: float
    rotation_eps: float
    cone_angle: float
    separation: float

    def budget_product(self) -> float:
        return (
            (1.0 + self.refine_eps)
            * (1.0 + self.floor_eps)
            * (1.0 + self.translation_eps)
            * (1.0 + self.rotation_eps) ** 2
            * (1.0 + self.cone_eps) ** 2
        )

    def validate(self) -> None:
        if not 0.0 < self.eps < 1.0:
            raise OutOfRange(f"eps={self.eps} not in (0, 1)")
        if self.budget_product() > 1.0 + self.eps + 1e-12:
            raise OutOfRange("tolerance product exceeds 1 + eps")
        if max(self.rotation_eps, self.translation_eps, self.cone_eps) >= self.floor_eps:
            raise OutOfRange("rotation/translation/cone tolerances must stay below floor_eps")
        needed = max(2.0 / self.rotation_eps, 1.0 + 2.0 / self.translation_eps)
        if self.separation < needed - 1e-9:
            raise OutOfRange("separation too small for the rotation/translation budget")


def derive_params(eps: float) -> ApproxParams:
    """Standard split: floor_eps = eps/8, the four motion/cone/refine
    tolerances eps/16, cone_angle twice the rotation tolerance."""
    if not 0.0 < eps < 1.0:
        raise OutOfRange(f"eps={eps} not in (0, 1)")
    sixteenth = eps / 16.0
    params = ApproxParams(
        eps=eps,
        refine_eps=sixteenth,
        floor_eps=eps / 8.0,
        cone_eps=sixteenth,
        translation_eps=sixteenth,
        rotation_eps=sixteenth,
        cone_angle=2.0 * sixteenth,
        separation=max(2.0 / sixteenth, 1.0 + 2.0 / sixteenth),
    )
    params.validate()
    return params


def build_params(eps: float) -> ApproxParams:
    """Split used by diagram builds: a larger refinement share (eps/4) and
    smaller motion/cone shares (eps/32).

    The refinement tolerance dominates output size (cubes scale like
    1/refine_eps^(d-1)), so shifting budget toward it keeps builds small
    while the product inequality still holds for every eps in (0, 1).
    """
    if not 0.0 < eps < 1.0:
        raise OutOfRange(f"eps={eps} not in (0, 1)")
    small = eps / 32.0
    params = ApproxParams(
        eps=eps,
        refine_eps=eps / 4.0,
        floor_eps=eps / 8.0,
        cone_eps=small,
        translation_eps=small,
        rotation_eps=small,
        cone_angle=2.0 * small,
        separation=max(2.0 / small, 1.0 + 2.0 / small),
    )
    params.validate()
    return params


def min_enclosing_ball_approx(points) -> tuple[np.ndarray, float]:
    """Ball containing all points, with radius at most 2x the optimal.

    Centers the ball at the centroid; since the centroid lies inside the
    optimal ball, no point can be farther than one optimal diameter away,
    which gives the factor-2 guarantee (usually much tighter in practice).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise EmptyInput("need at least one point")
    center = pts.mean(axis=0)
    radius = float(np.sqrt(((pts - center) ** 2).sum(axis=1).max()))
    return center, radius

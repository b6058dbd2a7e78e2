import numpy as np
import pytest

from awvd.errors import (
    DegenerateGamma,
    DegenerateSites,
    EmptyInput,
    IndexOrder,
    NotOnCommonRay,
    OutOfRange,
)
from awvd.geometry import (
    Site,
    SiteSet,
    build_params,
    derive_params,
    effective_weight,
    enlarged_ball,
    make_ball,
    min_enclosing_ball_approx,
    same_ray_dominates,
    weighted_distance,
)


def site(coords, weight=1.0, index=1):
    return Site(np.asarray(coords, dtype=float), weight, index)


def test_site_set_sorts_by_weight_stable():
    sites = SiteSet([[0, 0], [1, 0], [2, 0]], [3.0, 1.0, 1.0])
    assert list(sites.weights) == [1.0, 1.0, 3.0]
    # Ties keep input order: (1,0) before (2,0).
    assert sites.site(1).coords[0] == 1.0
    assert sites.site(2).coords[0] == 2.0
    assert sites.site(3).index == 3


def test_effective_weight_examples():
    sites = SiteSet([[0, 0], [1, 0]], [1.0, 2.0])
    assert effective_weight(sites, 1, 2, 0.1) == 2.0
    sites = SiteSet([[0, 0], [1, 0]], [1.0, 1.0])
    assert effective_weight(sites, 1, 2, 0.1) == pytest.approx(1.1)
    sites = SiteSet([[0, 0], [1, 0]], [4.0, 4.2])
    assert effective_weight(sites, 1, 2, 0.1) == pytest.approx(1.1)
    with pytest.raises(IndexOrder):
        effective_weight(sites, 2, 1, 0.1)


def test_make_ball_closed_forms():
    ball = make_ball(site([0, 0]), site([3, 0], index=2), 2.0)
    assert ball.near_dist == pytest.approx(1.0)
    assert ball.far_dist == pytest.approx(3.0)
    assert np.allclose(ball.center, [-1.0, 0.0])
    assert ball.radius == pytest.approx(2.0)

    ball = make_ball(site([0, 0]), site([2.1, 0], index=2), 1.1)
    assert ball.near_dist == pytest.approx(1.0)
    assert ball.far_dist == pytest.approx(21.0)
    assert np.allclose(ball.center, [-10.0, 0.0])
    assert ball.radius == pytest.approx(11.0)

    ball = make_ball(site([0, 0]), site([0, 3], index=2), 2.0)
    assert np.allclose(ball.center, [0.0, -1.0])
    assert ball.radius == pytest.approx(2.0)


def test_make_ball_errors():
    with pytest.raises(DegenerateSites):
        make_ball(site([1, 1]), site([1, 1], index=2), 2.0)
    with pytest.raises(DegenerateGamma):
        make_ball(site([0, 0]), site([1, 0], index=2), 1.0)


def test_ball_surface_points_on_axis():
    rng = np.random.default_rng(7)
    for d in (2, 3, 4):
        for _ in range(50):
            a = rng.normal(size=d)
            b = a + rng.normal(size=d)
            gamma = rng.uniform(1.05, 5.0)
            ball = make_ball(site(a), site(b, index=2), gamma)
            u = (b - a) / np.linalg.norm(b - a)
            near_pt = a + ball.near_dist * u
            far_pt = a - ball.far_dist * u
            assert np.linalg.norm(near_pt - ball.center) == pytest.approx(
                ball.radius, rel=1e-9
            )
            assert np.linalg.norm(far_pt - ball.center) == pytest.approx(
                ball.radius, rel=1e-9
            )
            # Apex strictly inside.
            assert np.linalg.norm(a - ball.center) < ball.radius


def test_weighted_distance():
    assert weighted_distance([3, 4], site([0, 0], 2.0)) == pytest.approx(2.5)
    assert weighted_distance([1, 2], site([1, 2], 5.0)) == 0.0
    assert weighted_distance([1, 0], site([0, 0], 0.5)) == pytest.approx(2.0)


def test_same_ray_dominates_examples():
    apex = site([0, 0])
    a = make_ball(apex, site([3, 0], index=2), 2.0)  # near 1, far 3
    b = make_ball(apex, site([2.1, 0], index=3), 1.1)  # near 1, far 21
    assert same_ray_dominates(a, b) is True
    assert same_ray_dominates(a, a) is True
    assert same_ray_dominates(b, a) is False


def test_same_ray_dominates_rejects_skew_partners():
    apex = site([0, 0])
    a = make_ball(apex, site([3, 0], index=2), 2.0)
    c = make_ball(apex, site([0, 3], index=3), 2.0)
    with pytest.raises(NotOnCommonRay):
        same_ray_dominates(a, c)


def test_dominance_implies_containment_by_sampling():
    rng = np.random.default_rng(3)
    apex = site([0.0, 0.0])
    a = make_ball(apex, site([2.0, 0.0], index=2), rng.uniform(1.5, 3.0))
    b = make_ball(apex, site([5.0, 0.0], index=3), 1.2)
    assert same_ray_dominates(a, b)
    # 10^4 random points of ball a must lie in ball b.
    pts = a.center + rng.normal(size=(10_000, 2)) * a.radius
    norms = np.linalg.norm(pts - a.center, axis=1)
    pts = a.center + (pts - a.center) * (
        rng.random(10_000)[:, None] * a.radius / norms[:, None]
    )
    inside_b = np.linalg.norm(pts - b.center, axis=1) <= b.radius * (1 + 1e-12)
    assert inside_b.all()


def test_weight_monotonicity():
    rng = np.random.default_rng(11)
    apex = site([0.0, 0.0, 0.0])
    partner = site([1.0, 2.0, 2.0], index=2)
    for _ in range(200):
        g1 = rng.uniform(1.01, 4.0)
        g2 = rng.uniform(g1, 5.0)
        small = make_ball(apex, partner, g2)
        big = make_ball(apex, partner, g1)
        assert small.near_dist <= big.near_dist
        assert small.far_dist <= big.far_dist
        assert same_ray_dominates(small, big)


def test_derive_params_example_values():
    params = derive_params(0.16)
    assert params.floor_eps == pytest.approx(0.02)
    assert params.refine_eps == pytest.approx(0.01)
    assert params.cone_eps == pytest.approx(0.01)
    assert params.translation_eps == pytest.approx(0.01)
    assert params.rotation_eps == pytest.approx(0.01)
    assert params.cone_angle == pytest.approx(0.02)
    assert params.separation == pytest.approx(201.0)
    # One factor each for the refine/translation shares, two each for the
    # rotation and cone shares, times the floor share.
    assert params.budget_product() == pytest.approx((1.01**6) * 1.02)
    assert params.budget_product() <= 1.16


def test_derive_params_range_errors():
    for bad in (1.5, 0.0, -0.25, 1.0):
        with pytest.raises(OutOfRange):
            derive_params(bad)


@pytest.mark.parametrize("maker", [derive_params, build_params])
def test_params_invariants_random(maker):
    rng = np.random.default_rng(5)
    for _ in range(1000):
        eps = rng.uniform(1e-6, 1.0 - 1e-9)
        params = maker(eps)
        params.validate()
        assert params.budget_product() <= 1.0 + eps + 1e-12
        assert max(params.rotation_eps, params.translation_eps, params.cone_eps) < params.floor_eps


def test_enlarged_ball_grows():
    ball = make_ball(site([0, 0]), site([3, 0], index=2), 2.0)
    grown = enlarged_ball(ball, 1.25)
    assert grown.near_dist > ball.near_dist
    assert grown.far_dist > ball.far_dist
    with pytest.raises(DegenerateGamma):
        enlarged_ball(ball, 2.5)


def test_min_enclosing_ball_examples():
    center, radius = min_enclosing_ball_approx([[0.0, 0.0]])
    assert np.allclose(center, [0, 0]) and radius == 0.0
    center, radius = min_enclosing_ball_approx([[0.0, 0.0], [2.0, 0.0]])
    assert 1.0 <= radius <= 2.0
    with pytest.raises(EmptyInput):
        min_enclosing_ball_approx(np.zeros((0, 2)))


def test_min_enclosing_ball_contains_all_points():
    rng = np.random.default_rng(9)
    pts = rng.random((100, 2))
    center, radius = min_enclosing_ball_approx(pts)
    dists = np.linalg.norm(pts - center, axis=1)
    assert (dists <= radius * (1 + 1e-12)).all()
    # Factor-2 guarantee versus a crude lower bound (half the diameter).
    diam = max(
        np.linalg.norm(pts[i] - pts[j]) for i in range(0, 100, 7) for j in range(100)
    )
    assert radius <= 2.0 * diam

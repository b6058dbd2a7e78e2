import numpy as np
import pytest

from awvd.errors import BudgetExceeded, OutOfRange
from awvd.geometry import SiteSet
from awvd.oracle import (
    brute_nn,
    brute_nn_alt,
    brute_refinement_oracle,
    gen_instance,
    random_ball_region,
)


def test_brute_nn_examples():
    sites = SiteSet([[0, 0], [10, 0]], [1.0, 10.0])
    idx, dist = brute_nn(sites, [2, 0])
    assert idx == 2 and dist == pytest.approx(0.8)
    idx, dist = brute_nn(sites, [0, 0])
    assert idx == 1 and dist == 0.0


def test_brute_nn_tie_prefers_lowest_index():
    sites = SiteSet([[0, 0], [2, 0]], [1.0, 1.0])
    idx, _ = brute_nn(sites, [1, 0])
    assert idx == 1


def test_brute_nn_matches_independent_scan():
    inst = gen_instance(50, 3, "uniform", seed=12)
    rng = np.random.default_rng(3)
    for _ in range(1000):
        p = rng.uniform(-0.5, 1.5, size=3)
        a_idx, a_dist = brute_nn(inst.sites, p)
        b_idx, b_dist = brute_nn_alt(inst.sites, p)
        assert a_idx == b_idx
        assert a_dist == pytest.approx(b_dist, rel=1e-12)


def test_gen_instance_reproducible_and_laws():
    a = gen_instance(100, 2, "uniform", seed=4)
    b = gen_instance(100, 2, "uniform", seed=4)
    assert np.array_equal(a.sites.coords, b.sites.coords)
    assert np.array_equal(a.sites.weights, b.sites.weights)
    assert a.sites.weights.min() >= 1.0 and a.sites.weights.max() <= 4.0

    big = gen_instance(10_000, 2, "uniform", seed=5)
    assert big.sites.weights.min() >= 1.0 and big.sites.weights.max() <= 4.0

    eq = gen_instance(3, 2, "equal", seed=0)
    assert np.all(eq.sites.weights == 1.0)

    two = gen_instance(40, 2, "two-class", seed=1)
    assert set(np.unique(two.sites.weights)) == {1.0, 4.0}

    with pytest.raises(OutOfRange):
        gen_instance(0, 2)
    with pytest.raises(OutOfRange):
        gen_instance(5, 5)
    with pytest.raises(OutOfRange):
        gen_instance(5, 2, "exotic")


def test_oracle_budget_guard():
    region, grid = random_ball_region(2, 2, seed=2)
    with pytest.raises(BudgetExceeded):
        brute_refinement_oracle(region, 0.05, grid, budget=50)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awvd.cubes import (
    CanonicalCube,
    GridConfig,
    build_compressed_tree,
    check_tree,
    cube_contains,
    cube_key_range,
    dedup_min_label,
    interleave,
    propagate_labels,
    z_compare,
)
from awvd.errors import CubeOutsideRoot, OutOfRoot


def unit_grid(frac_bits=8, d=2):
    # Root exactly [0,1)^d.
    return GridConfig(np.zeros(d), 1.0, frac_bits)


def test_cube_containing_examples():
    grid = unit_grid()
    assert grid.cube_containing([0.3, 0.3], 1).anchor == (0, 0)
    # Half-open boundary rule: 0.5 belongs to the upper cell.
    assert grid.cube_containing([0.5, 0.5], 1).anchor == (1, 1)
    assert grid.cube_containing([0.3, 0.7], 2).anchor == (1, 2)
    with pytest.raises(OutOfRoot):
        grid.cube_containing([1.2, 0.2], 1)


def test_smallest_cube_covering_examples():
    grid = unit_grid()
    cube = grid.smallest_cube_covering([0.26, 0.26], [0.4, 0.4])
    assert cube.level == 2 and cube.anchor == (1, 1)
    cube = grid.smallest_cube_covering([0.3, 0.3], [0.6, 0.6])
    assert cube == grid.root
    cube = grid.smallest_cube_covering([0.1, 0.1], [0.1, 0.1])
    assert cube.level == grid.frac_bits
    assert cube == grid.cube_containing([0.1, 0.1], grid.frac_bits)


def test_z_compare_examples():
    root = CanonicalCube(0, (0, 0))
    low = CanonicalCube(1, (0, 0))
    right = CanonicalCube(1, (1, 0))
    assert z_compare(root, low) == -1  # ancestor precedes descendant
    assert z_compare(low, right) == -1  # x bit is most significant
    assert z_compare(right, right) == 0


def _all_cubes(max_level, d=2):
    cubes = []
    for level in range(max_level + 1):
        for flat in range((1 << level) ** d):
            anchor = []
            rem = flat
            for _ in range(d):
                anchor.append(rem % (1 << level))
                rem //= 1 << level
            cubes.append(CanonicalCube(level, tuple(anchor)))
    return cubes


def _dfs_enumeration(cube, max_level, d):
    """Reference depth-first pre-order over the full cube hierarchy."""
    yield cube
    if cube.level == max_level:
        return
    for c in range(1 << d):
        offsets = tuple((c >> (d - 1 - axis)) & 1 for axis in range(d))
        yield from _dfs_enumeration(cube.child(offsets), max_level, d)


def test_z_compare_matches_naive_dfs():
    d = 2
    order = list(_dfs_enumeration(CanonicalCube(0, (0, 0)), 2, d))
    position = {cube: i for i, cube in enumerate(order)}
    cubes = _all_cubes(2, d)
    for a in cubes:
        for b in cubes:
            expected = (position[a] > position[b]) - (position[a] < position[b])
            assert z_compare(a, b) == expected


@settings(max_examples=200, deadline=None)
@given(
    st.integers(0, 6), st.integers(0, 6),
    st.tuples(st.integers(0, 63), st.integers(0, 63)),
    st.tuples(st.integers(0, 63), st.integers(0, 63)),
)
def test_nesting_or_disjoint(level_a, level_b, anchor_a, anchor_b):
    a = CanonicalCube(level_a, tuple(x % (1 << level_a) for x in anchor_a))
    b = CanonicalCube(level_b, tuple(x % (1 << level_b) for x in anchor_b))
    sa, ea = cube_key_range(a, 8)
    sb, eb = cube_key_range(b, 8)
    overlap = max(sa, sb) < min(ea, eb)
    nested = cube_contains(a, b) or cube_contains(b, a)
    assert overlap == nested


def test_nesting_or_disjoint_bulk_random():
    # 10^5 random cube pairs: interval overlap in key space must coincide
    # with containment one way or the other.
    rng = np.random.default_rng(2)
    n = 100_000
    bits = 8
    la = rng.integers(0, 7, size=n)
    lb = rng.integers(0, 7, size=n)
    aa = (rng.integers(0, 1 << 7, size=(n, 2)) % (1 << la)[:, None]).astype(np.int64)
    ab = (rng.integers(0, 1 << 7, size=(n, 2)) % (1 << lb)[:, None]).astype(np.int64)
    # Extents at the finest level.
    lo_a = aa << (bits - la)[:, None]
    hi_a = (aa + 1) << (bits - la)[:, None]
    lo_b = ab << (bits - lb)[:, None]
    hi_b = (ab + 1) << (bits - lb)[:, None]
    overlap = (
        (np.maximum(lo_a, lo_b) < np.minimum(hi_a, hi_b)).all(axis=1)
    )
    a_in_b = ((lo_b <= lo_a) & (hi_a <= hi_b)).all(axis=1)
    b_in_a = ((lo_a <= lo_b) & (hi_b <= hi_a)).all(axis=1)
    assert np.array_equal(overlap, a_in_b | b_in_a)
    # Spot-check the vectorized arithmetic against the cube objects.
    for idx in rng.integers(0, n, size=200):
        a = CanonicalCube(int(la[idx]), tuple(int(v) for v in aa[idx]))
        b = CanonicalCube(int(lb[idx]), tuple(int(v) for v in ab[idx]))
        sa, ea = cube_key_range(a, bits)
        sb, eb = cube_key_range(b, bits)
        assert (max(sa, sb) < min(ea, eb)) == bool(overlap[idx])
        assert (cube_contains(a, b) or cube_contains(b, a)) == bool(overlap[idx])


def test_interleave_puts_axis0_most_significant():
    assert interleave((1, 0)) == 2
    assert interleave((0, 1)) == 1
    assert interleave((1, 1)) == 3


def test_build_tree_single_cube():
    grid = unit_grid()
    tree = build_compressed_tree(grid, [(grid.root, 5)])
    assert tree.node_count == 1
    assert tree.root.label == 5


def test_build_tree_duplicate_min_label():
    grid = unit_grid()
    cube = CanonicalCube(2, (1, 1))
    tree = build_compressed_tree(grid, [(grid.root, 9), (cube, 7), (cube, 3)])
    node = [n for n in tree.nodes if n.cube == cube][0]
    assert node.label == 3


def test_build_tree_synthesizes_root_when_needed():
    grid = unit_grid()
    a = CanonicalCube(2, (0, 0))
    b = CanonicalCube(2, (3, 3))
    tree = build_compressed_tree(grid, [(a, 1), (b, 2)])
    assert tree.root.cube == grid.root
    assert tree.root.label is None
    propagate_labels(tree, 7)
    assert tree.root.label == 7


def test_build_tree_random_node_count_and_structure():
    rng = np.random.default_rng(4)
    grid = unit_grid()
    cubes = [(grid.root, 99)]
    for _ in range(1000):
        level = int(rng.integers(0, 7))
        anchor = tuple(int(v) for v in rng.integers(0, 1 << level, 2))
        cubes.append((CanonicalCube(level, anchor), int(rng.integers(1, 99))))
    distinct = len({c for c, _ in cubes})
    tree = build_compressed_tree(grid, cubes)
    assert tree.node_count == distinct  # one node per distinct cube
    assert tree.node_count <= 2 * distinct
    propagate_labels(tree, 99)
    assert check_tree(tree, 99) == []


def test_propagate_label_rules():
    grid = unit_grid()
    child = CanonicalCube(1, (0, 0))
    # Unlabeled child takes the root label.
    tree = build_compressed_tree(grid, [(grid.root, 9), (child, None)])
    propagate_labels(tree, 9)
    assert [n.label for n in tree.nodes] == [9, 9]
    # Child with a larger label is overwritten.
    tree = build_compressed_tree(grid, [(grid.root, 3), (child, 5)])
    propagate_labels(tree, 3)
    assert [n.label for n in tree.nodes] == [3, 3]
    # Child with a smaller label keeps it.
    tree = build_compressed_tree(grid, [(grid.root, 5), (child, 3)])
    propagate_labels(tree, 5)
    assert [n.label for n in tree.nodes] == [5, 3]


def _linear_scan_label(tree, p):
    """Deepest node whose cube contains the point (reference point location)."""
    fixed = tree.grid.to_fixed(p)
    key = interleave(fixed)
    best = None
    for node in tree.nodes:
        if node.start <= key < node.end:
            if best is None or node.cube.level > best.cube.level:
                best = node
    return best.label


def _random_tree(rng, grid, n_cubes, n_labels=20):
    cubes = [(grid.root, n_labels)]
    for _ in range(n_cubes):
        level = int(rng.integers(0, 7))
        anchor = tuple(int(v) for v in rng.integers(0, 1 << level, 2))
        cubes.append((CanonicalCube(level, anchor), int(rng.integers(1, n_labels))))
    tree = build_compressed_tree(grid, cubes)
    propagate_labels(tree, n_labels)
    return tree


def test_point_locate_trivial_and_cube_cases():
    grid = unit_grid()
    tree = build_compressed_tree(grid, [(grid.root, 4)])
    propagate_labels(tree, 4)
    label, _, _ = tree.point_locate([0.37, 0.9])
    assert label == 4

    cube = CanonicalCube(2, (1, 2))
    tree = build_compressed_tree(grid, [(grid.root, 4), (cube, 2)])
    propagate_labels(tree, 4)
    assert tree.point_locate([0.3, 0.7])[0] == 2
    assert tree.point_locate([0.9, 0.1])[0] == 4


def test_point_locate_matches_linear_scan():
    rng = np.random.default_rng(6)
    grid = unit_grid()
    tree = _random_tree(rng, grid, 400)
    points = rng.random((10_000, 2))
    for p in points:
        label, _, comparisons = tree.point_locate(p)
        assert label == _linear_scan_label(tree, p)
        assert comparisons <= 2 * np.log2(tree.cell_count) + 16


def test_cube_validation_errors():
    with pytest.raises(CubeOutsideRoot):
        CanonicalCube(-1, (0, 0))
    with pytest.raises(CubeOutsideRoot):
        CanonicalCube(1, (2, 0))
    grid = unit_grid(frac_bits=4)
    deep = CanonicalCube(6, (0, 0))
    with pytest.raises(CubeOutsideRoot):
        build_compressed_tree(grid, [(deep, 1)])


def test_dedup_min_label_none_handling():
    cube = CanonicalCube(1, (0, 0))
    best = dedup_min_label([(cube, None), (cube, 5), (cube, 2)])
    assert best[cube] == 2

"""Dyadic cube grid, interleaved-bit ordering, and compressed quadtrees.

Coordinates are normalized into a root cube and snapped to fixed point
with ``frac_bits`` fractional bits, so cube containment, least common
ancestors, and the depth-first cube order are exact integer bit
operations.  A built tree is immutable and safe for concurrent readers;
construction itself is single threaded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CubeOutsideRoot, EmptyInput, OutOfRoot

VERSION_TAG = "AWVD v1"


@dataclass(frozen=True)
class CanonicalCube:
    """Dyadic cube: side 2^-level in root units, integer anchor per axis."""

    level: int
    anchor: tuple[int, ...]

    def __post_init__(self):
        if self.level < 0:
            raise CubeOutsideRoot(f"negative level {self.level}")
        top = 1 << self.level
        for a in self.anchor:
            if not 0 <= a < top:
                raise CubeOutsideRoot(
                    f"anchor {self.anchor} outside [0, 2^{self.level}) per axis"
                )

    @property
    def d(self) -> int:
        return len(self.anchor)

    def child(self, offsets: tuple[int, ...]) -> "CanonicalCube":
        return CanonicalCube(
            self.level + 1,
            tuple(2 * a + o for a, o in zip(self.anchor, offsets)),
        )

    def parent(self) -> "CanonicalCube":
        if self.level == 0:
            raise CubeOutsideRoot("root has no parent")
        return CanonicalCube(self.level - 1, tuple(a >> 1 for a in self.anchor))


def cube_contains(outer: CanonicalCube, inner: CanonicalCube) -> bool:
    if outer.level > inner.level:
        return False
    shift = inner.level - outer.level
    return all((b >> shift) == a for a, b in zip(outer.anchor, inner.anchor))


@lru_cache(maxsize=None)
def _spread_table(d: int) -> tuple[int, ...]:
    """Byte table: bit k of the byte moves to bit k*d of the result."""
    table = []
    for byte in range(256):
        out = 0
        for k in range(8):
            if byte & (1 << k):
                out |= 1 << (k * d)
        table.append(out)
    return tuple(table)


def _spread_bits(x: int, d: int) -> int:
    """Spread the bits of x so consecutive bits are d positions apart."""
    table = _spread_table(d)
    out = 0
    shift = 0
    while x:
        out |= table[x & 0xFF] << (shift * d)
        x >>= 8
        shift += 8
    return out


def interleave(fixed: tuple[int, ...]) -> int:
    """Morton key of a fixed-point coordinate tuple, axis 0 most significant."""
    d = len(fixed)
    key = 0
    for axis, value in enumerate(fixed):
        key |= _spread_bits(value, d) << (d - 1 - axis)
    return key


def cube_key_range(cube: CanonicalCube, frac_bits: int) -> tuple[int, int]:
    """Half-open Morton interval of all fixed-point points inside the cube."""
    shift = frac_bits - cube.level
    if shift < 0:
        raise CubeOutsideRoot(f"cube level {cube.level} finer than {frac_bits} bits")
    start = interleave(tuple(a << shift for a in cube.anchor))
    return start, start + (1 << (shift * cube.d))


def z_compare(a: CanonicalCube, b: CanonicalCube) -> int:
    """Depth-first cube order: -1/0/+1.  An ancestor precedes every
    descendant; disjoint cubes compare by interleaved anchor bits."""
    level = max(a.level, b.level)
    ka = interleave(tuple(x << (level - a.level) for x in a.anchor))
    kb = interleave(tuple(x << (level - b.level) for x in b.anchor))
    if ka != kb:
        return -1 if ka < kb else 1
    if a.level != b.level:
        return -1 if a.level < b.level else 1
    return 0


class GridConfig:
    """Affine map from instance units into the fixed-point root cube.

    The root is sized to a power of two at least ``pad`` times the input
    bounding-box diameter and shifted a quarter side below the box corner,
    so the sites, every refinement cube, and the inflated query region all
    sit strictly inside it.
    """

    def __init__(self, origin, side: float, frac_bits: int = 48):
        self.origin = np.asarray(origin, dtype=float)
        self.side = float(side)
        self.frac_bits = int(frac_bits)
        self.d = self.origin.shape[0]
        if self.frac_bits < 1:
            raise ValueError("frac_bits must be >= 1")
        if not self.side > 0:
            raise ValueError("root side must be positive")
        self._scale = float(2**self.frac_bits)

    @classmethod
    def from_points(cls, points, frac_bits: int = 48, pad: float = 4.0) -> "GridConfig":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[0] == 0:
            raise EmptyInput("need at least one point")
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        diameter = float(np.linalg.norm(hi - lo))
        if diameter == 0.0:
            diameter = max(1.0, float(np.abs(pts).max()))
        side = 2.0 ** math.ceil(math.log2(pad * diameter))
        return cls(lo - side / 4.0, side, frac_bits)

    @property
    def root(self) -> CanonicalCube:
        return CanonicalCube(0, (0,) * self.d)

    def cube_side(self, level: int) -> float:
        return self.side * 2.0**-level

    def to_fixed(self, p, clamp: bool = False) -> tuple[int, ...]:
        rel = (np.asarray(p, dtype=float) - self.origin) / self.side
        raw = np.floor(rel * self._scale)
        if clamp:
            raw = np.clip(raw, 0, self._scale - 1)
        elif np.any(raw < 0) or np.any(raw >= self._scale):
            raise OutOfRoot(f"point {p} outside the root cube")
        return tuple(int(v) for v in raw)

    def fixed_to_point(self, fixed) -> np.ndarray:
        return self.origin + np.asarray(fixed, dtype=float) / self._scale * self.side

    def cube_bounds(self, cube: CanonicalCube) -> tuple[np.ndarray, np.ndarray]:
        side = self.cube_side(cube.level)
        lo = self.origin + np.asarray(cube.anchor, dtype=float) * side
        return lo, lo + side

    def cube_containing(self, p, level: int, clamp: bool = False) -> CanonicalCube:
        if not 0 <= level <= self.frac_bits:
            raise CubeOutsideRoot(f"level {level} outside [0, {self.frac_bits}]")
        fixed = self.to_fixed(p, clamp=clamp)
        shift = self.frac_bits - level
        return CanonicalCube(level, tuple(v >> shift for v in fixed))

    def smallest_cube_covering(self, p, q) -> CanonicalCube:
        """Minimal cube containing both points, via the longest common
        prefix of their fixed-point bits."""
        fp = p if isinstance(p, tuple) else self.to_fixed(p)
        fq = q if isinstance(q, tuple) else self.to_fixed(q)
        highest = 0
        for a, b in zip(fp, fq):
            highest = max(highest, (a ^ b).bit_length())
        level = self.frac_bits - highest
        shift = self.frac_bits - level
        return CanonicalCube(level, tuple(v >> shift for v in fp))

    def header_fields(self) -> str:
        values = [f"{v:.17g}" for v in self.origin] + [f"{self.side:.17g}"] * self.d
        return " ".join(values)

    @classmethod
    def from_header_fields(cls, d: int, frac_bits: int, fields: list[str]) -> "GridConfig":
        if len(fields) != 2 * d:
            raise ValueError(f"expected {2 * d} root fields, got {len(fields)}")
        origin = [float(x) for x in fields[:d]]
        sides = {float(x) for x in fields[d:]}
        if len(sides) != 1:
            raise ValueError("root cube must have one side length")
        return cls(origin, sides.pop(), frac_bits)


class TreeNode:
    __slots__ = ("cube", "label", "initial_label", "children", "start", "end")

    def __init__(self, cube: CanonicalCube, label: int | None, start: int, end: int):
        self.cube = cube
        self.label = label
        self.initial_label = label
        self.children: list[TreeNode] = []
        self.start = start
        self.end = end


class CompressedQuadTree:
    """Cube hierarchy over the input cubes; cells are a cube minus its
    stored child cubes."""

    def __init__(self, grid: GridConfig, root: TreeNode, nodes: list[TreeNode]):
        self.grid = grid
        self.root = root
        self.nodes = nodes  # depth-first order
        self._cell_starts: list[int] | None = None
        self._cell_nodes: list[TreeNode] | None = None

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def cell_count(self) -> int:
        self._ensure_cells()
        return len(self._cell_starts)

    @property
    def depth(self) -> int:
        return max(n.cube.level for n in self.nodes)

    def _ensure_cells(self) -> None:
        if self._cell_starts is not None:
            return
        starts: list[int] = []
        owners: list[TreeNode] = []
        stack = [(self.root, self.root.start, 0)]
        while stack:
            node, cursor, child_idx = stack.pop()
            advanced = False
            for k in range(child_idx, len(node.children)):
                child = node.children[k]
                if child.start > cursor:
                    starts.append(cursor)
                    owners.append(node)
                stack.append((node, child.end, k + 1))
                stack.append((child, child.start, 0))
                advanced = True
                break
            if not advanced and cursor < node.end:
                starts.append(cursor)
                owners.append(node)
        self._cell_starts = starts
        self._cell_nodes = owners

    def point_locate(self, p, clamp: bool = False) -> tuple[int, TreeNode, int]:
        """Label and owning cell of the smallest region containing ``p``.

        Returns (label, cell node, comparison count); the comparisons are
        the binary-search steps over the flattened cell list.
        """
        self._ensure_cells()
        fixed = self.grid.to_fixed(p, clamp=clamp)
        key = interleave(fixed)
        starts = self._cell_starts
        lo, hi = 0, len(starts)
        comparisons = 0
        while hi - lo > 1:
            mid = (lo + hi) // 2
            comparisons += 1
            if starts[mid] <= key:
                lo = mid
            else:
                hi = mid
        node = self._cell_nodes[lo]
        return node.label, node, comparisons

    def iter_cells(self):
        """Yield (start_key, owner node) in z-order."""
        self._ensure_cells()
        yield from zip(self._cell_starts, self._cell_nodes)


def dedup_min_label(
    cubes: list[tuple[CanonicalCube, int | None]],
) -> dict[CanonicalCube, int | None]:
    """Collapse duplicate cubes, keeping the minimum label per cube."""
    best: dict[CanonicalCube, int | None] = {}
    for cube, label in cubes:
        if cube in best:
            old = best[cube]
            if old is None or (label is not None and label < old):
                best[cube] = label
        else:
            best[cube] = label
    return best


def build_compressed_tree(
    grid: GridConfig, cubes: list[tuple[CanonicalCube, int | None]]
) -> CompressedQuadTree:
    """Sort the cubes in depth-first order, drop duplicates keeping the
    minimum label, and attach each cube under its nearest input ancestor.

    If no input cube contains all the others, an unlabeled cover cube is
    synthesized as the root; label propagation fills it in later.
    """
    if not cubes:
        raise EmptyInput("no cubes to build a tree from")
    for cube, _ in cubes:
        if cube.d != grid.d:
            raise CubeOutsideRoot("cube dimension does not match the grid")
        if cube.level > grid.frac_bits:
            raise CubeOutsideRoot(
                f"cube level {cube.level} exceeds the {grid.frac_bits}-bit grid"
            )
    unique = dedup_min_label(cubes)
    entries = []
    for cube, label in unique.items():
        start, end = cube_key_range(cube, grid.frac_bits)
        entries.append((start, cube.level, cube, label, end))
    entries.sort(key=lambda e: (e[0], e[1]))

    first = entries[0]
    if not all(cube_contains(first[2], e[2]) for e in entries[1:]):
        # Synthesize a root covering everything.
        lca = entries[0][2]
        for _, _, cube, _, _ in entries[1:]:
            while not cube_contains(lca, cube):
                lca = lca.parent()
        start, end = cube_key_range(lca, grid.frac_bits)
        entries.insert(0, (start, lca.level, lca, None, end))

    nodes: list[TreeNode] = []
    stack: list[TreeNode] = []
    for start, _, cube, label, end in entries:
        node = TreeNode(cube, label, start, end)
        nodes.append(node)
        while stack and not cube_contains(stack[-1].cube, cube):
            stack.pop()
        if stack:
            stack[-1].children.append(node)
        stack.append(node)
    return CompressedQuadTree(grid, nodes[0], nodes)


def propagate_labels(tree: CompressedQuadTree, root_label: int) -> CompressedQuadTree:
    """Top-down pass: a child missing a label, or carrying a larger label
    than its parent, takes the parent's label."""
    root = tree.root
    if root.label is None:
        root.label = root_label
    stack = [root]
    while stack:
        node = stack.pop()
        for child in node.children:
            if child.label is None or child.label > node.label:
                child.label = node.label
            stack.append(child)
    return tree


def check_tree(tree: CompressedQuadTree, n_labels: int) -> list[str]:
    """Structural invariants; returns human-readable violations."""
    problems: list[str] = []
    seen: set[CanonicalCube] = set()
    for node in tree.nodes:
        if node.cube in seen:
            problems.append(f"duplicate cube {node.cube}")
        seen.add(node.cube)
        if node.label is None or not 1 <= node.label <= n_labels:
            problems.append(f"node {node.cube} label {node.label} outside 1..{n_labels}")
        prev_end = None
        for child in node.children:
            if not cube_contains(node.cube, child.cube):
                problems.append(f"child {child.cube} escapes parent {node.cube}")
            if prev_end is not None and child.start < prev_end:
                problems.append(f"overlapping siblings under {node.cube}")
            prev_end = child.end
    for a, b in zip(tree.nodes, tree.nodes[1:]):
        if (a.start, a.cube.level) >= (b.start, b.cube.level):
            problems.append("nodes not in depth-first order")
            break
    return problems

"""Grid quantization, Gray coding, octree paths and KD trees."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from espat.encoding import (
    DepthExceededError,
    EmptyInputError,
    GridConfig,
    KdTree,
    OutOfBoundsError,
    SpatialPoint,
    WidthOverflowError,
    binary_to_gray,
    build_kdtree,
    cell_to_octree_path,
    gray_to_binary,
    octree_path_to_cell,
    point_to_octree_path,
    point_to_prefix,
    quantize,
    uniform_kdtree,
)


def unit_grid(m: int) -> GridConfig:
    return GridConfig(0.0, 8.0, 0.0, 8.0, 0.0, 8.0, m)


class TestQuantize:
    def test_simple_floor(self):
        cell = quantize(SpatialPoint(3.5, 1.2, 7.9), unit_grid(3))
        assert cell == (3, 1, 7)

    def test_minimum_corner(self):
        assert quantize(SpatialPoint(0.0, 0.0, 0.0), unit_grid(3)) == (0, 0, 0)

    def test_max_is_out_of_bounds(self):
        with pytest.raises(OutOfBoundsError):
            quantize(SpatialPoint(8.0, 1.0, 1.0), unit_grid(3))

    def test_below_min_is_out_of_bounds(self):
        with pytest.raises(OutOfBoundsError):
            quantize(SpatialPoint(1.0, -0.001, 1.0), unit_grid(3))


class TestGray:
    def test_three_bit_sequence(self):
        got = [binary_to_gray(v, 3) for v in range(8)]
        assert got == [0b000, 0b001, 0b011, 0b010, 0b110, 0b111, 0b101, 0b100]

    def test_zero_maps_to_zero(self):
        for m in (1, 4, 9):
            assert binary_to_gray(0, m) == 0

    def test_known_value(self):
        assert binary_to_gray(10, 4) == 0b1111

    def test_overflow_rejected(self):
        with pytest.raises(WidthOverflowError):
            binary_to_gray(8, 3)
        with pytest.raises(WidthOverflowError):
            gray_to_binary(16, 4)

    def test_adjacency_and_roundtrip_small(self):
        for m in range(1, 9):
            codes = [binary_to_gray(v, m) for v in range(1 << m)]
            for v in range((1 << m) - 1):
                assert bin(codes[v] ^ codes[v + 1]).count("1") == 1
            for v in range(1 << m):
                assert gray_to_binary(codes[v], m) == v

    @given(st.integers(min_value=1, max_value=20), st.data())
    @settings(max_examples=80)
    def test_roundtrip_random(self, m, data):
        v = data.draw(st.integers(min_value=0, max_value=(1 << m) - 1))
        assert gray_to_binary(binary_to_gray(v, m), m) == v


class TestOctreePath:
    def test_depth_one_origin(self):
        assert cell_to_octree_path((0, 0, 0), unit_grid(1)) == (0,)

    def test_depth_one_identity(self):
        # one-bit Gray code is the identity, symbol is x|y|z bits
        assert cell_to_octree_path((1, 0, 1), unit_grid(1)) == (0b101,)

    def test_depth_two_interleave(self):
        assert cell_to_octree_path((2, 1, 3), unit_grid(2)) == (0b101, 0b110)

    def test_roundtrip(self):
        grid = unit_grid(4)
        rng = random.Random(0)
        for _ in range(50):
            cell = tuple(rng.randrange(16) for _ in range(3))
            assert octree_path_to_cell(cell_to_octree_path(cell, grid), grid) == cell

    @given(st.integers(min_value=2, max_value=8), st.data())
    @settings(max_examples=60)
    def test_parent_path_is_prefix(self, m, data):
        cell = tuple(
            data.draw(st.integers(min_value=0, max_value=(1 << m) - 1)) for _ in range(3)
        )
        parent = tuple(c >> 1 for c in cell)
        child_path = cell_to_octree_path(cell, unit_grid(m))
        parent_path = cell_to_octree_path(parent, unit_grid(m - 1))
        assert child_path[: m - 1] == parent_path

    def test_point_to_octree_path(self):
        assert point_to_octree_path(SpatialPoint(3.5, 1.2, 7.9), unit_grid(3)) == \
            cell_to_octree_path((3, 1, 7), unit_grid(3))


class TestGridConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            GridConfig(1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 3)
        with pytest.raises(ValueError):
            GridConfig(0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0)

    def test_from_file(self, tmp_path):
        path = tmp_path / "grid.conf"
        path.write_text(
            "# comment\nlat_min=0\nlat_max = 8\nlon_min=0\nlon_max=8\n"
            "alt_min=0\nalt_max=8\nbits_per_axis=3\n"
        )
        grid = GridConfig.from_file(str(path))
        assert grid == unit_grid(3)

    def test_from_file_missing_key(self, tmp_path):
        path = tmp_path / "grid.conf"
        path.write_text("lat_min=0\n")
        with pytest.raises(ValueError):
            GridConfig.from_file(str(path))


class TestKdTree:
    def test_three_point_root(self):
        tree = build_kdtree([(2, 3, 1), (5, 4, 2), (9, 6, 7)], 3)
        assert tree.root.axis == 0
        assert tree.root.point == (5, 4, 2)
        assert tree.root.left.point == (2, 3, 1)
        assert tree.root.right.point == (9, 6, 7)

    def test_single_point(self):
        tree = build_kdtree([(1, 2, 3)], 2)
        assert tree.root.point == (1, 2, 3)
        assert tree.root.left is None and tree.root.right is None

    def test_seven_points_balanced(self):
        # Hand-run of the construction on seven distinct-x points:
        # sorted by x the median (index 3) is (4,...); the 3-point slices
        # split again on y, then z leaves.
        points = [(i, (3 * i) % 7, (5 * i) % 7) for i in range(7)]
        tree = build_kdtree(points, 5)
        assert tree.root.point[0] == 3  # median x of 0..6

        def count_and_depth(node, depth=0):
            if node is None:
                return 0, depth - 1
            assert node.axis == depth % 3
            nl, dl = count_and_depth(node.left, depth + 1)
            nr, dr = count_and_depth(node.right, depth + 1)
            return nl + nr + 1, max(dl, dr)

        count, max_depth = count_and_depth(tree.root)
        assert count == 7
        assert max_depth == 2  # levels 0, 1, 2 -> axes x, y, z

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            build_kdtree([], 3)

    def test_serialization_roundtrip_and_determinism(self):
        rng = random.Random(1)
        points = [(rng.random(), rng.random(), rng.random()) for _ in range(20)]
        t1 = build_kdtree(points, 4)
        t2 = build_kdtree(points, 4)
        assert t1.to_bytes() == t2.to_bytes()
        rt = KdTree.from_bytes(t1.to_bytes())
        assert rt.to_bytes() == t1.to_bytes()

    def test_duplicate_coordinates_deterministic(self):
        points = [(1.0, 2.0, 3.0)] * 5 + [(0.0, 0.0, 0.0)] * 4
        a = build_kdtree(points, 4).to_bytes()
        b = build_kdtree(points, 4).to_bytes()
        assert a == b


class TestPointToPrefix:
    def test_tie_goes_right(self):
        tree = build_kdtree([(2, 3, 1), (5, 4, 2), (9, 6, 7)], 3)
        assert point_to_prefix(SpatialPoint(5.0, 0.0, 0.0), tree, 1) == (1,)
        assert point_to_prefix(SpatialPoint(4.999, 0.0, 0.0), tree, 1) == (0,)

    def test_zero_depth(self):
        tree = build_kdtree([(1, 1, 1)], 1)
        assert point_to_prefix(SpatialPoint(0, 0, 0), tree, 0) == ()

    def test_fixed_tree_hand_walk(self):
        tree = build_kdtree([(2, 3, 1), (5, 4, 2), (9, 6, 7)], 3)
        # x=7 >= 5 -> right; then y axis: 1 < 6 -> left
        assert point_to_prefix(SpatialPoint(7.0, 1.0, 0.0), tree, 2) == (1, 0)

    def test_depth_exceeded(self):
        tree = build_kdtree([(1, 1, 1)], 3)
        with pytest.raises(DepthExceededError):
            point_to_prefix(SpatialPoint(0, 0, 0), tree, 2)
        with pytest.raises(DepthExceededError):
            point_to_prefix(SpatialPoint(0, 0, 0), tree, 9)


class TestUniformKdTree:
    def test_leaves_match_grid_cells(self):
        grid = unit_grid(2)
        tree = uniform_kdtree(grid)
        assert tree.depth == 6
        rng = random.Random(2)
        for _ in range(200):
            p = SpatialPoint(
                rng.uniform(0, 8), rng.uniform(0, 8), rng.uniform(0, 8)
            )
            prefix = point_to_prefix(p, tree, 6)
            cell = quantize(p, grid)
            want = []
            for level in range(1, -1, -1):
                for axis in range(3):
                    want.append((cell[axis] >> level) & 1)
            assert prefix == tuple(want)

    def test_axis_cycle(self):
        tree = uniform_kdtree(unit_grid(1))
        assert tree.root.axis == 0
        assert tree.root.left.axis == 1
        assert tree.root.left.right.axis == 2

    def test_partition_property(self):
        # every in-bounds point lands in exactly one depth-l region, and the
        # walk is total for a complete tree
        grid = unit_grid(2)
        tree = uniform_kdtree(grid)
        rng = random.Random(3)
        seen = set()
        for _ in range(300):
            p = SpatialPoint(rng.uniform(0, 8), rng.uniform(0, 8), rng.uniform(0, 8))
            seen.add(point_to_prefix(p, tree, 3))
        assert seen <= {(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)}
        assert len(seen) == 8  # 300 uniform draws hit all 8 octants

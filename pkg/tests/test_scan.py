import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hinfconnect.analysis import in_kgamma
from hinfconnect.errors import InvalidInputError
from hinfconnect.model import example1_plant, scalar_controller
from hinfconnect.scan import (AxisSpec, ScanGrid, count_components, default_axes,
                              read_csv, scan_grid, sidecar, write_csv)

SMALL = 41


def small_axes():
    return default_axes(SMALL)


class TestCounts:
    @pytest.mark.parametrize("a, gamma, expected",
                             [(1.0, 50.0, 2), (1.0, 2.0, 2), (-1.0, 50.0, 1), (-1.0, 2.0, 1)])
    def test_default_slice(self, a, gamma, expected):
        x, y = default_axes()
        assert scan_grid(example1_plant(a), x, y, gamma).component_count == expected

    def test_monotone_in_gamma(self):
        x, y = default_axes()
        for a in (1.0, -1.0):
            big = scan_grid(example1_plant(a), x, y, 50.0).membership
            small = scan_grid(example1_plant(a), x, y, 2.0).membership
            assert np.all(big | ~small)
            assert small.sum() < big.sum()

    def test_cells_match_pointwise_membership(self):
        x, y = AxisSpec("B_K", -10, 10, 9), AxisSpec("C_K", -10, 10, 7)
        plant = example1_plant()
        grid = scan_grid(plant, x, y, 50.0)
        for i, cv in enumerate(y.values):
            for j, bv in enumerate(x.values):
                K = scalar_controller(-5.0, bv, cv)
                assert grid.membership[i, j] == in_kgamma(plant, K, 50.0, strictly_proper=True)

    def test_proper_cells_excluded(self):
        x, y = small_axes()
        grid = scan_grid(example1_plant(), x, y, 50.0, fixed={"A_K": -5.0, "D_K": 0.5})
        assert not grid.membership.any()

    def test_deterministic(self):
        x, y = small_axes()
        a = scan_grid(example1_plant(), x, y, 50.0).membership
        b = scan_grid(example1_plant(), x, y, 50.0).membership
        np.testing.assert_array_equal(a, b)


class TestLabeling:
    def test_diagonal_touch_is_two(self):
        assert count_components([[1, 0], [0, 1]]) == 2

    def test_empty(self):
        assert count_components(np.zeros((3, 3))) == 0

    def test_ring_is_one(self):
        mask = np.ones((5, 5), dtype=bool)
        mask[2, 2] = False
        assert count_components(mask) == 1

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_union_bound(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.random((8, 8)) < 0.3, rng.random((8, 8)) < 0.3
        assert count_components(a | b) <= count_components(a) + count_components(b)


class TestAxes:
    def test_parse(self):
        assert AxisSpec.parse("B_K:-10:10:201") == AxisSpec("B_K", -10.0, 10.0, 201)

    def test_indexed_parameter(self):
        assert AxisSpec.parse("A_K[0,0]:-1:1:3").name == "A_K[0,0]"

    @pytest.mark.parametrize("text", ["B_K:-10:10", "Q_K:-1:1:3", "B_K:1:-1:3",
                                      "B_K:-1:1:1", "B_K:a:1:3", "B_K:-1:inf:3"])
    def test_parse_errors(self, text):
        with pytest.raises(InvalidInputError):
            AxisSpec.parse(text)

    def test_same_axis_rejected(self):
        ax = AxisSpec("B_K", -1, 1, 3)
        with pytest.raises(InvalidInputError):
            scan_grid(example1_plant(), ax, ax, 2.0)

    def test_out_of_range_entry(self):
        with pytest.raises(InvalidInputError):
            scan_grid(example1_plant(), AxisSpec("B_K[1,0]", -1, 1, 3),
                      AxisSpec("C_K", -1, 1, 3), 2.0)

    def test_shape_mismatch(self):
        x, y = small_axes()
        with pytest.raises(InvalidInputError):
            ScanGrid(x, y, 2.0, np.zeros((3, 3)))


class TestCsv:
    def test_round_trip(self, tmp_path):
        x, y = AxisSpec("B_K", -10, 10, 31), AxisSpec("C_K", -3.3, 7.1, 17)
        grid = scan_grid(example1_plant(), x, y, 50.0)
        write_csv(grid, tmp_path / "g.csv")
        xs, ys, mask = read_csv(tmp_path / "g.csv")
        np.testing.assert_array_equal(xs, x.values)
        np.testing.assert_array_equal(ys, y.values)
        np.testing.assert_array_equal(mask, grid.membership)

    def test_header_layout(self, tmp_path):
        x, y = AxisSpec("B_K", 0, 1, 2), AxisSpec("C_K", 0, 1, 3)
        write_csv(ScanGrid(x, y, 1.0, np.eye(3, 2, dtype=bool)), tmp_path / "g.csv")
        lines = (tmp_path / "g.csv").read_text().splitlines()
        assert lines[0] == ",0.0,1.0"
        assert lines[1:] == ["0.0,1,0", "0.5,0,1", "1.0,0,0"]

    @pytest.mark.parametrize("body", [",0,1\n0,1,2\n", ",0,1\n0,1\n", ",0,1\nx,1,0\n"])
    def test_malformed(self, tmp_path, body):
        (tmp_path / "g.csv").write_text(body)
        with pytest.raises(InvalidInputError):
            read_csv(tmp_path / "g.csv")

    def test_sidecar(self):
        x, y = small_axes()
        grid = scan_grid(example1_plant(), x, y, 50.0)
        meta = sidecar(grid)
        assert meta["component_count"] == 2
        assert float(meta["gamma"]) == 50.0
        assert meta["axes"]["x"]["count"] == SMALL

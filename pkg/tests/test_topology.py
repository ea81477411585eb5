import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfra.numerics import SeededRng
from gfra.topology import (
    PlacementError,
    TopologyConfig,
    distance_2d,
    distance_3d,
    generate_topology,
    pairwise_distance_2d,
)


class TestGenerate:
    def test_scenario_one_invariants(self):
        cfg = TopologyConfig()
        topo = generate_topology(cfg, SeededRng(2024))
        aps, ues = topo.ap_positions, topo.ue_positions
        assert aps.shape == (20, 2) and ues.shape == (100, 2)
        assert aps.min() >= 50.0 and aps.max() <= 450.0
        assert ues.min() >= 0.0 and ues.max() <= 500.0
        dap = pairwise_distance_2d(aps, aps) + np.diag(np.full(20, np.inf))
        assert dap.min() >= 15.0
        assert topo.distances_2d().min() >= 10.0

    def test_unconstrained_single_points(self):
        cfg = TopologyConfig(area_side_m=100.0, num_aps=1, num_users=1, edge_distance_m=0.0,
                             min_ue_ap_distance_m=0.0, min_ap_ap_distance_m=0.0)
        topo = generate_topology(cfg, SeededRng(1))
        assert ((topo.ap_positions >= 0) & (topo.ap_positions <= 100)).all()
        assert ((topo.ue_positions >= 0) & (topo.ue_positions <= 100)).all()

    def test_uniform_placement(self):
        cfg = TopologyConfig(area_side_m=100.0, num_aps=1, num_users=20000, edge_distance_m=0.0,
                             min_ue_ap_distance_m=0.0, min_ap_ap_distance_m=0.0)
        ues = generate_topology(cfg, SeededRng(9)).ue_positions
        np.testing.assert_allclose(ues.mean(axis=0), [50.0, 50.0], atol=1.0)

    def test_infeasible_spacing(self):
        cfg = TopologyConfig(area_side_m=100.0, num_aps=2, num_users=1, edge_distance_m=0.0,
                             min_ap_ap_distance_m=200.0)
        with pytest.raises(PlacementError) as err:
            generate_topology(cfg, SeededRng(0))
        assert err.value.constraint == "min_ap_ap_distance_m"

    def test_deterministic(self):
        a = generate_topology(TopologyConfig(), SeededRng(7))
        b = generate_topology(TopologyConfig(), SeededRng(7))
        assert a.to_csv() == b.to_csv()

    def test_csv_layout(self):
        topo = generate_topology(TopologyConfig(num_aps=2, num_users=3), SeededRng(0))
        lines = topo.to_csv().splitlines()
        assert lines[0].startswith("# units:")
        assert lines[1] == "kind,x_m,y_m"
        assert [ln.split(",")[0] for ln in lines[2:]] == ["ap"] * 2 + ["ue"] * 3

    def test_bad_config(self):
        with pytest.raises(ValueError):
            TopologyConfig(area_side_m=100.0, edge_distance_m=50.0)


class TestDistances:
    def test_coincident_points(self):
        assert distance_2d((3, 4), (3, 4)) == 0.0
        assert distance_3d((3, 4), (3, 4), 12.0, 1.5) == pytest.approx(10.5)

    def test_hundred_metres(self):
        assert distance_3d((0, 0), (100, 0), 12.0, 1.5) == pytest.approx(math.sqrt(100**2 + 10.5**2))
        assert distance_3d((0, 0), (100, 0), 12.0, 1.5) == pytest.approx(100.5497, abs=1e-4)

    @given(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)))
    @settings(max_examples=100)
    def test_symmetry(self, p, q):
        assert distance_2d(p, q) == distance_2d(q, p)

    def test_pairwise_matches_scalar(self):
        rng = SeededRng(0)
        a, b = rng.uniform(0, 10, (4, 2)), rng.uniform(0, 10, (5, 2))
        d = pairwise_distance_2d(a, b)
        for i in range(4):
            for j in range(5):
                assert d[i, j] == pytest.approx(distance_2d(a[i], b[j]))

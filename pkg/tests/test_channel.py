import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfra.channel import (
    SPEED_OF_LIGHT,
    LargeScaleMap,
    ModelRangeError,
    PathLossParams,
    breakpoint_distance,
    large_scale_map,
    path_loss_db,
    small_scale_block,
)
from gfra.numerics import SeededRng
from gfra.topology import TopologyConfig, generate_topology


def pl1(d_3d, fc_ghz):
    return 28.0 + 22.0 * math.log10(d_3d) + 20.0 * math.log10(fc_ghz)


def pl2(d_3d, fc_ghz, d_bp, dh):
    return 28.0 + 40.0 * math.log10(d_3d) + 20.0 * math.log10(fc_ghz) - 9.0 * math.log10(d_bp**2 + dh**2)


class TestBreakpoint:
    def test_scenario_one(self):
        expected = 4 * 11 * 0.5 * 9e8 / 2.99792458e8
        assert breakpoint_distance(PathLossParams()) == pytest.approx(expected, rel=1e-12)
        assert breakpoint_distance(PathLossParams()) == pytest.approx(66.045, abs=1e-3)

    def test_linear_in_frequency(self):
        base = breakpoint_distance(PathLossParams())
        assert breakpoint_distance(PathLossParams(carrier_freq_hz=1.8e9)) == pytest.approx(2 * base)

    def test_unit_height_rejected(self):
        with pytest.raises(ValueError):
            breakpoint_distance(PathLossParams(ue_height_m=1.0))


class TestPathLoss:
    def test_ten_metres(self):
        d3 = math.hypot(10.0, 10.5)
        assert d3 == pytest.approx(14.5, abs=0.01)
        assert path_loss_db(10.0, PathLossParams()) == pytest.approx(pl1(d3, 0.9), abs=1e-12)
        assert path_loss_db(10.0, PathLossParams()) == pytest.approx(52.64, abs=0.01)

    def test_far_branch_matches_oracle(self):
        p = PathLossParams()
        d = 300.0
        expected = pl2(math.hypot(d, 10.5), 0.9, p.breakpoint_distance_m, 10.5)
        assert path_loss_db(d, p) == pytest.approx(expected, abs=1e-12)

    @given(st.floats(1.01, 50.0), st.floats(1.01, 10.0), st.floats(0.5e9, 6e9))
    @settings(max_examples=100)
    def test_branch_continuity(self, h_bs, h_ut, fc):
        p = PathLossParams(carrier_freq_hz=fc, ap_height_m=h_bs, ue_height_m=h_ut)
        d_bp = breakpoint_distance(p)
        dh = h_bs - h_ut
        d3 = math.hypot(d_bp, dh)
        assert abs(pl1(d3, fc / 1e9) - pl2(d3, fc / 1e9, d_bp, dh)) <= 1e-9

    def test_frequency_doubling(self):
        a = path_loss_db(20.0, PathLossParams())
        b = path_loss_db(20.0, PathLossParams(carrier_freq_hz=1.8e9))
        assert b - a == pytest.approx(20 * math.log10(2), abs=1e-12)

    @pytest.mark.parametrize("d", [9.99, 5000.1])
    def test_out_of_range(self, d):
        with pytest.raises(ModelRangeError):
            path_loss_db(d, PathLossParams())

    def test_monotone(self):
        d = np.linspace(10, 5000, 2000)
        assert np.all(np.diff(path_loss_db(d, PathLossParams())) > 0)


def _topology(seed=0, **kw):
    return generate_topology(TopologyConfig(**kw), SeededRng(seed))


class TestLargeScale:
    def test_no_shadowing_is_deterministic(self):
        topo = _topology()
        p = PathLossParams(shadow_std_db=0.0)
        a = large_scale_map(topo, p, SeededRng(1))
        b = large_scale_map(topo, p, SeededRng(2))
        np.testing.assert_array_equal(a.beta_db, b.beta_db)
        np.testing.assert_allclose(a.beta_db, -path_loss_db(np.maximum(topo.distances_2d(), 10.0), p))

    def test_shadowing_spread(self):
        topo = _topology(num_aps=2, num_users=3)
        p = PathLossParams()
        base = large_scale_map(topo, PathLossParams(shadow_std_db=0.0), SeededRng(0)).beta_db
        rng = SeededRng(5)
        draws = np.stack([large_scale_map(topo, p, rng.split(f"r{i}")).beta_db for i in range(10_000)])
        spread = (draws - base).std(axis=0)
        np.testing.assert_allclose(spread, 1.0, rtol=0.02)

    def test_nearer_ap_stronger(self):
        topo = _topology(num_aps=10, num_users=50)
        beta = large_scale_map(topo, PathLossParams(shadow_std_db=0.0), SeededRng(0)).beta_db
        d = topo.distances_2d()
        for k in range(d.shape[1]):
            order = np.argsort(d[:, k], kind="stable")
            assert np.all(np.diff(beta[order, k]) <= 1e-12)

    def test_csv(self):
        lines = LargeScaleMap(np.array([[-90.0, -80.0]])).to_csv().splitlines()
        assert lines[:2] == ["# units: m=index, k=index, beta_db=dB", "m,k,beta_db"]
        assert lines[3] == "0,1,-80.0"


class TestSmallScale:
    @pytest.mark.parametrize("beta_lin", [1.0, 0.25])
    def test_second_moment(self, beta_lin):
        g = small_scale_block(LargeScaleMap(np.full((1000, 500), 10 * np.log10(beta_lin))), 2, SeededRng(3)).gains
        assert np.mean(np.abs(g) ** 2) == pytest.approx(beta_lin, rel=0.01)

    def test_antennas_uncorrelated(self):
        beta = LargeScaleMap(np.zeros((1000, 1000)))
        g = small_scale_block(beta, 2, SeededRng(8)).gains.reshape(-1, 2)
        corr = np.abs(np.mean(g[:, 0] * np.conj(g[:, 1])))
        assert corr < 0.005

    def test_shape(self):
        blk = small_scale_block(LargeScaleMap(np.zeros((3, 4))), 2, SeededRng(0), block_id=5)
        assert blk.gains.shape == (3, 4, 2)
        assert blk.G(1).shape == (4, 2)
        assert blk.block_id == 5

    def test_speed_of_light(self):
        assert SPEED_OF_LIGHT == 299_792_458.0

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfra.airlink import (
    ActivityVector,
    PilotBook,
    PowerProfile,
    dbm_to_watts,
    dominant_ap,
    generate_pilotbook,
    pilot_length_from_coherence,
    sample_activity,
    snr_per_device,
    snr_target,
    synth_slot,
)
from gfra.channel import LargeScaleMap, SmallScaleBlock, small_scale_block
from gfra.numerics import SeededRng


def naive_slot(S, a, rho, G):
    """Element-by-element sum over devices, no vectorisation."""
    L, K = S.shape
    M, _, N = G.shape
    Y = np.zeros((M, L, N), dtype=complex)
    for m in range(M):
        for n in range(N):
            for k in range(K):
                for l in range(L):
                    Y[m, l, n] += a[k] * math.sqrt(rho[k]) * G[m, k, n] * S[l, k]
    return Y


class TestPilots:
    def test_energy(self):
        S = generate_pilotbook(40, 100, SeededRng(1)).S
        assert 0.95 <= np.mean(np.sum(np.abs(S) ** 2, axis=0)) <= 1.05

    def test_cross_correlation_level(self):
        L = 40
        S = generate_pilotbook(L, 400, SeededRng(2)).S
        gram = np.abs(S.conj().T @ S) ** 2
        off = gram[~np.eye(400, dtype=bool)]
        assert off.mean() == pytest.approx(1.0 / L, rel=0.05)

    def test_single_device(self):
        book = generate_pilotbook(8, 1, SeededRng(0))
        assert book.S.shape == (8, 1)
        assert book.num_users == 1 and book.pilot_length == 8

    def test_coherence_budget(self):
        assert pilot_length_from_coherence(1e-3, 200e3, 0.2) == 40


class TestActivity:
    def test_extremes(self):
        assert not sample_activity(100, 0.0, SeededRng(0)).a.any()
        assert sample_activity(100, 1.0, SeededRng(0)).a.all()

    def test_mean_active_count(self):
        rng = SeededRng(3)
        counts = [sample_activity(100, 0.1, rng.split(f"s{i}")).a.sum() for i in range(100_000)]
        assert 9.9 <= np.mean(counts) <= 10.1

    def test_support(self):
        v = ActivityVector(np.array([0, 1, 0, 1], dtype=np.uint8), 0.5)
        np.testing.assert_array_equal(v.support(), [1, 3])


class TestDominantAp:
    def test_argmax(self):
        assert dominant_ap(np.array([[0.1], [0.9], [0.3]]), 0) == 1

    def test_ties_lowest_index(self):
        assert dominant_ap(np.full((4, 1), 0.5), 0) == 0

    @given(st.integers(0, 2**32))
    @settings(max_examples=30)
    def test_attains_max(self, seed):
        b = SeededRng(seed).uniform(size=(6, 9))
        idx = dominant_ap(b)
        np.testing.assert_array_equal(b[idx, np.arange(9)], b.max(axis=0))


class TestSnr:
    def test_unit_careful_example(self):
        # independent conversion: dBm -> mW -> W
        noise_w = (10 ** (-109 / 10)) / 1000.0
        assert noise_w == pytest.approx(1.2589e-14, rel=1e-4)
        expected = 10 * math.log10(0.2 * 1e-10 / noise_w)
        beta = LargeScaleMap(np.array([[-100.0]]))
        got = snr_per_device(beta, PowerProfile.uniform(1, 0.2, dbm_to_watts(-109)))[0]
        assert got == pytest.approx(expected, abs=1e-9)
        assert got == pytest.approx(32.0103, abs=1e-4)

    def test_power_doubling(self):
        beta = LargeScaleMap(np.array([[-90.0, -95.0], [-99.0, -80.0]]))
        a = snr_per_device(beta, PowerProfile.uniform(2, 0.1, 1e-14))
        b = snr_per_device(beta, PowerProfile.uniform(2, 0.2, 1e-14))
        np.testing.assert_allclose(b - a, 10 * math.log10(2), atol=1e-12)

    def test_beta_times_ten(self):
        beta = LargeScaleMap(np.array([[-90.0, -95.0]]))
        p = PowerProfile.uniform(2, 0.2, 1e-14)
        np.testing.assert_allclose(snr_per_device(LargeScaleMap(beta.beta_db + 10), p) - snr_per_device(beta, p), 10.0)

    def test_target_interpolation(self):
        s = np.arange(1, 101, dtype=float)
        # sort-and-interpolate: position 0.05 * 99 = 4.95 between 5 and 6
        assert snr_target(s, 0.95) == pytest.approx(5 + 0.95, abs=1e-12)

    def test_target_constant(self):
        assert snr_target(np.full(10, 7.5), 0.999) == 7.5

    @given(st.permutations(list(range(20))))
    @settings(max_examples=30)
    def test_target_permutation_invariant(self, perm):
        s = np.linspace(-5, 30, 20)
        assert snr_target(s[list(perm)]) == snr_target(s)


def _setup(seed=0, M=3, K=5, L=4, N=2):
    rng = SeededRng(seed)
    S = generate_pilotbook(L, K, rng.split("p")).S
    beta = LargeScaleMap(rng.uniform(-100, -60, size=(M, K)))
    G = small_scale_block(beta, N, rng.split("g")).gains
    return rng, S, G


class TestSynthSlot:
    def test_all_inactive_no_noise(self):
        _, S, G = _setup()
        a = ActivityVector(np.zeros(5, dtype=np.uint8), 0.1)
        Y = synth_slot(PilotBook(S), a, PowerProfile.uniform(5, 0.2, 0.0), SmallScaleBlock(G)).Y
        assert not Y.any()

    def test_single_active_rank_one(self):
        _, S, G = _setup()
        a = np.zeros(5, dtype=np.uint8)
        a[2] = 1
        Y = synth_slot(PilotBook(S), ActivityVector(a, 0.1), PowerProfile.uniform(5, 0.2, 0.0), SmallScaleBlock(G)).Y
        for m in range(3):
            np.testing.assert_allclose(Y[m], math.sqrt(0.2) * np.outer(S[:, 2], G[m, 2]), rtol=1e-12)
            assert np.linalg.matrix_rank(Y[m]) == 1

    def test_matches_triple_loop(self):
        rng, S, G = _setup(seed=4, M=4, K=7, L=6, N=2)
        a = rng.bernoulli(0.5, 7)
        rho = rng.uniform(0.05, 0.3, 7)
        noise_rng = SeededRng(99)
        slot = synth_slot(PilotBook(S), ActivityVector(a, 0.5), PowerProfile(rho, 1e-13), SmallScaleBlock(G), noise_rng)
        W = SeededRng(99).complex_normal(1e-13, size=(4, 6, 2))
        expected = naive_slot(S, a, rho, G) + W
        np.testing.assert_allclose(slot.Y, expected, rtol=1e-12, atol=0)

    def test_noise_floor_energy(self):
        _, S, G = _setup(K=5)
        a = ActivityVector(np.zeros(5, dtype=np.uint8), 0.1)
        sigma2 = dbm_to_watts(-109)
        Y = synth_slot(PilotBook(S), a, PowerProfile.uniform(5, 0.2, sigma2), SmallScaleBlock(np.repeat(G, 20000, axis=0)), SeededRng(1)).Y
        assert np.mean(np.abs(Y) ** 2) == pytest.approx(sigma2, rel=0.01)

    def test_noise_requires_rng(self):
        _, S, G = _setup()
        a = ActivityVector(np.ones(5, dtype=np.uint8), 1.0)
        with pytest.raises(ValueError):
            synth_slot(PilotBook(S), a, PowerProfile.uniform(5, 0.2, 1e-14), SmallScaleBlock(G))

    def test_dimension_mismatch(self):
        _, S, G = _setup()
        a = ActivityVector(np.ones(4, dtype=np.uint8), 1.0)
        with pytest.raises(ValueError, match="dimension"):
            synth_slot(PilotBook(S), a, PowerProfile.uniform(4, 0.2, 0.0), SmallScaleBlock(G))

    def test_power_must_be_positive(self):
        with pytest.raises(ValueError):
            PowerProfile(np.array([0.2, 0.0]), 1e-14)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecpru.cpru import (
    CommutingEnsembleSpec,
    ExtendedSampler,
    PhaseChannel,
    QpeRegisters,
    RandomFunctionChannelSampler,
    _Fixed,
    adaptive_distinguish,
    boundary_weights,
    build_channel,
    dense_channel,
    digitize_gaussian,
    gap_statistics,
    lemma_precision,
    min_gap,
    normalize_phases,
    offset_boundary_test,
    offset_bound,
    prf_bit,
    qpe_amplitudes,
    qpe_amplitudes_formula,
    random_function_channel,
    return_fidelity_bounds,
    sample_hamiltonian,
    secure_query_bound,
    secure_query_estimate,
    separated_phases,
)
from ecpru.ecru import DenseSampler, EcHaarSampler, Eigensystem, haar_unitary

Z = np.diag([1.0, -1.0])


def z_sum(coefficients):
    """Dense ``sum_i J_i Z_i`` built from Kronecker products, qubit 0 leftmost."""
    n = len(coefficients)
    h = np.zeros((2**n, 2**n))
    for i, c in enumerate(coefficients):
        ops = [np.eye(2)] * n
        ops[i] = Z
        term = ops[0]
        for o in ops[1:]:
            term = np.kron(term, o)
        h += c * term
    return h


class RandomPhases:
    """Ideal channel: an independent uniform phase per eigenstate."""

    def __init__(self, K):
        self.K = K

    def sample(self, seed):
        th = np.random.default_rng(seed).uniform(0, 2 * np.pi, self.K)
        return _Fixed(np.diag(np.exp(1j * th)))


class TestDigitize:
    R, d = 1.25, 0.25

    @pytest.mark.parametrize(
        "x, want",
        [(0.0, 0.0), (0.125, 0.0), (0.1251, 0.25), (-0.125, -0.25), (-0.1249, 0.0), (0.3, 0.25), (5.0, 1.25), (-5.0, -1.25), (1.125, 1.0), (1.1251, 1.25)],
    )
    def test_examples(self, x, want):
        assert digitize_gaussian(x, self.R, self.d) == want

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-3, 3, allow_nan=False))
    def test_on_grid_and_nearest(self, x):
        y = digitize_gaussian(x, self.R, self.d)
        k = y / self.d
        assert k == round(k) and abs(y) <= self.R
        if abs(x) <= self.R:
            assert abs(y - x) <= self.d / 2 + 1e-15

    @pytest.mark.parametrize("R, d", [(1.0, 0.25), (1.0, 0.0), (-1.0, 0.25)])
    def test_bad_grid(self, R, d):
        with pytest.raises(ValueError):
            digitize_gaussian(0.0, R, d)


def test_lemma_precision():
    R, d = lemma_precision(2, 1.0)
    # e^2 * 2 = 14.78 -> 2^-4; ceil(2 * 16) = 32 is even, so 33 grid steps
    assert d == 1 / 16 and R == 33 / 16
    R, d = lemma_precision(8)
    assert d == 2.0**-15 and R >= 8 and round(R / d) % 2 == 1


class TestEnsemble:
    def test_z_field_eigenvalues_brute_force(self):
        spec = CommutingEnsembleSpec.z_fields(3, 3.125, 0.125)
        h = sample_hamiltonian(spec, 4)
        assert np.allclose(h.matrix(), z_sum(h.coefficients), atol=0)

    def test_values_are_dyadic(self):
        spec = CommutingEnsembleSpec.z_fields(4)
        h = sample_hamiltonian(spec, 0)
        scaled = h.eigenvalues / spec.delta
        assert np.array_equal(scaled, np.round(scaled))

    def test_validation(self):
        with pytest.raises(ValueError, match="non-degenerate"):
            CommutingEnsembleSpec(1, ((1.0, 1.0),), ((0,),), 1.0, 1.0)
        with pytest.raises(ValueError, match="cover"):
            CommutingEnsembleSpec(2, ((1.0, -1.0),), ((0,),), 1.0, 1.0)
        with pytest.raises(ValueError, match="size"):
            CommutingEnsembleSpec(1, ((1.0, -1.0, 0.5),), ((0,),), 1.0, 1.0)
        with pytest.raises(ValueError, match="one support"):
            CommutingEnsembleSpec(1, ((1.0, -1.0),), (), 1.0, 1.0)

    def test_two_site_template_quantum_numbers(self):
        spec = CommutingEnsembleSpec(2, ((0.0, 1.0, 2.0, 3.0),), ((1, 0),), 1.0, 1.0)
        # support order (1, 0): qubit 1 is the high bit of the local index
        assert spec.quantum_numbers[:, 0].tolist() == [0.0, 2.0, 1.0, 3.0]

    def test_min_gap_and_separation(self):
        assert min_gap([0.0, 0.5, 0.1]) == pytest.approx(0.1)
        spec = CommutingEnsembleSpec.z_fields(2, beta=3)
        seed, h, ph = separated_phases(spec, 2**-6, seed=1)
        assert min_gap(ph) > 2**-6
        assert ph.min() == 0.25 and ph.max() == 0.75

    def test_gap_statistics_shape(self):
        g = gap_statistics(3, range(20))
        assert len(g.min_gaps) == 20 and g.threshold == 2.0**-3
        assert 0 <= g.below <= 20


def test_normalize_phases():
    assert normalize_phases([2.0, 4.0, 3.0]).tolist() == [0.25, 0.75, 0.5]
    assert normalize_phases([1.0, 1.0]).tolist() == [0.5, 0.5]


class TestQpe:
    @pytest.mark.parametrize("theta", [0.0, 0.3, 0.25, 0.7123, 1 / 3])
    def test_fft_matches_formula(self, theta):
        assert np.max(np.abs(qpe_amplitudes(theta, 7) - qpe_amplitudes_formula(theta, 7))) < 1e-12

    def test_exact_phase_is_a_point_mass(self):
        p = np.abs(qpe_amplitudes(5 / 16, 4)) ** 2
        assert p[5] == pytest.approx(1) and p.sum() == pytest.approx(1)

    @pytest.mark.parametrize("theta", [0.1234, 0.5 + 1e-3, 0.87654])
    def test_tail_mass(self, theta):
        # mass farther than e grid points sits below 1 / (2 (e - 1))
        m = 10
        M = 2**m
        p = np.abs(qpe_amplitudes(theta, m)) ** 2
        dist = np.abs(((np.arange(M) - theta * M + M / 2) % M) - M / 2)
        for e in (2, 8, 32):
            assert p[dist > e].sum() <= 1 / (2 * (e - 1))


def test_prf_bit_is_deterministic_and_balanced():
    bits = [prf_bit(b"key", x) for x in range(2000)]
    assert bits == [prf_bit(b"key", x) for x in range(2000)]
    assert abs(np.mean(bits) - 0.5) < 4 * 0.5 / np.sqrt(2000)


class TestChannel:
    regs = QpeRegisters(1, 2, 3, 2)
    phases = np.array([0.3, 0.65])

    def test_registers(self):
        assert self.regs.m == 7 and self.regs.fine == 5
        assert not self.regs.regime_ok(1.0)
        assert QpeRegisters(2, 8, 6, 6).regime_ok(3.0)
        assert not QpeRegisters(2, 8, 6, 6).regime_ok(4.5)
        assert not QpeRegisters(2, 8, 6, 4).regime_ok(3.0)
        with pytest.raises(ValueError):
            QpeRegisters(2, 10, 10, 10)

    def test_dense_matches_frame_route(self):
        ch = build_channel(self.phases, self.regs, b"k", 11)
        assert np.max(np.abs(dense_channel(ch) - ch.matrix())) < 1e-12

    def test_dense_matches_with_rotated_eigenbasis(self):
        v = haar_unitary(2, np.random.default_rng(3))
        ch = random_function_channel(self.phases, self.regs, np.random.default_rng(0), eigvecs=v)
        assert np.max(np.abs(dense_channel(ch) - ch.matrix())) < 1e-12

    def test_unitary(self):
        u = build_channel(self.phases, self.regs, b"k", 5).matrix()
        assert np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=1e-12)

    def test_zero_function_is_identity(self):
        ch = PhaseChannel(self.phases, self.regs, np.zeros(4), 7)
        assert np.allclose(ch.matrix(), np.eye(2 * ch.M), atol=1e-12)

    def test_preserves_eigenspaces(self):
        v = haar_unitary(2, np.random.default_rng(1))
        ch = random_function_channel(self.phases, self.regs, np.random.default_rng(2), eigvecs=v)
        u = ch.matrix()
        p0 = np.kron(np.outer(v[:, 0], v[:, 0].conj()), np.eye(ch.M))
        assert np.allclose(u @ p0, p0 @ u, atol=1e-12)

    def test_return_amplitude_matches_matrix(self):
        ch = build_channel(self.phases, self.regs, b"k", 9)
        u = ch.matrix()
        for k in range(2):
            assert u[k * ch.M, k * ch.M] == pytest.approx(ch.return_amplitude(k), abs=1e-12)

    def test_word_amplitudes_match_matrix_powers(self):
        ch = random_function_channel(self.phases, self.regs, np.random.default_rng(4))
        u = ch.matrix()
        for t in (1, 2, 3):
            amp = ch.word_amplitudes(t)
            for k in range(2):
                # with a diagonal system the word k, k, ..., k is the t-th power
                assert amp[(k,) * t] == pytest.approx(np.linalg.matrix_power(u, t)[k * ch.M, k * ch.M], abs=1e-12)

    def test_mixed_words_via_frames(self):
        ch = random_function_channel(self.phases, self.regs, np.random.default_rng(5))
        amp = ch.word_amplitudes(3)
        u0 = np.full(ch.M, 1 / np.sqrt(ch.M), dtype=complex)
        z = ch.apply_frame(1, ch.apply_frame(0, ch.apply_frame(1, u0)))
        assert amp[1, 0, 1] == pytest.approx(np.vdot(u0, z), abs=1e-12)

    def test_offset_validation(self):
        with pytest.raises(ValueError):
            PhaseChannel(self.phases, self.regs, np.zeros(4), 2**self.regs.fine)
        with pytest.raises(ValueError):
            PhaseChannel(np.array([1.0]), self.regs, np.zeros(4), 0)

    def test_ideal_bins(self):
        ch = PhaseChannel(np.array([0.3, 0.65]), self.regs, np.arange(4.0), 0)
        assert [ch.ideal_bin(0), ch.ideal_bin(1)] == [1, 2]
        assert ch.bins_injective()


class TestBounds:
    def test_values(self):
        regs = QpeRegisters(2, 8, 6, 6)
        assert offset_bound(regs) == 2.0**-4
        b = return_fidelity_bounds(regs)
        assert b["loose"] == 1 - 2.0**2 and b["derived"] == 1 - 2.0 and b["stated"] == 1 - 2.0**-7
        assert secure_query_bound(regs, 3) == pytest.approx(3 * 2.0**-6 + 2.0**-1)
        assert secure_query_bound(regs, 3, alpha=1) == pytest.approx(3 * (2.0**-6 + 0.25) + 0.5)


class TestBoundary:
    regs = QpeRegisters(1, 3, 4, 3)

    def test_weights_match_direct_sum(self):
        theta = 0.4137
        w = boundary_weights(theta, self.regs)
        p = np.abs(qpe_amplitudes(theta, self.regs.m)) ** 2
        M, B, W = 2**self.regs.m, 2**self.regs.fine, 2**self.regs.m3
        for S in (0, 5, 77, B - 1):
            r = (np.arange(M) + S) % B
            near = (r < W) | (r > B - W)
            assert w[S] == pytest.approx(np.sqrt(p[near].sum()), abs=1e-12)

    def test_hit_rate_within_bound(self):
        stats = offset_boundary_test([0.3, 0.61], self.regs, 4000, seed=0)
        assert stats.ok
        assert stats.threshold == 2.0**-1.5

    def test_threshold_scales_with_fine_register(self):
        a = offset_boundary_test([0.3], QpeRegisters(1, 3, 4, 3), 2000, 0)
        b = offset_boundary_test([0.3], QpeRegisters(1, 3, 6, 3), 2000, 0)
        assert b.bound == a.bound / 4
        assert b.hit_rates[0] <= a.hit_rates[0]


class TestDistinguish:
    def test_same_sampler_within_noise(self):
        eig = Eigensystem.from_diagonal(np.arange(8.0))
        A = [haar_unitary(16, np.random.default_rng(i)) for i in range(2)]
        r = adaptive_distinguish(EcHaarSampler(eig), EcHaarSampler(eig), 1, A, 400)
        assert r.trace_distance <= 3 * r.noise_floor

    def test_ec_against_global_haar(self):
        eig = Eigensystem.from_diagonal(np.arange(8.0))
        A = [haar_unitary(16, np.random.default_rng(i)) for i in range(2)]
        r = adaptive_distinguish(EcHaarSampler(eig), DenseSampler(8), 1, A, 400)
        assert r.trace_distance >= 0.5

    def test_interleaver_count(self):
        eig = Eigensystem.from_diagonal(np.arange(2.0))
        with pytest.raises(ValueError):
            adaptive_distinguish(EcHaarSampler(eig), EcHaarSampler(eig), 2, [np.eye(2)], 4)

    def test_tiny_channel_against_random_phases(self):
        regs = QpeRegisters(1, 1, 5, 2)
        phases = [0.25, 0.75]
        A = [haar_unitary(2 * 2**regs.m, np.random.default_rng(10 + i)) for i in range(2)]
        r = adaptive_distinguish(
            RandomFunctionChannelSampler(phases, regs), ExtendedSampler(RandomPhases(2), 2**regs.m), 1, A, 200
        )
        assert r.trace_distance <= secure_query_bound(regs, 1) + 3 * r.noise_floor


class TestSecureQuery:
    def test_estimate_small_registers(self):
        regs = QpeRegisters(1, 4, 6, 4)
        rep = secure_query_estimate([0.25, 0.75], regs, t=2, samples=6, seed=0)
        assert rep.injective
        assert 0 <= rep.lower <= rep.upper
        assert rep.mean_leak < 0.2

    def test_two_samples_give_finite_spread(self):
        regs = QpeRegisters(1, 2, 3, 2)
        rep = secure_query_estimate([0.3, 0.65], regs, t=1, samples=2, seed=1)
        assert math.isfinite(rep.sigma) and rep.samples == 2

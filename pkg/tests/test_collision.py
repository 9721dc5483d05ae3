import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from lepf.acceptance import chi_square_against
from lepf.collision import (
    DEState,
    PmfTable,
    ZLawSpec,
    beta_binomial_pmf,
    de_initial,
    de_step,
    de_transitions,
    rwz_pmf,
    sample_ij_chain,
    z_mgf,
    z_pmf,
    z_pmf_ibpf,
    z_pmf_lepf_dp,
    z_pmf_lepf_mixture,
)
from lepf.interaction import InteractionScheme

lepf_params = st.integers(2, 12).flatmap(lambda M: st.tuples(st.just(M), st.integers(1, M - 1)))


def rwz_enumerated(n):
    """Count returns to zero over all 2^n walks."""
    counts = np.zeros(n // 2 + 1)
    for bits in range(2**n):
        pos = ret = 0
        for k in range(n):
            pos += 1 if (bits >> k) & 1 else -1
            ret += pos == 0
        counts[ret] += 1
    return counts / 2**n


class TestPmfTable:
    def test_rejects_unnormalised(self):
        with pytest.raises(ValueError):
            PmfTable(np.array([0.5, 0.4]))

    def test_tv_and_offset(self):
        a = PmfTable(np.array([0.5, 0.5]), offset=1)
        b = PmfTable(np.array([1.0]), offset=0)
        assert a.tv_distance(b) == pytest.approx(1.0)
        assert a.mean() == pytest.approx(1.5)


class TestIbpf:
    def test_examples(self):
        np.testing.assert_allclose(z_pmf_ibpf(0, 3).probs, [1.0])
        np.testing.assert_allclose(z_pmf_ibpf(1, 3).probs, [2 / 3, 1 / 3])
        np.testing.assert_allclose(z_pmf_ibpf(2, 2).probs, [0.25, 0.5, 0.25])

    @given(st.integers(0, 200), st.integers(1, 30), st.floats(-2, 2))
    def test_mgf_closed_form(self, n, M, t):
        spec = ZLawSpec(InteractionScheme.ibpf(M), n)
        assert z_mgf(spec, t) == pytest.approx(z_pmf_ibpf(n, M).log_mgf(t), rel=1e-10, abs=1e-12)


class TestRwz:
    def test_examples(self):
        np.testing.assert_allclose(rwz_pmf(0).probs, [1.0])
        np.testing.assert_allclose(rwz_pmf(1).probs, [1.0])
        np.testing.assert_allclose(rwz_pmf(2).probs, [0.5, 0.5])

    @pytest.mark.parametrize("n", range(0, 15))
    def test_matches_enumeration(self, n):
        np.testing.assert_allclose(rwz_pmf(n).probs, rwz_enumerated(n), atol=1e-14)

    def test_large_n_normalised(self):
        assert rwz_pmf(5000).probs.sum() == pytest.approx(1.0, abs=1e-10)


class TestBetaBinomial:
    def test_point_mass_convention(self):
        np.testing.assert_array_equal(beta_binomial_pmf(4, 1, 0).probs, [0, 0, 0, 0, 1])

    def test_uniform(self):
        np.testing.assert_allclose(beta_binomial_pmf(6, 1, 1).probs, np.full(7, 1 / 7), atol=1e-14)

    def test_empty(self):
        np.testing.assert_array_equal(beta_binomial_pmf(0, 2.5, 3.0).probs, [1.0])

    @pytest.mark.parametrize("a, b", [(2, 0), (0, 1), (1, -1)])
    def test_rejects(self, a, b):
        with pytest.raises(ValueError):
            beta_binomial_pmf(3, a, b)

    def test_polya_urn(self):
        # urn with a white and b black balls, each draw adds a ball of the drawn colour
        r = np.random.default_rng(3)
        n, a, b, reps = 6, 2, 3, 200_000
        white = np.full(reps, float(a))
        black = np.full(reps, float(b))
        count = np.zeros(reps, dtype=int)
        for _ in range(n):
            w = r.random(reps) < white / (white + black)
            count += w
            white += w
            black += ~w
        assert chi_square_against(beta_binomial_pmf(n, a, b).probs, count) > 1e-3


class TestLepfLaw:
    def test_one_step(self):
        # one backward step from u = v: windows coincide, collision with probability 1/M
        np.testing.assert_allclose(z_pmf_lepf_mixture(1, 3, 1).probs, [2 / 3, 1 / 3], atol=1e-15)
        np.testing.assert_allclose(z_pmf_lepf_dp(1, 3, 1).probs, [2 / 3, 1 / 3], atol=1e-15)

    def test_empty(self):
        assert z_pmf_lepf_dp(0, 4, 1).probs.tolist() == [1.0]
        assert z_pmf_lepf_mixture(0, 4, 1).probs.tolist() == [1.0]

    @settings(max_examples=40, deadline=None)
    @given(lepf_params, st.integers(0, 30))
    def test_dp_equals_mixture(self, params, n):
        M, th = params
        assert z_pmf_lepf_dp(n, M, th).tv_distance(z_pmf_lepf_mixture(n, M, th)) < 1e-10

    @settings(max_examples=40, deadline=None)
    @given(lepf_params, st.integers(0, 20))
    def test_all_collisions(self, params, n):
        M, th = params
        assert z_pmf_lepf_dp(n, M, th).probs[n] == pytest.approx(float(M) ** -n, rel=1e-12)

    def test_monte_carlo_agrees(self):
        scheme = InteractionScheme.lepf(4, 2)
        z = sample_ij_chain(scheme, 12, (5, 5), np.random.default_rng(8), 200_000)
        assert chi_square_against(z_pmf_lepf_dp(12, 4, 2).probs, z) > 1e-3

    @pytest.mark.parametrize("u", [0, 1, 2, 7 * 3 + 2])
    def test_start_point_invariance(self, u):
        scheme = InteractionScheme.lepf(3, 1)
        z = sample_ij_chain(scheme, 10, (u, u), np.random.default_rng(100 + u), 100_000)
        assert chi_square_against(z_pmf_lepf_dp(10, 3, 1).probs, z) > 1e-3

    def test_dispatch(self):
        spec = ZLawSpec(InteractionScheme.lepf(3, 1), 5)
        assert z_pmf(spec, "dp").tv_distance(z_pmf(spec, "mixture")) < 1e-12
        with pytest.raises(ValueError):
            z_pmf(spec, "nope")


class TestMgf:
    @given(lepf_params, st.integers(0, 100))
    @settings(max_examples=30, deadline=None)
    def test_zero_argument(self, params, n):
        assert z_mgf(ZLawSpec(InteractionScheme.lepf(*params), n), 0.0) == 0.0

    @settings(max_examples=40, deadline=None)
    @given(lepf_params, st.integers(0, 100), st.floats(-1.5, 1.5))
    def test_matches_pmf_sum(self, params, n, t):
        M, th = params
        spec = ZLawSpec(InteractionScheme.lepf(M, th), n)
        assert z_mgf(spec, t) == pytest.approx(z_pmf_lepf_dp(n, M, th).log_mgf(t), rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("d0", [-3, -1, 1, 2, 5])
    def test_offset_start(self, d0):
        spec = ZLawSpec(InteractionScheme.lepf(3, 1), 12)
        assert z_mgf(spec, 0.7, d0) == pytest.approx(z_pmf_lepf_dp(12, 3, 1, d0).log_mgf(0.7), rel=1e-12, abs=1e-14)

    def test_crude_lower_bound(self):
        for n in (1, 10, 100, 1000):
            spec = ZLawSpec(InteractionScheme.lepf(5, 2), n)
            assert z_mgf(spec, 0.4) >= n * 0.4 - n * math.log(5)

    def test_monotone_in_n(self):
        spec = lambda n: ZLawSpec(InteractionScheme.lepf(20, 1), n)
        vals = [z_mgf(spec(n), 0.3) for n in range(0, 300, 10)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestChain:
    def test_far_start_never_collides(self):
        scheme = InteractionScheme.lepf(3, 2)
        n = 4
        v = 2 * n * scheme.band + 1
        z = sample_ij_chain(scheme, n, (1, 1 + v), np.random.default_rng(0), 10_000)
        assert z.max() == 0

    def test_single_step_frequency(self):
        scheme = InteractionScheme.lepf(5, 2)
        z = sample_ij_chain(scheme, 1, (3, 3), np.random.default_rng(1), 1_000_000)
        se = math.sqrt(0.2 * 0.8 / 1e6)
        assert abs(z.mean() - 0.2) < 3 * se

    def test_flags(self):
        counts, flags = sample_ij_chain(InteractionScheme.ibpf(2), 5, (1, 1), np.random.default_rng(2), 100, return_flags=True)
        np.testing.assert_array_equal(counts, flags.sum(axis=1))


class TestDE:
    def test_initial(self):
        assert de_initial(4, 4, 3) == DEState(0, 1)
        assert de_initial(1, 1 + 3, 3) == DEState(-1, 0)

    def test_transition_probabilities(self):
        s = InteractionScheme.lepf(4, 1)
        moves = dict(de_transitions(s, DEState(0, 1)))
        assert moves[DEState(-1, 0)] == pytest.approx(s.q_step)
        assert moves[DEState(1, 0)] == pytest.approx(s.q_step)
        assert moves[DEState(0, 0)] + moves[DEState(0, 1)] == pytest.approx(s.q_stay)
        assert moves[DEState(0, 1)] == pytest.approx(1 / 4)

    def test_ibpf_frozen(self):
        s = InteractionScheme.ibpf(3)
        assert de_transitions(s, DEState(2, 0)) == [(DEState(2, 0), 1.0)]

    def test_invalid_state(self):
        with pytest.raises(ValueError):
            DEState(1, 1)

    @pytest.mark.parametrize("u, v", [(1, 2), (1, 4), (2, 9), (0, 3)])
    def test_general_start_matches_chain(self, u, v):
        # the reduced chain from an arbitrary start must reproduce the index chain law
        scheme = InteractionScheme.lepf(3, 1)
        n, reps = 6, 100_000
        z_index = sample_ij_chain(scheme, n, (u, v), np.random.default_rng(5), reps)
        r = np.random.default_rng(6)
        z_red = np.zeros(reps, dtype=int)
        for k in range(reps):
            st_ = de_initial(u, v, 3)
            for _ in range(n):
                st_ = de_step(scheme, st_, r)
                z_red[k] += st_.e
        exact = z_pmf_lepf_dp(n, 3, 1, de_initial(u, v, 3).d).probs
        assert chi_square_against(exact, z_index) > 1e-3
        assert chi_square_against(exact, z_red) > 1e-3

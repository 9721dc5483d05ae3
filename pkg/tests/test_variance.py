import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lepf.hmm import FiniteHmm, binary_toy, c_constant, exact_prediction_filter, gamma_normalizer
from lepf.interaction import InteractionScheme, build_alpha
from lepf.variance import (
    T0,
    centered_phi,
    clt_constant,
    collide,
    pattern_value,
    ratio_Rn,
    scaling_M,
    scaling_study,
    second_moment_finite_N,
    sigma2_ibpf_closed,
    sigma2_simple_model,
    sigma2_pattern_sum,
    sigma2_path_enumeration,
    theta_sweep,
)

PHI = np.array([1.0, -2.0])


def prob_vectors(k):
    return st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k).map(lambda v: np.array(v) / sum(v))


@st.composite
def small_models(draw):
    S = draw(st.integers(2, 3))
    pi0 = draw(prob_vectors(S))
    F = np.array([draw(prob_vectors(S)) for _ in range(S)])
    g = np.array(draw(st.lists(st.floats(0.1, 3.0), min_size=S, max_size=S)))
    return FiniteHmm(pi0, F, g)


class TestClosedForms:
    def test_ibpf_closed(self):
        assert sigma2_ibpf_closed(2.0, 3, 4, phi_var=0.5).sigma2 == pytest.approx(0.5 * 1.5**3)

    @pytest.mark.parametrize("n", [0, 1, 5, 40])
    def test_simple_model_ibpf_agrees(self, n):
        a = sigma2_simple_model(0.7, n, InteractionScheme.ibpf(3), 2.0).sigma2
        assert a == pytest.approx(sigma2_ibpf_closed(0.7, n, 3, 2.0).sigma2, rel=1e-12)

    def test_zero_c(self):
        assert sigma2_simple_model(0.0, 50, InteractionScheme.lepf(3, 1)).sigma2 == pytest.approx(1.0)

    @pytest.mark.parametrize("args", [(-0.1, 2), (0.5, -1)])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            sigma2_simple_model(*args, InteractionScheme.ibpf(2))

    def test_lepf_below_ibpf_for_long_horizons(self):
        le = sigma2_simple_model(0.5, 200, InteractionScheme.lepf(4, 2)).sigma2
        ib = sigma2_ibpf_closed(0.5, 200, 4).sigma2
        assert le < ib


class TestTensor:
    def test_collide(self):
        np.testing.assert_array_equal(collide(np.array([[1.0, 2.0], [3.0, 4.0]])), [[1, 1], [4, 4]])

    def test_zero_horizon(self, two_state):
        f = centered_phi(two_state, PHI, 0)
        var = two_state.pi0 @ f**2
        assert pattern_value(two_state, f, (1,)) == pytest.approx(var)
        assert pattern_value(two_state, f, (0,)) == pytest.approx(0.0, abs=1e-15)

    def test_centering(self, two_state):
        f = centered_phi(two_state, PHI, 3)
        assert exact_prediction_filter(two_state, 3)[3] @ f == pytest.approx(0.0, abs=1e-14)


class TestPatternSum:
    @pytest.mark.parametrize("scheme", [InteractionScheme.ibpf(2), InteractionScheme.lepf(2, 1), InteractionScheme.lepf(3, 1)], ids=lambda s: s.label())
    def test_zero_horizon_is_variance(self, two_state, scheme):
        f = centered_phi(two_state, PHI, 0)
        assert sigma2_pattern_sum(two_state, PHI, 0, scheme).sigma2 == pytest.approx(two_state.pi0 @ f**2)

    @pytest.mark.parametrize(
        "scheme, n",
        [(InteractionScheme.ibpf(2), n) for n in (1, 2, 3)]
        + [(InteractionScheme.lepf(2, 1), n) for n in (1, 2, 3)]
        + [(InteractionScheme.lepf(3, 2), n) for n in (1, 2)],
    )
    def test_matches_path_enumeration(self, two_state, scheme, n):
        a = sigma2_pattern_sum(two_state, PHI, n, scheme).sigma2
        b = sigma2_path_enumeration(two_state, PHI, n, scheme).sigma2
        assert a == pytest.approx(b, rel=1e-10)

    @pytest.mark.parametrize("extra", [1, 3])
    def test_wider_start_radius_changes_nothing(self, two_state, extra):
        scheme = InteractionScheme.lepf(2, 1)
        base = sigma2_path_enumeration(two_state, PHI, 2, scheme).sigma2
        wide = sigma2_path_enumeration(two_state, PHI, 2, scheme, radius=2 * 2 * scheme.band + extra).sigma2
        assert wide == pytest.approx(base, rel=1e-13)

    @pytest.mark.parametrize("n", [1, 4, 9])
    def test_iid_reduces_to_simple_model(self, n):
        model = binary_toy(0.3, 0.8)
        phi = np.array([0.0, 1.0])
        c = c_constant(model)
        var = 0.3 * 0.7
        for scheme in (InteractionScheme.ibpf(3), InteractionScheme.lepf(3, 1)):
            a = sigma2_pattern_sum(model, phi, n, scheme).sigma2
            assert a == pytest.approx(sigma2_simple_model(c, n, scheme, var).sigma2, rel=1e-10)

    def test_budget_guard(self, two_state):
        with pytest.raises(ValueError):
            sigma2_pattern_sum(two_state, PHI, 15, InteractionScheme.lepf(2, 1))

    @settings(max_examples=15, deadline=None)
    @given(small_models(), st.integers(0, 4), st.sampled_from([InteractionScheme.ibpf(2), InteractionScheme.lepf(2, 1), InteractionScheme.lepf(3, 1)]))
    def test_non_negative(self, model, n, scheme):
        phi = np.arange(model.n_states, dtype=float)
        assert sigma2_pattern_sum(model, phi, n, scheme).sigma2 >= -1e-12


class TestFiniteN:
    @pytest.mark.parametrize("m", [2, 4])
    def test_exact_once_groups_cover_horizon(self, two_state, m):
        scheme = InteractionScheme.lepf(2, 1)
        _, scaled = second_moment_finite_N(two_state, PHI, 2, build_alpha(scheme, m))
        assert scaled == pytest.approx(sigma2_pattern_sum(two_state, PHI, 2, scheme).sigma2, rel=1e-12)

    def test_sequence_decreases_to_limit(self, two_state):
        scheme = InteractionScheme.lepf(2, 1)
        limit = sigma2_pattern_sum(two_state, PHI, 4, scheme).sigma2
        vals = [second_moment_finite_N(two_state, PHI, 4, build_alpha(scheme, m))[1] for m in (1, 2, 3, 4)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(limit, rel=1e-12)

    def test_uncentered_constant(self, two_state):
        moment, _ = second_moment_finite_N(two_state, np.ones(2), 2, build_alpha(InteractionScheme.ibpf(2), 2), centered=False)
        # E[gamma^N(1)^2] >= gamma(1)^2
        assert moment >= gamma_normalizer(two_state, 2) ** 2

    def test_budget(self, two_state):
        with pytest.raises(ValueError):
            second_moment_finite_N(two_state, PHI, 6, build_alpha(InteractionScheme.lepf(3, 1), 4), max_paths=1000)


class TestMgfStudies:
    def test_ratio_is_one_at_zero(self):
        assert ratio_Rn(0, 4, 1, T0) == 1.0

    @pytest.mark.parametrize("M", [3, 6, 9])
    def test_theta_sweep_symmetric(self, M):
        r = theta_sweep(M, 50, T0)
        np.testing.assert_allclose(r, r[::-1], rtol=1e-12)

    def test_scaling_M(self):
        assert scaling_M(1, 0.5) == 2
        assert scaling_M(100, 0.5) == 10

    def test_clamp_warns(self):
        with pytest.warns(UserWarning):
            out = scaling_study([0.5], [4], theta=3)
        assert out[0.5][0]["theta"] == 1

    def test_ibpf_scaling_limit(self):
        rows = scaling_study([1.0], [1000], scheme="ibpf")[1.0]
        assert rows[0]["mgf"] == pytest.approx(math.exp(math.expm1(T0)), rel=1e-3)

    @pytest.mark.parametrize("p, factor", [(2, 1.0), (1, math.sqrt(2 / math.pi)), (4, 3 ** 0.25)])
    def test_clt_constant(self, p, factor):
        assert clt_constant(p, 2.0, 4) == pytest.approx(factor, rel=1e-12)

    def test_clt_rejects(self):
        with pytest.raises(ValueError):
            clt_constant(0.5, 1.0, 2)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lepf.interaction import (
    InteractionScheme,
    alpha_from_dense,
    alpha_infinity_entry,
    alpha_infinity_row,
    build_alpha,
    cmod,
    group_windows,
    delta_metric,
    load_alpha_csv,
    verify_assumptions,
)

# 3 x (1/M)-weighted rows; columns 1-based in the comments
LEPF_3_1_3 = np.array(
    [
        [0, 1, 1, 1, 0, 0, 0, 0, 0],  # cols 2,3,4
        [0, 1, 1, 1, 0, 0, 0, 0, 0],
        [0, 1, 1, 1, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 1, 1, 0, 0],  # cols 5,6,7
        [0, 0, 0, 0, 1, 1, 1, 0, 0],
        [0, 0, 0, 0, 1, 1, 1, 0, 0],
        [1, 0, 0, 0, 0, 0, 0, 1, 1],  # cols 8,9,1
        [1, 0, 0, 0, 0, 0, 0, 1, 1],
        [1, 0, 0, 0, 0, 0, 0, 1, 1],
    ]
) / 3.0


def schemes(max_M=5):
    return st.integers(1, max_M).flatmap(
        lambda M: st.one_of(
            st.just(InteractionScheme.ibpf(M)),
            *([st.integers(1, M - 1).map(lambda th: InteractionScheme.lepf(M, th))] if M >= 2 else []),
        )
    )


def indicator_oracle(scheme, m):
    """Dense matrix straight from the floor-indicator definition, 1-based loops."""
    M, th = scheme.M, scheme.theta
    N = M * m
    A = np.zeros((N, N))
    for i in range(1, N + 1):
        for j in range(1, N + 1):
            if (i - 1) // M == (cmod(j - th, N) - 1) // M:
                A[i - 1, j - 1] = 1.0 / M
    return A


class TestScheme:
    def test_band(self):
        assert InteractionScheme.lepf(3, 1).band == 3
        assert InteractionScheme.ibpf(3).band == 2

    @pytest.mark.parametrize("M, th", [(1, 0), (3, 0), (3, 3), (2, -1)])
    def test_rejects_bad_lepf(self, M, th):
        with pytest.raises(ValueError):
            InteractionScheme.lepf(M, th)

    def test_collision_constants(self):
        s = InteractionScheme.lepf(5, 2)
        assert s.q_stay + 2 * s.q_step == pytest.approx(1.0)
        assert s.q_stay * s.p_coll == pytest.approx(1 / 5)
        assert 0 < s.p_coll <= 1


class TestCmod:
    @pytest.mark.parametrize("y, x, want", [(1, 3, 1), (3, 3, 3), (4, 3, 1), (0, 3, 3), (-1, 3, 2), (9, 9, 9), (10, 9, 1)])
    def test_values(self, y, x, want):
        assert cmod(y, x) == want

    @given(st.integers(-1000, 1000), st.integers(1, 50))
    def test_definition(self, y, x):
        r = cmod(y, x)
        assert 1 <= r <= x and (y - r) % x == 0


class TestDelta:
    def test_examples(self):
        assert delta_metric(4, 4, 8) == 0
        assert delta_metric(1, 8, 8) == 1
        assert delta_metric(2, 5, 8) == 3

    @given(st.integers(1, 40), st.data())
    def test_metric_axioms(self, N, data):
        i, j, k = (data.draw(st.integers(1, N)) for _ in range(3))
        d = delta_metric(i, j, N)
        assert 0 <= d <= N // 2
        assert d == delta_metric(j, i, N)
        assert d <= delta_metric(i, k, N) + delta_metric(k, j, N)


class TestBuild:
    def test_lepf_three_groups(self):
        a = build_alpha(InteractionScheme.lepf(3, 1), 3)
        np.testing.assert_array_equal(a.todense(), LEPF_3_1_3)

    def test_block_diagonal(self):
        a = build_alpha(InteractionScheme.ibpf(3), 3)
        expect = np.kron(np.eye(3), np.ones((3, 3)) / 3)
        np.testing.assert_array_equal(a.todense(), expect)

    def test_singleton_groups(self):
        np.testing.assert_array_equal(build_alpha(InteractionScheme.ibpf(1), 2).todense(), np.eye(2))

    def test_entry_is_one_based(self):
        a = build_alpha(InteractionScheme.lepf(3, 1), 3)
        assert a.entry(7, 1) == pytest.approx(1 / 3)
        assert a.entry(1, 1) == 0.0

    @settings(max_examples=60, deadline=None)
    @given(schemes(), st.integers(1, 8))
    def test_matches_indicator_formula(self, scheme, m):
        np.testing.assert_array_equal(build_alpha(scheme, m).todense(), indicator_oracle(scheme, m))

    @settings(max_examples=60, deadline=None)
    @given(schemes(), st.integers(1, 8))
    def test_rows_and_columns_have_M_entries(self, scheme, m):
        A = build_alpha(scheme, m).todense()
        assert np.all((A > 0).sum(axis=1) == scheme.M)
        assert np.all((A > 0).sum(axis=0) == scheme.M)
        assert np.all(A[A > 0] == 1.0 / scheme.M)

    def test_group_donors(self):
        d = build_alpha(InteractionScheme.lepf(3, 1), 3).group_donors()
        np.testing.assert_array_equal(np.sort(d, axis=1), [[1, 2, 3], [4, 5, 6], [0, 7, 8]])

    def test_non_group_matrix_has_no_donors(self):
        A = LEPF_3_1_3.copy()
        A[0] = [1, 0, 0, 0, 0, 0, 0, 0, 0]
        assert alpha_from_dense(A, 3).group_donors() is None


class TestLimit:
    def test_windows(self):
        assert list(alpha_infinity_row(InteractionScheme.lepf(3, 1), 1).indices) == [2, 3, 4]
        assert list(alpha_infinity_row(InteractionScheme.ibpf(3), 1).indices) == [1, 2, 3]

    @given(schemes(), st.integers(-500, 500), st.integers(-20, 20))
    def test_shift_covariance(self, scheme, i, k):
        a = alpha_infinity_row(scheme, i)
        b = alpha_infinity_row(scheme, i + k * scheme.M)
        assert b.start - a.start == k * scheme.M and a.size == scheme.M

    @given(schemes(), st.integers(-500, 500))
    def test_band(self, scheme, i):
        idx = alpha_infinity_row(scheme, i).indices
        assert np.all(np.abs(idx - i) <= scheme.band)

    @settings(max_examples=40, deadline=None)
    @given(schemes(), st.integers(1, 8))
    def test_interior_rows_match_finite(self, scheme, m):
        N = scheme.M * m
        b = scheme.band
        if N < 2 * b + 1:
            return
        A = build_alpha(scheme, m).todense()
        cols = np.arange(1, N + 1)
        for i in range(b + 1, N - b + 1):
            np.testing.assert_array_equal(alpha_infinity_entry(scheme, i, cols), A[i - 1])


class TestVerify:
    @pytest.mark.parametrize("scheme, m", [(InteractionScheme.lepf(3, 1), 3), (InteractionScheme.ibpf(2), 4)])
    def test_examples_pass(self, scheme, m):
        r = verify_assumptions(build_alpha(scheme, m), scheme)
        assert r.passed
        assert [c.name for c in r.checks] == ["stochastic", "shift", "band", "limit"]

    @pytest.mark.parametrize("M", range(1, 6))
    @pytest.mark.parametrize("m", range(1, 9))
    def test_all_small_cases(self, M, m):
        for scheme in [InteractionScheme.ibpf(M)] + [InteractionScheme.lepf(M, t) for t in range(1, M)]:
            assert verify_assumptions(build_alpha(scheme, m), scheme).passed

    def test_moved_weight_breaks_column_sum(self):
        A = LEPF_3_1_3.copy()
        A[0, 1] -= 1 / 3
        A[0, 0] += 1 / 3
        scheme = InteractionScheme.lepf(3, 1)
        r = verify_assumptions(alpha_from_dense(A, 3, scheme), scheme)
        assert not r["stochastic"].passed
        assert r["stochastic"].witness == (None, 1)
        assert not r["shift"].passed and len(r["shift"].witness) == 3

    def test_small_ring_is_vacuous(self):
        scheme = InteractionScheme.lepf(3, 1)
        r = verify_assumptions(build_alpha(scheme, 2), scheme)
        assert r.passed and "vacuous" in r["band"].note

    def test_csv_roundtrip(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("\n".join(",".join(repr(float(v)) for v in row) for row in LEPF_3_1_3))
        scheme = InteractionScheme.lepf(3, 1)
        assert verify_assumptions(load_alpha_csv(p, 3), scheme).passed


class TestGroupWindows:
    @settings(max_examples=40, deadline=None)
    @given(schemes(), st.integers(1, 8))
    def test_matches_matrix_rows(self, scheme, m):
        np.testing.assert_array_equal(group_windows(scheme, m), build_alpha(scheme, m).group_donors())

    def test_large_single_group(self):
        w = group_windows(InteractionScheme.ibpf(200_000), 1)
        assert w.shape == (1, 200_000) and w[0, -1] == 199_999

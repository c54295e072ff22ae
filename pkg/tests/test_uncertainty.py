from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from constellation_match.errors import DegenerateInnovationError, ValidationError
from constellation_match.uncertainty import (
    LandmarkBelief,
    UncertaintySample,
    kalman_init,
    kalman_update,
    ranking_loss,
    scalar_to_variance,
)


def dense_kalman(mean, cov, y, R):
    """Textbook matrix-form update, used as the reference for the diagonal path."""
    S = cov + R
    K = np.linalg.solve(S.T, cov.T).T  # cov @ inv(S)
    mean2 = mean + K @ (y - mean)
    cov2 = cov - K @ S @ K.T
    return mean2, cov2


class TestRankingLoss:
    def test_higher_loss_first(self):
        assert ranking_loss(UncertaintySample(0.5, 0.3, 2.0, 1.0, 0.1)) == pytest.approx(0.3)

    def test_hinge_clamps(self):
        assert ranking_loss(UncertaintySample(0.5, 0.3, 1.0, 2.0, 0.1)) == 0.0

    def test_tie_takes_negative_branch(self):
        assert ranking_loss(UncertaintySample(0.2, 0.2, 1.0, 1.0, 0.1)) == 0.0

    def test_flip_sign(self):
        s = UncertaintySample(0.5, 0.3, 1.0, 2.0, 0.1)
        assert ranking_loss(s, flip_sign=True) == pytest.approx(0.3)

    def test_margin_must_be_positive(self):
        with pytest.raises(ValidationError):
            UncertaintySample(0.1, 0.2, 1.0, 2.0, 0.0)

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            UncertaintySample(0.1, 0.2, float("nan"), 2.0)

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 2))
    def test_non_negative(self, u1, u2, l1, l2, m):
        s = UncertaintySample(u1, u2, l1, l2, m)
        loss = ranking_loss(s)
        assert loss >= 0.0
        ind = 1.0 if l1 > l2 else -1.0
        if ind * (u1 - u2 + m) <= 0:
            assert loss == 0.0


class TestKalmanInit:
    def test_basic(self):
        b = kalman_init([1.0, 2.0], [0.5, 0.5])
        assert b.mean.tolist() == [1.0, 2.0] and b.var.tolist() == [0.5, 0.5] and b.n_updates == 1

    def test_dim_mismatch(self):
        with pytest.raises(ValidationError):
            kalman_init([1.0, 2.0], [0.5])

    def test_zero_variance(self):
        with pytest.raises(ValidationError):
            kalman_init([1.0, 2.0], [0.5, 0.0])


class TestKalmanUpdate:
    def test_equal_weight(self):
        b = kalman_update(kalman_init([0.0], [1.0]), [2.0], [1.0])
        assert b.mean[0] == 1.0 and b.var[0] == 0.5 and b.n_updates == 2

    def test_exact_measurement(self):
        b = kalman_update(kalman_init([0.0], [1.0]), [5.0], [0.0])
        assert b.mean[0] == 5.0 and b.var[0] == 0.0

    def test_two_unit_measurements(self):
        b = kalman_init([0.0], [1.0])
        b = kalman_update(b, [1.0], [1.0])
        b = kalman_update(b, [1.0], [1.0])
        # batch fusion of a unit prior at 0 with two unit measurements at 1
        assert b.mean[0] == pytest.approx(2 / 3, abs=1e-15)
        assert b.var[0] == pytest.approx(1 / 3, abs=1e-15)

    def test_degenerate_innovation(self):
        b = kalman_update(kalman_init([0.0, 0.0], [1.0, 1.0]), [1.0, 1.0], [0.0, 1.0])
        with pytest.raises(DegenerateInnovationError, match="degenerate innovation"):
            kalman_update(b, [1.0, 1.0], [0.0, 1.0])

    def test_dim_mismatch(self):
        with pytest.raises(ValidationError):
            kalman_update(kalman_init([0.0], [1.0]), [1.0, 2.0], [1.0, 1.0])

    def test_negative_r(self):
        with pytest.raises(ValidationError):
            kalman_update(kalman_init([0.0], [1.0]), [1.0], [-1.0])

    def test_returns_new_value(self):
        b = kalman_init([0.0], [1.0])
        kalman_update(b, [3.0], [1.0])
        assert b.mean[0] == 0.0 and b.n_updates == 1

    def test_scalar_uncertainty_is_rms_std(self):
        b = LandmarkBelief([0.0, 0.0], [0.04, 0.16])
        assert b.scalar_uncertainty() == pytest.approx(np.sqrt(0.1))

    @pytest.mark.parametrize("seed", range(50))
    def test_matches_dense_reference(self, seed):
        rng = np.random.default_rng(seed)
        D = int(rng.integers(1, 9))
        mean, var = rng.normal(size=D), rng.uniform(0.01, 3.0, D)
        b = kalman_init(mean, var)
        m_ref, P_ref = mean.copy(), np.diag(var)
        for _ in range(int(rng.integers(1, 6))):
            y, r = rng.normal(size=D), rng.uniform(0.01, 3.0, D)
            b = kalman_update(b, y, r)
            m_ref, P_ref = dense_kalman(m_ref, P_ref, y, np.diag(r))
        np.testing.assert_allclose(b.mean, m_ref, rtol=0, atol=1e-12)
        np.testing.assert_allclose(b.var, np.diag(P_ref), rtol=0, atol=1e-12)
        assert np.max(np.abs(P_ref - np.diag(np.diag(P_ref)))) <= 1e-12


dims = st.integers(1, 16)


@st.composite
def fusion_case(draw):
    D = draw(dims)
    fl = st.floats(-10, 10, allow_nan=False)
    pos = st.floats(1e-3, 10, allow_nan=False)
    vec = lambda s: st.lists(s, min_size=D, max_size=D).map(np.array)
    return draw(vec(fl)), draw(vec(pos)), draw(vec(fl)), draw(vec(pos)), draw(vec(fl)), draw(vec(pos))


class TestKalmanProperties:
    @settings(max_examples=200, deadline=None)
    @given(fusion_case())
    def test_order_invariance(self, case):
        m, v, ya, ra, yb, rb = case
        b0 = kalman_init(m, v)
        ab = kalman_update(kalman_update(b0, ya, ra), yb, rb)
        ba = kalman_update(kalman_update(b0, yb, rb), ya, ra)
        np.testing.assert_allclose(ab.mean, ba.mean, rtol=0, atol=1e-9)
        np.testing.assert_allclose(ab.var, ba.var, rtol=0, atol=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(fusion_case())
    def test_variance_non_increasing(self, case):
        m, v, ya, ra, _, _ = case
        b = kalman_init(m, v)
        assert np.all(kalman_update(b, ya, ra).var <= b.var)

    @settings(max_examples=200, deadline=None)
    @given(fusion_case())
    def test_information_form(self, case):
        m, v, y, r, _, _ = case
        b = kalman_update(kalman_init(m, v), y, r)
        var_info = 1.0 / (1.0 / v + 1.0 / r)
        np.testing.assert_allclose(b.var, var_info, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(b.mean, var_info * (m / v + y / r), rtol=1e-9, atol=1e-9)


class TestScalarToVariance:
    def test_values(self):
        np.testing.assert_array_equal(scalar_to_variance(0.2, 3), np.full(3, 0.2 * 0.2 + 1e-6))
        assert scalar_to_variance(0.2, 3)[0] == pytest.approx(0.040001, abs=1e-15)
        assert scalar_to_variance(0.0, 2).tolist() == [1e-6, 1e-6]
        assert scalar_to_variance(1.0, 1).tolist() == [1.000001]

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            scalar_to_variance(-0.1, 3)

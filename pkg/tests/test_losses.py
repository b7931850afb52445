import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sasvfuse.dataio import ScoreRecord, ScoreSet
from sasvfuse.losses import (
    ADCF_PRESETS,
    AdcfOperatingPoint,
    LossConfig,
    adcf_preset,
    bce_loss,
    combined_loss,
    soft_adcf_loss,
    targets_from_labels,
)
from sasvfuse.metrics import adcf_at_threshold

DEFAULT_OP = ADCF_PRESETS["adcf-default"]


class TestOperatingPoint:
    def test_default_preset_is_valid(self):
        adcf_preset("adcf-default").validate()

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="nope"):
            adcf_preset("nope")

    def test_priors_must_sum_to_one(self):
        op = AdcfOperatingPoint(1, 1, 1, 0.5, 0.5, 0.5)
        with pytest.raises(ValueError, match="sum"):
            op.validate()

    def test_needs_a_positive_cost(self):
        op = AdcfOperatingPoint(0, 0, 0, 0.8, 0.1, 0.1)
        with pytest.raises(ValueError, match="cost"):
            op.validate()


class TestBce:
    def test_single_trial_at_zero(self):
        loss, grad = bce_loss(np.array([0.0]), np.array([1.0]))
        assert loss == pytest.approx(np.log(2.0), abs=1e-15)
        assert grad[0] == pytest.approx(-0.5)

    def test_saturated_positive(self):
        loss, _ = bce_loss(np.array([30.0]), np.array([1.0]))
        assert loss < 1e-12

    def test_two_trial_batch(self):
        loss, grad = bce_loss(np.array([0.0, 0.0]), np.array([1.0, 0.0]))
        assert loss == pytest.approx(np.log(2.0), abs=1e-15)
        np.testing.assert_allclose(grad, [-0.25, 0.25], atol=1e-15)

    def test_empty_batch(self):
        with pytest.raises(ValueError, match="empty"):
            bce_loss(np.array([]), np.array([]))

    def test_targets_from_labels(self):
        np.testing.assert_array_equal(
            targets_from_labels(["target", "nontarget", "spoof"]), [1.0, 0.0, 0.0]
        )
        with pytest.raises(ValueError):
            targets_from_labels(["bona"])

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        scores = rng.normal(0, 2, 12)
        targets = (rng.random(12) < 0.4).astype(float)
        _, grad = bce_loss(scores, targets)
        h = 1e-6
        for i in range(12):
            up = scores.copy()
            up[i] += h
            down = scores.copy()
            down[i] -= h
            fd = (bce_loss(up, targets)[0] - bce_loss(down, targets)[0]) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-10)


class TestSoftAdcf:
    def cfg(self, alpha=10.0):
        return LossConfig(lambda_bce=0.5, alpha=alpha, operating_point=DEFAULT_OP)

    def test_perfectly_separated_scores(self):
        scores = np.array([20.0, 21.0, -20.0, -21.0, -22.0])
        labels = ["target", "target", "nontarget", "spoof", "spoof"]
        loss, grad, dtau = soft_adcf_loss(scores, labels, 0.0, self.cfg())
        assert loss < 1e-6

    def test_all_scores_at_tau(self):
        op = DEFAULT_OP
        scores = np.zeros(6)
        labels = ["target", "target", "nontarget", "nontarget", "spoof", "spoof"]
        loss, _, _ = soft_adcf_loss(scores, labels, 0.0, self.cfg())
        expected = 0.5 * (
            op.c_miss * op.pi_tar + op.c_fa_non * op.pi_non + op.c_fa_spf * op.pi_spf
        )
        assert loss == pytest.approx(expected, abs=1e-15)

    def test_absent_class_contributes_zero(self):
        scores = np.array([5.0, 6.0])
        loss, _, _ = soft_adcf_loss(scores, ["target", "target"], 0.0, self.cfg())
        assert loss < 1e-6

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        scores = rng.normal(0, 1.5, 9)
        labels = ["target"] * 3 + ["nontarget"] * 3 + ["spoof"] * 3
        tau = 0.2
        cfg = self.cfg()
        _, grad, dtau = soft_adcf_loss(scores, labels, tau, cfg)
        h = 1e-6
        for i in range(9):
            up = scores.copy()
            up[i] += h
            down = scores.copy()
            down[i] -= h
            fd = (
                soft_adcf_loss(up, labels, tau, cfg)[0]
                - soft_adcf_loss(down, labels, tau, cfg)[0]
            ) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-10)
        fd_tau = (
            soft_adcf_loss(scores, labels, tau + h, cfg)[0]
            - soft_adcf_loss(scores, labels, tau - h, cfg)[0]
        ) / (2 * h)
        assert dtau == pytest.approx(fd_tau, rel=1e-4, abs=1e-10)

    def test_loss_bounds(self):
        rng = np.random.default_rng(2)
        op = DEFAULT_OP
        upper = op.c_miss * op.pi_tar + op.c_fa_non * op.pi_non + op.c_fa_spf * op.pi_spf
        for _ in range(20):
            scores = rng.normal(0, 3, 12)
            labels = ["target"] * 4 + ["nontarget"] * 4 + ["spoof"] * 4
            loss, _, _ = soft_adcf_loss(scores, labels, rng.normal(), self.cfg())
            assert 0.0 <= loss <= upper

    @given(st.floats(-5, 5), st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_translation_invariance(self, shift, seed):
        rng = np.random.default_rng(seed)
        scores = rng.normal(0, 2, 9)
        labels = ["target"] * 3 + ["nontarget"] * 3 + ["spoof"] * 3
        tau = float(rng.normal())
        base, _, _ = soft_adcf_loss(scores, labels, tau, self.cfg())
        shifted, _, _ = soft_adcf_loss(scores + shift, labels, tau + shift, self.cfg())
        assert shifted == pytest.approx(base, abs=1e-12)

    def test_converges_to_hard_cost(self):
        rng = np.random.default_rng(3)
        scores = rng.normal(0, 2, 60)
        tau = 0.13
        # keep every score away from tau so the hard decision is unambiguous
        scores = scores[np.abs(scores - tau) > 0.02]
        labels = ["target", "nontarget", "spoof"] * (len(scores) // 3)
        scores = scores[: len(labels)]
        labeled = ScoreSet(
            [ScoreRecord(f"e{i}", f"t{i}", lab, s) for i, (lab, s) in enumerate(zip(labels, scores))]
        )
        hard = adcf_at_threshold(labeled, tau, DEFAULT_OP)
        gaps = []
        for alpha in (1.0, 10.0, 100.0, 1000.0):
            soft, _, _ = soft_adcf_loss(scores, labels, tau, self.cfg(alpha=alpha))
            gaps.append(abs(soft - hard))
        assert all(a >= b - 1e-15 for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 1e-3

    def test_empty_batch(self):
        with pytest.raises(ValueError, match="empty"):
            soft_adcf_loss(np.array([]), [], 0.0, self.cfg())


class TestCombined:
    def batch(self):
        rng = np.random.default_rng(4)
        scores = rng.normal(0, 1, 9)
        labels = ["target"] * 3 + ["nontarget"] * 3 + ["spoof"] * 3
        return scores, labels

    def test_lambda_one_is_bce(self):
        scores, labels = self.batch()
        cfg = LossConfig(lambda_bce=1.0, alpha=10.0, operating_point=DEFAULT_OP)
        loss, grad, dtau = combined_loss(scores, labels, 0.3, cfg)
        bl, bg = bce_loss(scores, targets_from_labels(labels))
        assert loss == bl
        np.testing.assert_array_equal(grad, bg)
        assert dtau == 0.0

    def test_lambda_zero_is_soft_adcf(self):
        scores, labels = self.batch()
        cfg = LossConfig(lambda_bce=0.0, alpha=10.0, operating_point=DEFAULT_OP)
        loss, grad, dtau = combined_loss(scores, labels, 0.3, cfg)
        al, ag, at = soft_adcf_loss(scores, labels, 0.3, cfg)
        assert loss == al
        np.testing.assert_array_equal(grad, ag)
        assert dtau == at

    def test_half_mix_is_mean_of_components(self):
        scores, labels = self.batch()
        cfg = LossConfig(lambda_bce=0.5, alpha=10.0, operating_point=DEFAULT_OP)
        loss, grad, dtau = combined_loss(scores, labels, 0.3, cfg)
        bl, bg = bce_loss(scores, targets_from_labels(labels))
        al, ag, at = soft_adcf_loss(scores, labels, 0.3, cfg)
        assert loss == pytest.approx((bl + al) / 2.0, rel=1e-15)
        np.testing.assert_allclose(grad, (bg + ag) / 2.0, rtol=1e-15)
        assert dtau == pytest.approx(at / 2.0, rel=1e-15)

    def test_invalid_lambda(self):
        cfg = LossConfig(lambda_bce=1.5)
        with pytest.raises(ValueError):
            combined_loss(np.zeros(1), ["target"], 0.0, cfg)

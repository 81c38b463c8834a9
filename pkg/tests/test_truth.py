import numpy as np
import pytest

from mpe_lab.environments import BenchmarkConfig, BenchmarkEnv, TinyEnv, TinyMDPSpec, enumerate_tiny_value
from mpe_lab.truth import (
    TruthSpec,
    crn_differences,
    crn_truth,
    exact_theta_tiny,
    gpgt_theta_tiny,
    score_form_theta_tiny,
)


def _fd(spec, eps):
    return (enumerate_tiny_value(spec, eps) - enumerate_tiny_value(spec, -eps)) / (2 * eps)


def _action_free():
    r = np.array([[[1.0, 1.0], [2.0, 2.0]], [[0.5, 0.5], [-3.0, -3.0]]])
    return TinyMDPSpec(rewards=r, transition=np.array([[0.2, 0.2], [0.6, 0.6]]))


class TestTinyExact:
    @pytest.mark.parametrize("seed", range(50))
    def test_three_forms_agree(self, seed):
        spec = TinyMDPSpec.random(np.random.default_rng(seed))
        exact = exact_theta_tiny(spec)
        assert gpgt_theta_tiny(spec) == pytest.approx(exact, abs=1e-12)
        assert score_form_theta_tiny(spec) == pytest.approx(exact, abs=1e-12)

    @pytest.mark.parametrize("seed", [0, 3, 17])
    def test_matches_central_difference(self, seed):
        spec = TinyMDPSpec.random(np.random.default_rng(seed))
        assert exact_theta_tiny(spec) == pytest.approx(_fd(spec, 1e-5), abs=1e-8)

    def test_action_free_rewards(self):
        spec = _action_free()
        assert exact_theta_tiny(spec) == pytest.approx(0.0, abs=1e-15)
        assert gpgt_theta_tiny(spec) == 0.0

    def test_symmetric_spec(self):
        assert exact_theta_tiny(TinyMDPSpec.symmetric()) == pytest.approx(0.0, abs=1e-15)

    def test_richardson_ratio(self):
        # symmetric difference bias ~ C eps^2, so doubling eps quadruples it
        spec = TinyMDPSpec()
        theta = exact_theta_tiny(spec)
        ratio = (_fd(spec, 0.1) - theta) / (_fd(spec, 0.05) - theta)
        assert ratio == pytest.approx(4.0, abs=0.05)

    def test_reward_scaling(self):
        spec = TinyMDPSpec.random(np.random.default_rng(4))
        scaled = TinyMDPSpec(p_x1=spec.p_x1, propensity=spec.propensity, rewards=2.5 * spec.rewards,
                             transition=spec.transition, gamma=spec.gamma)
        assert exact_theta_tiny(scaled) == pytest.approx(2.5 * exact_theta_tiny(spec), rel=1e-12)


class TestCRN:
    def test_tiny_within_bias_and_noise(self):
        spec = TinyMDPSpec()
        res = crn_truth(TinyEnv(spec), TruthSpec(M=200_000, seed=5))
        # the CRN estimator is unbiased for the eps-difference of the exact value
        assert abs(res.theta - _fd(spec, 0.05)) <= 4 * res.se
        # and that difference is within C eps^2 of the derivative
        third = (_fd(spec, 0.2) - _fd(spec, 0.1)) / (0.2**2 - 0.1**2)
        assert abs(res.theta - exact_theta_tiny(spec)) <= 2 * abs(third) * 0.05**2 + 4 * res.se

    def test_action_free_exactly_zero(self):
        d = crn_differences(TinyEnv(_action_free()), TruthSpec(M=20_000))
        assert np.all(d == 0.0)

    def test_chunking_invariant(self):
        env = BenchmarkEnv(BenchmarkConfig(p=2, T=2))
        whole = crn_truth(env, TruthSpec(M=12_000, chunk=12_000, seed=2))
        parts = crn_truth(env, TruthSpec(M=12_000, chunk=5_000, seed=2))
        assert whole == parts

    def test_seed_changes_result(self):
        env = BenchmarkEnv(BenchmarkConfig(p=2, T=2))
        assert crn_truth(env, TruthSpec(M=10_000, seed=0)).theta != crn_truth(env, TruthSpec(M=10_000, seed=1)).theta

    def test_pairing_reduces_variance(self):
        env = BenchmarkEnv(BenchmarkConfig(p=3, T=3))
        spec = TruthSpec(M=10_000, seed=3)
        paired = crn_differences(env, spec).var()
        unpaired = crn_differences(env, spec, paired=False).var()
        assert paired < 0.01 * unpaired


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            TruthSpec(epsilon=0.0)
        with pytest.raises(ValueError):
            TruthSpec(M=100)
        with pytest.raises(ValueError):
            TruthSpec(chunk=0)

    def test_defaults(self):
        assert (TruthSpec().epsilon, TruthSpec().M) == (0.05, 200_000)

    def test_json(self):
        out = crn_truth(TinyEnv(), TruthSpec(M=10_000)).to_json()
        assert set(out) == {"theta_true", "mc_se", "epsilon", "M"}
        assert out["M"] == 10_000 and out["mc_se"] > 0

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from natwalk.reward import (
    RewardBreakdown,
    RewardWeights,
    decompose,
    effort_cost,
    pain_cost,
    running_reward,
    total_reward,
    velocity_reward,
)

W = RewardWeights()
unit = st.floats(0.0, 1.0)


def random_inputs(seed, n=18):
    rng = np.random.default_rng(seed)
    u_prev, u, a = rng.uniform(0, 0.5, (3, n))
    return dict(v=rng.uniform(-0.5, 2.0), a=a, u=u, u_prev=u_prev,
                limit_torques=rng.uniform(0, 3, 6), grfs=rng.uniform(0, 1500, 2),
                body_weight=735.75)


def random_breakdown(seed, w=W):
    return decompose(w=w, **random_inputs(seed))


class TestWeights:
    def test_defaults(self):
        assert (W.w1, W.w2, W.w3, W.w4) == (0.097, 1.579, 0.131, 0.073)
        assert (W.v_target, W.grf_threshold, W.activity_threshold) == (1.2, 1.2, 0.15)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            RewardWeights(w2=-1.0)


class TestVelocity:
    def test_at_target(self):
        assert velocity_reward(1.2, 1.2) == 1.0

    def test_plateau(self):
        assert velocity_reward(2.0) == 1.0

    def test_below(self):
        assert velocity_reward(0.2) == pytest.approx(0.36787944117144233, rel=1e-12)

    def test_backwards(self):
        assert velocity_reward(-0.8) == pytest.approx(math.exp(-4.0))

    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_monotone_and_bounded(self, v1, v2):
        lo, hi = sorted((v1, v2))
        assert 0.0 <= velocity_reward(lo) <= velocity_reward(hi) <= 1.0

    def test_continuous_at_target(self):
        assert velocity_reward(1.2 - 1e-9) == pytest.approx(1.0, abs=1e-12)


class TestEffort:
    def test_all_terms_vanish(self):
        a = np.full(18, 0.15)
        u = np.full(18, 0.3)
        cost, comp = effort_cost(a, u, u, 0.0, W)
        assert cost == 0.0
        assert comp["nactive"] == 0.0

    def test_active_count(self):
        _, comp = effort_cost([0.2, 0.1, 0.16], np.zeros(3), np.zeros(3), 0.0, W)
        assert comp["nactive"] * 3 == pytest.approx(2.0)

    def test_activity_mean_cube(self):
        a = np.full(18, 0.5)
        w = RewardWeights(w2=0.0)
        cost, comp = effort_cost(a, np.zeros(18), np.zeros(18), 1.0, w)
        assert comp["activity"] == 0.125
        assert cost == 0.125

    def test_smoothness(self):
        u_prev = np.zeros(4)
        u = np.array([0.1, 0.2, 0.0, 0.0])
        cost, comp = effort_cost(np.zeros(4), u, u_prev, 0.0, W)
        assert comp["smooth"] == pytest.approx(0.05)
        assert cost == pytest.approx(0.097 * 0.05)

    def test_count_invariance(self):
        # the same per-muscle pattern costs the same on a larger model
        a = np.array([0.5, 0.1, 0.3])
        c3 = effort_cost(a, np.zeros(3), np.zeros(3), 1.0, W)[0]
        c90 = effort_cost(np.tile(a, 30), np.zeros(90), np.zeros(90), 1.0, W)[0]
        assert c90 == pytest.approx(c3, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            effort_cost(np.zeros(3), np.zeros(4), np.zeros(3), 0.0, W)

    def test_negative_alpha(self):
        with pytest.raises(ValueError):
            effort_cost(np.zeros(3), np.zeros(3), np.zeros(3), -0.1, W)

    @given(st.lists(st.tuples(unit, unit, unit), min_size=1, max_size=30), st.floats(0, 10))
    def test_non_negative(self, rows, alpha):
        a, u, up = (np.array(c) for c in zip(*rows))
        assert effort_cost(a, u, up, alpha, W)[0] >= 0.0


class TestPain:
    BW = 735.75

    def test_at_threshold(self):
        cost, _ = pain_cost(np.zeros(6), [1.2 * self.BW, 1.2 * self.BW], self.BW, W)
        assert cost == 0.0

    def test_grf_excess(self):
        cost, comp = pain_cost(np.zeros(6), [1.5 * self.BW, 0.0], self.BW, W)
        assert comp["grf"] == pytest.approx(0.3)
        assert cost == pytest.approx(0.0219)

    def test_limit_torques(self):
        cost, _ = pain_cost([1.0, 2.0], [0.0, 0.0], self.BW, W)
        assert cost == pytest.approx(0.393)

    def test_torque_sign_ignored(self):
        assert pain_cost([-1.0, 2.0], [0.0], self.BW, W)[0] == pytest.approx(0.393)

    def test_bad_body_weight(self):
        with pytest.raises(ValueError):
            pain_cost([0.0], [0.0], 0.0, W)

    def test_disabled(self):
        w = RewardWeights(pain_enabled=False)
        cost, comp = pain_cost([3.0], [3 * self.BW], self.BW, w)
        assert cost == 0.0 and comp["limits"] == 3.0


class TestTotal:
    def test_perfect(self):
        b = decompose(1.5, np.zeros(18), np.zeros(18), np.zeros(18), np.zeros(6),
                      [0.0, 0.0], 700.0, W)
        assert total_reward(b, 0.7) == 1.0

    @pytest.mark.parametrize("seed", range(20))
    def test_recomposition_exact(self, seed):
        x = random_inputs(seed)
        b = decompose(w=W, **x)
        for alpha in (0.0, 0.013, 0.5, 2.0):
            fresh = (velocity_reward(x["v"]) - effort_cost(x["a"], x["u"], x["u_prev"], alpha, W)[0]
                     - pain_cost(x["limit_torques"], x["grfs"], x["body_weight"], W)[0])
            assert total_reward(b, alpha) == fresh

    @pytest.mark.parametrize("seed", range(20))
    def test_alpha_linear(self, seed):
        b = random_breakdown(seed)
        diff = total_reward(b, 0.0) - total_reward(b, 0.5)
        assert diff == pytest.approx(0.5 * b.effort_activity, rel=1e-9, abs=1e-15)

    @given(st.integers(0, 10**6), st.floats(0, 5), st.floats(0, 5))
    def test_non_increasing_and_bounded(self, seed, a1, a2):
        b = random_breakdown(seed)
        lo, hi = sorted((a1, a2))
        assert total_reward(b, hi) <= total_reward(b, lo) <= 1.0

    def test_array_round_trip(self):
        b = random_breakdown(3)
        assert RewardBreakdown.from_array(b.as_array()) == b

    def test_effort_disabled(self):
        w = RewardWeights(effort_enabled=False)
        b = random_breakdown(4, w=w)
        assert total_reward(b, 0.0) == total_reward(b, 3.0) == b.r_vel - b.pain

    def test_task_override(self):
        b = decompose(0.0, np.zeros(2), np.zeros(2), np.zeros(2), [], [], 1.0, W, r_task=2.5)
        assert b.r_vel == 2.5


class TestRunning:
    def test_examples(self):
        assert running_reward(3.0, 0.0, 1.0) == 3.0
        assert running_reward(0.0, 0.0, 1.0) == 0.0
        assert running_reward(3.0, 0.5 * 700.0, 1.0, body_weight=700.0) == pytest.approx(2.5)

    def test_unclipped(self):
        assert running_reward(7.0, 0.0, 0.1) == 7.0

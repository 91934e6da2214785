import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from banditmc.bandits import (
    KLUCB,
    UCB1,
    UCBV,
    ArmStatistics,
    FixedArm,
    PolicyConfig,
    RoundRobin,
    ThompsonSampling,
    ThompsonState,
    bernoulli_kl,
    kl_lower,
    kl_upper,
    klucb_exploration,
    klucb_index,
    make_policy,
    ts_sample,
    ts_select_and_update,
    ucb1_index,
    ucb1_regret_envelope,
    ucbv_index,
)

probs = st.floats(0.0, 1.0, allow_nan=False)


def stats(mean, count, var=0.0):
    return ArmStatistics(np.asarray(count), np.asarray(float(mean)), np.asarray(var * count))


class TestArmStatistics:
    def test_push_matches_numpy(self):
        xs = np.random.default_rng(0).normal(size=200)
        s = ArmStatistics.zeros()
        s.extend(xs)
        assert int(s.count) == 200
        np.testing.assert_allclose(s.mean, xs.mean(), rtol=1e-12)
        np.testing.assert_allclose(s.variance, xs.var(), rtol=1e-12)

    def test_merge_equals_concatenation(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=37), rng.normal(3.0, 2.0, size=91)
        merged = ArmStatistics.from_samples(a).merge(ArmStatistics.from_samples(b))
        whole = ArmStatistics.from_samples(np.concatenate([a, b]))
        np.testing.assert_allclose([merged.count, merged.mean, merged.m2], [whole.count, whole.mean, whole.m2])

    def test_merge_with_empty(self):
        s = ArmStatistics.from_samples([1.0, 2.0, 4.0])
        m = s.merge(ArmStatistics.zeros())
        np.testing.assert_allclose([m.count, m.mean, m.m2], [s.count, s.mean, s.m2])

    def test_batched_update(self):
        s = ArmStatistics.zeros((2, 3))
        s.update((np.array([0, 1]), np.array([2, 0])), np.array([0.5, 1.0]))
        s.update((np.array([0, 1]), np.array([2, 0])), np.array([1.5, 3.0]))
        np.testing.assert_array_equal(s.count, [[0, 0, 2], [2, 0, 0]])
        np.testing.assert_allclose(s.mean[0, 2], 1.0)
        np.testing.assert_allclose(s.variance[1, 0], 1.0)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50), st.integers(0, 50))
    def test_merge_any_split(self, xs, cut):
        cut = min(cut, len(xs))
        xs = np.array(xs)
        m = ArmStatistics.from_samples(xs[:cut]).merge(ArmStatistics.from_samples(xs[cut:]))
        np.testing.assert_allclose(m.mean, xs.mean(), atol=1e-9)
        np.testing.assert_allclose(m.m2, ((xs - xs.mean()) ** 2).sum(), rtol=1e-7, atol=1e-6)


class TestBernoulliKL:
    def test_identical(self):
        assert bernoulli_kl(0.5, 0.5) == 0.0

    def test_quarter_half(self):
        np.testing.assert_allclose(bernoulli_kl(0.25, 0.5), 0.130812035, atol=1e-9)

    def test_zero_against_half(self):
        np.testing.assert_allclose(bernoulli_kl(0.0, 0.5), math.log(2), rtol=1e-12)

    def test_divergent_boundaries(self):
        assert bernoulli_kl(0.5, 0.0) == math.inf
        assert bernoulli_kl(0.5, 1.0) == math.inf
        assert bernoulli_kl(1.0, 1.0) == 0.0

    @given(probs, probs)
    def test_nonnegative(self, p, q):
        assert bernoulli_kl(p, q) >= 0.0

    @given(st.floats(0.0, 0.98), st.floats(0.001, 0.5))
    def test_increasing_above_p(self, p, step):
        q1 = p + (1 - p) * step * 0.5
        q2 = p + (1 - p) * step
        assert bernoulli_kl(p, q2) >= bernoulli_kl(p, q1)


class TestIndices:
    def test_ucb1_examples(self):
        # 0.5 + sqrt(2 ln 100 / 10)
        np.testing.assert_allclose(ucb1_index(stats(0.5, 10), 100), 1.4597051, atol=1e-6)
        assert ucb1_index(stats(0.0, 1), 1) == 0.0
        np.testing.assert_allclose(ucb1_index(stats(1.0, 1), math.e), 1 + math.sqrt(2))

    def test_ucb1_needs_a_pull(self):
        with pytest.raises(ValueError):
            ucb1_index(stats(0.0, 0), 5)

    def test_ucbv_examples(self):
        # 0.5 + sqrt(2 * 0.25 * ln 100 / 10) + 3 ln 100 / 10
        np.testing.assert_allclose(ucbv_index(stats(0.5, 10, 0.25), 100), 2.3614041, atol=1e-6)
        assert ucbv_index(stats(0.0, 1), 1) == 0.0
        np.testing.assert_allclose(ucbv_index(stats(0.3, 10**12), 1000), 0.3, atol=1e-9)

    def test_klucb_exploration_flat_start(self):
        f = klucb_exploration(np.array([1, 2, 3, 10]))
        np.testing.assert_allclose(f[:3], f[2])
        np.testing.assert_allclose(f[3], math.log(10) + 3 * math.log(math.log(10)))

    def test_klucb_examples(self):
        assert kl_upper(1.0, 5.0) == 1.0
        assert kl_upper(0.5, 0.0) == 0.5
        np.testing.assert_allclose(kl_upper(0.25, 0.130812035), 0.5, atol=1e-8)
        np.testing.assert_allclose(kl_lower(0.75, 0.130812035), 0.5, atol=1e-8)

    def test_klucb_index_respects_budget(self):
        s = stats(0.3, 20)
        idx = klucb_index(s, 50)
        budget = klucb_exploration(50) / 20
        np.testing.assert_allclose(bernoulli_kl(0.3, idx), budget, atol=1e-8)

    @given(st.floats(0.0, 0.999), st.floats(1e-4, 5.0))
    @settings(max_examples=200)
    def test_inversion_property(self, p, budget):
        q = float(kl_upper(p, budget))
        assert p <= q <= 1.0
        if q < 1.0 - 1e-9:
            assert abs(bernoulli_kl(p, q) - budget) <= 1e-8


class TestThompson:
    def test_uniform_prior_draws(self):
        th = ts_sample(ThompsonState.fresh(3, 20000), np.random.default_rng(0))
        np.testing.assert_allclose(th.mean(axis=0), 0.5, atol=0.01)
        np.testing.assert_allclose(th.var(axis=0), 1 / 12, atol=0.003)

    def test_reward_one_is_success(self):
        state = ThompsonState.fresh(2)
        rng = np.random.default_rng(3)
        for _ in range(25):
            ts_select_and_update(state, lambda k: 1.0, rng)
        assert state.failures.sum() == 0
        assert state.successes.sum() == 25

    def test_counts_identity(self):
        state = ThompsonState.fresh(3)
        rng = np.random.default_rng(4)
        pulls = np.zeros(3, dtype=int)
        for _ in range(300):
            pulls[ts_select_and_update(state, lambda k: 0.3 * k, rng)] += 1
        np.testing.assert_array_equal(state.successes[0] + state.failures[0], pulls)

    def test_rejects_out_of_range_reward(self):
        with pytest.raises(ValueError):
            ts_select_and_update(ThompsonState.fresh(2), lambda k: 1.5, np.random.default_rng(0))


class TestPolicies:
    @pytest.mark.parametrize("cls", [UCB1, UCBV, KLUCB])
    def test_forced_initial_pulls(self, cls):
        pol = cls(2)
        rng = np.random.default_rng(0)
        for t, expected in ((1, 0), (2, 1)):
            arm = pol.select(t, rng)
            assert arm[0] == expected
            pol.update(arm, [0.5], rng)

    def test_tie_goes_to_first_arm(self):
        pol = UCB1(2)
        rng = np.random.default_rng(0)
        for t in (1, 2):
            pol.update(pol.select(t, rng), [0.4], rng)
        assert pol.select(3, rng)[0] == 0

    def test_argmax(self):
        pol = UCB1(2)
        rng = np.random.default_rng(0)
        pol.update(pol.select(1, rng), [0.1], rng)
        pol.update(pol.select(2, rng), [0.9], rng)
        assert pol.select(3, rng)[0] == 1

    def test_update_must_match_selection(self):
        pol = UCB1(2)
        rng = np.random.default_rng(0)
        pol.select(1, rng)
        with pytest.raises(ValueError):
            pol.update([1], [0.5], rng)

    def test_rejects_bad_reward(self):
        pol = UCB1(2)
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            pol.update(pol.select(1, rng), [1.3], rng)

    def test_round_robin_and_fixed(self):
        rng = np.random.default_rng(0)
        rr, fx = RoundRobin(3), FixedArm(3, arm=2)
        assert [int(rr.select(t, rng)[0]) for t in range(1, 7)] == [0, 1, 2, 0, 1, 2]
        assert all(fx.select(t, rng)[0] == 2 for t in range(1, 5))

    def test_make_policy_names(self):
        assert isinstance(make_policy("ucb-v", 2), UCBV)
        assert isinstance(make_policy("kl_ucb", 2), KLUCB)
        assert isinstance(make_policy("Thompson", 2), ThompsonSampling)
        assert isinstance(make_policy("arm1", 2), FixedArm)
        with pytest.raises(ValueError):
            PolicyConfig(kind="eps-greedy")

    def test_ts_needs_generator(self):
        pol = ThompsonSampling(2)
        arm = pol.select(1, np.random.default_rng(0))
        with pytest.raises(ValueError):
            pol.update(arm, [0.5], None)

    def test_batched_runs_are_independent_of_masking(self):
        pol = UCB1(2, n_runs=3)
        rng = np.random.default_rng(0)
        arms = pol.select(1, rng)
        pol.update(arms, [0.2, 0.2, 0.2], rng, active=np.array([True, False, True]))
        np.testing.assert_array_equal(pol.counts.sum(axis=1), [1, 0, 1])


def test_regret_envelope():
    n = 10**5
    expected = 8 * math.log(n) / 0.08 + (1 + math.pi**2 / 3) * 0.08
    np.testing.assert_allclose(ucb1_regret_envelope([0.0, 0.08], n), expected)

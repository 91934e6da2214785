import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from banditmc.estimators import CIRSpec, cir_arms
from banditmc.pmc import ALPHA_FLOOR, MixtureState, pmc_batch, pmc_generation, refit_alphas


class TestRefit:
    def test_equal_weights(self):
        alphas, bad = refit_alphas([0.5, 0.5], [0, 0, 0, 1], np.ones(4), floor=0.0)
        np.testing.assert_allclose(alphas, [0.75, 0.25])
        assert not bad

    def test_single_component(self):
        alphas, _ = refit_alphas([1.0], [0, 0, 0], [0.2, 3.0, 1.0])
        np.testing.assert_array_equal(alphas, [1.0])

    def test_concentrated_weights(self):
        alphas, _ = refit_alphas([0.25] * 4, [0, 1, 2, 3], [0.0, 5.0, 0.0, 0.0])
        assert alphas[1] == pytest.approx(1.0, abs=1e-5)
        # floored components stay alive
        assert np.all(alphas >= ALPHA_FLOOR / (1 + 3 * ALPHA_FLOOR))

    def test_zero_total_weight_is_flagged(self):
        alphas, bad = refit_alphas([0.2, 0.8], [0, 1], [0.0, 0.0])
        assert bad
        np.testing.assert_array_equal(alphas, [0.2, 0.8])

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=40), st.integers(1, 6), st.integers(0, 1000))
    @settings(max_examples=100)
    def test_probability_vector(self, omega, K, seed):
        comps = np.random.default_rng(seed).integers(0, K, size=len(omega))
        alphas, _ = refit_alphas(np.full(K, 1.0 / K), comps, omega)
        assert np.all(alphas >= 0)
        assert abs(alphas.sum() - 1) < 1e-12


class TestState:
    def test_validation(self):
        with pytest.raises(ValueError):
            MixtureState(np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            MixtureState.uniform(3, population=0)

    def test_generation(self):
        arms = cir_arms(CIRSpec(), [0.0, 0.5, 1.0])
        state = MixtureState.uniform(3, population=50)
        gen, new = pmc_generation(state, arms, np.random.default_rng(0))
        assert gen.values.shape == (50,)
        assert new.generation == 1
        assert abs(new.alphas.sum() - 1) < 1e-12

    def test_weighting_choice(self):
        arms = cir_arms(CIRSpec(), [0.0, 1.0])
        with pytest.raises(ValueError):
            pmc_generation(MixtureState.uniform(2), arms, np.random.default_rng(0), weighting="mixture")


class TestBatch:
    def test_counts_and_alphas(self):
        arms = cir_arms(CIRSpec(), [0.0, 0.5, 1.0])
        res = pmc_batch(arms, 250, np.random.default_rng(1), n_runs=4, population=100, checkpoints=[50, 150, 250])
        np.testing.assert_array_equal(res.counts.sum(axis=2), [[50] * 4, [150] * 4, [250] * 4])
        assert res.alphas.shape == (3, 4, 3)
        np.testing.assert_allclose(res.alphas.sum(axis=2), 1.0)

    def test_unbiased_against_fixed_arms(self):
        arms = cir_arms(CIRSpec(), [0.0, 0.3, 0.6, 1.0])
        rng = np.random.default_rng(2)
        # 10^5 samples in total, spread over 50 independent runs for an honest SE
        res = pmc_batch(arms, 2000, rng, n_runs=50, population=100)
        est = res.estimates[-1]
        pooled = np.concatenate([a.values(rng, 25_000) for a in arms])
        se = math.hypot(est.std(ddof=1) / math.sqrt(est.size), pooled.std(ddof=1) / math.sqrt(pooled.size))
        assert abs(est.mean() - pooled.mean()) <= 3 * se

    def test_checkpoint_validation(self):
        arms = cir_arms(CIRSpec(), [0.0])
        with pytest.raises(ValueError):
            pmc_batch(arms, 100, np.random.default_rng(0), checkpoints=[50, 40])

"""Temperature scaling, nucleus truncation, and the seeded draw."""

import numpy as np
import pytest

from moi.sampler import (
    SamplerConfig,
    TruncatedDistribution,
    apply_temperature,
    make_rng,
    sample_categorical,
    top_p_truncate,
)

SOFTMAX_210 = np.array([0.6652409557748219, 0.24472847105479764, 0.09003057317038046])


class TestApplyTemperature:
    def test_equal_logits_uniform(self):
        for t in (0.3, 1.0, 7.0):
            np.testing.assert_allclose(apply_temperature(np.zeros(3), t), 1 / 3, atol=1e-15)

    def test_identity_scaling(self):
        np.testing.assert_allclose(apply_temperature(np.array([2.0, 1.0, 0.0]), 1.0), SOFTMAX_210, atol=1e-15)

    def test_low_temperature_concentrates(self):
        p = apply_temperature(np.array([2.0, 1.0, 0.0]), 0.01)
        assert p[0] >= 0.999

    def test_argmax_preserved(self):
        rng = np.random.Generator(np.random.PCG64(2))
        for _ in range(50):
            logits = rng.normal(0, 3, size=int(rng.integers(2, 40)))
            for t in (0.05, 0.7, 1.0, 5.0):
                assert int(np.argmax(apply_temperature(logits, t))) == int(np.argmax(logits))

    def test_large_logits_stable(self):
        p = apply_temperature(np.array([1e4, 1e4 - 5.0]), 1.0)
        assert np.all(np.isfinite(p)) and p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            apply_temperature(np.array([np.inf, 0.0]), 1.0)
        with pytest.raises(ValueError):
            apply_temperature(np.array([1.0, 2.0]), 0.0)


class TestTopPTruncate:
    def test_prefix_rule(self):
        d = top_p_truncate(np.array([0.5, 0.3, 0.15, 0.05]), 0.8)
        assert d.ids.tolist() == [0, 1]
        np.testing.assert_allclose(d.probs, [0.625, 0.375], atol=1e-15)
        assert d.full_vocab == 4

    def test_top_p_one_keeps_everything(self):
        p = np.array([0.5, 0.3, 0.15, 0.05])
        d = top_p_truncate(p, 1.0)
        assert d.ids.tolist() == [0, 1, 2, 3]
        np.testing.assert_allclose(d.probs, p, atol=1e-15)

    def test_first_token_covers(self):
        d = top_p_truncate(np.array([0.5, 0.3, 0.15, 0.05]), 0.4)
        assert d.ids.tolist() == [0]
        assert d.probs.tolist() == [1.0]

    def test_ties_break_by_ascending_id(self):
        d = top_p_truncate(np.array([0.25, 0.25, 0.25, 0.25]), 0.5)
        assert d.ids.tolist() == [0, 1]

    def test_zero_mass_tail_dropped_at_top_p_one(self):
        d = top_p_truncate(np.array([0.6, 0.4, 0.0]), 1.0)
        assert d.ids.tolist() == [0, 1]

    def test_kept_mass_reaches_threshold(self):
        rng = np.random.Generator(np.random.PCG64(3))
        for _ in range(200):
            v = int(rng.integers(2, 30))
            p = rng.dirichlet(np.ones(v) * rng.uniform(0.2, 3.0))
            top_p = float(rng.uniform(0.05, 1.0))
            d = top_p_truncate(p, top_p)
            assert d.ids.size >= 1
            kept_mass = p[d.ids].sum()
            assert kept_mass >= min(top_p, p.sum()) - 1e-12
            # minimality: dropping the last kept token must undershoot
            if d.ids.size > 1:
                assert kept_mass - p[d.ids[-1]] < top_p
            assert d.probs.sum() == pytest.approx(1.0, abs=1e-9)
            # descending-prob order
            assert np.all(np.diff(p[d.ids]) <= 1e-15)


class TestSampleCategorical:
    def test_singleton_support(self):
        d = TruncatedDistribution(ids=np.array([5]), probs=np.array([1.0]), full_vocab=8)
        for seed in range(5):
            assert sample_categorical(d, make_rng(seed)) == 5

    def test_deterministic_given_seed(self):
        d = top_p_truncate(np.array([0.5, 0.3, 0.15, 0.05]), 0.95)
        a = [sample_categorical(d, make_rng(123)) for _ in range(3)]
        assert a[0] == a[1] == a[2]

    def test_one_draw_consumed(self):
        d = top_p_truncate(np.array([0.5, 0.3, 0.15, 0.05]), 0.95)
        rng1, rng2 = make_rng(77), make_rng(77)
        sample_categorical(d, rng1)
        rng2.random()
        assert rng1.random() == rng2.random()

    def test_empirical_frequencies(self):
        d = TruncatedDistribution(ids=np.array([0, 1]), probs=np.array([0.625, 0.375]), full_vocab=4)
        rng = make_rng(2024)
        n = 100_000
        hits = sum(1 for _ in range(n) if sample_categorical(d, rng) == 0)
        assert hits / n == pytest.approx(0.625, abs=0.01)

    def test_composition_is_pure(self):
        logits = np.array([0.3, -0.2, 1.4, 0.0, -1.0])

        def draw(seed):
            d = top_p_truncate(apply_temperature(logits, 0.8), 0.9)
            return sample_categorical(d, make_rng(seed))

        for seed in (0, 1, 99):
            assert draw(seed) == draw(seed)


class TestSamplerConfig:
    def test_defaults(self):
        cfg = SamplerConfig()
        assert cfg.temperature == 0.6 and cfg.top_p == 0.95

    def test_validation(self):
        with pytest.raises(ValueError):
            SamplerConfig(temperature=0.0)
        with pytest.raises(ValueError):
            SamplerConfig(top_p=0.0)
        with pytest.raises(ValueError):
            SamplerConfig(top_p=1.5)

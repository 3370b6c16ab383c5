import numpy as np
import pytest

from partseg.dropout import DropoutConfig, apply_label_dropout, eligible_for, partially_labelled_classes
from partseg.seeding import presentation_rng

from conftest import make_sample


def ring_sample(presence=(True, True, True)):
    labels = np.zeros((8, 8), np.uint8)
    labels[1, 1] = 1
    labels[2, 2] = 2
    labels[3, 3] = 3
    for c, flag in enumerate(presence):
        if not flag:
            labels[labels == c + 1] = 0
    return make_sample(labels, presence)


class TestConfig:
    def test_probability_bounds(self):
        with pytest.raises(ValueError):
            DropoutConfig(1.5, frozenset({0}))
        with pytest.raises(ValueError):
            DropoutConfig(-0.1, frozenset({0}))
        assert DropoutConfig(0.5, {2, 1}).eligible_classes == frozenset({1, 2})


class TestEligibleFor:
    def test_intersection(self):
        cfg = DropoutConfig(0.5, {1, 2})
        assert eligible_for(ring_sample(), cfg) == frozenset({1, 2})

    def test_nothing_to_drop(self):
        cfg = DropoutConfig(0.5, {1, 2})
        assert eligible_for(ring_sample((True, False, False)), cfg) == frozenset()

    def test_empty_eligible_set(self):
        cfg = DropoutConfig(0.5, frozenset())
        assert eligible_for(ring_sample(), cfg) == frozenset()

    def test_out_of_range_class_rejected(self):
        cfg = DropoutConfig(0.5, {5})
        with pytest.raises(ValueError):
            eligible_for(ring_sample(), cfg)


class TestApplyLabelDropout:
    def test_probability_zero_is_identity(self):
        s = ring_sample()
        cfg = DropoutConfig(0.0, {0, 1, 2})
        for i in range(20):
            out = apply_label_dropout(s, cfg, np.random.default_rng(i))
            assert out is s

    def test_probability_one_single_class_always_drops(self):
        s = ring_sample()
        cfg = DropoutConfig(1.0, {2})
        for i in range(20):
            out = apply_label_dropout(s, cfg, np.random.default_rng(i))
            assert not (out.labels == 3).any()
            assert out.presence.tolist() == [True, True, False]
        # pristine input untouched between presentations
        assert (s.labels == 3).any() and s.presence.tolist() == [True, True, True]

    def test_at_most_one_class_dropped_and_pixel_monotonicity(self):
        s = ring_sample()
        cfg = DropoutConfig(1.0, {0, 1, 2})
        for i in range(50):
            out = apply_label_dropout(s, cfg, np.random.default_rng(i))
            assert int((s.presence != out.presence).sum()) == 1
            assert set(np.unique(out.labels)) <= set(np.unique(s.labels))

    def test_keyed_stream_reproducible(self):
        s = ring_sample()
        cfg = DropoutConfig(0.5, {1, 2})
        a = apply_label_dropout(s, cfg, presentation_rng(7, 3, s.sample_id))
        b = apply_label_dropout(s, cfg, presentation_rng(7, 3, s.sample_id))
        assert (a.labels == b.labels).all() and (a.presence == b.presence).all()
        outcomes = {
            apply_label_dropout(s, cfg, presentation_rng(7, e, s.sample_id)).presence.tobytes()
            for e in range(30)
        }
        assert len(outcomes) > 1  # epochs see different draws

    def test_drop_rate_and_class_choice_statistics(self):
        s = ring_sample()
        cfg = DropoutConfig(0.5, {1, 2})
        n = 10000
        drops, chose_1 = 0, 0
        for e in range(n):
            out = apply_label_dropout(s, cfg, presentation_rng(123, e, s.sample_id))
            if out is not s:
                drops += 1
                if not out.presence[1]:
                    chose_1 += 1
        # 99.9% binomial interval around n*p
        sigma = (n * 0.25) ** 0.5
        assert abs(drops - n * 0.5) <= 3.2905 * sigma
        # uniform class choice within 3 sigma
        sigma_c = (drops * 0.25) ** 0.5
        assert abs(chose_1 - drops / 2) <= 3.0 * sigma_c
        frac = chose_1 / drops
        assert 0.47 <= frac <= 0.53


class TestPartiallyLabelledClasses:
    def test_union_of_missing(self):
        samples = [ring_sample(), ring_sample((True, False, True)), ring_sample((True, True, False))]
        assert partially_labelled_classes(samples) == frozenset({1, 2})

    def test_fully_labelled_corpus(self):
        assert partially_labelled_classes([ring_sample()]) == frozenset()

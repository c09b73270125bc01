import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scaleirl.errors import TooFewPeriods, TooFewSamples
from scaleirl.features import (
    FEATURE_NAMES, FeatureVector, Standardizer, apply_standardizer, as_array,
    compute_period_features, fit_standardizer, invert_standardizer,
)
from scaleirl.ticks import PeriodAggregate, resample


def agg(index, price=100.0, spread=0.1, volume=1000.0, imbalance=0.0, session="2012-11-01",
        symbol="AAA", scale=60):
    return PeriodAggregate(symbol, session, index, index * scale * 60_000, scale, price, spread,
                           volume, imbalance, 1, 0.0)


def fv(*values):
    return FeatureVector(*values, period_start=0, scale_minutes=5)


def test_feature_order_is_fixed():
    assert FEATURE_NAMES == ("price", "spread", "volume", "imbalance")


class TestPeriodFeatures:
    def test_single_price_change(self):
        feats, kept = compute_period_features([agg(0, 100.0), agg(1, 101.0)])
        assert [f.values() for f in feats] == [(1.0, 0.0, 0.0, 0.0)]
        assert kept[0].period_index == 1
        assert feats[0].period_start == kept[0].period_start

    def test_constant_aggregates_give_zeros(self):
        feats, _ = compute_period_features([agg(i) for i in range(5)])
        assert np.all(as_array(feats) == 0.0)

    def test_random_sequence_matches_pairwise_differences(self, rng):
        aggs = []
        for s, session in enumerate(("2012-11-01", "2012-11-02", "2012-11-05")):
            for i in range(8):
                aggs.append(agg(i, *rng.normal(size=4), session=session))
        feats, kept = compute_period_features(aggs)
        expected = []
        for a, b in zip(aggs, aggs[1:]):
            if a.session == b.session:
                expected.append((b.mean_trade_price - a.mean_trade_price,
                                 b.mean_spread - a.mean_spread,
                                 b.total_trade_volume - a.total_trade_volume,
                                 b.mean_quote_imbalance - a.mean_quote_imbalance))
        assert [f.values() for f in feats] == expected
        assert len(feats) == len(aggs) - 3

    def test_gap_drops_feature(self):
        feats, kept = compute_period_features([agg(0), agg(1), agg(3), agg(4)])
        assert [k.period_index for k in kept] == [1, 4]

    def test_too_few_periods(self):
        with pytest.raises(TooFewPeriods):
            compute_period_features([agg(0, session="a"), agg(0, session="b")])

    def test_length_and_telescoping_on_synthetic_month(self, month):
        aggs = resample(month.ticks, 15)
        sessions = sorted({a.session for a in aggs})
        feats, kept = compute_period_features(aggs)
        assert len(feats) == len(aggs) - len(sessions)
        for session in sessions:
            rows = [a for a in aggs if a.session == session]
            total = sum(f.d_price for f, k in zip(feats, kept) if k.session == session)
            expected = rows[-1].mean_trade_price - rows[0].mean_trade_price
            assert abs(total - expected) < 1e-9


class TestStandardizer:
    def test_two_point_example(self):
        st_ = fit_standardizer([fv(0, 0, 0, 0), fv(2, 0, 0, 0)])
        np.testing.assert_array_equal(st_.mean, [1, 0, 0, 0])
        assert st_.std[0] == 1.0
        np.testing.assert_array_equal(st_.constant, [False, True, True, True])

    def test_matches_two_pass_oracle(self, rng):
        x = rng.normal(3.0, 2.0, size=(57, 4)) * [1, 1e-3, 1e3, 10]
        st_ = fit_standardizer(x)
        n = len(x)
        for j in range(4):
            col = x[:, j].tolist()
            mean = sum(col) / n
            var = sum((v - mean) ** 2 for v in col) / n
            assert abs(st_.mean[j] - mean) <= 1e-12 * max(1.0, abs(mean))
            assert abs(st_.std[j] - var ** 0.5) <= 1e-12 * max(1.0, var ** 0.5)

    def test_x_equals_mean_and_mean_plus_std(self, rng):
        x = rng.normal(size=(20, 4))
        st_ = fit_standardizer(x)
        np.testing.assert_allclose(st_.transform(st_.mean), np.zeros(4), atol=1e-15)
        np.testing.assert_allclose(st_.transform(st_.mean + st_.std), np.ones(4), atol=1e-12)

    def test_constant_dimension_maps_to_zero(self):
        x = np.array([[1.0, 5.0, 0, 0], [2.0, 5.0, 1, 0], [4.0, 5.0, 0, 0]])
        z = fit_standardizer(x).transform(x)
        assert np.all(z[:, 1] == 0) and np.all(z[:, 3] == 0)
        assert np.all(np.isfinite(z))

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            fit_standardizer([fv(1, 2, 3, 4)])

    def test_dict_round_trip(self, rng):
        st_ = fit_standardizer(rng.normal(size=(10, 4)))
        back = Standardizer.from_dict(st_.to_dict())
        for name in ("mean", "std", "constant"):
            np.testing.assert_array_equal(getattr(back, name), getattr(st_, name))

    def test_feature_vector_wrappers_keep_metadata(self, rng):
        feats = [FeatureVector(*rng.normal(size=4), period_start=i, scale_minutes=30)
                 for i in range(6)]
        st_ = fit_standardizer(feats)
        z = apply_standardizer(st_, feats)
        assert [f.period_start for f in z] == list(range(6))
        back = invert_standardizer(st_, z)
        np.testing.assert_allclose(as_array(back), as_array(feats), rtol=1e-12, atol=1e-12)


samples = arrays(np.float64, st.tuples(st.integers(2, 40), st.just(4)),
                 elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False))


@settings(max_examples=80, deadline=None)
@given(samples)
def test_standardized_moments_and_round_trip(x):
    st_ = fit_standardizer(x)
    z = st_.transform(x)
    live = ~st_.constant
    # dimensions whose spread is at the edge of float resolution are not meaningful to test
    live &= st_.std > 1e-6 * np.maximum(np.abs(st_.mean), 1.0)
    assert np.all(np.abs(z.mean(axis=0)[live]) < 1e-9)
    assert np.all(np.abs(z.var(axis=0)[live] - 1.0) < 1e-9)
    assert np.all(z[:, st_.constant] == 0.0)
    back = st_.inverse_transform(z)
    scale = np.maximum(np.abs(x).max(), 1.0)
    assert np.all(np.abs(back - x) <= 1e-12 * scale * 10)


@settings(max_examples=50, deadline=None)
@given(samples)
def test_standardization_preserves_order(x):
    z = fit_standardizer(x).transform(x)
    for j in range(4):
        order = np.argsort(x[:, j], kind="stable")
        assert np.all(np.diff(z[order, j]) >= 0)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copyforge.core import Domain
from copyforge.oracle import Oracle
from copyforge.sampling import (
    QuotaUnreachable,
    SamplingDistribution,
    SyntheticSet,
    generate_balanced,
    generate_raw,
    load_synthetic_csv,
    sample,
    save_synthetic_csv,
    volume_report,
)

from conftest import Constant, Threshold


def test_uniform_stays_in_domain():
    dom = Domain([-1.0, 0.0], [1.0, 5.0])
    P = sample(SamplingDistribution.uniform(dom), 5000, seed=0)
    assert P.shape == (5000, 2)
    assert dom.contains(P).all()


def test_normal_moments_within_three_sigma():
    n = 20_000
    P = sample(SamplingDistribution.standard_normal(3), n, seed=1)
    # std error of the mean is 1/sqrt(n); of the variance sqrt(2/n)
    assert np.all(np.abs(P.mean(axis=0)) < 3 / np.sqrt(n))
    assert np.all(np.abs(P.var(axis=0) - 1) < 3 * np.sqrt(2 / n))


def test_sample_is_seeded():
    d = SamplingDistribution.uniform(2)
    assert np.array_equal(sample(d, 10, 4), sample(d, 10, 4))
    assert not np.array_equal(sample(d, 10, 4), sample(d, 10, 5))


def test_raw_generation_labels_every_point(threshold_oracle):
    s = generate_raw(threshold_oracle, SamplingDistribution.uniform(1), 3000, seed=0)
    assert len(s) == 3000
    assert np.array_equal(s.y, (s.X[:, 0] > 0).astype(int))
    assert threshold_oracle.query_count == 3000


def _reference_balance(labels, per_class, k):
    """Scan labels one at a time and keep each while its class has room."""
    counts = [0] * k
    kept = []
    for i, c in enumerate(labels):
        if counts[c] < per_class:
            counts[c] += 1
            kept.append(i)
            if min(counts) == per_class:
                return kept, i + 1
    return None, len(labels)


@settings(max_examples=25, deadline=None)
@given(cut=st.floats(-2.5, 2.5), per_class=st.integers(1, 300), seed=st.integers(0, 2**31))
def test_balanced_matches_scalar_rejection(cut, per_class, seed):
    dist = SamplingDistribution.uniform(1)
    max_draws = 20 * per_class * 2 + 500
    oracle = Oracle(Threshold(cut), dim=1, n_classes=2)
    stream = sample(dist, max_draws, seed)
    kept, used = _reference_balance(Threshold(cut).predict(stream), per_class, 2)
    if kept is None:
        with pytest.raises(QuotaUnreachable):
            generate_balanced(oracle, dist, per_class, max_draws, seed)
        return
    s = generate_balanced(oracle, dist, per_class, max_draws, seed)
    assert np.array_equal(s.X, stream[kept])
    assert np.bincount(s.y, minlength=2).tolist() == [per_class, per_class]
    assert s.provenance["raw_draws"] == used


def test_balanced_rare_class_draw_count():
    # class 1 covers 10% of the domain, so 10 per class takes ~100 draws
    dist = SamplingDistribution.uniform(Domain([0.0], [1.0]))
    oracle = Oracle(Threshold(0.9), dim=1, n_classes=2)
    draws = []
    for seed in range(100):
        s = generate_balanced(oracle, dist, 10, 10_000, seed)
        assert np.bincount(s.y).tolist() == [10, 10]
        draws.append(s.provenance["raw_draws"])
    assert 80 <= np.mean(draws) <= 130


def test_balanced_unreachable_quota():
    oracle = Oracle(Constant(0), dim=2, n_classes=2)
    with pytest.raises(QuotaUnreachable) as info:
        generate_balanced(oracle, SamplingDistribution.uniform(2), 5, 2000, seed=0)
    assert info.value.starving == (1,)
    assert info.value.counts == (5, 0)
    assert info.value.draws == 2000


def test_balanced_rejects_small_budget(threshold_oracle):
    with pytest.raises(ValueError):
        generate_balanced(threshold_oracle, SamplingDistribution.uniform(1), 10, 15, seed=0)


def test_volume_report_two_class():
    s = SyntheticSet(np.zeros((100, 1)), [1] * 10 + [0] * 90, k=2)
    vr = volume_report(s)
    assert vr.counts == (90, 10)
    assert vr.fractions == (0.9, 0.1)
    assert vr.stderr_bound == pytest.approx(1 / np.sqrt(10) + 1 / np.sqrt(90))


def test_volume_report_flags_empty_class():
    s = SyntheticSet(np.zeros((4, 1)), [0, 0, 0, 0], k=2)
    vr = volume_report(s)
    assert vr.flagged == (1,)
    assert vr.stderr_bound is None


def test_volume_fraction_converges():
    dist = SamplingDistribution.uniform(Domain([0.0], [1.0]))
    oracle = Oracle(Threshold(0.9), dim=1, n_classes=2)
    errs = {}
    for n in (100, 10_000):
        fr = [volume_report(generate_raw(oracle, dist, n, seed)).fractions[1] for seed in range(100)]
        errs[n] = np.mean(np.abs(np.asarray(fr) - 0.1))
    assert errs[10_000] < errs[100] / 3


def test_volume_fraction_within_tolerance_for_most_seeds():
    dist = SamplingDistribution.uniform(Domain([0.0], [1.0]))
    oracle = Oracle(Threshold(0.9), dim=1, n_classes=2)
    hits = [abs(volume_report(generate_raw(oracle, dist, 10_000, seed)).fractions[1] - 0.1) < 0.03 for seed in range(100)]
    assert np.mean(hits) >= 0.99


def test_synthetic_csv_round_trip(tmp_path, threshold_oracle):
    s = generate_raw(threshold_oracle, SamplingDistribution.standard_normal(1), 50, seed=2)
    back = load_synthetic_csv(save_synthetic_csv(s, tmp_path / "s.csv"), k=2)
    assert np.array_equal(back.X, s.X)
    assert np.array_equal(back.y, s.y)


def test_synthetic_set_rejects_empty():
    with pytest.raises(ValueError):
        SyntheticSet(np.zeros((0, 2)), [], k=2)

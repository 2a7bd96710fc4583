import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bernoulli_ll, isotonic_mle_enumeration
from sladecomp.preprocess import (
    NonBinaryLabels,
    conflict_matrix,
    count_conflicts,
    cse_filter,
    cse_removal_order,
    dataset_order,
    isotonic_fit,
    po_labels,
)
from sladecomp.rng import make_rng
from sladecomp.slo import FeatureSpec
from sladecomp.synth import Dataset, DomainGroundTruth, generate_dataset


def _worked_example():
    # s1=(3,1), s2=(2,5), s3=(1,2): a larger x should never carry a smaller y
    x = np.array([3.0, 2.0, 1.0])
    y = np.array([1.0, 5.0, 2.0])
    return x[:, None] <= x[None, :], y


def test_worked_example_counts():
    order, y = _worked_example()
    counts = conflict_matrix(order, y).sum(axis=1)
    assert counts.tolist() == [2, 1, 1]


def test_worked_example_removal():
    order, y = _worked_example()
    removed = cse_removal_order(order, y)
    assert removed == [0]
    keep = sorted(set(range(3)) - set(removed))
    assert keep == [1, 2]


def test_monotone_dataset_has_no_conflicts():
    d = Dataset([10, 20, 30, 40], [0.5, 0.5, 0.2, 0.1], [0, 0, 1, 1])
    assert set(count_conflicts(d).values()) == {0}
    out = cse_filter(d)
    np.testing.assert_array_equal(out.delays, d.delays)
    np.testing.assert_array_equal(out.labels, d.labels)


def test_duplicate_inputs_conflict_once_each():
    d = Dataset([20, 20], [0.4, 0.4], [1, 0])
    assert count_conflicts(d) == {0: 1, 1: 1}
    out = cse_filter(d)
    assert len(out) == 1 and out.labels[0] == 0.0  # lowest index goes first


def test_cse_rejects_fractional_labels():
    with pytest.raises(NonBinaryLabels):
        cse_filter(Dataset([1, 2], [0.1, 0.2], [0.5, 1.0]))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 60))
def test_cse_output_conflict_free(seed, n):
    rng = make_rng("cse", seed)
    # coarse grid so duplicates and ties appear
    d = Dataset(rng.integers(0, 5, n) * 25.0, rng.integers(0, 5, n) / 4.0,
                (rng.uniform(size=n) < 0.5).astype(float))
    out = cse_filter(d)
    assert len(out) <= n
    assert not any(count_conflicts(out).values())


def test_cse_removal_is_greedy_max():
    d = generate_dataset(DomainGroundTruth(0.07, 8, 3), FeatureSpec(), 80, make_rng("greedy"))
    order = dataset_order(d)
    C = conflict_matrix(order, d.labels)
    alive = np.ones(len(d), bool)
    for i in cse_removal_order(order, d.labels):
        live = (C & alive[None, :] & alive[:, None]).sum(axis=1)
        live[~alive] = -1
        assert live[i] == live.max() and i == int(np.argmax(live))
        alive[i] = False


def test_po_single_sample():
    p = po_labels(Dataset([10.0], [0.5], [1.0]), 1e-7)
    assert p.labels[0] == pytest.approx(1 - 1e-7, abs=1e-12)


def test_po_two_ordered_samples_pool():
    # x1 stricter than x2 but accepted while x2 was rejected
    d = Dataset([10.0, 20.0], [0.5, 0.5], [1.0, 0.0])
    p = po_labels(d).labels
    np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-12)
    # 2-D grid oracle over the feasible set p1 <= p2
    g = np.linspace(1e-4, 1 - 1e-4, 999)
    p1, p2 = np.meshgrid(g, g, indexing="ij")
    ll = np.where(p1 <= p2, np.log(p1) + np.log(1 - p2), -np.inf)
    k = np.unravel_index(np.argmax(ll), ll.shape)
    assert abs(g[k[0]] - 0.5) < 2e-3 and abs(g[k[1]] - 0.5) < 2e-3


def test_po_incomparable_samples_untouched():
    d = Dataset([10.0, 20.0], [0.2, 0.8], [1.0, 0.0])
    p = po_labels(d, 1e-7).labels
    np.testing.assert_allclose(p, [1 - 1e-7, 1e-7], atol=1e-12)


def test_po_rejects_fractional_labels():
    with pytest.raises(NonBinaryLabels):
        po_labels(Dataset([1, 2], [0.1, 0.2], [0.5, 1.0]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_po_matches_enumeration_oracle(seed, n):
    rng = make_rng("po-oracle", seed)
    d = rng.integers(0, 4, n) * 10.0
    t = rng.integers(0, 4, n) / 4.0
    y = (rng.uniform(size=n) < 0.5).astype(float)
    order = dataset_order(Dataset(d, t, y))
    p = isotonic_fit(y, order)
    ii, jj = np.nonzero(order)
    assert np.all(p[ii] <= p[jj] + 1e-12)
    _, best = isotonic_mle_enumeration(y, order)
    assert best - bernoulli_ll(p, y) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_po_feasible_on_larger_sets(seed):
    data = generate_dataset(DomainGroundTruth(0.07, 8, 3), FeatureSpec(), 120, make_rng("po-big", seed))
    p = po_labels(data).labels
    order = dataset_order(data)
    ii, jj = np.nonzero(order)
    assert np.all(p[ii] <= p[jj] + 1e-9)
    assert np.all((p > 0) & (p < 1))


def test_isotonic_fit_handles_fractional_targets():
    # a chain with one inversion pools the two middle values
    order = np.triu(np.ones((4, 4), bool))
    np.testing.assert_allclose(isotonic_fit([0.1, 0.6, 0.4, 0.9], order), [0.1, 0.5, 0.5, 0.9], atol=1e-12)

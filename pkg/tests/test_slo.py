import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sladecomp.slo import (
    FeatureSpec,
    Ordering,
    SloVector,
    compare_partial,
    compose_e2e,
    orient_features,
    precedes,
    stricter_matrix,
    validate_decomposition,
)

delays = st.floats(0, 1e4, allow_nan=False)
thrs = st.floats(0, 100, allow_nan=False)
slos = st.builds(SloVector, delays, thrs)


@pytest.mark.parametrize(
    "a, b, expected",
    [
        ((50, 0.6), (80, 0.4), Ordering.STRICTER),
        ((50, 0.6), (50, 0.6), Ordering.EQUAL),
        ((50, 0.6), (40, 0.4), Ordering.INCOMPARABLE),
        ((80, 0.4), (50, 0.6), Ordering.LOOSER),
    ],
)
def test_compare_examples(a, b, expected):
    assert compare_partial(SloVector(*a), SloVector(*b)) is expected


@pytest.mark.parametrize("bad", [(-1.0, 0.5), (1.0, -0.1), (math.nan, 0.5), (1.0, math.inf)])
def test_slo_vector_rejects_invalid(bad):
    with pytest.raises(ValueError):
        SloVector(*bad)


@given(slos, slos)
def test_compare_antisymmetry(a, b):
    ab, ba = compare_partial(a, b), compare_partial(b, a)
    flip = {
        Ordering.STRICTER: Ordering.LOOSER,
        Ordering.LOOSER: Ordering.STRICTER,
        Ordering.EQUAL: Ordering.EQUAL,
        Ordering.INCOMPARABLE: Ordering.INCOMPARABLE,
    }
    assert ba is flip[ab]


@given(slos, slos, slos)
def test_precedes_is_transitive(a, b, c):
    if precedes(a, b) and precedes(b, c):
        assert precedes(a, c)


@given(st.lists(slos, min_size=1, max_size=8))
def test_stricter_matrix_matches_pairwise(parts):
    d = [p.delay for p in parts]
    t = [p.throughput for p in parts]
    M = stricter_matrix(d, t)
    for i, a in enumerate(parts):
        for j, b in enumerate(parts):
            assert M[i, j] == precedes(a, b)


@pytest.mark.parametrize(
    "parts, expected",
    [
        ([(30, 0.5), (40, 0.5), (30, 0.5)], (100, 0.5)),
        ([(10, 0.7)], (10, 0.7)),
        ([(20, 0.9), (20, 0.4)], (40, 0.4)),
    ],
)
def test_compose_examples(parts, expected):
    out = compose_e2e([SloVector(*p) for p in parts])
    assert out.delay == pytest.approx(expected[0], abs=1e-9)
    assert out.throughput == pytest.approx(expected[1], abs=1e-9)


def test_compose_empty_raises():
    with pytest.raises(ValueError):
        compose_e2e([])


@given(st.lists(slos, min_size=1, max_size=6), st.data())
def test_compose_is_permutation_invariant(parts, data):
    perm = data.draw(st.permutations(parts))
    a, b = compose_e2e(parts), compose_e2e(perm)
    assert a.throughput == b.throughput
    assert a.delay == pytest.approx(b.delay, rel=1e-12, abs=1e-9)


@given(st.lists(slos, min_size=1, max_size=6), st.integers(0, 5), delays)
def test_compose_monotone_in_each_part(parts, k, extra):
    k %= len(parts)
    looser = list(parts)
    looser[k] = SloVector(parts[k].delay + extra, parts[k].throughput)
    assert compose_e2e(looser).delay >= compose_e2e(parts).delay


@pytest.mark.parametrize(
    "parts, ok",
    [
        ([(50, 0.5), (50, 0.5)], True),
        ([(50, 0.5), (49, 0.5)], False),
        ([(50, 0.6), (50, 0.5)], True),
    ],
)
def test_validate_examples(parts, ok):
    assert validate_decomposition([SloVector(*p) for p in parts], SloVector(100, 0.5), 1e-9) is ok


def test_validate_negative_tol():
    with pytest.raises(ValueError):
        validate_decomposition([SloVector(1, 1)], SloVector(1, 1), -1.0)


@pytest.mark.parametrize(
    "s, z",
    [((100, 0.0), (1.0, 1.0)), ((0, 1.0), (0.0, 0.0)), ((50, 0.25), (0.5, 0.75))],
)
def test_orient_examples(s, z):
    out = orient_features(SloVector(*s), FeatureSpec())
    np.testing.assert_allclose(out, z, atol=1e-9)


def test_feature_spec_invariants():
    assert FeatureSpec().orientation == (1, -1)
    with pytest.raises(ValueError):
        FeatureSpec((5.0, 5.0))
    with pytest.raises(ValueError):
        FeatureSpec((0.0, 1.0), (2.0, 1.0))


@given(slos, slos)
def test_orientation_preserves_order(a, b):
    if precedes(a, b):
        spec = FeatureSpec()
        za, zb = orient_features(a, spec), orient_features(b, spec)
        assert np.all(za <= zb)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sladecomp.losses import bce_loss, dp_loss, dp_points, mol_loss, mol_pair_loss, reg_loss
from sladecomp.mlp import Mlp
from sladecomp.rng import make_rng
from sladecomp.slo import FeatureSpec, SloVector


def test_bce_examples():
    assert bce_loss([0.5, 0.5], [1, 0]) == pytest.approx(math.log(2), abs=1e-9)
    assert bce_loss([1.0], [1.0], 1e-7) == pytest.approx(-math.log1p(-1e-7), abs=1e-9)
    assert bce_loss([1.0], [1.0], 1e-7) == pytest.approx(1e-7, rel=1e-6)
    assert bce_loss([0.9], [0.5]) == pytest.approx(-0.5 * math.log(0.9) - 0.5 * math.log(0.1), abs=1e-9)
    assert bce_loss([0.9], [0.5]) == pytest.approx(1.2040, abs=1e-4)


def test_bce_length_mismatch():
    with pytest.raises(ValueError):
        bce_loss([0.5, 0.5], [1.0])


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=20))
def test_bce_finite_and_nonnegative(pairs):
    p, y = zip(*pairs)
    v = bce_loss(p, y)
    assert math.isfinite(v) and v >= 0.0


@pytest.mark.parametrize(
    "weights, expected",
    [([[0.5, -0.5]], 0.25), ([[0.5, 2.0]], 0.0), ([[-1.0, -2.0]], 5.0)],
)
def test_reg_examples(weights, expected):
    assert reg_loss([np.array(w) for w in weights]) == pytest.approx(expected, abs=1e-9)


def test_mol_examples():
    order = np.array([[True, True], [False, True]])
    assert mol_pair_loss(order, np.array([0.8, 0.3])) == pytest.approx(0.5, abs=1e-9)
    inc = [SloVector(10, 0.2), SloVector(5, 0.1)]
    assert mol_loss(inc, [0.9, 0.1]) == 0.0
    ok = [SloVector(10, 0.5), SloVector(20, 0.5), SloVector(30, 0.1)]
    assert mol_loss(ok, [0.2, 0.4, 0.9]) == 0.0
    assert mol_loss([SloVector(10, 0.5), SloVector(20, 0.5)], [0.8, 0.3]) == pytest.approx(0.5, abs=1e-9)


def test_mol_equal_inputs_count_both_directions():
    same = [SloVector(10, 0.5), SloVector(10, 0.5)]
    assert mol_loss(same, [0.7, 0.4]) == pytest.approx(0.3, abs=1e-12)


def test_mol_length_mismatch():
    with pytest.raises(ValueError):
        mol_loss([SloVector(1, 1)], [0.1, 0.2])


def test_dp_awet_is_zero():
    m = Mlp(awet=True).init_weights(make_rng("dp-awet"))
    m.biases[0][:] = 0.3
    assert dp_loss(m, FeatureSpec(), 256, make_rng(1)) == 0.0


def test_dp_forced_negative_slope_positive():
    m = Mlp().init_weights(make_rng("dp-neg"))
    for W in m.weights:
        W[...] = np.abs(W)
    m.weights[0][...] *= -1.0
    assert dp_loss(m, FeatureSpec(), 64, make_rng(2)) > 0.0


def test_dp_points_in_unit_square():
    pts = dp_points(1000, make_rng(0))
    assert pts.shape == (1000, 2) and pts.min() >= 0 and pts.max() <= 1
    with pytest.raises(ValueError):
        dp_points(0, make_rng(0))

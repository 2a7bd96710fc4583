"""The compiled kernel against the numpy engine and finite differences."""

import numpy as np
import pytest

from sladecomp import _fast
from sladecomp.mlp import Adam, Mlp
from sladecomp.rng import make_rng
from sladecomp.slo import stricter_matrix
from sladecomp.train import MethodKind, TrainConfig, reference_epoch

CFG = TrainConfig()
CASES = [
    (MethodKind.VANILLA, False),
    (MethodKind.AWET, True),
    (MethodKind.REGULARISED, False),
    (MethodKind.MOL, False),
    (MethodKind.DP, False),
]
CODES = {MethodKind.REGULARISED: _fast.REG, MethodKind.MOL: _fast.MOL, MethodKind.DP: _fast.DP}
WEIGHT = {MethodKind.REGULARISED: CFG.k_reg, MethodKind.MOL: CFG.k_mol, MethodKind.DP: CFG.k_dp}


def _problem(tag, n=37):
    rng = make_rng("fast", tag)
    d, t = rng.uniform(0, 100, n), rng.uniform(0, 1, n)
    Z = np.stack([d / 100, 1 - t], axis=1)
    y = (rng.uniform(size=n) < 0.5).astype(float)
    return rng, Z, y, stricter_matrix(d, t)


@pytest.mark.parametrize("method, awet", CASES, ids=lambda c: str(c))
def test_one_epoch_matches_reference(method, awet):
    rng, Z, y, order = _problem(method.value)
    n = len(y)
    ref = Mlp(awet=awet).init_weights(rng)
    ker = ref.copy()
    perm = rng.permutation(n)
    steps = _fast.n_steps(n, CFG.batch_size)
    n_pts = CFG.dp_points_per_step if method is MethodKind.DP else 0
    pts = rng.uniform(0, 1, (1, steps, n_pts, 2))

    opt = Adam(ref.n_params, lr=CFG.learning_rate)
    total, ref_steps = reference_epoch(ref, opt, method, CFG, Z, y, perm, order, pts[0])

    m, v = np.zeros(ker.n_params), np.zeros(ker.n_params)
    adam_state = np.zeros(1, dtype=np.int64)
    es = np.array([np.inf, 0.0, 0.0, 0.0])
    bp, bm, bv = ker.state()
    tl, vl, stamps = np.empty(1), np.empty(1), np.zeros(1)
    done, flag = _fast.fit_chunk(
        ker.params, np.array(ker.widths, dtype=np.int64), awet, ker.bn_mean, ker.bn_var, ker.momentum,
        Z, y, Z[:5], y[:5], perm[None, :], CFG.batch_size, CFG.eps_clip, CODES.get(method, _fast.PLAIN),
        WEIGHT.get(method, 0.0), order, pts, m, v, adam_state, CFG.learning_rate, 0.9, 0.999, 1e-8,
        bp, bm, bv, es, 100, 5000, tl, vl, stamps, False,
    )
    assert (done, flag) == (1, 0)
    assert adam_state[0] == ref_steps == opt.t
    np.testing.assert_allclose(ker.params, ref.params, rtol=0, atol=1e-10)
    np.testing.assert_allclose(ker.bn_mean, ref.bn_mean, rtol=0, atol=1e-10)
    np.testing.assert_allclose(ker.bn_var, ref.bn_var, rtol=0, atol=1e-10)
    assert tl[0] == pytest.approx(total / ref_steps, abs=1e-10)


@pytest.mark.parametrize("method, awet", CASES, ids=lambda c: str(c))
def test_batch_gradient_matches_fd(method, awet):
    rng, Z, y, order = _problem("fd" + method.value, n=12)
    net = Mlp(awet=awet).init_weights(rng)
    net.params[:] += rng.normal(0, 0.1, net.n_params)
    net.bn_var[:] = rng.uniform(0.5, 1.5, len(net.bn_var))
    widths = np.array(net.widths, dtype=np.int64)
    idx = np.arange(12)
    pts = rng.uniform(0, 1, (4, 2))
    if method is MethodKind.DP:
        # make some input slopes negative so the penalty is active
        net.weights[0][:, 0] = -np.abs(net.weights[0][:, 0])
    code, k = CODES.get(method, _fast.PLAIN), WEIGHT.get(method, 0.0)

    def loss(grad):
        return _fast.batch_loss_grad(net.params, widths, awet, net.bn_mean, net.bn_var, net.momentum,
                                     Z, y, idx, CFG.eps_clip, code, k, order, pts, grad, False)

    g = np.zeros(net.n_params)
    loss(g)
    h, scratch = 1e-5, np.zeros(net.n_params)
    num = np.zeros_like(g)
    for i in range(net.n_params):
        old = net.params[i]
        net.params[i] = old + h
        fp = loss(scratch)
        net.params[i] = old - h
        fm = loss(scratch)
        net.params[i] = old
        num[i] = (fp - fm) / (2 * h)
    err = np.max(np.abs(g - num)) / max(np.max(np.abs(g)), np.max(np.abs(num)))
    assert err < 1e-4


def test_kernel_predict_matches_numpy():
    rng, Z, _, _ = _problem("predict")
    for awet in (False, True):
        net = Mlp(awet=awet).init_weights(rng)
        net.bn_mean[:] = rng.normal(0, 0.1, len(net.bn_mean))
        out = _fast.predict(net.params, np.array(net.widths, dtype=np.int64), awet, net.bn_mean,
                            net.bn_var, Z)
        np.testing.assert_allclose(out, net.predict(Z), rtol=0, atol=1e-13)


def test_n_steps_skips_single_sample_tail():
    assert _fast.n_steps(32, 16) == 2
    assert _fast.n_steps(33, 16) == 2
    assert _fast.n_steps(34, 16) == 3

import math

import numpy as np
import pytest

from conftest import max_rel_err, numeric_grad
from emoattn import model as M
from emoattn import tensor_core as tc
from modelcases import end_to_end_error, tiny_config, toy_batch


def _vm(vocab=6, embed=3, seed=0):
    m = np.random.default_rng(seed).normal(size=(vocab, embed))
    m[0] = 0
    return m


def test_config_validation():
    with pytest.raises(ValueError, match="divisible"):
        M.ModelConfig(d_e=30, h=4)
    with pytest.raises(ValueError):
        M.ModelConfig(p_drop=1.0)
    with pytest.raises(ValueError):
        M.ModelConfig(d_f=0)
    with pytest.raises(ValueError, match="unknown"):
        M.ModelConfig.from_dict({"dropout": 0.2})


def test_config_round_trip():
    c = M.ModelConfig(conv_widths=[2, 3], use_nrc1=True)
    assert M.ModelConfig.from_dict(c.to_dict()) == c


def test_init_deterministic_per_seed():
    c = tiny_config()
    a, b = M.init_params(c, _vm(), 1), M.init_params(c, _vm(), 1)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    d = M.init_params(c, _vm(), 2)
    assert any(not np.array_equal(a[k], d[k]) for k in a)


def test_init_bounds_and_constants():
    c = M.ModelConfig()
    params = M.init_params(c, _vm(embed=300), 0)
    for name, v in params.items():
        assert np.all(np.isfinite(v))
        if name == "embedding":
            continue
        if M.is_weight(name):
            if name.endswith(".F"):
                k, d, f = v.shape
                fan = k * d + f
            elif v.ndim == 1:
                fan = v.shape[0] + 1
            else:
                fan = v.shape[0] + v.shape[1]
            assert np.abs(v).max() <= math.sqrt(6 / fan), name
        elif name.endswith(".gain"):
            assert np.all(v == 1)
        else:
            assert np.all(v == 0), name


def test_init_rejects_nonzero_pad_row():
    vm = _vm()
    vm[0, 0] = 1.0
    with pytest.raises(ValueError):
        M.init_params(tiny_config(), vm, 0)


def test_param_shapes_defaults():
    shapes = M.param_shapes(M.ModelConfig(), 300)
    assert shapes["proj.W"] == (300, 30)
    assert shapes["layers.2.W"] == (30, 90)
    assert shapes["layers.0.W_O"] == (30, 30)
    assert shapes["layers.1.ffn.W1"] == (30, 64)
    assert shapes["heads.joy.conv4.F"] == (4, 30, 32)
    assert shapes["heads.anger.fc.w"] == (96,)
    assert "layers.3.W" not in shapes
    assert len({k for k in shapes if k.startswith("heads.")}) == 11 * 8


def test_nrc1_widens_fc():
    assert M.param_shapes(M.ModelConfig(use_nrc1=True), 300)["heads.joy.fc.w"] == (107,)


def test_no_attention_has_no_layer_tensors():
    params = M.init_params(tiny_config(use_attention=False), _vm(), 0)
    assert not any(k.startswith("layers.") for k in params)
    full = M.init_params(tiny_config(), _vm(), 0)
    assert set(params) < set(full)


def test_l2_covers_weights_only():
    assert M.is_weight("layers.0.W") and M.is_weight("layers.0.W_O")
    assert M.is_weight("heads.joy.conv3.F") and M.is_weight("heads.joy.fc.w")
    assert not M.is_weight("heads.joy.fc.b")
    assert not M.is_weight("layers.0.ln1.gain")
    assert not M.is_weight("embedding")


def _block_inputs(seed, config, B=1, n=3):
    rng = np.random.default_rng(seed)
    params = M.init_params(config, _vm(embed=config.d_e), seed)
    lp = {k[len("layers.0."):]: v for k, v in params.items() if k.startswith("layers.0.")}
    for k in lp:
        lp[k] = lp[k] + 0.2 * rng.normal(size=lp[k].shape)
    X = rng.normal(size=(B, n, config.d_e))
    return X, lp, rng


def test_attention_block_single_token():
    config = tiny_config(p_drop=0.0)
    X, lp, _ = _block_inputs(0, config, n=1)
    out, _ = M.attention_block(X, lp, np.ones((1, 1)), None, False, config)
    d = config.d_e
    V = X @ lp["W"][:, 2 * d:]
    X1, _ = tc.layer_norm(X + V @ lp["W_O"], lp["ln1.gain"], lp["ln1.bias"], config.ln_eps)
    F, _ = tc.ffn(X1, lp["ffn.W1"], lp["ffn.b1"], lp["ffn.W2"], lp["ffn.b2"])
    expected, _ = tc.layer_norm(X1 + F, lp["ln2.gain"], lp["ln2.bias"], config.ln_eps)
    assert np.allclose(out, expected, atol=1e-12)


def test_head_split_matters():
    X, lp, _ = _block_inputs(3, tiny_config(p_drop=0.0), n=2)
    mask = np.ones((1, 2))
    one, _ = M.attention_block(X, lp, mask, None, False, tiny_config(h=1, p_drop=0.0))
    two, _ = M.attention_block(X, lp, mask, None, False, tiny_config(h=2, p_drop=0.0))
    assert not np.allclose(one, two)


@pytest.mark.parametrize("seed", range(3))
def test_attention_block_gradients(seed):
    config = tiny_config(p_drop=0.2)
    X, lp, rng = _block_inputs(seed, config, B=2, n=3)
    mask = np.array([[1, 1, 1], [1, 1, 0]])
    drop = int(rng.integers(1 << 30))

    def run():
        return M.attention_block(X, lp, mask, np.random.default_rng(drop), True, config)

    out, cache = run()
    R = rng.normal(size=out.shape)
    dX, g = M.attention_block_backward(R, cache)
    f = lambda: float(np.sum(R * run()[0]))
    assert max_rel_err(dX, numeric_grad(f, X)) <= 1e-6
    for k in lp:
        assert max_rel_err(g[k], numeric_grad(f, lp[k])) <= 1e-6, k


def test_forward_shape_and_range():
    rng = np.random.default_rng(0)
    vm, ids, mask, _, lex = toy_batch(rng)
    config = tiny_config(use_nrc1=True)
    trace = M.forward(ids, mask, M.init_params(config, vm, 0), config, lex)
    assert trace.probs.shape == (2, 11)
    assert np.all((trace.probs > 0) & (trace.probs < 1))


def test_forward_requires_lexvecs_for_nrc1():
    rng = np.random.default_rng(0)
    vm, ids, mask, _, _ = toy_batch(rng)
    config = tiny_config(use_nrc1=True)
    with pytest.raises(ValueError):
        M.forward(ids, mask, M.init_params(config, vm, 0), config)


def test_attention_switch_changes_output():
    rng = np.random.default_rng(1)
    vm, ids, mask, _, _ = toy_batch(rng)
    a = M.forward(ids, mask, M.init_params(tiny_config(), vm, 0), tiny_config())
    b = M.forward(ids, mask, M.init_params(tiny_config(use_attention=False), vm, 0),
                  tiny_config(use_attention=False))
    assert not np.allclose(a.probs, b.probs)


@pytest.mark.parametrize("extra", [1, 3, 7])
def test_padding_invariance(extra):
    config = M.ModelConfig(d_e=6, h=2, d_f=5, num_layers=2, filters_per_width=2)
    vm = _vm(vocab=8, embed=4)
    params = M.init_params(config, vm, 0)
    ids = np.array([[3, 1, 4, 1, 5, 2]])
    base = M.forward(ids, ids != 0, params, config).probs
    padded = np.pad(ids, ((0, 0), (0, extra)))
    assert np.allclose(M.forward(padded, padded != 0, params, config).probs, base, rtol=0, atol=1e-12)


def test_short_sentence_is_padded_internally():
    config = M.ModelConfig(d_e=6, h=2, d_f=5, num_layers=1, filters_per_width=2)
    params = M.init_params(config, _vm(vocab=8, embed=4), 0)
    ids = np.array([[3, 1]])
    a = M.forward(ids, ids != 0, params, config).probs
    b = M.forward(np.pad(ids, ((0, 0), (0, 4))), np.pad(ids != 0, ((0, 0), (0, 4))), params, config).probs
    assert np.allclose(a, b, atol=1e-12)


def test_batch_rows_are_independent():
    rng = np.random.default_rng(2)
    vm, ids, mask, _, _ = toy_batch(rng, B=3)
    config = tiny_config()
    params = M.init_params(config, vm, 0)
    together = M.forward(ids, mask, params, config).probs
    alone = M.forward(ids[1:2], mask[1:2], params, config).probs
    assert np.allclose(together[1:2], alone, atol=1e-12)


def test_eval_forward_is_deterministic():
    rng = np.random.default_rng(3)
    vm, ids, mask, _, _ = toy_batch(rng)
    config = tiny_config()
    params = M.init_params(config, vm, 0)
    a = M.forward(ids, mask, params, config, training=False).probs
    b = M.forward(ids, mask, params, config, training=False).probs
    assert np.array_equal(a, b)


def test_loss_without_l2_equals_bce():
    rng = np.random.default_rng(4)
    vm, ids, mask, labels, _ = toy_batch(rng)
    config = tiny_config(l2_coeff=0.0)
    params = M.init_params(config, vm, 0)
    trace = M.forward(ids, mask, params, config)
    assert M.loss(trace, labels, params, config) == tc.bce_sum_loss(trace.logits, labels)[0]


def test_zero_weights_give_eleven_ln2():
    rng = np.random.default_rng(5)
    vm, ids, mask, _, _ = toy_batch(rng)
    config = tiny_config()
    params = {k: (v if k == "embedding" else np.zeros_like(v)) for k, v in M.init_params(config, vm, 0).items()}
    trace = M.forward(ids, mask, params, config)
    assert np.all(trace.logits == 0)
    assert M.loss(trace, np.ones((2, 11)), params, config) == pytest.approx(11 * math.log(2), rel=1e-14)


def test_doubling_a_weight_quadruples_its_penalty():
    params = M.init_params(tiny_config(), _vm(), 0)
    only = {"proj.W": params["proj.W"]}
    assert M.l2_penalty({"proj.W": 2 * only["proj.W"]}) == pytest.approx(4 * M.l2_penalty(only))


@pytest.mark.parametrize("logit, flag, coeff, expected", [
    (0.2, 1, 0.4, 0.6), (0.2, 0, 0.4, 0.2), (-1.3, 1, 0.0, -1.3),
])
def test_apply_nrc2(logit, flag, coeff, expected):
    out = M.apply_nrc2(np.full((1, 11), logit), np.full((1, 11), flag), coeff)
    assert out[0, 0] == pytest.approx(expected, abs=1e-15)


def test_nrc2_does_not_touch_training_loss():
    rng = np.random.default_rng(6)
    vm, ids, mask, labels, lex = toy_batch(rng)
    off, on = tiny_config(p_drop=0.0), tiny_config(p_drop=0.0, use_nrc2=True)
    params = M.init_params(off, vm, 0)
    l_off, _, _ = M.loss_and_grads(ids, mask, labels, params, off, lex)
    l_on, _, _ = M.loss_and_grads(ids, mask, labels, params, on, lex)
    assert l_off == l_on


def test_predict_proba_applies_nrc2():
    rng = np.random.default_rng(7)
    vm, ids, mask, _, lex = toy_batch(rng)
    params = M.init_params(tiny_config(), vm, 0)
    plain = M.predict_proba(ids, mask, params, tiny_config(), lex)
    boosted = M.predict_proba(ids, mask, params, tiny_config(use_nrc2=True), lex)
    logit = np.log(plain / (1 - plain))
    assert np.allclose(boosted, tc.sigmoid(logit + 0.4 * (lex > 0)), atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_end_to_end_gradients(seed):
    assert end_to_end_error(seed) <= 1e-5


def test_end_to_end_gradients_nrc1_no_attention():
    assert end_to_end_error(11, use_nrc1=True, use_attention=False) <= 1e-5

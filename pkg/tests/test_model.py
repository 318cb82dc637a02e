import numpy as np
import pytest

from oracles import finite_difference_errors, lstm_cell, mean_xent
from holdpose.core import BinaryLabel
from holdpose.model import (
    LinearParams,
    ModelConfig,
    forward,
    init_linear,
    init_params,
    layer_outputs,
    load_checkpoint,
    loss_and_grad,
    predict,
    save_checkpoint,
    swap_directions,
    tensor_name,
)


def tiny(seed=0, head="both_terminal", D=5, H=8):
    return init_params(ModelConfig(D, H, head=head, dtype="float64"), seed=seed)


def batch(seed=0, B=3, T=4, D=5):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(B, T, D)), rng.integers(0, 2, B)


def test_shapes_and_forget_bias():
    p = init_params(ModelConfig(7, 6), seed=3)
    assert p.tensors["l0_fwd_Wx"].shape == (24, 7)
    assert p.tensors["l1_bwd_Wx"].shape == (24, 12)
    assert p.tensors["l1_fwd_Wh"].shape == (24, 6)
    assert p.tensors["head_W"].shape == (2, 12)
    b = p.tensors["l0_fwd_b"]
    assert np.all(b[6:12] > 0.5) and np.all(np.abs(b[:6]) <= 1 / np.sqrt(6))


def test_zero_weights_give_zero_logits():
    p = tiny()
    for w in p.tensors.values():
        w[...] = 0.0
    X, _ = batch()
    np.testing.assert_array_equal(forward(p, X), np.zeros((3, 2)))


def test_dropout_off_is_deterministic_and_dropout_needs_rng():
    p = tiny()
    X, _ = batch()
    assert forward(p, X).tobytes() == forward(p, X).tobytes()
    with pytest.raises(ValueError):
        forward(p, X, dropout_rate=0.5)
    a = forward(p, X, 0.5, np.random.default_rng(1))
    b = forward(p, X, 0.5, np.random.default_rng(1))
    assert a.tobytes() == b.tobytes()


def test_single_step_matches_hand_computation():
    p = tiny(seed=4)
    x = np.random.default_rng(4).normal(size=(1, 5))
    P = p.tensors
    h0, c0 = np.zeros(8), np.zeros(8)
    hf, _ = lstm_cell(x[0], h0, c0, P["l0_fwd_Wx"], P["l0_fwd_Wh"], P["l0_fwd_b"])
    hb, _ = lstm_cell(x[0], h0, c0, P["l0_bwd_Wx"], P["l0_bwd_Wh"], P["l0_bwd_b"])
    z = np.concatenate([hf, hb])
    hf2, _ = lstm_cell(z, h0, c0, P["l1_fwd_Wx"], P["l1_fwd_Wh"], P["l1_fwd_b"])
    hb2, _ = lstm_cell(z, h0, c0, P["l1_bwd_Wx"], P["l1_bwd_Wh"], P["l1_bwd_b"])
    expected = P["head_W"] @ np.concatenate([hf2, hb2]) + P["head_b"]
    np.testing.assert_allclose(forward(p, x), expected, rtol=1e-12, atol=1e-14)


def test_multi_step_matches_unrolled_cells():
    p = tiny(seed=5)
    X = np.random.default_rng(5).normal(size=(6, 5))
    P = p.tensors

    def run(seq, layer, d):
        h, c, out = np.zeros(8), np.zeros(8), []
        for x in seq:
            h, c = lstm_cell(x, h, c, P[tensor_name(layer, d, "Wx")], P[tensor_name(layer, d, "Wh")],
                             P[tensor_name(layer, d, "b")])
            out.append(h)
        return np.array(out)

    f0, b0 = run(X, 0, "fwd"), run(X[::-1], 0, "bwd")[::-1]
    mid = np.hstack([f0, b0])
    f1, b1 = run(mid, 1, "fwd"), run(mid[::-1], 1, "bwd")[::-1]
    outs = layer_outputs(p, X)
    np.testing.assert_allclose(outs[1]["fwd"][0], f1, atol=1e-13)
    np.testing.assert_allclose(outs[1]["bwd"][0], b1, atol=1e-13)
    expected = P["head_W"] @ np.concatenate([f1[-1], b1[0]]) + P["head_b"]
    np.testing.assert_allclose(forward(p, X), expected, atol=1e-13)


def test_last_index_head_reads_backward_state_at_final_step():
    p = tiny(seed=6, head="last_index")
    X = np.random.default_rng(6).normal(size=(5, 5))
    outs = layer_outputs(p, X)
    feat = np.concatenate([outs[1]["fwd"][0, -1], outs[1]["bwd"][0, -1]])
    np.testing.assert_allclose(forward(p, X), p.tensors["head_W"] @ feat + p.tensors["head_b"], atol=1e-13)


def test_equal_logits_give_ln2():
    p = tiny()
    p.tensors["head_W"][...] = 0.0
    p.tensors["head_b"][...] = 0.0
    X, y = batch()
    loss, _ = loss_and_grad(p, X, y)
    assert loss == pytest.approx(np.log(2.0), abs=1e-15)


def test_duplicated_example_same_loss():
    p = tiny()
    X, y = batch(B=1)
    one, _ = loss_and_grad(p, X, y)
    many, _ = loss_and_grad(p, np.repeat(X, 5, axis=0), np.repeat(y, 5))
    assert many == pytest.approx(one, rel=1e-12)


def test_batch_order_invariance():
    p = tiny()
    X, _ = batch(B=7)
    perm = np.random.default_rng(0).permutation(7)
    np.testing.assert_allclose(forward(p, X)[perm], forward(p, X[perm]), atol=1e-14)


@pytest.mark.parametrize("head", ["both_terminal", "last_index"])
def test_gradients_match_finite_differences(head):
    p = tiny(seed=2, head=head)
    X, y = batch(2)
    loss, grads = loss_and_grad(p, X, y)
    assert loss == pytest.approx(mean_xent(forward(p, X), y), abs=1e-14)
    errs = finite_difference_errors(lambda: mean_xent(forward(p, X), y), p.tensors, grads)
    assert set(errs) == set(p.tensors)
    assert max(errs.values()) < 1e-4, errs


def test_gradient_with_dropout_mask():
    p = tiny(seed=3)
    X, y = batch(3)
    loss, grads = loss_and_grad(p, X, y, 0.3, np.random.default_rng(9))
    f = lambda: loss_and_grad(p, X, y, 0.3, np.random.default_rng(9))[0]
    small = {k: p.tensors[k] for k in ("l1_fwd_Wx", "l0_bwd_b", "head_W")}
    errs = finite_difference_errors(f, small, grads)
    assert max(errs.values()) < 1e-4, errs


def test_linear_gradients():
    lp = init_linear(4, 5, seed=0, dtype="float64")
    X, y = batch(4)
    loss, grads = loss_and_grad(lp, X, y)
    errs = finite_difference_errors(lambda: mean_xent(forward(lp, X), y), lp.tensors, grads)
    assert max(errs.values()) < 1e-6
    with pytest.raises(ValueError):
        forward(lp, X[:, :3])


def test_bidirectionality_swap():
    p = tiny(seed=7)
    X = np.random.default_rng(7).normal(size=(2, 6, 5))
    q = swap_directions(p)
    a = layer_outputs(p, X)
    b = layer_outputs(q, X[:, ::-1])
    for layer in range(2):
        np.testing.assert_allclose(b[layer]["fwd"], a[layer]["bwd"][:, ::-1], atol=1e-13)
        np.testing.assert_allclose(b[layer]["bwd"], a[layer]["fwd"][:, ::-1], atol=1e-13)
    np.testing.assert_allclose(forward(q, X[:, ::-1]), forward(p, X), atol=1e-13)


def test_predict_tie_break_and_order():
    p = tiny()
    p.tensors["head_W"][...] = 0.0
    p.tensors["head_b"][...] = (2.0, -1.0)
    x = np.zeros((4, 5))
    assert predict(p, x) is BinaryLabel.STABLE
    p.tensors["head_b"][...] = 0.0
    assert predict(p, x) is BinaryLabel.STABLE
    p.tensors["head_b"][...] = (0.0, 1e-9)
    assert predict(p, x) is BinaryLabel.NOT_STABLE


def test_errors():
    p = tiny()
    X, y = batch()
    with pytest.raises(ValueError):
        forward(p, X[..., :4])
    with pytest.raises(ValueError):
        loss_and_grad(p, X[:0], y[:0])
    bad = X.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        loss_and_grad(p, bad, y)
    with pytest.raises(ValueError):
        ModelConfig(5, 8, head="middle")


def test_checkpoint_round_trip(tmp_path):
    p = init_params(ModelConfig(5, 8), seed=1)
    save_checkpoint(tmp_path / "m.npz", p, {"seed": 1, "note": "x"})
    q, extra = load_checkpoint(tmp_path / "m.npz")
    assert extra == {"seed": 1, "note": "x"}
    assert q.config == p.config
    assert set(q.tensors) == set(p.tensors)
    for k in p.tensors:
        assert q.tensors[k].dtype == p.tensors[k].dtype
        assert q.tensors[k].tobytes() == p.tensors[k].tobytes()
    lp = init_linear(3, 4, seed=2)
    save_checkpoint(tmp_path / "l.npz", lp)
    lq, _ = load_checkpoint(tmp_path / "l.npz")
    assert isinstance(lq, LinearParams) and lq.tensors["weight"].tobytes() == lp.tensors["weight"].tobytes()

import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from duetreact import autodiff as ad
from duetreact.autodiff import checkpoint
from duetreact.autodiff.gradcheck import CASES, check_case, run_all

floats = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("name", sorted(CASES))
def test_op_matches_central_differences(name):
    worst = run_all(points=3, seed=7, cases={name: CASES[name]})[name]
    assert worst <= 1e-6


def test_finite_diff_check_flags_a_wrong_backward():
    x = ad.Tensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)

    def bad_square(a):
        out = ad.square(a)
        out._backward = lambda g: (g * a.data,)  # missing factor 2
        return out

    assert check_case(bad_square, [x.data], np.random.default_rng(0)) > 0.1


@given(hnp.arrays(np.float64, (3, 1), elements=floats), hnp.arrays(np.float64, (4,), elements=floats))
def test_broadcast_gradients_reduce_to_operand_shape(a, b):
    ta, tb = ad.Tensor(a, requires_grad=True), ad.Tensor(b, requires_grad=True)
    ga, gb = ad.gradient(ad.sum_(ta * tb), [ta, tb])
    np.testing.assert_allclose(ga, np.broadcast_to(b.sum(), (3, 1)), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(gb, np.full(4, a.sum()), rtol=1e-12, atol=1e-12)


def test_gradients_accumulate_over_reused_nodes():
    x = ad.Tensor(np.array(1.5), requires_grad=True)
    y = x * x + x * 3.0
    (g,) = ad.gradient(y, [x])
    assert g == pytest.approx(2 * 1.5 + 3.0, abs=1e-15)


def test_stop_gradient_blocks_and_straight_through_passes():
    x = ad.Tensor(np.array([1.0, -2.0]), requires_grad=True)
    (g,) = ad.gradient(ad.sum_(ad.stop_gradient(x) * 5.0), [x], warn_unreachable=False)
    assert np.array_equal(g, np.zeros(2))
    q = np.array([0.25, 7.0])
    st_out = x + ad.stop_gradient(ad.Tensor(q) - x)
    assert np.array_equal(st_out.data, q)
    (g,) = ad.gradient(ad.sum_(st_out), [x])
    assert np.array_equal(g, np.ones(2))


def test_unreachable_tensor_warns_and_gets_zero():
    x = ad.Tensor(np.ones(2), requires_grad=True, name="orphan")
    y = ad.Tensor(np.ones(2), requires_grad=True)
    with pytest.warns(RuntimeWarning, match="orphan"):
        gx, _ = ad.gradient(ad.sum_(y), [x, y])
    assert np.array_equal(gx, np.zeros(2))


def test_non_scalar_loss_is_rejected():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ad.ShapeError):
        ad.gradient(x * 2.0, [x])


def test_shape_errors_name_the_op():
    with pytest.raises(ad.ShapeError, match="matmul"):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((4, 2))))


def test_no_grad_records_nothing_and_is_thread_local():
    import threading

    x = ad.Tensor(np.ones(2), requires_grad=True)
    seen = {}

    def other():
        seen["enabled"] = ad.is_grad_enabled()

    with ad.no_grad():
        y = x * 2.0
        t = threading.Thread(target=other)
        t.start()
        t.join()
    assert not y.requires_grad and y._parents == ()
    assert seen["enabled"] is True
    assert ad.is_grad_enabled()


def test_adam_first_step_moves_by_lr_times_sign():
    p = ad.Parameter(np.array([1.0, -1.0]))
    opt = ad.Adam([p], lr=0.1, betas=(0.5, 0.999))
    p.grad = np.array([3.0, -0.5])
    opt.step()
    # bias-corrected m/sqrt(v) is sign(g) up to eps on step one
    np.testing.assert_allclose(p.data, [0.9, -0.9], atol=1e-7)


def test_adamw_decays_weights_without_gradient_coupling():
    p = ad.Parameter(np.array([2.0]))
    opt = ad.AdamW([p], lr=0.1, weight_decay=0.5)
    p.grad = np.array([0.0])
    opt.step()
    assert p.data[0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0, abs=1e-12)


def test_step_decay_milestones():
    opt = ad.Adam([ad.Parameter(np.zeros(1))], lr=1.0)
    sched = ad.StepDecay(opt, [2, 4], gamma=0.1)
    lrs = []
    for epoch in range(6):
        sched.set_epoch(epoch)
        lrs.append(opt.lr)
    np.testing.assert_allclose(lrs, [1, 1, 0.1, 0.1, 0.01, 0.01], rtol=1e-12)


def test_clip_grad_norm_caps_global_norm():
    a, b = ad.Parameter(np.zeros(2)), ad.Parameter(np.zeros(1))
    a.grad, b.grad = np.array([3.0, 0.0]), np.array([4.0])
    total = ad.clip_grad_norm([a, b], 1.0)
    assert total == pytest.approx(5.0)
    assert np.sqrt((a.grad ** 2).sum() + (b.grad ** 2).sum()) == pytest.approx(1.0, abs=1e-9)


class _Tiny(ad.Module):
    def __init__(self, rng):
        self.lin = ad.Linear(3, 2, rng)
        self.blocks = [ad.LayerNorm(2)]
        self.stats = {"mean": np.zeros(3)}


def test_state_dict_round_trip_includes_buffers(tmp_path, rng):
    m = _Tiny(rng)
    m.stats["mean"] = np.array([1.0, 2.0, 3.0])
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, m.state_dict())
    other = _Tiny(np.random.default_rng(99))
    other.load_state_dict(checkpoint.load(path))
    for (n1, p1), (n2, p2) in zip(m.named_parameters(), other.named_parameters()):
        assert n1 == n2 and np.array_equal(p1.data, p2.data)
    assert np.array_equal(other.stats["mean"], [1.0, 2.0, 3.0])
    assert "stats.mean" in m.state_dict()


def test_strict_load_reports_missing_keys(rng):
    m = _Tiny(rng)
    state = m.state_dict()
    del state["stats.mean"]
    with pytest.raises(KeyError, match="stats.mean"):
        m.load_state_dict(state)


def test_checkpoint_rejects_corruption(rng):
    blob = checkpoint.dumps(_Tiny(rng).state_dict())
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"XXXXXXXX" + blob[8:])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob[:-3])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob + b"\0")


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=3, max_side=4), elements=floats))
def test_checkpoint_is_bit_exact(arr):
    out = checkpoint.loads(checkpoint.dumps({"a": arr}))["a"]
    assert out.shape == arr.shape and out.tobytes() == np.ascontiguousarray(arr).tobytes()


def test_attention_respects_key_padding_mask(rng):
    attn = ad.MultiHeadAttention(4, 2, rng)
    x = rng.normal(size=(1, 5, 4))
    mask = np.array([[True, True, True, False, False]])
    y1 = attn(ad.Tensor(x), mask).data
    x2 = x.copy()
    x2[0, 3:] = rng.normal(size=(2, 4))
    y2 = attn(ad.Tensor(x2), mask).data
    np.testing.assert_allclose(y1[0, :3], y2[0, :3], atol=1e-12)


def test_graph_validates_input_shapes():
    g = ad.Graph(lambda x: ad.sum_(x), {"x": (None, 3)})
    assert ad.evaluate(g, {"x": np.ones((2, 3))})["out"] == 6.0
    with pytest.raises(ad.ShapeError, match="x"):
        ad.evaluate(g, {"x": np.ones((2, 4))})


def test_warnings_not_raised_on_normal_backward():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ad.gradient(ad.sum_(ad.exp(x)), [x])

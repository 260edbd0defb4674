import numpy as np
import pytest

from strandgen import autodiff as ad


def test_sum_of_squares_gradient():
    w = ad.Tensor(np.array([1.0, 2.0]), requires_grad=True)
    loss = ad.reduce_sum(ad.mul(w, w))
    (g,) = ad.grad(loss, [w])
    assert np.allclose(g, [2.0, 4.0])


def test_constant_function_has_zero_gradient():
    w = ad.Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    loss = ad.reduce_sum(w * 0.0)
    (g,) = ad.grad(loss, [w])
    assert np.array_equal(g, np.zeros(3, dtype=g.dtype))


def test_non_scalar_loss_rejected():
    w = ad.Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        ad.grad(w * 1.0, [w])


def test_detached_parameter_rejected():
    w = ad.Tensor(np.ones(3), requires_grad=True)
    frozen = ad.Tensor(np.ones(3), requires_grad=False)
    loss = ad.reduce_sum(w * frozen)
    with pytest.raises(ValueError, match="detached"):
        ad.grad(loss, [frozen])


def test_shared_subexpression_accumulates():
    # y = w*w + w*w -> dy/dw = 4w
    w = ad.Tensor(np.array([3.0]), requires_grad=True)
    sq = ad.mul(w, w)
    loss = ad.reduce_sum(ad.add(sq, sq))
    (g,) = ad.grad(loss, [w])
    assert np.allclose(g, [12.0])


def test_every_registered_op_passes_fd():
    reports = ad.check_registered_ops(seed=7)
    for name, rep in reports.items():
        assert rep["passed"], f"{name}: {rep['max_rel_error']:.3e}"


def test_linear_layer_fd_is_tight():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((4, 5))
    w = rng.standard_normal((5, 3))
    b = rng.standard_normal((3,))

    def build(ps):
        return ad.reduce_sum(ad.add(ad.matmul(ps[0], ps[1]), ps[2]))

    rep = ad.finite_diff_check(build, [x, w, b])
    assert rep["max_rel_error"] < 1e-8


def test_softmax_matmul_chain_fd():
    rng = np.random.default_rng(4)
    q = rng.standard_normal((3, 4))
    k = rng.standard_normal((4, 4))

    def build(ps):
        return ad.reduce_sum(ad.matmul(ad.softmax(ps[0]), ps[1]))

    rep = ad.finite_diff_check(build, [q, k])
    assert rep["passed"]
    assert rep["max_rel_error"] < 1e-4


def test_corrupted_backward_is_attributed():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((3, 3))
    y = rng.standard_normal((3, 3))

    def corrupted_mul(a, b):
        # wrong rule: reports dL/da = g (missing the factor b)
        return ad._node("mul", (a, b), lambda p, q: p * q,
                        lambda ps, out, g: (g, g * ps[0]))

    def build(ps):
        return ad.reduce_sum(corrupted_mul(ad.silu(ps[0]), ps[1]))

    rep = ad.finite_diff_check(build, [x, y])
    assert not rep["passed"]
    assert rep["failing_op"] == "mul"


def test_random_compositions():
    for seed in range(5):
        rep = ad.random_composition_check(seed)
        assert rep["passed"], f"seed {seed}: {rep['max_rel_error']:.3e}"


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(6)
    x = ad.Tensor(rng.standard_normal((5, 7)).astype(np.float32))
    y = ad.softmax(x).data
    assert np.all(y >= 0)
    assert np.allclose(y.sum(axis=-1), 1.0, atol=1e-6)


def test_conv2d_delta_kernel_is_identity():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((3, 6, 6)).astype(np.float32)
    w = np.zeros((3, 3, 3, 3), dtype=np.float32)
    for c in range(3):
        w[c, c, 1, 1] = 1.0
    out = ad.conv2d(ad.Tensor(x), ad.Tensor(w)).data
    assert np.array_equal(out, x)


def test_conv2d_stride2_shape():
    x = ad.Tensor(np.zeros((4, 8, 8), dtype=np.float32))
    w = ad.Tensor(np.zeros((6, 4, 3, 3), dtype=np.float32))
    assert ad.conv2d(x, w, stride=2).shape == (6, 4, 4)


def test_group_norm_moments():
    rng = np.random.default_rng(9)
    x = ad.Tensor(rng.standard_normal((8, 4, 4)))
    y = ad.group_norm(x, 4).data.reshape(4, -1)
    assert np.allclose(y.mean(axis=1), 0.0, atol=1e-6)
    assert np.allclose(y.var(axis=1), 1.0, atol=1e-4)


def test_adamw_decay_only():
    params = {"w": np.array([1.0, -2.0])}
    grads = {"w": np.zeros(2)}
    state = ad.AdamWState(lr=1e-4, weight_decay=1e-3)
    ad.adamw_step(state, params, grads)
    assert np.allclose(params["w"], np.array([1.0, -2.0]) * (1 - 1e-7), rtol=0,
                       atol=1e-15)


def test_adamw_hand_computed_step():
    params = {"w": np.array([1.0])}
    grads = {"w": np.array([2.0])}
    state = ad.AdamWState(lr=0.1, beta1=0.95, beta2=0.999, eps=1e-6,
                          weight_decay=0.0)
    ad.adamw_step(state, params, grads)
    # m_hat = 2, v_hat = 4 -> w = 1 - 0.1 * 2 / (2 + 1e-6)
    assert abs(params["w"][0] - 0.9) < 1e-6


def test_adamw_deterministic():
    def run():
        params = {"w": np.linspace(-1, 1, 8)}
        state = ad.AdamWState(lr=1e-2, weight_decay=1e-2)
        for i in range(5):
            grads = {"w": np.sin(params["w"] + i)}
            ad.adamw_step(state, params, grads)
        return params["w"]

    assert np.array_equal(run(), run())


def test_ema_update():
    shadow = {"w": np.zeros(3)}
    params = {"w": np.ones(3)}
    ad.ema_update(shadow, params, 0.999)
    assert np.allclose(shadow["w"], 0.001)
    shadow = {"w": np.ones(3)}
    ad.ema_update(shadow, params, 0.5)
    assert np.allclose(shadow["w"], 1.0)  # fixed point
    shadow = {"w": np.zeros(3)}
    ad.ema_update(shadow, params, 0.0)
    assert np.allclose(shadow["w"], 1.0)
    with pytest.raises(ValueError):
        ad.ema_update(shadow, params, 1.0)


def test_reevaluate_after_leaf_mutation():
    w = ad.Tensor(np.array([1.0, 2.0]), requires_grad=True)
    loss = ad.reduce_sum(ad.mul(w, w))
    assert float(loss.data) == 5.0
    w.data[0] = 3.0
    assert float(ad.reevaluate(loss)) == 13.0

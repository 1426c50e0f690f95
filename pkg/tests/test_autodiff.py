import numpy as np
import pytest

from gradcheck import check, weighted_sum
from lightxfer import autodiff as ad
from lightxfer.autodiff import Tensor


def away_from_zero(rng, shape, margin=0.05):
    x = rng.uniform(-1, 1, shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


UNARY = {
    "relu": ad.relu,
    "leaky_relu": ad.leaky_relu,
    "sigmoid": ad.sigmoid,
    "abs": ad.abs_,
    "neg": lambda x: -x,
    "scale": lambda x: ad.scale(x, -2.5),
    "clamp": lambda x: ad.clamp(x, -0.5, 0.5),
    "mean": lambda x: ad.mean(x, axis=(2, 3), keepdims=True),
    "abs_mean": lambda x: ad.abs_mean(x),
    "sum_axis": lambda x: ad.sum_(x, axis=1),
    "reshape": lambda x: ad.reshape(x, (2, -1)),
    "avg_pool2d": ad.avg_pool2d,
    "upsample_nearest": ad.upsample_nearest,
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name, rng):
    x = away_from_zero(rng, (2, 3, 4, 4))
    if name == "clamp":
        x = np.where(np.abs(np.abs(x) - 0.5) < 0.05, 0.3, x)
    assert check(lambda t: weighted_sum(UNARY[name](t)), [x]) <= 1e-4


def test_positive_domain_gradients(rng):
    x = rng.uniform(0.2, 2.0, (3, 5))
    assert check(lambda t: weighted_sum(ad.sqrt(t)), [x]) <= 1e-4
    assert check(lambda t: weighted_sum(ad.power(t, 1 / 3)), [x]) <= 1e-4
    c = rng.uniform(-0.9, 0.9, (3, 5))
    assert check(lambda t: weighted_sum(ad.arccos(t)), [c]) <= 1e-4


@pytest.mark.parametrize("op", ["add", "sub", "mul", "div"])
def test_binary_broadcast_gradients(op, rng):
    a = rng.uniform(0.5, 1.5, (2, 3, 4, 4))
    b = rng.uniform(0.5, 1.5, (1, 3, 1, 1))
    f = {"add": ad.add, "sub": ad.sub, "mul": ad.mul, "div": ad.div}[op]
    assert check(lambda x, y: weighted_sum(f(x, y)), [a, b]) <= 1e-4
    assert check(lambda x, y: weighted_sum(f(y, x)), [a, b]) <= 1e-4


def test_concat_and_where_gradients(rng):
    a, b = rng.normal(size=(2, 3, 4, 4)), rng.normal(size=(2, 1, 4, 4))
    assert check(lambda x, y: weighted_sum(ad.concat([x, y], axis=1)), [a, b]) <= 1e-4
    cond = rng.random((2, 3, 4, 4)) > 0.5
    c = rng.normal(size=(2, 3, 4, 4))
    assert check(lambda x, y: weighted_sum(ad.where(cond, x, y)), [a, c]) <= 1e-4
    assert check(lambda y: weighted_sum(ad.repeat_channels(y, 3)), [b]) <= 1e-4


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_gradients(stride, padding, rng):
    x, w, b = rng.normal(size=(2, 3, 7, 7)), rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4)
    err = check(lambda x, w, b: weighted_sum(ad.conv2d(x, w, b, stride=stride, padding=padding)), [x, w, b])
    assert err <= 1e-4


def test_conv2d_transpose_gradients(rng):
    x, w, b = rng.normal(size=(2, 3, 4, 4)), rng.normal(size=(3, 5, 2, 2)), rng.normal(size=5)
    assert check(lambda x, w, b: weighted_sum(ad.conv2d_transpose(x, w, b, stride=2)), [x, w, b]) <= 1e-4


def test_composite_conv_relu_mean(rng):
    x, w = rng.normal(size=(2, 3, 8, 8)), rng.normal(size=(4, 3, 3, 3))
    assert check(lambda x, w: ad.mean(ad.relu(ad.conv2d(x, w, padding=1))), [x, w], h=1e-4) <= 1e-4


def test_conv_identity_kernel(rng):
    x = rng.normal(size=(2, 1, 6, 5)).astype(np.float32)
    k = np.zeros((1, 1, 3, 3), dtype=np.float32)
    k[0, 0, 1, 1] = 1
    assert np.array_equal(ad.conv2d(Tensor(x), Tensor(k), padding=1).data, x)


def test_conv_matches_direct_loops(rng):
    x, w = rng.normal(size=(1, 2, 5, 6)), rng.normal(size=(3, 2, 3, 3))
    with ad.default_dtype(np.float64):
        got = ad.conv2d(Tensor(x), Tensor(w), stride=2, padding=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    want = np.zeros(got.shape)
    for o in range(3):
        for i in range(got.shape[2]):
            for j in range(got.shape[3]):
                want[0, o, i, j] = np.sum(xp[0, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3] * w[o])
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_conv_transpose_is_adjoint(rng):
    x, y = rng.normal(size=(2, 3, 4, 4)), rng.normal(size=(2, 5, 8, 8))
    w = rng.normal(size=(3, 5, 2, 2))
    with ad.default_dtype(np.float64):
        up = ad.conv2d_transpose(Tensor(x), Tensor(w), stride=2).data
        # conv2d with the same weights (as out=3, in=5) maps y back
        down = ad.conv2d(Tensor(y), Tensor(w), stride=2).data
    assert np.sum(up * y) == pytest.approx(np.sum(x * down), rel=1e-12)


def test_relu_backward_zero_for_negative():
    x = Tensor(np.array([-1.0, 2.0, -3.0]), requires_grad=True)
    ad.sum_(ad.relu(x)).backward()
    assert x.grad.tolist() == [0.0, 1.0, 0.0]


def test_backward_simple_cases(rng):
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    ad.sum_(x).backward()
    assert np.array_equal(x.grad, np.ones((3, 4)))
    a, b = rng.normal(size=5), rng.normal(size=5)
    x, y = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    ad.sum_(x * y).backward()
    np.testing.assert_allclose(x.grad, b.astype(np.float32))
    np.testing.assert_allclose(y.grad, a.astype(np.float32))


def test_backward_requires_scalar():
    with pytest.raises(ValueError, match="scalar"):
        (Tensor(np.ones(3), requires_grad=True) * 2.0).backward()


def test_no_gradient_leak(rng):
    x = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
    c = Tensor(rng.normal(size=(2, 2)))
    ad.sum_(x * c + c).backward()
    assert c.grad is None and x.grad is not None


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = x * 2.0
    assert not y.requires_grad and y._parents == ()


def test_shape_errors_name_the_op():
    with pytest.raises(ValueError, match="conv2d"):
        ad.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
    with pytest.raises(ValueError, match="add"):
        ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 3))))
    with pytest.raises(ValueError, match="concat"):
        ad.concat([Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 2, 5, 4)))])


def test_deterministic_gradients(rng):
    x0, w0 = rng.normal(size=(2, 3, 8, 8)), rng.normal(size=(4, 3, 3, 3))
    grads = []
    for _ in range(2):
        x, w = Tensor(x0, requires_grad=True), Tensor(w0, requires_grad=True)
        ad.mean(ad.sigmoid(ad.conv2d(x, w, padding=1))).backward()
        grads.append((x.grad.copy(), w.grad.copy()))
    assert all(np.array_equal(a, b) for a, b in zip(grads[0], grads[1]))


def test_default_dtype_is_float32_with_toggle():
    assert Tensor(np.ones(2)).dtype == np.float32
    with ad.default_dtype(np.float64):
        assert Tensor(np.ones(2)).dtype == np.float64
    assert Tensor(np.ones(2)).dtype == np.float32


def test_adam_zero_grads_leave_params():
    p = [np.array([1.0, -2.0])]
    state = {}
    ad.adam_step(p, [np.zeros(2)], state, lr=0.1)
    assert p[0].tolist() == [1.0, -2.0]


def test_adam_descends_and_converges():
    x = Tensor(np.array([1.0]), requires_grad=True, dtype=np.float64)
    opt = ad.Adam([x], lr=0.1)
    x.grad = 2 * x.data
    opt.step()
    assert x.data[0] < 1.0
    x = Tensor(np.array([1.0, -0.7, 0.4]), requires_grad=True, dtype=np.float64)
    opt = ad.Adam([x], lr=0.05)
    for _ in range(200):
        opt.zero_grad()
        ad.sum_(x * x).backward()
        opt.step()
    assert np.abs(x.data).max() < 1e-2


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        ad.adam_step([np.zeros(3)], [np.zeros(2)], {}, lr=0.1)

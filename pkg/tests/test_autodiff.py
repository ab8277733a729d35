import numpy as np
import pytest

from monorelight import autodiff as ad


def fd_gradient(fn, x, h=1e-5):
    """Central-difference oracle for a scalar function of a flat vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    for i in range(flat.size):
        xp = flat.copy()
        xp[i] += h
        xm = flat.copy()
        xm[i] -= h
        g.ravel()[i] = (fn(xp.reshape(x.shape)) - fn(xm.reshape(x.shape))) / (2 * h)
    return g


def test_forward_square():
    x = ad.param("x", 3.0)
    y = x * x
    assert ad.forward(y) == 9.0


def test_forward_exp_identity():
    x = ad.param("x", 0.0)
    assert ad.forward(ad.exp(x)) == 1.0


def test_forward_dot():
    a = ad.param("a", [1.0, 2.0, 3.0])
    b = ad.constant([4.0, 5.0, 6.0])
    y = ad.reduce_sum(a * b)
    assert ad.forward(y) == 32.0


def test_forward_rejects_nonscalar():
    x = ad.param("x", [1.0, 2.0])
    with pytest.raises(ad.AutodiffError):
        ad.forward(x * x)


def test_backward_before_forward_errors():
    x = ad.param("x", 2.0)
    y = x * x
    with pytest.raises(ad.AutodiffError):
        ad.backward(y)


def test_backward_square():
    x = ad.param("x", 3.0)
    y = x * x
    ad.forward(y)
    grads = ad.backward(y)
    assert grads["x"] == pytest.approx(6.0)


def test_backward_dot_bilinear():
    a = ad.param("a", [1.0, 2.0, 3.0])
    y = ad.reduce_sum(a * ad.constant([4.0, 5.0, 6.0]))
    ad.forward(y)
    grads = ad.backward(y)
    np.testing.assert_allclose(grads["a"], [4.0, 5.0, 6.0])


def test_two_layer_perceptron_matches_finite_differences():
    rng = np.random.default_rng(0)
    w1 = rng.normal(size=(4, 8))
    b1 = rng.normal(size=8)
    w2 = rng.normal(size=(8, 1))
    x = rng.normal(size=(5, 4))
    sizes = [w1.size, b1.size, w2.size]

    def unpack(theta):
        o1 = sizes[0]
        o2 = o1 + sizes[1]
        return theta[:o1].reshape(4, 8), theta[o1:o2], theta[o2:].reshape(8, 1)

    def net(theta):
        tw1, tb1, tw2 = unpack(theta) if isinstance(theta, np.ndarray) else (None, None, None)
        if isinstance(theta, ad.Tensor):
            tw1 = ad.reshape(theta[0:sizes[0]], (4, 8))
            tb1 = theta[sizes[0]:sizes[0] + sizes[1]]
            tw2 = ad.reshape(theta[sizes[0] + sizes[1]:], (8, 1))
        h = ad.tanh(ad.matmul(x, tw1) + tb1)
        return ad.reduce_sum(ad.matmul(h, tw2))

    theta0 = np.concatenate([w1.ravel(), b1.ravel(), w2.ravel()])
    leaf = ad.param("theta", theta0)
    out = net(leaf)
    ad.forward(out)
    ad.backward(out)
    analytic = leaf.grad

    def numeric_fn(theta):
        t = ad.Tensor(theta)
        return float(net(t).value)

    numeric = fd_gradient(numeric_fn, theta0)
    rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    assert rel.max() < 1e-4


def test_gradient_check_cubic():
    err = ad.gradient_check(lambda x: ad.reduce_sum(x * x * x), np.array([2.0]), step=1e-5)
    assert err < 1e-6


def test_gradient_check_linear_is_machine_precision():
    err = ad.gradient_check(
        lambda x: ad.reduce_sum(x * ad.constant([1.5, -2.0, 0.25])),
        np.array([0.3, -1.2, 2.0]),
        step=1e-5,
    )
    assert err < 1e-9


def test_gradient_check_nonfinite_neighborhood_errors():
    with pytest.raises(ad.NonFiniteError):
        ad.gradient_check(lambda x: ad.reduce_sum(ad.log(x)), np.array([1e-9]), step=1e-5)


@pytest.mark.parametrize("seed", range(4))
def test_random_op_mix_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-2.0, 2.0, size=6)

    def f(x):
        a = ad.sin(x[0:3]) + ad.softplus(x[3:6], beta=2.0)
        b = ad.sigmoid(x[0:3] * x[3:6])
        c = ad.l2norm(a + 0.1, axis=-1) + ad.reduce_sum(ad.exp(-b))
        return c + ad.reduce_sum(ad.sqrt(ad.absolute(x) + 1.0))

    err = ad.gradient_check(f, x0, step=1e-5)
    assert err < 1e-4


def test_registered_ops_match_finite_differences_on_100_random_inputs():
    # spec invariant: h=1e-5 central differences agree to rel err < 1e-4
    # on 100 random inputs in [-2, 2] for every op with a derivative.
    rng = np.random.default_rng(7)
    unary = {
        "exp": ad.exp,
        "tanh": ad.tanh,
        "sigmoid": ad.sigmoid,
        "softplus": ad.softplus,
        "sin": ad.sin,
        "cos": ad.cos,
        "sqrt": lambda t: ad.sqrt(t + 2.5),
        "log": lambda t: ad.log(t + 2.5),
        "power": lambda t: ad.power(t + 3.0, 1.7),
        "abs_shift": lambda t: ad.absolute(t + 0.123),
    }
    for i in range(100):
        x0 = rng.uniform(-2.0, 2.0, size=3)
        name, op = list(unary.items())[i % len(unary)]
        err = ad.gradient_check(lambda t: ad.reduce_sum(op(t)), x0, step=1e-5)
        assert err < 1e-4, f"{name} failed at input {x0}"


def test_sum_and_product_rule_exact():
    rng = np.random.default_rng(3)
    x0 = rng.normal(size=4)

    def f(t):
        return ad.reduce_sum(ad.sin(t))

    def g(t):
        return ad.reduce_sum(t * t)

    leaf1 = ad.param("x", x0)
    y = f(leaf1) + g(leaf1)
    ad.forward(y)
    gsum = ad.backward(y)["x"]

    leaf2 = ad.param("x", x0)
    y2 = f(leaf2)
    ad.forward(y2)
    gf = ad.backward(y2)["x"]
    leaf3 = ad.param("x", x0)
    y3 = g(leaf3)
    ad.forward(y3)
    gg = ad.backward(y3)["x"]
    np.testing.assert_array_equal(gsum, gf + gg)

    # product rule: grad(f*g) = g*grad(f) + f*grad(g), exact in floats
    leaf4 = ad.param("x", x0)
    y4 = f(leaf4) * g(leaf4)
    ad.forward(y4)
    gprod = ad.backward(y4)["x"]
    fv = float(f(ad.Tensor(x0)).value)
    gv = float(g(ad.Tensor(x0)).value)
    np.testing.assert_array_equal(gprod, gv * gf + fv * gg)


def test_nonfinite_forward_reports_node():
    x = ad.param("x", 0.0)
    with pytest.raises(ad.NonFiniteError) as e:
        ad.log(x)  # log(0) = -inf at construction
    assert "log" in str(e.value)


def test_gather_rows_scatter_add():
    z = ad.param("z", np.arange(6.0).reshape(3, 2))
    idx = np.array([0, 1, 1, 2])
    picked = ad.gather_rows(z, idx)
    y = ad.reduce_sum(picked * np.array([[1.0, 1], [2, 2], [3, 3], [4, 4]]))
    ad.forward(y)
    g = ad.backward(y)["z"]
    np.testing.assert_allclose(g, [[1, 1], [5, 5], [4, 4]])


def test_maximum_subgradient_sides():
    a = ad.param("a", [1.0, -1.0])
    b = ad.param("b", [0.0, 0.0])
    y = ad.reduce_sum(ad.maximum(a, b))
    ad.forward(y)
    grads = ad.backward(y)
    np.testing.assert_allclose(grads["a"], [1.0, 0.0])
    np.testing.assert_allclose(grads["b"], [0.0, 1.0])


def test_jet_first_derivative_matches_tape():
    # d/dx of softplus(w x) via jets equals tape gradient w.r.t. x
    rng = np.random.default_rng(1)
    w = rng.normal(size=(3, 4))
    x0 = rng.normal(size=(5, 3))

    tangent = np.broadcast_to(np.eye(3)[:, None, :], (3, 5, 3)).copy()
    jet = ad.Jet(x0, tangent)
    out = ad.reduce_sum(ad.softplus(ad.matmul(jet, w)), axis=-1)
    grad_jet = out.tangent  # (3, 5)

    for row in range(5):
        leaf = ad.param("x", x0[row])
        y = ad.reduce_sum(ad.softplus(ad.matmul(ad.reshape(leaf, (1, 3)), w)))
        ad.forward(y)
        g = ad.backward(y)["x"]
        np.testing.assert_allclose(grad_jet[:, row], g, rtol=1e-12, atol=1e-12)


def test_jet_tangent_is_differentiable_wrt_parameters():
    # second-order path: d/dw of (df/dx) must match finite differences
    rng = np.random.default_rng(2)
    w0 = rng.normal(size=(3, 1)).ravel()
    x0 = rng.normal(size=(1, 3))
    tangent = np.broadcast_to(np.eye(3)[:, None, :], (3, 1, 3)).copy()

    def grad_norm(w_leaf):
        w = ad.reshape(w_leaf, (3, 1))
        jet = ad.Jet(x0, tangent)
        out = ad.tanh(ad.matmul(jet, w))  # Jet with Tensor halves
        g = out.tangent  # (3, 1, 1) tape tensor
        return ad.reduce_sum(g * g)

    err = ad.gradient_check(grad_norm, w0, step=1e-5)
    assert err < 1e-4

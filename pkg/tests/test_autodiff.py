"""Reverse-mode gradients: every primitive against central finite differences."""

import numpy as np
import pytest

from maxup_lab import autodiff as ad


def fd_gradient(f, x, h=1e-4):
    """Central finite differences of a scalar function of a flat array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        gf[i] = (f((flat + e).reshape(x.shape)) - f((flat - e).reshape(x.shape))) / (2 * h)
    return g


def check_grad(build, x, h=1e-4, rtol=1e-6):
    """build(tape, leaf) -> scalar Variable; compares backward vs FD."""
    tape = ad.Tape()
    leaf = tape.leaf(x)
    out = build(tape, leaf)
    (got,) = ad.backward(out, [leaf])

    def value_at(xv):
        t = ad.Tape()
        return float(build(t, t.leaf(xv)).value)

    want = fd_gradient(value_at, x, h)
    scale = max(1.0, float(np.abs(want).max()))
    np.testing.assert_allclose(got, want, rtol=0, atol=rtol * scale)


class TestPrimitiveValues:
    def test_add(self):
        t = ad.Tape()
        out = ad.add(t.leaf([1.0, 2.0]), t.leaf([3.0, 4.0]))
        np.testing.assert_array_equal(out.value, [4.0, 6.0])

    def test_relu(self):
        t = ad.Tape()
        out = ad.relu(t.leaf([-1.0, 2.0]))
        np.testing.assert_array_equal(out.value, [0.0, 2.0])

    def test_matmul_against_triple_loop(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((2, 3)), rng.standard_normal((3, 2))
        t = ad.Tape()
        got = ad.matmul(t.leaf(a), t.leaf(b)).value
        want = np.zeros((2, 2))
        for i in range(2):
            for j in range(2):
                for k in range(3):
                    want[i, j] += a[i, k] * b[k, j]
        np.testing.assert_allclose(got, want, rtol=1e-15)

    def test_shape_mismatch(self):
        t = ad.Tape()
        with pytest.raises(ad.ShapeMismatch):
            ad.add(t.leaf(np.ones(3)), t.leaf(np.ones(4)))
        with pytest.raises(ad.ShapeMismatch):
            ad.matmul(t.leaf(np.ones((2, 3))), t.leaf(np.ones((2, 3))))

    def test_logsumexp_stable(self):
        t = ad.Tape()
        out = ad.logsumexp(t.leaf([1000.0, 1000.0]))
        assert float(out.value) == pytest.approx(1000.0 + np.log(2.0), rel=1e-15)


class TestBackwardBasics:
    def test_square_at_three(self):
        t = ad.Tape()
        x = t.leaf(3.0)
        (g,) = ad.backward(ad.mul(x, x), [x])
        assert float(g) == 6.0

    def test_unreachable_leaf_zero(self):
        t = ad.Tape()
        x = t.leaf([1.0, 2.0])
        y = t.leaf([5.0, 7.0])
        (gy,) = ad.backward(ad.tsum(x), [y])
        np.testing.assert_array_equal(gy, np.zeros(2))

    def test_not_scalar_output(self):
        t = ad.Tape()
        x = t.leaf([1.0, 2.0])
        with pytest.raises(ad.NotScalarOutput):
            ad.backward(ad.relu(x), [x])

    def test_linearity_exact_single_contribution(self):
        # alpha, beta powers of two and one adjoint contribution per branch,
        # so the float arithmetic of the combination is exact
        rng = np.random.default_rng(1)
        xv = rng.standard_normal(5)
        a, b = rng.standard_normal(5), rng.standard_normal(5)

        def grads(alpha, beta):
            t = ad.Tape()
            x = t.leaf(xv)
            f = ad.tsum(ad.mul(x, t.constant(a)))
            g = ad.tsum(ad.mul(x, t.constant(b)))
            out = ad.add(ad.scale(f, alpha), ad.scale(g, beta))
            return ad.backward(out, [x])[0]

        gf = grads(1.0, 0.0)
        gg = grads(0.0, 1.0)
        combined = grads(2.0, 0.5)
        np.testing.assert_array_equal(combined, 2.0 * gf + 0.5 * gg)

    def test_linearity_shared_subexpressions(self):
        # shared leaves accumulate in sweep order; equality holds to rounding
        rng = np.random.default_rng(12)
        xv = rng.standard_normal(5)

        def grads(alpha, beta):
            t = ad.Tape()
            x = t.leaf(xv)
            f = ad.tsum(ad.mul(x, x))
            g = ad.tsum(ad.tanh(x))
            out = ad.add(ad.scale(f, alpha), ad.scale(g, beta))
            return ad.backward(out, [x])[0]

        gf, gg = grads(1.0, 0.0), grads(0.0, 1.0)
        np.testing.assert_allclose(grads(2.0, 0.5), 2.0 * gf + 0.5 * gg,
                                   rtol=0, atol=1e-14)

    def test_reused_subexpression_accumulates(self):
        t = ad.Tape()
        x = t.leaf(2.0)
        y = ad.mul(x, x)
        out = ad.add(y, y)  # d/dx (2 x^2) = 4x
        (g,) = ad.backward(out, [x])
        assert float(g) == 8.0


class TestMaxReduce:
    def test_gradient_is_argmax_indicator(self):
        t = ad.Tape()
        x = t.leaf([0.3, 2.0, -1.0])
        out = ad.max_reduce(x)
        (g,) = ad.backward(out, [x])
        np.testing.assert_array_equal(g, [0.0, 1.0, 0.0])

    def test_tie_breaks_low_index(self):
        t = ad.Tape()
        x = t.leaf([2.0, 2.0, 1.0])
        (g,) = ad.backward(ad.max_reduce(x), [x])
        np.testing.assert_array_equal(g, [1.0, 0.0, 0.0])

    def test_perturbation_identity(self):
        # bumping the argmax moves the max one-for-one; others not at all
        rng = np.random.default_rng(2)
        x = rng.standard_normal(6)
        i_star = int(np.argmax(x))
        t = ad.Tape()
        leaf = t.leaf(x)
        (g,) = ad.backward(ad.max_reduce(leaf), [leaf])
        for j in range(6):
            e = np.zeros(6)
            e[j] = 1e-6
            moved = np.max(x + e) - np.max(x)
            assert moved == pytest.approx(g[j] * 1e-6, abs=1e-12)
        assert g[i_star] == 1.0


GRAD_CASES = {
    "add": lambda t, x: ad.tsum(ad.mul(ad.add(x, ad.tanh(x)), x)),
    "sub": lambda t, x: ad.tsum(ad.mul(ad.sub(x, ad.exp(x)), x)),
    "mul": lambda t, x: ad.tsum(ad.mul(x, ad.tanh(x))),
    "neg": lambda t, x: ad.tsum(ad.exp(ad.neg(x))),
    "scale": lambda t, x: ad.tsum(ad.scale(ad.mul(x, x), -1.7)),
    "tanh": lambda t, x: ad.tsum(ad.tanh(x)),
    "exp": lambda t, x: ad.tsum(ad.exp(ad.scale(x, 0.5))),
    "log": lambda t, x: ad.tsum(ad.log(ad.add(ad.mul(x, x), t.constant(np.ones(x.shape))))),
    "sum": lambda t, x: ad.mul(ad.tsum(x), ad.tsum(x)),
    "logsumexp": lambda t, x: ad.logsumexp(x),
    "matvec": lambda t, x: ad.tsum(ad.tanh(ad.matmul(t.constant(_MAT), x))),
    "vecmat": lambda t, x: ad.tsum(ad.matmul(x, t.constant(_MAT.T))),
}

_MAT = np.linspace(-1, 1, 12).reshape(4, 3) + 0.1


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_primitive_gradients_match_finite_differences(name):
    rng = np.random.default_rng(hash(name) % 2 ** 31)
    build = GRAD_CASES[name]
    for _ in range(100):
        x = rng.uniform(-2.0, 2.0, 3)
        check_grad(build, x)


def test_relu_gradient_away_from_kink():
    rng = np.random.default_rng(3)
    build = lambda t, x: ad.tsum(ad.mul(ad.relu(x), x))
    tried = 0
    while tried < 100:
        x = rng.uniform(-2.0, 2.0, 4)
        if np.min(np.abs(x)) < 1e-3:  # stay away from the kink
            continue
        check_grad(build, x)
        tried += 1


def test_max_reduce_gradient_with_unique_argmax():
    rng = np.random.default_rng(4)
    build = lambda t, x: ad.max_reduce(ad.mul(x, x))
    tried = 0
    while tried < 100:
        x = rng.uniform(-2.0, 2.0, 4)
        sq = np.sort((x * x).reshape(-1))
        if sq[-1] - sq[-2] < 1e-3:  # need a clear argmax for FD
            continue
        check_grad(build, x)
        tried += 1


def test_matrix_leaf_gradient():
    rng = np.random.default_rng(5)
    v = rng.standard_normal(3)

    def build(t, w):
        return ad.tsum(ad.tanh(ad.matmul(w, t.constant(v))))

    for _ in range(20):
        w = rng.standard_normal((4, 3))
        check_grad(build, w)


def test_two_layer_network_gradient_all_leaves():
    """Composed check: gradients of a full two-layer forward pass vs FD."""
    rng = np.random.default_rng(6)
    x = rng.standard_normal(5)
    shapes = [(8, 5), (8,), (1, 8), (1,)]

    def run(params, leaf_idx=None, leaf_val=None):
        vals = [p.copy() for p in params]
        if leaf_idx is not None:
            vals[leaf_idx] = leaf_val
        t = ad.Tape()
        leaves = [t.leaf(v) for v in vals]
        h = ad.tanh(ad.add(ad.matmul(leaves[0], t.constant(x)), leaves[1]))
        s = ad.add(ad.matmul(leaves[2], h), leaves[3])
        out = ad.tsum(ad.mul(s, s))
        return t, leaves, out

    params = [rng.standard_normal(s) * 0.5 for s in shapes]
    t, leaves, out = run(params)
    grads = ad.backward(out, leaves)
    for i, shape in enumerate(shapes):
        def value_at(v, i=i):
            _, _, o = run(params, i, v)
            return float(o.value)

        want = fd_gradient(value_at, params[i])
        np.testing.assert_allclose(grads[i], want, rtol=0,
                                   atol=1e-6 * max(1.0, np.abs(want).max()))


def test_record_dispatch():
    t = ad.Tape()
    a, b = t.leaf([1.0, 2.0]), t.leaf([3.0, 4.0])
    np.testing.assert_array_equal(ad.record("add", a, b).value, [4.0, 6.0])
    np.testing.assert_array_equal(ad.record("scale", a, 2.0).value, [2.0, 4.0])
    assert float(ad.record("sum", a).value) == 3.0
    with pytest.raises(ValueError, match="unknown primitive"):
        ad.record("conv2d", a)

import numpy as np
import pytest

from entmatch.autodiff import (NumericError, ShapeError, Tape, Tensor,
                               softmax_probs)
from entmatch.optim import Adam

from fdcheck import assert_grads_close, numeric_grad


def leaf(rng, *shape):
    return Tensor(rng.uniform(-2, 2, shape), requires_grad=True)


class TestForwardValues:
    def test_add_sub_mul_match_numpy(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
        tape = Tape()
        np.testing.assert_array_equal(tape.add(Tensor(a), Tensor(b)).data, a + b)
        np.testing.assert_array_equal(tape.sub(Tensor(a), Tensor(b)).data, a - b)
        np.testing.assert_array_equal(tape.mul(Tensor(a), Tensor(b)).data, a * b)

    def test_broadcast_row_bias(self):
        tape = Tape()
        x = Tensor(np.ones((3, 4)))
        b = Tensor(np.arange(4.0))
        expected = np.tile(1.0 + np.arange(4.0), (3, 1))
        np.testing.assert_array_equal(tape.add(x, b).data, expected)

    def test_matmul_matches_numpy(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=(3, 5)), rng.normal(size=(5, 2))
        tape = Tape()
        np.testing.assert_allclose(tape.matmul(Tensor(a), Tensor(b)).data, a @ b)
        np.testing.assert_allclose(
            tape.matmul(Tensor(a), Tensor(b.T), transpose_b=True).data, a @ b)

    def test_matmul_shape_error_names_shapes(self):
        tape = Tape()
        with pytest.raises(ShapeError, match=r"3, 5"):
            tape.matmul(Tensor(np.zeros((3, 5))), Tensor(np.zeros((4, 2))))

    def test_abs_diff_requires_equal_shapes(self):
        tape = Tape()
        with pytest.raises(ShapeError):
            tape.abs_diff(Tensor(np.zeros(3)), Tensor(np.zeros(4)))

    def test_sigmoid_exact_at_saturation(self):
        tape = Tape()
        out = tape.sigmoid(Tensor(np.array([-1000.0, 0.0, 1000.0]))).data
        np.testing.assert_array_equal(out, [0.0, 0.5, 1.0])

    def test_relu_and_tanh(self):
        tape = Tape()
        x = np.array([-2.0, 0.0, 3.0])
        np.testing.assert_array_equal(tape.relu(Tensor(x)).data, [0.0, 0.0, 3.0])
        np.testing.assert_allclose(tape.tanh(Tensor(x)).data, np.tanh(x))

    def test_concat_and_slice_roundtrip(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(4, 3))
        tape = Tape()
        joined = tape.concat([Tensor(a), Tensor(b)], axis=0)
        np.testing.assert_array_equal(tape.slice_rows(joined, 0, 2).data, a)
        np.testing.assert_array_equal(tape.slice_rows(joined, 2, 6).data, b)

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_non_finite_forward_raises(self):
        tape = Tape()
        big = Tensor(np.array([1e308]))
        with pytest.raises(NumericError, match="add"):
            tape.add(big, big)

    def test_gradient_reversal_is_identity_forward(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 2))
        tape = Tape()
        np.testing.assert_array_equal(
            tape.gradient_reversal(Tensor(x, requires_grad=True), 1.0).data, x)


class TestSoftmaxNll:
    def test_uniform_logits_give_ln2(self):
        tape = Tape()
        loss, probs = tape.softmax_nll(Tensor(np.zeros(2)), 0)
        assert float(loss.data) == pytest.approx(np.log(2.0), abs=1e-12)
        np.testing.assert_allclose(probs, [0.5, 0.5])

    def test_probabilities_sum_to_one_within_1e12(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            logits = rng.normal(scale=rng.uniform(0.1, 50), size=(6, 3))
            p = softmax_probs(logits)
            np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-12)

    def test_loss_never_negative(self):
        rng = np.random.default_rng(5)
        tape = Tape()
        for _ in range(30):
            logits = Tensor(rng.normal(scale=5, size=(4, 2)))
            y = rng.integers(0, 2, size=4)
            loss, _ = tape.softmax_nll(logits, y)
            assert float(loss.data) >= 0.0

    def test_large_logits_stay_finite(self):
        tape = Tape()
        loss, probs = tape.softmax_nll(Tensor(np.array([1000.0, -1000.0])), 0)
        assert float(loss.data) == 0.0
        np.testing.assert_array_equal(probs, [1.0, 0.0])

    def test_bad_class_index_rejected(self):
        tape = Tape()
        with pytest.raises(ValueError):
            tape.softmax_nll(Tensor(np.zeros((1, 2))), [2])


OP_CASES = [
    "add", "sub", "mul", "matmul", "matmul_t", "sigmoid", "tanh", "relu",
    "abs_diff", "concat", "sum", "softmax_nll", "transpose", "slice_rows",
    "gather_rows", "broadcast_add", "broadcast_mul",
]


def run_op_case(kind: str, rng) -> None:
    """Build one random instance of the op, reduce to a scalar, and compare
    the tape gradient of every input against central differences."""
    n, m = int(rng.integers(2, 5)), int(rng.integers(2, 5))
    if kind in ("add", "sub", "mul", "abs_diff"):
        xs = [leaf(rng, n, m), leaf(rng, n, m)]
        build = lambda t, a, b: getattr(t, kind)(a, b)
    elif kind == "broadcast_add":
        xs = [leaf(rng, n, m), leaf(rng, m)]
        build = lambda t, a, b: t.add(a, b)
    elif kind == "broadcast_mul":
        xs = [leaf(rng, n, m), leaf(rng, n, 1)]
        build = lambda t, a, b: t.mul(a, b)
    elif kind == "matmul":
        k = int(rng.integers(2, 5))
        xs = [leaf(rng, n, k), leaf(rng, k, m)]
        build = lambda t, a, b: t.matmul(a, b)
    elif kind == "matmul_t":
        k = int(rng.integers(2, 5))
        xs = [leaf(rng, n, k), leaf(rng, m, k)]
        build = lambda t, a, b: t.matmul(a, b, transpose_b=True)
    elif kind in ("sigmoid", "tanh", "relu", "transpose"):
        xs = [leaf(rng, n, m)]
        build = lambda t, a: getattr(t, kind)(a)
    elif kind == "concat":
        xs = [leaf(rng, n, m), leaf(rng, n + 1, m)]
        build = lambda t, a, b: t.concat([a, b], axis=0)
    elif kind == "sum":
        xs = [leaf(rng, n, m) for _ in range(3)]
        build = lambda t, *ts: t.sum_tensors(list(ts))
    elif kind == "slice_rows":
        xs = [leaf(rng, n + 2, m)]
        build = lambda t, a: t.slice_rows(a, 1, n + 1)
    elif kind == "gather_rows":
        idx = rng.integers(0, n, size=n + 3)
        xs = [leaf(rng, n, m)]
        build = lambda t, a: t.gather_rows(a, idx)
    elif kind == "softmax_nll":
        y = rng.integers(0, m, size=n)
        xs = [leaf(rng, n, m)]
        build = lambda t, a: t.softmax_nll(a, y)[0]
    else:
        raise AssertionError(kind)

    weights = rng.normal(size=1)  # fixed projection so the loss is scalar

    def loss_value():
        t = Tape(record=False)
        out = build(t, *xs)
        return float(np.sum(out.data) * weights[0])

    tape = Tape()
    out = build(tape, *xs)
    if out.ndim == 0:
        loss = tape.mul(out, Tensor(np.asarray(weights[0])))
    else:
        total = tape.mul(out, Tensor(np.full(out.shape, weights[0])))
        while total.ndim > 0:
            total = tape.matmul(total, Tensor(np.ones(total.shape[-1])))
        loss = total
    grads = tape.backward(loss, params=xs)
    for i, x in enumerate(xs):
        numeric = numeric_grad(loss_value, x.data)
        assert_grads_close(numeric, grads[x], label=f"{kind} input {i}")


class TestGradientsAgainstFiniteDifferences:
    @pytest.mark.parametrize("kind", OP_CASES)
    def test_op_gradients(self, kind):
        rng = np.random.default_rng(hash(kind) % 2 ** 32)
        for _ in range(3):
            run_op_case(kind, rng)

    def test_reused_tensor_accumulates(self):
        # loss = sum(x*x + x): d/dx = 2x + 1
        rng = np.random.default_rng(11)
        x = leaf(rng, 3, 2)
        tape = Tape()
        out = tape.add(tape.mul(x, x), x)
        loss = tape.matmul(tape.matmul(out, Tensor(np.ones(2))), Tensor(np.ones(3)))
        grads = tape.backward(loss)
        np.testing.assert_allclose(grads[x], 2 * x.data + 1)

    def test_disconnected_parameter_gets_zero_gradient(self):
        rng = np.random.default_rng(12)
        x, detached = leaf(rng, 2, 2), leaf(rng, 4, 4)
        tape = Tape()
        loss = tape.matmul(tape.matmul(x, Tensor(np.ones(2))), Tensor(np.ones(2)))
        grads = tape.backward(loss, params=[x, detached])
        np.testing.assert_array_equal(grads[detached], np.zeros((4, 4)))

    def test_non_scalar_loss_rejected(self):
        tape = Tape()
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        y = tape.mul(x, x)
        with pytest.raises(ShapeError, match="scalar"):
            tape.backward(y)

    def test_backward_bitwise_deterministic(self):
        rng = np.random.default_rng(13)

        def one_run():
            r = np.random.default_rng(99)
            a = Tensor(r.normal(size=(4, 3)), requires_grad=True)
            w = Tensor(r.normal(size=(2, 3)), requires_grad=True)
            tape = Tape()
            h = tape.tanh(tape.matmul(a, w, transpose_b=True))
            loss, _ = tape.softmax_nll(h, r.integers(0, 2, size=4))
            g = tape.backward(loss)
            return g[a].tobytes(), g[w].tobytes()

        assert one_run() == one_run()


class TestGradientReversalBackward:
    def test_exact_negation_of_upstream(self):
        rng = np.random.default_rng(20)
        for lam in (1.0, 0.5, 2.0):
            x = leaf(rng, 3, 4)
            w = Tensor(rng.normal(size=(4,)))
            tape = Tape()
            rev = tape.gradient_reversal(x, lam)
            loss = tape.matmul(tape.matmul(rev, w), Tensor(np.ones(3)))
            tape2 = Tape()
            loss2 = tape2.matmul(tape2.matmul(x, w), Tensor(np.ones(3)))
            g_rev = tape.backward(loss)[x]
            g_plain = tape2.backward(loss2)[x]
            np.testing.assert_array_equal(g_rev, -lam * g_plain)

    def test_lambda_zero_blocks_gradient(self):
        rng = np.random.default_rng(21)
        x = leaf(rng, 2, 2)
        tape = Tape()
        rev = tape.gradient_reversal(x, 0.0)
        loss = tape.matmul(tape.matmul(rev, Tensor(np.ones(2))), Tensor(np.ones(2)))
        np.testing.assert_array_equal(tape.backward(loss, params=[x])[x],
                                      np.zeros((2, 2)))


class TestAdam:
    def test_first_step_matches_hand_computation(self):
        p = Tensor(np.array([0.0]), requires_grad=True, name="w")
        opt = Adam([p], lr=0.001)
        opt.step({p: np.array([1.0])})
        # mhat = 1, vhat = 1 after bias correction, so the step is
        # -lr / (1 + eps)
        expected = -0.001 * 1.0 / (1.0 + 1e-8)
        np.testing.assert_allclose(p.data, [expected], rtol=0, atol=1e-18)

    def test_zero_gradient_keeps_parameters(self):
        p = Tensor(np.array([1.5, -2.0]), requires_grad=True, name="w")
        opt = Adam([p])
        before = p.data.copy()
        opt.step({p: np.zeros(2)})
        opt.step({})                      # missing grad treated as zero
        np.testing.assert_array_equal(p.data, before)

    def test_non_finite_gradient_names_parameter(self):
        p = Tensor(np.array([0.0]), requires_grad=True, name="gru.fwd.W_z")
        opt = Adam([p])
        with pytest.raises(NumericError, match="gru.fwd.W_z"):
            opt.step({p: np.array([np.nan])})

    def test_identical_runs_are_bitwise_identical(self):
        def run():
            rng = np.random.default_rng(7)
            p = Tensor(rng.normal(size=(3, 3)), requires_grad=True, name="w")
            opt = Adam([p], lr=0.01)
            for _ in range(5):
                opt.step({p: rng.normal(size=(3, 3))})
            return p.data.tobytes()

        assert run() == run()

    def test_rejects_bad_hyperparameters(self):
        p = Tensor(np.zeros(1), requires_grad=True)
        with pytest.raises(ValueError):
            Adam([p], lr=-1.0)
        with pytest.raises(ValueError):
            Adam([p], beta1=1.0)

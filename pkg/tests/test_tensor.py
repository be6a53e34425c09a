import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grn.errors import ContractError, DataError, NumericError
from grn.tensor import (ComputationRecord, Tensor, add, backward, bias_add,
                        channel_scale, concat_rows, conv2d,
                        cross_entropy_pixelwise, gap, matmul, mul, relu,
                        reshape, row_softmax, slice_channel, smul, softmax,
                        trace, transpose, tsum, upsample_nearest)

from oracles import (conv2d_loops6, cross_entropy_ld, fd_gradient, gap_loops,
                     matmul_loops, softmax_ld, upsample_loops)


def rng(seed=0):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# matmul


def test_matmul_identity():
    a = Tensor(np.eye(2))
    b = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(a, b).data, b.data)


def test_matmul_annihilator():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    z = Tensor(np.zeros((2, 2)))
    assert np.array_equal(matmul(a, z).data, np.zeros((2, 2)))


def test_matmul_against_loop_oracle():
    a = rng(1).normal(size=(3, 4))
    b = rng(2).normal(size=(4, 2))
    got = matmul(Tensor(a), Tensor(b)).data
    assert np.abs(got - matmul_loops(a, b)).max() <= 1e-12


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ContractError) as e:
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    assert "[2, 3]" in str(e.value)


def test_matmul_grads():
    a = Tensor(rng(3).normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng(4).normal(size=(4, 2)), requires_grad=True)
    backward(tsum(matmul(a, b)))
    g = np.ones((3, 2))
    assert np.allclose(a.grad, g @ b.data.T)
    assert np.allclose(b.grad, a.data.T @ g)


# ---------------------------------------------------------------------------
# reshape


def test_reshape_row_major_identity_on_data():
    t = Tensor(np.arange(24.0).reshape(2, 3, 4))
    out = reshape(t, (2, 12))
    assert out.shape == (2, 12)
    assert np.array_equal(out.data.ravel(), t.data.ravel())


def test_reshape_to_graph_node_row():
    w, h = 3, 5
    t = Tensor(rng(5).normal(size=(w, h)))
    assert reshape(t, (1, w * h)).shape == (1, w * h)


def test_reshape_round_trip_bitwise():
    t = Tensor(rng(6).normal(size=(2, 3, 4)))
    back = reshape(reshape(t, (6, 4)), (2, 3, 4))
    assert np.array_equal(back.data, t.data)


def test_reshape_count_mismatch():
    with pytest.raises(ContractError):
        reshape(Tensor(np.zeros((2, 3))), (7,))


# ---------------------------------------------------------------------------
# softmax


def test_softmax_uniform_on_zeros():
    out = softmax(Tensor([0.0, 0.0, 0.0])).data
    assert np.allclose(out, [1 / 3, 1 / 3, 1 / 3])


def test_softmax_large_values_stable():
    out = softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(out))
    assert out[0] > 0.999 and out[1] < 1e-300 or out[1] >= 0


def test_softmax_against_extended_precision():
    v = rng(7).normal(size=5)
    got = softmax(Tensor(v)).data
    want = softmax_ld(v)
    assert np.abs((got - want) / want).max() <= 1e-12


@settings(max_examples=50)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
def test_softmax_is_probability_vector(vals):
    out = softmax(Tensor(np.array(vals))).data
    assert np.all(out > 0)
    assert abs(out.sum() - 1.0) <= 1e-6


def test_softmax_rejects_non_finite():
    with pytest.raises(NumericError):
        softmax(Tensor([1.0, np.inf]))


def test_row_softmax_rows_sum_to_one():
    out = row_softmax(Tensor(rng(8).normal(size=(4, 6)))).data
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(out > 0)


# ---------------------------------------------------------------------------
# gap / channel_scale / bias_add


def test_gap_constant_rows():
    assert np.array_equal(gap(Tensor([[1.0, 1.0], [2.0, 2.0]])).data, [1.0, 2.0])


def test_gap_zeros():
    assert np.array_equal(gap(Tensor(np.zeros((3, 4)))).data, np.zeros(3))


def test_gap_against_loop_oracle():
    m = rng(9).normal(size=(4, 7))
    assert np.abs(gap(Tensor(m)).data - gap_loops(m)).max() <= 1e-12


def test_channel_scale_ones_identity():
    t = Tensor(rng(10).normal(size=(3, 4, 5)))
    out = channel_scale(Tensor(np.ones(3)), t)
    assert np.array_equal(out.data, t.data)


def test_channel_scale_zeros():
    t = Tensor(rng(11).normal(size=(2, 3, 3)))
    assert np.array_equal(channel_scale(Tensor(np.zeros(2)), t).data,
                          np.zeros((2, 3, 3)))


def test_channel_scale_scalar_oracle():
    t = rng(12).normal(size=(2, 3, 3))
    out = channel_scale(Tensor([2.0, 3.0]), Tensor(t)).data
    assert np.array_equal(out[0], 2.0 * t[0])
    assert np.array_equal(out[1], 3.0 * t[1])


def test_channel_scale_basis_vector_zeroes_other_slices():
    t = Tensor(rng(13).normal(size=(4, 2, 2)))
    e1 = np.zeros(4)
    e1[1] = 1.0
    out = channel_scale(Tensor(e1), t).data
    assert np.array_equal(out[1], t.data[1])
    for i in (0, 2, 3):
        assert np.array_equal(out[i], np.zeros((2, 2)))


def test_channel_scale_mismatch():
    with pytest.raises(ContractError):
        channel_scale(Tensor(np.ones(3)), Tensor(np.zeros((2, 4, 4))))


def test_bias_add_and_grads():
    t = Tensor(rng(14).normal(size=(2, 3, 3)), requires_grad=True)
    b = Tensor(rng(15).normal(size=2), requires_grad=True)
    backward(tsum(bias_add(t, b)))
    assert np.allclose(t.grad, np.ones((2, 3, 3)))
    assert np.allclose(b.grad, [9.0, 9.0])


# ---------------------------------------------------------------------------
# conv2d


def test_conv2d_identity_kernel():
    x = Tensor(rng(16).normal(size=(1, 5, 5)))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0
    assert np.array_equal(conv2d(x, Tensor(k)).data, x.data)


def test_conv2d_zero_kernel():
    x = Tensor(rng(17).normal(size=(2, 4, 4)))
    out = conv2d(x, Tensor(np.zeros((3, 2, 3, 3)))).data
    assert np.array_equal(out, np.zeros((3, 4, 4)))


@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_against_six_loop_oracle(stride):
    x = rng(18).normal(size=(2, 5, 5))
    k = rng(19).normal(size=(3, 2, 3, 3))
    got = conv2d(Tensor(x), Tensor(k), stride=stride).data
    want = conv2d_loops6(x, k, stride)
    assert got.shape == want.shape
    assert np.abs(got - want).max() <= 1e-10


@pytest.mark.parametrize("h,stride,expect", [(64, 2, 32), (5, 2, 3), (7, 1, 7)])
def test_conv2d_output_size_is_ceil(h, stride, expect):
    x = Tensor(np.zeros((1, h, h)))
    out = conv2d(x, Tensor(np.zeros((1, 1, 3, 3))), stride=stride)
    assert out.shape == (1, expect, expect)


def test_conv2d_channel_mismatch():
    with pytest.raises(ContractError):
        conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))


def test_conv2d_grads_match_finite_differences():
    x = Tensor(rng(20).normal(size=(2, 4, 4)), requires_grad=True)
    k = Tensor(rng(21).normal(size=(2, 2, 3, 3)), requires_grad=True)
    backward(tsum(mul(conv2d(x, k, stride=2), conv2d(x, k, stride=2))))
    def f():
        y = conv2d_loops6(x.data, k.data, 2)
        return float((y * y).sum())
    for t in (x, k):
        fd = fd_gradient(f, t.data)
        rel = np.abs(t.grad - fd) / np.maximum(1e-8, np.abs(t.grad) + np.abs(fd))
        assert rel.max() <= 1e-4


# ---------------------------------------------------------------------------
# upsample


def test_upsample_single_pixel():
    out = upsample_nearest(Tensor([[[3.5]]])).data
    assert np.array_equal(out, np.full((1, 2, 2), 3.5))


def test_upsample_adjoint_counts():
    t = Tensor(rng(22).normal(size=(1, 2, 2)), requires_grad=True)
    backward(tsum(upsample_nearest(t)))
    assert np.array_equal(t.grad, np.full((1, 2, 2), 4.0))


def test_upsample_against_replication_oracle():
    x = rng(23).normal(size=(2, 3, 3))
    assert np.array_equal(upsample_nearest(Tensor(x)).data, upsample_loops(x))


# ---------------------------------------------------------------------------
# cross entropy


def test_cross_entropy_uniform_logits():
    logits = Tensor(np.zeros((4, 3, 3)))
    labels = np.zeros((3, 3), dtype=np.int64)
    assert abs(float(cross_entropy_pixelwise(logits, labels).data) - np.log(4)) <= 1e-12


def test_cross_entropy_confident_correct():
    labels = rng(24).integers(0, 3, size=(4, 4))
    logits = np.zeros((3, 4, 4))
    np.put_along_axis(logits, labels[None], 50.0, axis=0)
    assert float(cross_entropy_pixelwise(Tensor(logits), labels).data) < 1e-12


def test_cross_entropy_against_extended_precision():
    logits = rng(25).normal(size=(3, 2, 2))
    labels = rng(26).integers(0, 3, size=(2, 2))
    got = float(cross_entropy_pixelwise(Tensor(logits), labels).data)
    want = cross_entropy_ld(logits, labels)
    assert abs(got - want) / abs(want) <= 1e-10


def test_cross_entropy_label_out_of_range():
    with pytest.raises(DataError):
        cross_entropy_pixelwise(Tensor(np.zeros((2, 2, 2))),
                                np.full((2, 2), 5, dtype=np.int64))


def test_cross_entropy_grads_match_finite_differences():
    logits = Tensor(rng(27).normal(size=(3, 3, 3)), requires_grad=True)
    labels = rng(28).integers(0, 3, size=(3, 3))
    backward(cross_entropy_pixelwise(logits, labels))
    fd = fd_gradient(lambda: cross_entropy_ld(logits.data, labels), logits.data)
    rel = np.abs(logits.grad - fd) / np.maximum(1e-8, np.abs(logits.grad) + np.abs(fd))
    assert rel.max() <= 1e-4


# ---------------------------------------------------------------------------
# backward mechanics


def test_backward_of_sum_is_ones():
    x = Tensor(rng(29).normal(size=(2, 3, 4)), requires_grad=True)
    backward(tsum(x))
    assert np.array_equal(x.grad, np.ones((2, 3, 4)))


def test_backward_of_scalar_product():
    x = Tensor(rng(30).normal(size=(5,)), requires_grad=True)
    y = Tensor(rng(31).normal(size=(5,)), requires_grad=True)
    backward(tsum(mul(x, y)))
    assert np.allclose(x.grad, y.data)
    assert np.allclose(y.grad, x.data)


def test_backward_random_propagation_graph_vs_finite_differences():
    # Z = relu(A X W) summed: the propagation composite
    A = Tensor(rng(32).normal(size=(4, 4)), requires_grad=True)
    X = Tensor(rng(33).normal(size=(4, 3)), requires_grad=True)
    W = Tensor(rng(34).normal(size=(3, 3)), requires_grad=True)
    backward(tsum(relu(matmul(matmul(A, X), W))))
    def f():
        return float(np.maximum(A.data @ X.data @ W.data, 0.0).sum())
    for t in (A, X, W):
        fd = fd_gradient(f, t.data)
        rel = np.abs(t.grad - fd) / np.maximum(1e-8, np.abs(t.grad) + np.abs(fd))
        assert rel.max() <= 1e-4


def test_backward_accumulates_over_reuse():
    x = Tensor(np.array([2.0, 3.0]), requires_grad=True)
    backward(tsum(mul(x, x)))
    assert np.allclose(x.grad, 2 * x.data)


def test_backward_rejects_non_scalar():
    x = Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        backward(relu(x))


def test_backward_leaves_unreachable_grads_untouched():
    x = Tensor(np.ones(3), requires_grad=True)
    y = Tensor(np.ones(3), requires_grad=True)
    backward(tsum(x))
    assert y.grad is None


def test_grad_accumulates_across_backward_calls():
    x = Tensor(np.ones(3), requires_grad=True)
    backward(tsum(x))
    backward(tsum(x))
    assert np.array_equal(x.grad, np.full(3, 2.0))


# ---------------------------------------------------------------------------
# structural pieces


def test_slice_and_concat_round_trip_with_grads():
    t = Tensor(rng(35).normal(size=(3, 2, 2)), requires_grad=True)
    rows = [reshape(slice_channel(t, i), (1, 4)) for i in range(3)]
    stacked = concat_rows(rows)
    assert np.array_equal(stacked.data, t.data.reshape(3, 4))
    backward(tsum(stacked))
    assert np.array_equal(t.grad, np.ones((3, 2, 2)))


def test_transpose_and_smul():
    t = Tensor(rng(36).normal(size=(2, 3)), requires_grad=True)
    out = smul(transpose(t), -2.0)
    assert np.array_equal(out.data, -2.0 * t.data.T)
    backward(tsum(out))
    assert np.allclose(t.grad, np.full((2, 3), -2.0))


def test_add_shape_mismatch():
    with pytest.raises(ContractError):
        add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


def test_forward_is_deterministic_bitwise():
    a = rng(37).normal(size=(4, 4))
    outs = [relu(matmul(Tensor(a), Tensor(a))).data.tobytes() for _ in range(2)]
    assert outs[0] == outs[1]


def test_computation_record_is_topological_and_complete():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    y = matmul(x, x)
    z = add(y, y)
    loss = tsum(z)
    rec = ComputationRecord.from_output(loss)
    assert len(rec) == 3  # matmul, add, tsum each exactly once
    pos = {id(r): i for i, r in enumerate(rec)}
    for r in rec:
        for inp in r.inputs:
            if inp.op is not None:
                assert pos[id(inp.op)] < pos[id(r)]


def test_trace_collects_execution_order():
    with trace() as log:
        a = Tensor(np.ones((2, 2)))
        b = relu(matmul(a, a))
        tsum(b)
    assert [r.name for r in log] == ["matmul", "relu", "tsum"]

import numpy as np
import pytest

from grn.errors import ContractError
from grn.lcm import init_lcm_params, lcm_forward, project_pixels_to_graph
from grn.tensor import Tensor, backward, mul, tsum

from oracles import lcm_forward_ref, matmul_loops


def make_params(c=2, cprime=3, w=2, h=2, d=4, seed=0, **kw):
    rng = np.random.default_rng(seed)
    return init_lcm_params(c, cprime, spatial=w * h, d=d, rng=rng, **kw)


def rnd(seed, *shape):
    return np.random.default_rng(seed).normal(size=shape)


def test_project_zero_features():
    p = make_params()
    g = project_pixels_to_graph(Tensor(np.zeros((3, 2, 2))), p)
    assert np.array_equal(g.X.data, np.zeros((2, 4)))
    # zero features give a uniform data-dependent adjacency
    assert np.allclose(g.A.data, np.full((2, 2), 0.5))


def test_project_identity_projections_recover_flattened_map():
    rng = np.random.default_rng(1)
    p = make_params(c=3, cprime=3, w=2, h=2, d=4, seed=1)
    p.omega_channels.data = np.eye(3)
    p.omega_pixels.data = np.eye(4)
    f = rnd(2, 3, 2, 2)
    g = project_pixels_to_graph(Tensor(f), p)
    assert np.allclose(g.X.data, f.reshape(3, 4))


def test_project_matches_triple_product_oracle():
    p = make_params(c=2, cprime=3, w=2, h=2, d=4, seed=3)
    f = rnd(4, 3, 2, 2)
    g = project_pixels_to_graph(Tensor(f), p)
    want = matmul_loops(matmul_loops(p.omega_channels.data, f.reshape(3, 4)),
                        p.omega_pixels.data)
    assert np.abs(g.X.data - want).max() <= 1e-12


def test_project_channel_mismatch():
    p = make_params(cprime=3)
    with pytest.raises(ContractError):
        project_pixels_to_graph(Tensor(np.zeros((4, 2, 2))), p)


def test_node_count_independent_of_image_size():
    # relation cost stays at c nodes no matter how many pixels
    for w in (2, 4, 8):
        p = make_params(c=2, cprime=3, w=w, h=w, seed=5)
        g = project_pixels_to_graph(Tensor(rnd(6, 3, w, w)), p)
        assert g.n_nodes == 2


def test_alpha_zero_reduces_to_unassisted_bitwise():
    p = make_params(seed=7, alpha=0.0)
    f = Tensor(rnd(8, 3, 2, 2))
    z_g = Tensor(rnd(9, 2, 4))
    with_assist = lcm_forward(f, p, global_nodes=z_g)
    without = lcm_forward(f, p)
    assert with_assist.rectified.data.tobytes() == without.rectified.data.tobytes()
    assert with_assist.theta.data.tobytes() == without.theta.data.tobytes()


def test_zero_features_uniform_theta_zero_output():
    p = make_params(c=2, cprime=3)
    res = lcm_forward(Tensor(np.zeros((3, 2, 2))), p)
    assert np.array_equal(res.nodes.data, np.zeros((2, 4)))
    assert np.allclose(res.theta.data, [0.5, 0.5])
    assert np.array_equal(res.rectified.data, np.zeros((3, 2, 2)))


def test_forward_matches_composed_oracle_with_assist():
    p = make_params(c=2, cprime=3, w=2, h=2, d=4, seed=10, alpha=1.0)
    f = rnd(11, 3, 2, 2)
    z_g = rnd(12, 2, 4)
    res = lcm_forward(Tensor(f), p, global_nodes=Tensor(z_g))
    want_rect, want_nodes, want_theta = lcm_forward_ref(
        f, p.omega_channels.data, p.omega_pixels.data, p.weight.data,
        1.0, z_g)
    assert np.abs(res.rectified.data - want_rect).max() <= 1e-9
    assert np.abs(res.nodes.data - want_nodes).max() <= 1e-9
    assert np.abs(res.theta.data - want_theta).max() <= 1e-9


def test_theta_is_probability_vector():
    p = make_params(c=4, cprime=5, w=3, h=3, seed=13)
    for seed in range(20):
        f = np.random.default_rng(seed).normal(size=(5, 3, 3))
        theta = lcm_forward(Tensor(f), p).theta.data
        assert np.all(theta > 0)
        assert abs(theta.sum() - 1.0) <= 1e-6


def test_identity_lift_requires_matching_channels():
    with pytest.raises(ContractError):
        make_params(c=2, cprime=3, lift="identity")


def test_identity_lift_applies_theta_directly():
    p = make_params(c=3, cprime=3, seed=14, lift="identity")
    f = Tensor(rnd(15, 3, 2, 2))
    res = lcm_forward(f, p)
    assert np.allclose(res.rectified.data,
                       res.theta.data[:, None, None] * f.data)


def test_assist_shape_mismatch():
    p = make_params()
    with pytest.raises(ContractError):
        lcm_forward(Tensor(rnd(16, 3, 2, 2)), p, global_nodes=Tensor(np.zeros((5, 4))))


def test_all_params_receive_gradients():
    p = make_params(seed=17)
    f = Tensor(rnd(18, 3, 2, 2))
    res = lcm_forward(f, p)
    backward(tsum(mul(res.rectified, res.rectified)))
    for name, t in p.named():
        assert t.grad is not None and np.abs(t.grad).max() > 0, name


def test_gradient_flows_into_global_nodes():
    p = make_params(seed=19, alpha=0.5)
    f = Tensor(rnd(20, 3, 2, 2))
    z_g = Tensor(rnd(21, 2, 4), requires_grad=True)
    res = lcm_forward(f, p, global_nodes=z_g)
    backward(tsum(mul(res.rectified, res.rectified)))
    assert z_g.grad is not None and np.abs(z_g.grad).max() > 0


@pytest.mark.parametrize("seed", range(5))
def test_projection_output_shapes(seed):
    rng = np.random.default_rng(seed)
    c = int(rng.integers(2, 6))
    cprime = int(rng.integers(2, 6))
    d = int(rng.integers(2, 6))
    w, h = int(rng.integers(2, 5)), int(rng.integers(2, 5))
    p = init_lcm_params(c, cprime, spatial=w * h, d=d, rng=rng)
    f = Tensor(rng.normal(size=(cprime, w, h)))
    g = project_pixels_to_graph(f, p)
    assert g.X.shape == (c, d)
    assert g.A.shape == (c, c)
    res = lcm_forward(f, p)
    assert res.theta.shape == (c,)
    assert res.rectified.shape == (cprime, w, h)
    assert res.nodes.shape == (c, d)

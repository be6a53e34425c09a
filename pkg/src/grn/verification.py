"""End-to-end gradient verification over every differentiable surface.

Builds small fixed-seed instances of each tensor operation, the graph
primitives, both rectification modules, and both networks, and runs the
central-difference checker over every parameter element. Used by the
`grn grad-check` command and the acceptance suite.
"""

from __future__ import annotations

import numpy as np

from .gradcheck import grad_check
from .graph import GraphModel, data_adjacency, graph_convolve
from .gsm import gsm_forward, init_gsm_params
from .lcm import init_lcm_params, lcm_forward
from .rectnet import assemble_input, init_rectnet, rectify_forward
from .segnet import init_segnet, seg_forward
from .tensor import (Tensor, add, bias_add, channel_scale, concat_rows,
                     conv2d, cross_entropy_pixelwise, gap, matmul, mul,
                     relu, reshape, row_softmax, slice_channel, smul,
                     softmax, transpose, tsum, upsample_nearest)


def _param(rng, *shape) -> Tensor:
    return Tensor(rng.normal(0.0, 0.5, size=shape), requires_grad=True)


def _sumsq(t: Tensor) -> Tensor:
    return tsum(mul(t, t))


def op_checks(seed: int = 0) -> dict[str, float]:
    """Per-op gradient checks on tiny fixed instances."""
    rng = np.random.default_rng([seed, 31])
    out: dict[str, float] = {}

    a, b = _param(rng, 3, 4), _param(rng, 4, 2)
    out.update(grad_check(lambda: _sumsq(matmul(a, b)),
                          [("op.matmul.a", a), ("op.matmul.b", b)]))

    x = _param(rng, 2, 3, 4)
    out.update(grad_check(lambda: _sumsq(reshape(x, (4, 6))),
                          [("op.reshape.x", x)]))

    v = _param(rng, 5)
    cv = Tensor(rng.normal(size=5))
    out.update(grad_check(lambda: tsum(mul(softmax(v), cv)),
                          [("op.softmax.v", v)]))

    m = _param(rng, 3, 4)
    cm = Tensor(rng.normal(size=(3, 4)))
    out.update(grad_check(lambda: tsum(mul(row_softmax(m), cm)),
                          [("op.row_softmax.m", m)]))

    g = _param(rng, 4, 7)
    out.update(grad_check(lambda: _sumsq(gap(g)), [("op.gap.m", g)]))

    w, t = _param(rng, 3), _param(rng, 3, 4, 5)
    out.update(grad_check(lambda: _sumsq(channel_scale(w, t)),
                          [("op.channel_scale.w", w), ("op.channel_scale.t", t)]))

    tb, bb = _param(rng, 2, 5, 5), _param(rng, 2)
    out.update(grad_check(lambda: _sumsq(bias_add(tb, bb)),
                          [("op.bias_add.t", tb), ("op.bias_add.b", bb)]))

    cx, ck = _param(rng, 2, 5, 5), _param(rng, 3, 2, 3, 3)
    out.update(grad_check(lambda: _sumsq(conv2d(cx, ck, stride=1)),
                          [("op.conv2d_s1.x", cx), ("op.conv2d_s1.k", ck)]))
    out.update(grad_check(lambda: _sumsq(conv2d(cx, ck, stride=2)),
                          [("op.conv2d_s2.x", cx), ("op.conv2d_s2.k", ck)]))

    ux = _param(rng, 2, 3, 3)
    out.update(grad_check(lambda: _sumsq(upsample_nearest(ux)),
                          [("op.upsample.x", ux)]))

    ea, eb = _param(rng, 2, 3), _param(rng, 2, 3)
    out.update(grad_check(
        lambda: add(tsum(mul(relu(ea), eb)),
                    tsum(smul(transpose(matmul(ea, transpose(eb))), 0.5))),
        [("op.elementwise.a", ea), ("op.elementwise.b", eb)]))

    sx = _param(rng, 3, 2, 2)
    out.update(grad_check(
        lambda: _sumsq(concat_rows([reshape(slice_channel(sx, i), (1, 4))
                                    for i in range(3)])),
        [("op.slice_concat.x", sx)]))

    logits = _param(rng, 3, 4, 4)
    labels = rng.integers(0, 3, size=(4, 4))
    out.update(grad_check(lambda: cross_entropy_pixelwise(logits, labels),
                          [("op.cross_entropy.logits", logits)]))
    return out


def graph_checks(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng([seed, 37])
    out: dict[str, float] = {}
    X, A, W = _param(rng, 4, 3), _param(rng, 4, 4), _param(rng, 3, 3)
    out.update(grad_check(
        lambda: _sumsq(graph_convolve(GraphModel(X, A, "low"), W)),
        [("graph.convolve.X", X), ("graph.convolve.A", A), ("graph.convolve.W", W)]))
    Y = _param(rng, 3, 4)
    WY = _param(rng, 4, 4)
    out.update(grad_check(
        lambda: _sumsq(graph_convolve(GraphModel(Y, data_adjacency(Y), "low"), WY)),
        [("graph.data_adjacency.X", Y), ("graph.data_adjacency.W", WY)]))
    return out


def module_checks(seed: int = 0, c: int = 4, d: int = 6) -> dict[str, float]:
    """Full GSM and LCM forward passes at small sizes."""
    rng = np.random.default_rng([seed, 41])
    out: dict[str, float] = {}

    gsm = init_gsm_params(c, d, 2, spatial=16, rng=rng)
    f_head = Tensor(rng.normal(0.0, 0.5, size=(c, 4, 4)))
    out.update(grad_check(lambda: _sumsq(gsm_forward(f_head, gsm).rectified),
                          gsm.named("gsm")))

    lcm = init_lcm_params(c, 3, spatial=16, d=d, rng=rng, alpha=1.0)
    f = Tensor(rng.normal(0.0, 0.5, size=(3, 4, 4)))
    z_g = Tensor(rng.normal(0.0, 0.5, size=(c, d)), requires_grad=True)
    checks = lcm.named("lcm") + [("lcm.global_nodes", z_g)]
    out.update(grad_check(
        lambda: _sumsq(lcm_forward(f, lcm, global_nodes=z_g).rectified), checks))
    return out


def network_checks(seed: int = 0, c: int = 4, d: int = 6,
                   size: int = 16) -> dict[str, float]:
    """Full forward+loss of both networks at the small verification size."""
    rng = np.random.default_rng([seed, 43])
    out: dict[str, float] = {}

    seg = init_segnet(c, width=6, seed=seed)
    image = rng.uniform(0, 1, size=(3, size, size))
    labels = rng.integers(0, c, size=(size, size))
    out.update(grad_check(
        lambda: cross_entropy_pixelwise(seg_forward(image, seg), labels),
        seg.named("seg")))

    rnet = init_rectnet(c, size, size, d=d, n_high=2, cprime=6, width=6, seed=seed)
    mask = np.full((c, size, size), 1.0 / c)
    inp = assemble_input(image, mask)
    # Probe the reasoning outputs directly alongside the training loss:
    # the graph-side parameters influence the loss only through two
    # softmax/GAP funnels, leaving per-element gradients near the
    # finite-difference noise floor. The probe terms keep the checked
    # scalar well-conditioned without changing what is differentiated.
    probe_l = Tensor(rng.normal(0.0, 1.0, size=c))
    probe_g = Tensor(rng.normal(0.0, 1.0, size=c))
    probe_n = Tensor(rng.normal(0.0, 1.0, size=(c, d)))

    def rect_loss():
        result = rectify_forward(inp, rnet)
        loss = cross_entropy_pixelwise(result.logits, labels)
        loss = add(loss, tsum(mul(result.theta_local, probe_l)))
        loss = add(loss, tsum(mul(result.theta_global, probe_g)))
        return add(loss, tsum(mul(result.global_nodes, probe_n)))

    out.update(grad_check(rect_loss, rnet.named("rect")))
    return out


def full_gradient_report(seed: int = 0) -> dict[str, float]:
    report: dict[str, float] = {}
    report.update(op_checks(seed))
    report.update(graph_checks(seed))
    report.update(module_checks(seed))
    report.update(network_checks(seed))
    return report

"""Small building blocks shared by the two networks."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, bias_add, conv2d, matmul, relu, reshape

# Biases start slightly positive so fresh networks have few dead units.
BIAS_INIT = 0.01


def he_kernel(rng: np.random.Generator, cout: int, cin: int) -> Tensor:
    """He-uniform 3x3 kernel, fan_in = cin * 9."""
    bound = np.sqrt(6.0 / (cin * 9))
    return Tensor(rng.uniform(-bound, bound, size=(cout, cin, 3, 3)), requires_grad=True)


def bias(cout: int) -> Tensor:
    return Tensor(np.full(cout, BIAS_INIT), requires_grad=True)


def linear_weight(rng: np.random.Generator, cout: int, cin: int) -> Tensor:
    bound = 1.0 / np.sqrt(cin)
    return Tensor(rng.uniform(-bound, bound, size=(cout, cin)), requires_grad=True)


def conv_block(x: Tensor, kernel: Tensor, b: Tensor, stride: int = 1,
               activate: bool = True) -> Tensor:
    out = bias_add(conv2d(x, kernel, stride=stride), b)
    return relu(out) if activate else out


def conv1x1(x: Tensor, weight: Tensor, b: Tensor) -> Tensor:
    """Pointwise convolution as a matmul over flattened pixels."""
    c, h, w = x.shape
    flat = reshape(x, (c, h * w))
    out = reshape(matmul(weight, flat), (weight.shape[0], h, w))
    return bias_add(out, b)


def coord_channels(h: int, w: int) -> np.ndarray:
    """Two constant maps holding normalized x/y coordinates in [-1, 1].

    Concatenated to network inputs so that position (which side of the
    image a limb is on) is available to small receptive fields.
    """
    ys = np.linspace(-1.0, 1.0, h)[:, None]
    xs = np.linspace(-1.0, 1.0, w)[None, :]
    return np.stack([np.broadcast_to(xs, (h, w)), np.broadcast_to(ys, (h, w))])


def with_coords(stack: np.ndarray) -> np.ndarray:
    """Append coordinate channels to a [k,H,W] input stack."""
    _, h, w = stack.shape
    return np.concatenate([stack, coord_channels(h, w)], axis=0)

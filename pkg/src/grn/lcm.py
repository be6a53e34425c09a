"""Local consistency module.

Projects the pixels of a feature map into a small graph (c nodes, never
one node per pixel, so relation cost stays linear in the pixel count),
reasons over it, and rescales the map's channels. Optionally mixes in
the global module's reasoned nodes before pooling. Corrects spot noise
inside a part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .graph import GraphModel, data_adjacency, graph_convolve
from .tensor import (Tensor, add, channel_scale, gap, matmul, reshape, smul,
                     softmax, transpose)

LIFT_MODES = ("projection", "identity")


@dataclass
class LcmParams:
    """Trainable state for the local module.

    omega_channels [c,c'] mixes input channels down to c graph nodes;
    omega_pixels [(w'h'),d] compresses flattened pixels to d features;
    weight [d,d] drives graph propagation; alpha weighs the optional
    global assist. `lift` chooses how the c node weights map back to the
    c' input channels: through omega_channels^T, or the identity when
    c == c'.
    """

    omega_channels: Tensor
    omega_pixels: Tensor
    weight: Tensor
    alpha: float = 1.0
    lift: str = "projection"

    def __post_init__(self):
        if self.omega_channels.data.ndim != 2 or self.omega_pixels.data.ndim != 2:
            raise ContractError("projection matrices must be rank-2")
        if self.weight.data.ndim != 2 or self.weight.shape[0] != self.weight.shape[1]:
            raise ContractError(f"graph weight must be square, got {list(self.weight.shape)}")
        if self.omega_pixels.shape[1] != self.weight.shape[0]:
            raise ContractError(
                f"pixel projection emits {self.omega_pixels.shape[1]}-dim features "
                f"but graph weight is {list(self.weight.shape)}")
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ContractError(f"alpha must be finite and >= 0, got {self.alpha}")
        if self.lift not in LIFT_MODES:
            raise ContractError(f"lift must be one of {LIFT_MODES}, got {self.lift!r}")
        if self.lift == "identity" and self.n_nodes != self.in_channels:
            raise ContractError(
                f"identity lift needs c == c', got {self.n_nodes} and {self.in_channels}")

    @property
    def n_nodes(self) -> int:
        return self.omega_channels.shape[0]

    @property
    def in_channels(self) -> int:
        return self.omega_channels.shape[1]

    def named(self, prefix: str = "lcm") -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.omega_channels", self.omega_channels),
                (f"{prefix}.omega_pixels", self.omega_pixels),
                (f"{prefix}.weight", self.weight)]


def init_lcm_params(c: int, in_channels: int, spatial: int, d: int,
                    rng: np.random.Generator, alpha: float = 1.0,
                    lift: str = "projection") -> LcmParams:
    def proj(rows, cols, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)

    return LcmParams(
        omega_channels=proj(c, in_channels, in_channels),
        omega_pixels=proj(spatial, d, spatial),
        weight=proj(d, d, d),
        alpha=alpha, lift=lift)


def project_pixels_to_graph(f: Tensor, p: LcmParams) -> GraphModel:
    """Node features omega_channels @ flatten(F) @ omega_pixels, [c,d];
    adjacency is recomputed from the features themselves."""
    if f.data.ndim != 3:
        raise ContractError(f"expected [c',w',h'] features, got {list(f.shape)}")
    cprime, w, h = f.shape
    if cprime != p.in_channels:
        raise ContractError(
            f"feature map has {cprime} channels but projection expects {p.in_channels}")
    if p.omega_pixels.shape[0] != w * h:
        raise ContractError(
            f"pixel projection expects {p.omega_pixels.shape[0]} positions, map has {w * h}")
    flat = reshape(f, (cprime, w * h))
    x = matmul(matmul(p.omega_channels, flat), p.omega_pixels)
    return GraphModel(X=x, A=data_adjacency(x), level="low")


@dataclass
class LcmResult:
    rectified: Tensor   # reweighted feature map [c',w',h']
    nodes: Tensor       # reasoned node features [c,d]
    theta: Tensor       # per-node weights [c], a probability vector


def lcm_forward(f: Tensor, p: LcmParams, global_nodes: Tensor | None = None) -> LcmResult:
    """Local pass: project pixels to c nodes, reason, pool to weights, and
    rescale the input channels.

    With `global_nodes` supplied and alpha > 0, the pooled features are
    Z_l + alpha * Z_g; with alpha == 0 or no assist the output is exactly
    the unassisted one.
    """
    g = project_pixels_to_graph(f, p)
    nodes = graph_convolve(g, p.weight, apply_nonlinearity=True)
    if global_nodes is not None and p.alpha != 0.0:
        if global_nodes.shape != nodes.shape:
            raise ContractError(
                f"global assist shape {list(global_nodes.shape)} does not match "
                f"local nodes {list(nodes.shape)}")
        pooled = gap(add(nodes, smul(global_nodes, p.alpha)))
    else:
        pooled = gap(nodes)
    theta = softmax(pooled)
    if p.lift == "identity":
        lifted = theta
    else:
        lifted = reshape(matmul(transpose(p.omega_channels), reshape(theta, (p.n_nodes, 1))),
                         (p.in_channels,))
    rectified = channel_scale(lifted, f)
    return LcmResult(rectified=rectified, nodes=nodes, theta=theta)

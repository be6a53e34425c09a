"""Global structure module.

Maps each category channel of a feature map to one node of an explicit
low-level graph, aggregates those nodes into a small implicit high-level
graph through a trainable soft-assignment, decouples back, and converts
the reasoned node features into per-channel weights that rescale the
input map. Corrects whole-part (e.g. left/right) mistakes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .graph import GraphModel, graph_convolve
from .tensor import (Tensor, add, channel_scale, concat_rows, gap, matmul,
                     reshape, row_softmax, slice_channel, smul, softmax,
                     transpose)


@dataclass
class GsmParams:
    """Trainable state for the global module.

    omega[i] projects the flattened channel i into a d-vector; A_low is
    the trainable (kept symmetric) low-level adjacency over the c
    category nodes; W_* drive graph propagation at each level; V_low /
    V_high parametrize the aggregation and decoupling assignments.
    n_low always equals the category count c.
    """

    omega: list[Tensor]
    A_low: Tensor
    W_low: Tensor
    W_high: Tensor
    V_low: Tensor
    V_high: Tensor
    n_high: int
    c: int
    d: int
    rescale_by_c: bool = False

    def __post_init__(self):
        if len(self.omega) != self.c:
            raise ContractError(f"expected {self.c} projection matrices, got {len(self.omega)}")
        if not 0 < self.n_high < self.c:
            raise ContractError(f"n_high must lie in (0, c={self.c}), got {self.n_high}")
        if self.A_low.shape != (self.c, self.c):
            raise ContractError(f"A_low must be [{self.c},{self.c}], got {list(self.A_low.shape)}")
        if np.abs(self.A_low.data - self.A_low.data.T).max() > 1e-12:
            raise ContractError("A_low must be symmetric within 1e-12")

    def named(self, prefix: str = "gsm") -> list[tuple[str, Tensor]]:
        out = [(f"{prefix}.omega.{i}", w) for i, w in enumerate(self.omega)]
        out += [(f"{prefix}.A_low", self.A_low),
                (f"{prefix}.W_low", self.W_low),
                (f"{prefix}.W_high", self.W_high),
                (f"{prefix}.V_low", self.V_low),
                (f"{prefix}.V_high", self.V_high)]
        return out


def init_gsm_params(c: int, d: int, n_high: int, spatial: int,
                    rng: np.random.Generator,
                    rescale_by_c: bool = False) -> GsmParams:
    """Fresh parameters for channels flattened to `spatial` positions.

    Projections are uniform in +-1/sqrt(fan_in); A_low starts at
    identity plus 0.1/c off-diagonal (symmetric).
    """
    def proj(rows, cols):
        bound = 1.0 / np.sqrt(rows)
        return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)

    a0 = np.full((c, c), 0.1 / c)
    np.fill_diagonal(a0, 1.0)
    return GsmParams(
        omega=[proj(spatial, d) for _ in range(c)],
        A_low=Tensor(a0, requires_grad=True),
        W_low=proj(d, d),
        W_high=proj(d, d),
        V_low=proj(d, n_high),
        V_high=proj(d, c),
        n_high=n_high, c=c, d=d, rescale_by_c=rescale_by_c)


def project_to_graph(f_head: Tensor, p: GsmParams) -> GraphModel:
    """Build the explicit low-level graph: node i = flatten(channel i) @ omega_i."""
    if f_head.data.ndim != 3:
        raise ContractError(f"expected [c,w,h] features, got {list(f_head.shape)}")
    c, w, h = f_head.shape
    if c != p.c:
        raise ContractError(f"feature map has {c} channels but params expect {p.c}")
    if p.omega[0].shape[0] != w * h:
        raise ContractError(
            f"projection expects {p.omega[0].shape[0]} spatial positions, map has {w * h}")
    rows = []
    for i in range(c):
        flat = reshape(slice_channel(f_head, i), (1, w * h))
        rows.append(matmul(flat, p.omega[i]))
    return GraphModel(X=concat_rows(rows), A=p.A_low, level="low")


def compute_aggregation(g: GraphModel, p: GsmParams) -> Tensor:
    """Trainable soft assignment of low nodes onto high nodes, [n_low,n_high].

    Linear part A X V_low followed by a row softmax so each low node
    distributes itself across the high nodes.
    """
    if g.level != "low":
        raise ContractError(f"aggregation needs a low-level graph, got {g.level!r}")
    return row_softmax(matmul(matmul(g.A, g.X), p.V_low))


def aggregate(g: GraphModel, C: Tensor) -> GraphModel:
    """Pool the low-level graph through assignment C: X' = C^T X, A' = C^T A C."""
    if C.data.ndim != 2 or C.shape[0] != g.n_nodes:
        raise ContractError(
            f"assignment shape {list(C.shape)} does not match {g.n_nodes} nodes")
    ct = transpose(C)
    x_high = matmul(ct, g.X)
    a_high = matmul(matmul(ct, g.A), C)
    return GraphModel(X=x_high, A=a_high, level="high")


def compute_decoupling(g: GraphModel, p: GsmParams) -> Tensor:
    """Trainable assignment of high nodes back onto low nodes, [n_high,n_low]."""
    if g.level != "high":
        raise ContractError(f"decoupling needs a high-level graph, got {g.level!r}")
    return row_softmax(matmul(matmul(g.A, g.X), p.V_high))


def decouple(z_high: Tensor, a_high: Tensor, c_dec: Tensor) -> tuple[Tensor, Tensor]:
    """Revert reasoned high-level state to the low level via c_dec."""
    if z_high.data.ndim != 2 or c_dec.data.ndim != 2 or c_dec.shape[0] != z_high.shape[0]:
        raise ContractError(
            f"decouple shapes disagree: nodes {list(z_high.shape)}, "
            f"assignment {list(c_dec.shape)}")
    ct = transpose(c_dec)
    z_low = matmul(ct, z_high)
    a_low = matmul(matmul(ct, a_high), c_dec)
    return z_low, a_low


@dataclass
class GsmResult:
    rectified: Tensor          # reweighted feature map [c,w,h]
    nodes: Tensor              # reasoned low-level node features [c,d]
    theta: Tensor              # per-channel weights [c], a probability vector
    adjacency_reverted: Tensor = field(repr=False, default=None)


def gsm_forward(f_head: Tensor, p: GsmParams) -> GsmResult:
    """Full global pass: project, reason low, pool, reason high, decouple,
    skip-connect, and rescale the channels of the input map."""
    g_low = project_to_graph(f_head, p)
    z_low = graph_convolve(g_low, p.W_low, apply_nonlinearity=True)
    c_agg = compute_aggregation(g_low, p)
    g_high = aggregate(g_low, c_agg)
    z_high = graph_convolve(g_high, p.W_high, apply_nonlinearity=True)
    c_dec = compute_decoupling(g_high, p)
    z_reverted, a_reverted = decouple(z_high, g_high.A, c_dec)
    nodes = add(z_reverted, z_low)
    theta = softmax(gap(nodes))
    weights = smul(theta, float(p.c)) if p.rescale_by_c else theta
    rectified = channel_scale(weights, f_head)
    return GsmResult(rectified=rectified, nodes=nodes, theta=theta,
                     adjacency_reverted=a_reverted)

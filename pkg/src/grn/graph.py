"""Graph values and the shared graph-convolution primitive.

A GraphModel pairs node features X [n,d] with an adjacency A [n,n] at one
of two semantic levels. Both rectification modules reason over these via
the same propagation rule Z = relu(A X W).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError
from .tensor import Tensor, matmul, relu, row_softmax, transpose

LEVELS = ("low", "high")


@dataclass
class GraphModel:
    """Node feature matrix plus adjacency at one semantic level."""

    X: Tensor
    A: Tensor
    level: str

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ContractError(f"graph level must be one of {LEVELS}, got {self.level!r}")
        if self.X.data.ndim != 2:
            raise ContractError(f"node features must be rank-2, got {list(self.X.shape)}")
        if self.A.data.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise ContractError(f"adjacency must be square, got {list(self.A.shape)}")
        if self.A.shape[0] != self.X.shape[0]:
            raise ContractError(
                f"adjacency side {self.A.shape[0]} does not match node count {self.X.shape[0]}")

    @property
    def n_nodes(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def graph_convolve(g: GraphModel, weight: Tensor, apply_nonlinearity: bool = True) -> Tensor:
    """Propagate node information: relu(A X W), or A X W without the relu."""
    if weight.data.ndim != 2 or weight.shape[0] != g.dim:
        raise ContractError(
            f"weight shape {list(weight.shape)} does not accept node features "
            f"of dimension {g.dim}")
    z = matmul(matmul(g.A, g.X), weight)
    return relu(z) if apply_nonlinearity else z


def symmetrize(A: Tensor) -> Tensor:
    """(A + A^T) / 2. Parameter maintenance; not recorded for backward."""
    if A.data.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError(f"symmetrize expects a square matrix, got {list(A.shape)}")
    return Tensor(0.5 * (A.data + A.data.T))


def resymmetrize_(A: Tensor) -> None:
    """In-place (A + A^T) / 2, applied to adjacency parameters after updates."""
    if A.data.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError(f"resymmetrize expects a square matrix, got {list(A.shape)}")
    A.data = 0.5 * (A.data + A.data.T)


def data_adjacency(X: Tensor) -> Tensor:
    """Row-softmax of X X^T: a data-dependent adjacency whose rows sum to 1."""
    if X.data.ndim != 2 or X.shape[0] < 1:
        raise ContractError(f"data_adjacency expects rank-2 features, got {list(X.shape)}")
    if not np.all(np.isfinite(X.data)):
        raise NumericError("data_adjacency: non-finite node features")
    return row_softmax(matmul(X, transpose(X)))

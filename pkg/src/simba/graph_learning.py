"""Directed adjacency learned from trainable node embeddings.

``M1 = tanh(a E1 T1)``, ``M2 = tanh(a E2 T2)`` and
``A = relu(tanh(a (M1 M2^T - M2 M1^T)))``, followed by keeping the ``k``
largest entries in every row.  The antisymmetric pre-activation guarantees a
zero diagonal and at most one positive direction per node pair.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, DimensionError
from .nn import Module, xavier_uniform


def node_transform(E: Tensor, theta: Tensor, alpha: float) -> Tensor:
    return ad.tanh((E @ theta) * alpha)


def pairwise_scores(M1: Tensor, M2: Tensor, alpha: float) -> Tensor:
    if M1.shape != M2.shape:
        raise DimensionError(f"pairwise_scores needs equal shapes, got {M1.shape} and {M2.shape}")
    M1, M2 = ad.as_tensor(M1), ad.as_tensor(M2)
    anti = M1 @ M2.T - M2 @ M1.T
    return ad.relu(ad.tanh(anti * alpha))


def topk_mask(A: np.ndarray, k: int) -> np.ndarray:
    """0/1 mask of the ``k`` largest entries per row; ties go to the lower column."""
    n = A.shape[-1]
    if not 1 <= k <= n:
        raise ConfigurationError(f"top-k needs 1 <= k <= {n}, got {k}")
    order = np.argsort(-A, axis=-1, kind="stable")[..., :k]
    mask = np.zeros_like(A)
    np.put_along_axis(mask, order, 1.0, axis=-1)
    return mask


def topk_sparsify(A: Tensor, k: int) -> Tensor:
    """Zero all but the ``k`` largest weights of each row (differentiable through kept entries)."""
    A = ad.as_tensor(A)
    return A * Tensor(topk_mask(A.data, k))


class GraphLearner(Module):
    """Trainable embeddings ``E1, E2`` and linear maps ``theta1, theta2``."""

    def __init__(self, rng: np.random.Generator, num_nodes: int, embed_dim: int = 8, alpha: float = 0.5, k: int | None = None):
        k = num_nodes if k is None else k
        if not 1 <= k <= num_nodes:
            raise ConfigurationError(f"k must lie in [1, {num_nodes}], got {k}")
        if alpha <= 0:
            raise ConfigurationError(f"alpha must be positive, got {alpha}")
        self.num_nodes = num_nodes
        self.alpha = float(alpha)
        self.k = int(k)
        self.E1 = Tensor(rng.uniform(-0.5, 0.5, size=(num_nodes, embed_dim)), requires_grad=True)
        self.E2 = Tensor(rng.uniform(-0.5, 0.5, size=(num_nodes, embed_dim)), requires_grad=True)
        self.theta1 = xavier_uniform(rng, (embed_dim, embed_dim), embed_dim, embed_dim)
        self.theta2 = xavier_uniform(rng, (embed_dim, embed_dim), embed_dim, embed_dim)

    def dense(self) -> Tensor:
        M1 = node_transform(self.E1, self.theta1, self.alpha)
        M2 = node_transform(self.E2, self.theta2, self.alpha)
        return pairwise_scores(M1, M2, self.alpha)

    def __call__(self) -> Tensor:
        return topk_sparsify(self.dense(), self.k)

    forward = __call__


def check_adjacency(A: np.ndarray, k: int | None = None, atol: float = 0.0) -> list[str]:
    """Return violated structural invariants of a learned adjacency (empty when valid)."""
    problems = []
    if np.any(A < -atol):
        problems.append("negative entry")
    if np.any(np.abs(np.diag(A)) > atol):
        problems.append("nonzero diagonal")
    if np.any(np.minimum(A, A.T) > atol):
        problems.append("both directions positive")
    if k is not None and np.any((A > atol).sum(axis=1) > k):
        problems.append(f"more than {k} nonzeros in a row")
    return problems


def save_adjacency_csv(A: np.ndarray, path) -> None:
    np.savetxt(path, A, delimiter=",", fmt="%.10g")
